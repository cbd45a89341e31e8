"""
Exception hierarchy shared by the services, the CLI and the HTTP surface.
"""
from typing import Optional


class GeometryError(Exception):
    """Base class for every error raised by the geometry services."""


class InvalidArgumentError(GeometryError, ValueError):
    pass


class UnsupportedOrderError(InvalidArgumentError):
    pass


class ConfigValidationError(InvalidArgumentError):
    pass


class ModelConstructionError(GeometryError):
    pass


class InternalConsistencyError(GeometryError):
    pass


class NumericalDegeneracyError(GeometryError):
    """
    A metric or Jacobian that should be positive definite / full rank is not.
    Carries the chart and node where it happened when known.
    """

    def __init__(
        self,
        message: str,
        chart: Optional[int] = None,
        node: Optional[int] = None,
        condition: Optional[float] = None,
    ):
        self.chart = chart
        self.node = node
        self.condition = condition
        where = []
        if chart is not None:
            where.append(f"chart={chart}")
        if node is not None:
            where.append(f"node={node}")
        if condition is not None:
            where.append(f"cond={condition:.3e}")
        suffix = f" ({', '.join(where)})" if where else ""
        super().__init__(f"{message}{suffix}")


class OutputWriteError(GeometryError, OSError):
    pass
