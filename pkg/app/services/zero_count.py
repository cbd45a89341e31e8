"""
Simultaneous zeros of two independent fields on a 2-manifold.

Each chart's core box is scanned on a sign grid. Cells where both fields
change sign seed a damped Newton iteration in chart coordinates. A sign
change in both fields does not imply a common zero (two nodal lines can
run side by side through a cell), so every candidate cell also gets the
winding number of F = (f_1, f_2) around its boundary: the roots found
inside the cell must match it in count and parity, otherwise Newton is
restarted from the four sub-cell centers, and a cell that still
disagrees is flagged. Roots are kept only by the chart that owns them
under the partition of unity and are deduplicated in ambient coordinates.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from app.core.config import ZERO_GRID_PER_AXIS
from app.core.errors import InvalidArgumentError
from app.services.atlas import Chart, ManifoldAtlas
from app.services.gkf import gkf_rhs, gmf_point
from app.services.gp_model import GPModel, GPSample, eval_values, phase_jets, sample
from app.services.seeding import ZERO_FIELD_STREAM, field_seeds

logger = logging.getLogger("ZeroCount")

NEWTON_MAX_ITER = 50
NEWTON_TOL = 1e-10
BACKTRACK_STEPS = 30
DEDUP_TOL = 1e-6
# boundary samples per cell side, refined until no angle step exceeds π/2
WINDING_SAMPLES = (8, 32, 128)

CONVERGED, LEFT_REGION, FAILED = "converged", "left", "failed"

Fields = Tuple[GPSample, GPSample]


@dataclass
class ZeroCountResult:
    count: int
    roots: List[np.ndarray] = field(default_factory=list)
    candidates: int = 0
    flagged_cells: int = 0
    empty_cells: int = 0
    restarts: int = 0

    @property
    def flagged(self) -> bool:
        return self.flagged_cells > 0


def zero_fields(model: GPModel, rep_seed: int) -> Fields:
    seeds = field_seeds(rep_seed, 2, ZERO_FIELD_STREAM)
    return sample(model, seeds[0]), sample(model, seeds[1])


def _values_and_grads(fields: Fields, atlas: ManifoldAtlas, chart_id: int,
                      x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """F(x) = (f_1, f_2) and its 2x2 chart Jacobian at one point."""
    phases = phase_jets(fields[0].model, atlas, chart_id, np.atleast_2d(x), 1)
    cos, sin = np.cos(phases[0][0]), np.sin(phases[0][0])
    value = np.array([cos @ s.a + sin @ s.b for s in fields])
    slopes = [-s.a * sin + s.b * cos for s in fields]
    jac = np.stack([slope @ phases[1][0] for slope in slopes])
    return value, jac


def _newton(fields: Fields, atlas: ManifoldAtlas, chart_id: int, start: np.ndarray,
            slack: float) -> Tuple[str, Optional[np.ndarray]]:
    chart = atlas.chart(chart_id)
    x = start.copy()
    value, jac = _values_and_grads(fields, atlas, chart_id, x)
    residual = float(np.linalg.norm(value))
    for _ in range(NEWTON_MAX_ITER):
        try:
            step = -np.linalg.solve(jac, value)
        except np.linalg.LinAlgError:
            return FAILED, None
        t = 1.0
        for _ in range(BACKTRACK_STEPS):
            trial = chart.wrap(x + t * step)
            trial_value, trial_jac = _values_and_grads(fields, atlas, chart_id, trial)
            trial_residual = float(np.linalg.norm(trial_value))
            if trial_residual < residual or trial_residual < NEWTON_TOL:
                break
            t *= 0.5
        else:
            # stagnation at a local minimum of |F|
            return FAILED, None
        moved = float(np.linalg.norm(t * step))
        x, value, jac, residual = trial, trial_value, trial_jac, trial_residual
        if not (chart.contains(x)[0] and chart.in_core(x, slack)[0]):
            return LEFT_REGION, None
        if residual < NEWTON_TOL and moved < NEWTON_TOL:
            return CONVERGED, x
    return FAILED, None


def _cell_loop(lower: np.ndarray, spacing: np.ndarray, per_side: int) -> np.ndarray:
    """Counter-clockwise boundary of the cell [lower, lower + spacing], per_side points per edge."""
    t = np.arange(per_side) / per_side
    zero, one = np.zeros_like(t), np.ones_like(t)
    unit = np.concatenate([
        np.stack([t, zero], axis=-1),
        np.stack([one, t], axis=-1),
        np.stack([1.0 - t, one], axis=-1),
        np.stack([zero, 1.0 - t], axis=-1),
    ])
    return lower + unit * spacing


def cell_winding(fields: Fields, atlas: ManifoldAtlas, chart_id: int,
                 lower: np.ndarray, spacing: np.ndarray) -> Optional[int]:
    """
    Degree of F around the boundary of one cell, i.e. the signed number of
    simple common zeros inside it. None when F comes so close to zero on
    the boundary that the angle cannot be tracked.
    """
    for per_side in WINDING_SAMPLES:
        loop = _cell_loop(lower, spacing, per_side)
        z = eval_values(fields[0], atlas, chart_id, loop) + 1j * eval_values(fields[1], atlas, chart_id, loop)
        with np.errstate(divide="ignore", invalid="ignore"):
            steps = np.angle(np.roll(z, -1) / z)
        if np.all(np.isfinite(steps)) and np.max(np.abs(steps)) < 0.5 * math.pi:
            return int(round(float(np.sum(steps)) / (2.0 * math.pi)))
    return None


def _inside_cell(chart: Chart, points: List[np.ndarray], lower: np.ndarray, spacing: np.ndarray,
                 margin: float = 1e-9) -> int:
    if not points:
        return 0
    pad = margin * spacing
    offset = np.asarray(points) - lower + pad
    for a, periodic in enumerate(chart.periodic):
        if periodic:
            offset[:, a] = np.mod(offset[:, a], chart.upper[a] - chart.lower[a])
    inside = np.all((offset >= 0.0) & (offset <= spacing + 2.0 * pad), axis=1)
    return int(np.count_nonzero(inside))


def _consistent(chart: Chart, points: List[np.ndarray], lower: np.ndarray, spacing: np.ndarray,
                winding: Optional[int]) -> bool:
    if winding is None:
        # a zero sits on or next to the boundary
        return _inside_cell(chart, points, lower, spacing, margin=0.25) >= 1
    inside = _inside_cell(chart, points, lower, spacing)
    return inside >= abs(winding) and (inside - winding) % 2 == 0


def _candidate_cells(values: np.ndarray, periodic: Tuple[bool, ...]) -> np.ndarray:
    """Lower-left indices of grid cells where both fields take both signs at the corners."""
    shifted = {}
    for da in (0, 1):
        for db in (0, 1):
            v = values
            if da:
                v = np.roll(v, -1, axis=1)
            if db:
                v = np.roll(v, -1, axis=2)
            shifted[(da, db)] = v
    corners = np.stack(list(shifted.values()))
    changes = (corners.min(axis=0) < 0.0) & (corners.max(axis=0) > 0.0)
    both = changes[0] & changes[1]
    # wrap-around cells only exist along periodic axes
    if not periodic[0]:
        both[-1, :] = False
    if not periodic[1]:
        both[:, -1] = False
    return np.argwhere(both)


def count_common_zeros(fields: Fields, atlas: ManifoldAtlas,
                       grid_per_axis: int = ZERO_GRID_PER_AXIS) -> ZeroCountResult:
    if atlas.dim != 2:
        raise InvalidArgumentError(f"zero counting needs a 2-manifold, got dimension {atlas.dim}")
    if len(fields) != 2:
        raise InvalidArgumentError(f"zero counting needs exactly two fields, got {len(fields)}")
    if fields[0].seed == fields[1].seed:
        raise InvalidArgumentError(f"the two fields share seed {fields[0].seed}; their zero set is degenerate")
    if fields[0].model is not fields[1].model:
        raise InvalidArgumentError("the two fields must come from one GPModel")
    if grid_per_axis < 4:
        raise InvalidArgumentError(f"zero grid needs at least 4 points per axis, got {grid_per_axis}")

    result = ZeroCountResult(count=0)
    found: List[np.ndarray] = []
    for chart in atlas.charts:
        grid = atlas.evaluation_grid(chart.id, grid_per_axis)
        values = np.stack([eval_values(s, atlas, chart.id, grid).reshape(grid_per_axis, grid_per_axis)
                           for s in fields])
        axes = [grid[:, 0].reshape(grid_per_axis, grid_per_axis)[:, 0], grid[:, 1].reshape(grid_per_axis, grid_per_axis)[0]]
        spacing = np.array([
            (chart.core_upper[a] - chart.core_lower[a]) / (grid_per_axis if chart.periodic[a] else grid_per_axis - 1)
            for a in range(2)
        ])
        slack = 2.0 * float(np.max(spacing))
        cells = _candidate_cells(values, chart.periodic)
        result.candidates += len(cells)
        # every converged root in chart coordinates, owned or not
        chart_roots: List[np.ndarray] = []

        def accept(status: str, root: Optional[np.ndarray]) -> None:
            if status != CONVERGED:
                return
            if any(np.linalg.norm(root - r) < DEDUP_TOL for r in chart_roots):
                return
            chart_roots.append(root)
            point = chart.ambient_map(root[None, :])[0]
            if atlas.owner(point) != chart.id:
                return
            if any(np.linalg.norm(point - other) < DEDUP_TOL for other in found):
                return
            found.append(point)

        for ia, ib in cells:
            lower = np.array([axes[0][ia], axes[1][ib]])
            center = lower + 0.5 * spacing
            accept(*_newton(fields, atlas, chart.id, center, slack))
            winding = cell_winding(fields, atlas, chart.id, lower, spacing)
            if _consistent(chart, chart_roots, lower, spacing, winding):
                if winding == 0 and not _inside_cell(chart, chart_roots, lower, spacing):
                    result.empty_cells += 1
                continue
            result.restarts += 1
            for sa in (-1, 1):
                for sb in (-1, 1):
                    accept(*_newton(fields, atlas, chart.id, center + 0.25 * spacing * np.array([sa, sb]), slack))
            if not _consistent(chart, chart_roots, lower, spacing, winding):
                result.flagged_cells += 1
                inside = _inside_cell(chart, chart_roots, lower, spacing)
                logger.warning(f"Chart {chart.id} cell ({ia}, {ib}): {inside} roots found, winding {winding}")
    result.roots = found
    result.count = len(found)
    logger.debug(f"{result.count} common zeros from {result.candidates} candidate cells, "
                 f"{result.empty_cells} without a zero, {result.restarts} restarted, {result.flagged_cells} flagged")
    return result


def predicted_zero_count(lkc_values: Sequence[float]) -> float:
    """GKF mean of the common zero count of two i.i.d. unit fields: L_2 / (2π)."""
    return gkf_rhs(0, lkc_values, gmf_point(2, 2), 2)
