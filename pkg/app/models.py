from enum import Enum
from typing import Any, Dict, List, Literal

from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator

from app.core.config import (
    GRID_PER_AXIS,
    NUM_WAVES,
    OUT_DIR,
    QUADRATURE_NODES,
    ROOT_SEED,
    SPECTRUM,
    THREADS,
    ZERO_GRID_PER_AXIS,
)
from app.core.errors import ConfigValidationError, GeometryError
from app.services.atlas import manifold_dimension
from app.services.gp_model import SpectralShape


class ExperimentKind(str, Enum):
    CONVERGE = "converge"
    LKC_CONVERGE = "lkc-converge"
    UNBIASED = "unbiased"
    ZERO_COUNT = "zero-count"


class ExperimentConfig(BaseModel):
    kind: ExperimentKind
    manifold: str = "torus:2"
    waves: int = Field(NUM_WAVES, ge=1)
    spectrum: str = SPECTRUM
    seed: int = Field(ROOT_SEED, ge=0)
    k_list: List[int] = Field(default_factory=list)
    replicates: int = 50
    grid: int = Field(GRID_PER_AXIS, ge=2)
    nodes: int = Field(QUADRATURE_NODES, ge=4)
    zero_grid: int = Field(ZERO_GRID_PER_AXIS, ge=4)
    threads: int = Field(THREADS, ge=1)
    out_dir: str = OUT_DIR
    plot: bool = False

    @field_validator("replicates")
    @classmethod
    def check_replicates(cls, value: int) -> int:
        if value < 1:
            raise ValueError(f"replicates must be >= 1, got {value}")
        return value

    @field_validator("k_list")
    @classmethod
    def check_k_list(cls, value: List[int]) -> List[int]:
        if not value:
            raise ValueError("k_list must not be empty")
        if any(k < 1 for k in value):
            raise ValueError(f"every k must be >= 1, got {value}")
        return value

    @field_validator("spectrum")
    @classmethod
    def check_spectrum(cls, value: str) -> str:
        try:
            return SpectralShape.parse(value).value
        except GeometryError as exc:
            raise ValueError(str(exc))

    @model_validator(mode="after")
    def check_manifold(self) -> "ExperimentConfig":
        try:
            m = manifold_dimension(self.manifold)
        except GeometryError as exc:
            raise ValueError(str(exc))
        if self.kind is ExperimentKind.UNBIASED and any(k <= 2 * m for k in self.k_list):
            raise ValueError(f"unbiasedness runs need every k > 2m = {2 * m}, got {self.k_list}")
        if self.kind is ExperimentKind.ZERO_COUNT and m != 2:
            raise ValueError(f"zero counting needs a 2-manifold, got dimension {m}")
        return self

    @property
    def dim(self) -> int:
        return manifold_dimension(self.manifold)


class LKCRequest(BaseModel):
    manifold: str = "sphere:1"
    metric: Literal["reference", "pullback"] = "reference"
    k: int = Field(64, ge=1)
    seed: int = Field(ROOT_SEED, ge=0)
    waves: int = Field(NUM_WAVES, ge=1)
    spectrum: str = SPECTRUM
    nodes: int = Field(QUADRATURE_NODES, ge=4)


def build_config(data: Dict[str, Any]) -> ExperimentConfig:
    """ExperimentConfig from plain data; pydantic failures become ConfigValidationError."""
    try:
        return ExperimentConfig(**data)
    except ValidationError as exc:
        messages = "; ".join(f"{'.'.join(str(p) for p in err['loc']) or 'config'}: {err['msg']}" for err in exc.errors())
        raise ConfigValidationError(f"invalid experiment config: {messages}") from exc
