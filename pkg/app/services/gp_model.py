"""
Unit-variance smooth Gaussian fields on an atlas as finite random-wave sums

    f(x) = Σ_q a_q cos⟨κ_q, ι(x)⟩ + b_q sin⟨κ_q, ι(x)⟩,   a_q, b_q ~ N(0, σ_q²),

where ι is the chart's ambient map. Every realization has closed-form chart
derivatives of all orders; the ones up to third order are evaluated here.
"""
import json
import logging
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Union

import numpy as np

from app.core.config import MOMENT_CONDITION_LIMIT
from app.core.errors import (
    InternalConsistencyError,
    InvalidArgumentError,
    ModelConstructionError,
    NumericalDegeneracyError,
)
from app.services.atlas import ChartPoint, ManifoldAtlas
from app.services.seeding import MODEL_STREAM, derive_seed, make_rng

logger = logging.getLogger("GPModel")


class SpectralShape(str, Enum):
    UNIFORM_SHELL = "uniform-shell"
    GAUSSIAN = "gaussian"

    @classmethod
    def parse(cls, value: Union[str, "SpectralShape"]) -> "SpectralShape":
        if isinstance(value, cls):
            return value
        aliases = {
            "uniform-shell": cls.UNIFORM_SHELL,
            "uniform-sphere-shell": cls.UNIFORM_SHELL,
            "gaussian": cls.GAUSSIAN,
            "gaussian-isotropic": cls.GAUSSIAN,
        }
        try:
            return aliases[str(value).lower()]
        except KeyError:
            raise InvalidArgumentError(f"unknown spectrum '{value}', expected uniform-shell or gaussian")


@dataclass(frozen=True, eq=False)
class GPModel:
    frequencies: np.ndarray  # (Q, D)
    amplitudes: np.ndarray  # (Q,)
    spectrum: SpectralShape
    seed: int

    @property
    def num_waves(self) -> int:
        return int(self.amplitudes.shape[0])

    @property
    def ambient_dim(self) -> int:
        return int(self.frequencies.shape[1])

    @property
    def total_variance(self) -> float:
        return float(np.sum(self.amplitudes ** 2))

    @property
    def second_moment(self) -> np.ndarray:
        weighted = self.frequencies * (self.amplitudes ** 2)[:, None]
        return weighted.T @ self.frequencies

    def to_dict(self) -> Dict[str, Any]:
        return {
            "spectrum": self.spectrum.value,
            "seed": self.seed,
            "frequencies": self.frequencies.tolist(),
            "amplitudes": self.amplitudes.tolist(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "GPModel":
        return cls(
            frequencies=np.asarray(data["frequencies"], dtype=float),
            amplitudes=np.asarray(data["amplitudes"], dtype=float),
            spectrum=SpectralShape.parse(data["spectrum"]),
            seed=int(data["seed"]),
        )


@dataclass(frozen=True, eq=False)
class GPSample:
    model: GPModel
    a: np.ndarray
    b: np.ndarray
    seed: int

    @property
    def coefficients(self) -> np.ndarray:
        """Coefficients against the wave basis (cos ..., sin ...)."""
        return np.concatenate([self.a, self.b])


@dataclass(frozen=True, eq=False)
class JetValue:
    value: np.ndarray
    grad: np.ndarray
    hess: np.ndarray
    third: np.ndarray

    def __getitem__(self, index: int) -> "JetValue":
        return JetValue(self.value[index], self.grad[index], self.hess[index], self.third[index])


def build_model(atlas: ManifoldAtlas, num_waves: int, spectral_shape: Union[str, SpectralShape], rng_seed: int) -> GPModel:
    """
    Draw wave vectors, then normalize so that Σσ² = 1 (one scalar on the
    amplitudes) and Σσ²κκᵀ = I (symmetric correction κ -> M^{-1/2}κ).
    """
    shape = SpectralShape.parse(spectral_shape)
    D = atlas.ambient_dim
    floor = D * (D + 1) // 2 + 1
    if num_waves < floor:
        raise InvalidArgumentError(f"need at least {floor} waves for ambient dimension {D}, got {num_waves}")

    rng = make_rng(derive_seed(rng_seed, MODEL_STREAM))
    draws = rng.standard_normal((num_waves, D))
    if shape is SpectralShape.UNIFORM_SHELL:
        frequencies = np.sqrt(D) * draws / np.linalg.norm(draws, axis=1, keepdims=True)
    else:
        frequencies = draws
    amplitudes = np.full(num_waves, 1.0 / np.sqrt(num_waves))
    amplitudes = amplitudes / np.sqrt(np.sum(amplitudes ** 2))

    moment = (frequencies * (amplitudes ** 2)[:, None]).T @ frequencies
    eigvals, eigvecs = np.linalg.eigh(moment)
    if eigvals[0] <= 0.0:
        raise ModelConstructionError("wave moment matrix is singular; isotropy correction is infeasible")
    condition = float(eigvals[-1] / eigvals[0])
    if condition > MOMENT_CONDITION_LIMIT:
        raise ModelConstructionError(f"wave moment matrix is ill-conditioned (cond={condition:.3e})")
    correction = (eigvecs / np.sqrt(eigvals)) @ eigvecs.T
    frequencies = frequencies @ correction

    model = GPModel(frequencies, amplitudes, shape, int(rng_seed))
    if abs(model.total_variance - 1.0) > 1e-12:
        raise InternalConsistencyError(f"total variance {model.total_variance!r} != 1")
    moment_error = float(np.linalg.norm(model.second_moment - np.eye(D)))
    if moment_error > 1e-10:
        raise InternalConsistencyError(f"second moment deviates from identity by {moment_error:.3e}")
    logger.info(f"Built {shape.value} model: {num_waves} waves in R^{D}, moment cond={condition:.2f}")
    return model


def sample(model: GPModel, rng_seed: int) -> GPSample:
    rng = make_rng(rng_seed)
    draws = rng.standard_normal((2, model.num_waves))
    return GPSample(model, model.amplitudes * draws[0], model.amplitudes * draws[1], int(rng_seed))


def phase_jets(model: GPModel, atlas: ManifoldAtlas, chart_id: int, coords: np.ndarray, order: int = 3) -> List[np.ndarray]:
    """Chart derivatives of the phases ⟨κ_q, ι(x)⟩: [(N,Q), (N,Q,m), (N,Q,m,m), (N,Q,m,m,m)]."""
    ambient = atlas.chart(chart_id).ambient_jet(coords, order)
    kappa = model.frequencies
    out = [ambient[0] @ kappa.T]
    for r in range(1, order + 1):
        out.append(np.einsum("nd...,qd->nq...", ambient[r], kappa))
    return out


def _wave_jets(c: np.ndarray, s: np.ndarray, phases: List[np.ndarray], order: int) -> List[np.ndarray]:
    """
    Jets of per-wave terms w(φ(x)) with w(φ) = c and dw/dφ = s (so d²w/dφ² = −c).
    Wave axis is kept: shapes (N,Q), (N,Q,m), ...
    """
    out = [c]
    if order >= 1:
        p1 = phases[1]
        out.append(s[..., None] * p1)
    if order >= 2:
        p2 = phases[2]
        outer = np.einsum("nqi,nqj->nqij", p1, p1)
        out.append(-c[..., None, None] * outer + s[..., None, None] * p2)
    if order >= 3:
        p3 = phases[3]
        cubic = np.einsum("nqi,nqj,nql->nqijl", p1, p1, p1)
        mixed = (
            np.einsum("nqil,nqj->nqijl", p2, p1)
            + np.einsum("nqi,nqjl->nqijl", p1, p2)
            + np.einsum("nqij,nql->nqijl", p2, p1)
        )
        out.append(
            -s[..., None, None, None] * cubic
            - c[..., None, None, None] * mixed
            + s[..., None, None, None] * p3
        )
    return out


def basis_jets(model: GPModel, atlas: ManifoldAtlas, chart_id: int, coords: np.ndarray, order: int = 3) -> List[np.ndarray]:
    """Jets of the 2Q basis functions (cos φ_1..cos φ_Q, sin φ_1..sin φ_Q)."""
    phases = phase_jets(model, atlas, chart_id, coords, order)
    cos, sin = np.cos(phases[0]), np.sin(phases[0])
    doubled = [np.concatenate([p, p], axis=1) for p in phases]
    return _wave_jets(np.concatenate([cos, sin], axis=1), np.concatenate([-sin, cos], axis=1), doubled, order)


def eval_jets(s: GPSample, atlas: ManifoldAtlas, chart_id: int, coords: np.ndarray) -> JetValue:
    """Batched jets of one realization at many points of a chart."""
    phases = phase_jets(s.model, atlas, chart_id, np.atleast_2d(coords), 3)
    cos, sin = np.cos(phases[0]), np.sin(phases[0])
    c = s.a * cos + s.b * sin
    d = -s.a * sin + s.b * cos
    per_wave = _wave_jets(c, d, phases, 3)
    return JetValue(*(term.sum(axis=1) for term in per_wave))


def eval_jet(s: GPSample, atlas: ManifoldAtlas, x: ChartPoint) -> JetValue:
    return eval_jets(s, atlas, x.chart, x.as_array())[0]


def eval_values(s: GPSample, atlas: ManifoldAtlas, chart_id: int, coords: np.ndarray) -> np.ndarray:
    phase = atlas.chart(chart_id).ambient_map(np.atleast_2d(coords)) @ s.model.frequencies.T
    return np.cos(phase) @ s.a + np.sin(phase) @ s.b


def induced_metrics(model: GPModel, atlas: ManifoldAtlas, chart_id: int, coords: np.ndarray) -> np.ndarray:
    """g^C_ij = Jᵀ (Σ σ² κκᵀ) J at many points."""
    jac = atlas.chart(chart_id).ambient_jacobian(np.atleast_2d(coords))
    metric = np.einsum("ndi,de,nej->nij", jac, model.second_moment, jac)
    smallest = np.linalg.svd(jac, compute_uv=False)[:, -1]
    if np.any(smallest <= 1e-12):
        raise NumericalDegeneracyError("ambient Jacobian is rank deficient", chart=chart_id, node=int(np.argmin(smallest)))
    return metric


def induced_metric(model: GPModel, atlas: ManifoldAtlas, x: ChartPoint) -> np.ndarray:
    return induced_metrics(model, atlas, x.chart, x.as_array())[0]


def covariance(model: GPModel, atlas: ManifoldAtlas, x: ChartPoint, y: ChartPoint) -> float:
    """E{f(x) f(y)} = Σ σ² cos⟨κ, ι(x) − ι(y)⟩."""
    delta = atlas.chart(x.chart).ambient_map(x.as_array())[0] - atlas.chart(y.chart).ambient_map(y.as_array())[0]
    return float(np.sum(model.amplitudes ** 2 * np.cos(model.frequencies @ delta)))


def save_model(model: GPModel, path: Union[str, Path]) -> None:
    Path(path).write_text(json.dumps(model.to_dict(), indent=2))
    logger.info(f"Saved model ({model.num_waves} waves) to {path}")


def load_model(path: Union[str, Path]) -> GPModel:
    return GPModel.from_dict(json.loads(Path(path).read_text()))
