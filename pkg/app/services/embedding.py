"""
Random embeddings h^k(x) = k^{-1/2} (f_1(x), ..., f_k(x)) and their pullback
metrics g_ij = (1/k) Σ_ℓ ∂_i f_ℓ ∂_j f_ℓ with chart partials to second order.

Array conventions: dg[..., i, j, p] = ∂_p g_ij and ddg[..., i, j, p, q] = ∂_p ∂_q g_ij.
"""
import logging
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Tuple

import numpy as np

from app.core.errors import InvalidArgumentError, UnsupportedOrderError
from app.services.atlas import ChartPoint, ManifoldAtlas
from app.services.gp_model import GPModel, GPSample, basis_jets, sample
from app.services.seeding import field_seeds
from app.services.special import mean_chi

logger = logging.getLogger("Embedding")

# Points per evaluation batch; bounds the (N, 2Q, m, m, m) basis jets in memory
CHUNK = 1024


@dataclass(frozen=True, eq=False)
class MetricJet:
    g: np.ndarray
    dg: np.ndarray
    ddg: np.ndarray

    def __getitem__(self, index) -> "MetricJet":
        return MetricJet(self.g[index], self.dg[index], self.ddg[index])

    def shifted(self, delta: np.ndarray) -> "MetricJet":
        return MetricJet(self.g + delta, self.dg, self.ddg)


# (chart id, coords (N, m)) -> batched MetricJet
JetEvaluator = Callable[[int, np.ndarray], MetricJet]


@dataclass(frozen=True, eq=False)
class EmbeddingRealization:
    samples: Tuple[GPSample, ...]

    def __post_init__(self):
        if not self.samples:
            raise InvalidArgumentError("an embedding needs at least one field (k >= 1)")
        model = self.samples[0].model
        if any(s.model is not model for s in self.samples):
            raise InvalidArgumentError("all fields of an embedding must share one GPModel")

    @property
    def k(self) -> int:
        return len(self.samples)

    @property
    def model(self) -> GPModel:
        return self.samples[0].model

    @property
    def normalization(self) -> float:
        return 1.0 / math.sqrt(self.k)

    @cached_property
    def coefficients(self) -> np.ndarray:
        """(k, 2Q) coefficients of every field against the wave basis."""
        return np.stack([s.coefficients for s in self.samples])

    @cached_property
    def gram(self) -> np.ndarray:
        """CᵀC / k: the pullback metric is ∂Bᵀ (CᵀC/k) ∂B for the basis B."""
        c = self.coefficients
        return c.T @ c / self.k

    @property
    def seeds(self) -> Tuple[int, ...]:
        return tuple(s.seed for s in self.samples)


def realize(model: GPModel, k: int, replicate_seed: int) -> EmbeddingRealization:
    if k < 1:
        raise InvalidArgumentError(f"k must be >= 1, got {k}")
    return EmbeddingRealization(tuple(sample(model, seed) for seed in field_seeds(replicate_seed, k)))


def embed_point(e: EmbeddingRealization, atlas: ManifoldAtlas, x: ChartPoint) -> np.ndarray:
    basis = basis_jets(e.model, atlas, x.chart, x.as_array(), order=0)[0][0]
    return e.normalization * (e.coefficients @ basis)


def _jet_from_factors(l1, l2, l3, r1, r2) -> MetricJet:
    """
    Σ_a L_a R_a products: g = ∂L·∂R, with first and second partials by the
    product rule. R = S·L for a symmetric S, so both orderings agree.
    """
    g = np.einsum("nai,naj->nij", l1, r1)
    half = np.einsum("naip,naj->nijp", l2, r1)
    dg = half + half.swapaxes(1, 2)
    third = np.einsum("naipq,naj->nijpq", l3, r1)
    cross = np.einsum("naip,najq->nijpq", l2, r2)
    ddg = third + third.swapaxes(1, 2) + cross + cross.swapaxes(3, 4)
    return MetricJet(g, dg, ddg)


def _pullback_chunk(e: EmbeddingRealization, atlas: ManifoldAtlas, chart_id: int, coords: np.ndarray) -> MetricJet:
    jets = basis_jets(e.model, atlas, chart_id, coords, order=3)
    two_q = jets[0].shape[1]
    if e.k < two_q:
        # Per-sample product rule on each field's jets
        c = e.coefficients
        fields = [np.einsum("ka,na...->nk...", c, jet) for jet in jets[1:]]
        scaled = [f / e.k for f in fields[:2]]
        return _jet_from_factors(fields[0], fields[1], fields[2], scaled[0], scaled[1])
    s = e.gram
    r1 = np.einsum("ab,nb...->na...", s, jets[1])
    r2 = np.einsum("ab,nb...->na...", s, jets[2])
    return _jet_from_factors(jets[1], jets[2], jets[3], r1, r2)


def pullback_jets(e: EmbeddingRealization, atlas: ManifoldAtlas, chart_id: int, coords: np.ndarray) -> MetricJet:
    coords = np.atleast_2d(coords)
    parts = [_pullback_chunk(e, atlas, chart_id, coords[i:i + CHUNK]) for i in range(0, coords.shape[0], CHUNK)]
    return MetricJet(*(np.concatenate([getattr(p, name) for p in parts]) for name in ("g", "dg", "ddg")))


def pullback_jet(e: EmbeddingRealization, atlas: ManifoldAtlas, x: ChartPoint) -> MetricJet:
    return pullback_jets(e, atlas, x.chart, x.as_array())[0]


def reference_jets(atlas: ManifoldAtlas, chart_id: int, coords: np.ndarray) -> MetricJet:
    """Ambient-induced metric JᵀJ and its partials from the exact ambient derivatives."""
    _, jac, hess, third = atlas.chart(chart_id).ambient_jet(np.atleast_2d(coords), 3)
    # Same product structure as the pullback, with the ambient axis in place of the wave axis
    return _jet_from_factors(jac, hess, third, jac, hess)


def deviation_norms(e: EmbeddingRealization, atlas: ManifoldAtlas, target: JetEvaluator,
                    grid_per_axis: int) -> Tuple[float, float, float]:
    """
    C⁰, C¹ and C² norms of u = pullback − target, taken per component u_ij:
    sup|u| + Σ_{1≤|α|≤i} sup|∂^α u| over each chart's grid, then the max over
    charts and component pairs. Multi-indices are unordered, so ∂_1∂_2 counts once.
    """
    if grid_per_axis < 2:
        raise InvalidArgumentError(f"grid needs at least 2 points per axis, got {grid_per_axis}")
    m = atlas.dim
    upper = np.triu_indices(m)
    second = [(p, q) for p in range(m) for q in range(p, m)]
    result = np.zeros(3)
    for chart in atlas.charts:
        grid = atlas.evaluation_grid(chart.id, grid_per_axis)
        sup0 = np.zeros((m, m))
        sup1 = np.zeros((m, m, m))
        sup2 = np.zeros((m, m, m, m))
        for start in range(0, grid.shape[0], CHUNK):
            coords = grid[start:start + CHUNK]
            mine = pullback_jets(e, atlas, chart.id, coords)
            theirs = target(chart.id, coords)
            sup0 = np.maximum(sup0, np.max(np.abs(mine.g - theirs.g), axis=0))
            sup1 = np.maximum(sup1, np.max(np.abs(mine.dg - theirs.dg), axis=0))
            sup2 = np.maximum(sup2, np.max(np.abs(mine.ddg - theirs.ddg), axis=0))
        order0 = sup0
        order1 = order0 + sup1.sum(axis=-1)
        order2 = order1 + sum(sup2[:, :, p, q] for p, q in second)
        for i, norm in enumerate((order0, order1, order2)):
            result[i] = max(result[i], float(np.max(norm[upper])))
    return float(result[0]), float(result[1]), float(result[2])


def ci_deviation_norm(e: EmbeddingRealization, atlas: ManifoldAtlas, target: JetEvaluator,
                      order: int, grid_per_axis: int) -> float:
    if order not in (0, 1, 2):
        raise UnsupportedOrderError(f"C^i deviation norms are implemented for i in {{0, 1, 2}}, got {order}")
    return deviation_norms(e, atlas, target, grid_per_axis)[order]


def reference_target(atlas: ManifoldAtlas) -> JetEvaluator:
    return lambda chart_id, coords: reference_jets(atlas, chart_id, coords)


def pullback_target(e: EmbeddingRealization, atlas: ManifoldAtlas) -> JetEvaluator:
    return lambda chart_id, coords: pullback_jets(e, atlas, chart_id, coords)


def expected_volume_ratio(m: int, k: int) -> float:
    """
    E{sqrt det g_k / sqrt det g^C} = Π_{i<m} E χ_{k−i} / k^{m/2}.

    Pointwise k·g_k is Wishart(k) with scale g^C, and its determinant factors
    into independent χ²_{k}, ..., χ²_{k−m+1} terms. Requires k >= m.
    """
    if k < m:
        raise InvalidArgumentError(f"volume ratio needs k >= m, got k={k}, m={m}")
    return float(np.prod([mean_chi(k - i) for i in range(m)]) / k ** (m / 2.0))


def min_pullback_eigenvalue(e: EmbeddingRealization, atlas: ManifoldAtlas, grid_per_axis: int) -> float:
    smallest = math.inf
    for chart in atlas.charts:
        grid = atlas.evaluation_grid(chart.id, grid_per_axis)
        g = pullback_jets(e, atlas, chart.id, grid).g
        smallest = min(smallest, float(np.min(np.linalg.eigvalsh(g)[:, 0])))
    return smallest

