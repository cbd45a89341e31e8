"""
Curvature of a metric given by its chart jet, double-form calculus, and
Lipschitz-Killing curvatures by quadrature.

All functions are vectorized over leading batch axes. Index conventions:
gamma[..., n, j, k] = Γ^n_{jk};  R[..., i, j, k, l] = R_{ijkl} with
R_{1212} = K det g on a surface of Gaussian curvature K.
"""
import itertools
import logging
import math
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from app.core.config import LKC_MAX_NODES, LKC_REFINE_TOL, METRIC_CONDITION_LIMIT
from app.core.errors import InvalidArgumentError, NumericalDegeneracyError
from app.services.atlas import ManifoldAtlas, volume_density
from app.services.embedding import EmbeddingRealization, JetEvaluator, MetricJet, pullback_target, reference_target
from app.services.special import ball_volume

logger = logging.getLogger("Curvature")

# The curvature double form is −R in the component convention above; this
# makes Tr(R) = −K on surfaces and pins Gauss–Bonnet to χ(S²) = 2.
CURVATURE_FORM_SIGN = -1.0


@dataclass(frozen=True, eq=False)
class ChristoffelField:
    gamma: np.ndarray


@dataclass(frozen=True, eq=False)
class CurvatureTensor:
    R: np.ndarray

    def sectional(self, g: np.ndarray) -> np.ndarray:
        """R_{1212} / (g_11 g_22 − g_12²) for the first two coordinate directions."""
        area = g[..., 0, 0] * g[..., 1, 1] - g[..., 0, 1] ** 2
        return self.R[..., 0, 1, 0, 1] / area


@dataclass(frozen=True, eq=False)
class DoubleForm:
    """
    A (p, p) double form: components[..., x_1..x_p, y_1..y_p], antisymmetric
    within each group of p indices. Degree 0 forms are batched scalars.
    """
    degree: int
    components: np.ndarray

    @property
    def dim(self) -> int:
        return self.components.shape[-1] if self.degree else 0


@dataclass(frozen=True)
class LKCVector:
    values: Tuple[float, ...]

    def __getitem__(self, j: int) -> float:
        return self.values[j]

    def __len__(self) -> int:
        return len(self.values)

    @property
    def dim(self) -> int:
        return len(self.values) - 1

    def to_list(self) -> list:
        return list(self.values)


def inverse_metric(g: np.ndarray) -> np.ndarray:
    """g^{-1} via Cholesky, rejecting metrics with condition number above the limit."""
    eigvals = np.linalg.eigvalsh(g)
    smallest, largest = eigvals[..., 0], eigvals[..., -1]
    with np.errstate(divide="ignore", invalid="ignore"):
        condition = np.where(smallest > 0.0, largest / smallest, np.inf)
    if np.any(condition > METRIC_CONDITION_LIMIT):
        flat = np.ravel(condition)
        worst = int(np.argmax(flat))
        raise NumericalDegeneracyError("metric is singular or ill-conditioned", node=worst, condition=float(flat[worst]))
    factor_inv = np.linalg.inv(np.linalg.cholesky(g))
    return np.swapaxes(factor_inv, -1, -2) @ factor_inv


def christoffel(jet: MetricJet) -> ChristoffelField:
    """Γ^n_{jk} = ½ g^{nl}(∂_k g_{lj} + ∂_j g_{lk} − ∂_l g_{jk})."""
    ginv = inverse_metric(jet.g)
    dg = jet.dg
    lowered = 0.5 * (dg + np.swapaxes(dg, -1, -2) - np.moveaxis(dg, -1, -3))
    return ChristoffelField(np.einsum("...nl,...ljk->...njk", ginv, lowered))


def riemann(jet: MetricJet, gamma: ChristoffelField) -> CurvatureTensor:
    """
    R_{ijkl} = ½(∂_j∂_k g_il + ∂_i∂_l g_jk − ∂_j∂_l g_ik − ∂_i∂_k g_jl)
               + g_np(Γ^n_jk Γ^p_il − Γ^n_jl Γ^p_ik)
    """
    ddg = jet.ddg
    second = 0.5 * (
        np.einsum("...iljk->...ijkl", ddg)
        + np.einsum("...jkil->...ijkl", ddg)
        - np.einsum("...ikjl->...ijkl", ddg)
        - np.einsum("...jlik->...ijkl", ddg)
    )
    gam = gamma.gamma
    lowered = np.einsum("...pn,...njk->...pjk", jet.g, gam)
    quadratic = np.einsum("...pjk,...pil->...ijkl", lowered, gam) - np.einsum("...pjl,...pik->...ijkl", lowered, gam)
    return CurvatureTensor(second + quadratic)


def covariant_hessian(grad: np.ndarray, hess: np.ndarray, gamma: ChristoffelField) -> np.ndarray:
    """(∇²f)_ij = ∂_i∂_j f − Γ^l_ij ∂_l f."""
    return hess - np.einsum("...lij,...l->...ij", gamma.gamma, grad)


def _parity(perm: Sequence[int]) -> int:
    sign = 1
    perm = list(perm)
    for i in range(len(perm)):
        while perm[i] != i:
            j = perm[i]
            perm[i], perm[j] = perm[j], perm[i]
            sign = -sign
    return sign


def _alternate(tensor: np.ndarray, first: int, count: int) -> np.ndarray:
    """Σ_σ sgn(σ) σ·T over `count` consecutive axes starting at `first` (no 1/n! factor)."""
    axes = list(range(tensor.ndim))
    total = np.zeros_like(tensor)
    for perm in itertools.permutations(range(count)):
        order = axes[:first] + [first + p for p in perm] + axes[first + count:]
        total = total + _parity(perm) * np.transpose(tensor, order)
    return total


def double_form_product(alpha: DoubleForm, beta: DoubleForm) -> DoubleForm:
    """
    (α·β)(x_1..x_n; y_1..y_n) = 1/(p! q!) Σ_{σ,π} sgn σ sgn π
                                 α(x_σ(1..p); y_π(1..p)) β(x_σ(p+1..n); y_π(p+1..n))
    """
    p, q = alpha.degree, beta.degree
    if p == 0 or q == 0:
        a = alpha.components if p else alpha.components[(...,) + (None,) * (2 * q)]
        b = beta.components if q else beta.components[(...,) + (None,) * (2 * p)]
        return DoubleForm(p + q, a * b)
    batch = alpha.components.ndim - 2 * p
    n = p + q
    a = alpha.components[(...,) + (None,) * (2 * q)]
    b = beta.components[(...,) + (None,) * (2 * p)]
    # axes after batch: a -> (xa, ya, ., .), b -> (., ., xb, yb)
    b = np.moveaxis(b, list(range(batch, batch + 2 * q)), list(range(batch + 2 * p, batch + 2 * n)))
    outer = a * b
    # reorder to (xa, xb, ya, yb)
    order = (
        list(range(batch))
        + [batch + i for i in range(p)]
        + [batch + 2 * p + i for i in range(q)]
        + [batch + p + i for i in range(p)]
        + [batch + 2 * p + q + i for i in range(q)]
    )
    outer = np.transpose(outer, order)
    alt = _alternate(_alternate(outer, batch, n), batch + n, n)
    return DoubleForm(n, alt / (math.factorial(p) * math.factorial(q)))


def double_form_power(form: DoubleForm, power: int) -> DoubleForm:
    if power == 0:
        return DoubleForm(0, np.ones(form.components.shape[: form.components.ndim - 2 * form.degree]))
    result = form
    for _ in range(power - 1):
        result = double_form_product(result, form)
    return result


def double_form_trace(form: DoubleForm, g: np.ndarray) -> np.ndarray:
    """
    Tr γ = (1/p!) Σ_a γ(e_a1..e_ap; e_a1..e_ap) over a g-orthonormal frame,
    i.e. the full contraction of x_r against y_r with g^{-1}.
    """
    p = form.degree
    if p == 0:
        return form.components
    ginv = inverse_metric(g)
    xs = "abcdefgh"[:p]
    ys = "ijklmnop"[:p]
    operands = [form.components] + [ginv] * p
    spec = ",".join(["..." + xs + ys] + ["..." + x + y for x, y in zip(xs, ys)]) + "->..."
    return np.einsum(spec, *operands) / math.factorial(p)


def curvature_form(R: CurvatureTensor) -> DoubleForm:
    return DoubleForm(2, CURVATURE_FORM_SIGN * R.R)


def double_form_power_trace(R: CurvatureTensor, g: np.ndarray, p: int) -> np.ndarray:
    """Tr(R^p) for the curvature double form; p = 0 gives 1."""
    m = g.shape[-1]
    if p < 0 or 2 * p > m:
        raise InvalidArgumentError(f"double-form power needs 0 <= 2p <= m, got p={p}, m={m}")
    return double_form_trace(double_form_power(curvature_form(R), p), g)


def lkc_constant(m: int, j: int) -> float:
    """(−2π)^{−(m−j)/2} / ((m−j)/2)! for even m − j."""
    half = (m - j) // 2
    return (-2.0 * math.pi) ** (-half) / math.factorial(half)


def lkc(atlas: ManifoldAtlas, jets: JetEvaluator) -> LKCVector:
    """
    L_j = K_j ∫ Tr(R^{(m−j)/2}) Vol_g for even m − j, 0 for odd m − j.
    Jets are evaluated once per chart at the active quadrature nodes.
    """
    m = atlas.dim
    totals = [0.0] * (m + 1)
    for chart in atlas.charts:
        coords, weights, index = atlas.active_nodes(chart.id)
        if not len(index):
            continue
        jet = jets(chart.id, coords)
        density = volume_density(jet.g, chart.id, index)
        curvature = None
        if m >= 2:
            try:
                curvature = riemann(jet, christoffel(jet))
            except NumericalDegeneracyError as exc:
                node = int(index[exc.node]) if exc.node is not None else None
                raise NumericalDegeneracyError("metric is singular or ill-conditioned", chart=chart.id,
                                               node=node, condition=exc.condition) from exc
        for j in range(m + 1):
            if (m - j) % 2:
                continue
            p = (m - j) // 2
            integrand = np.ones(len(index)) if p == 0 else double_form_power_trace(curvature, jet.g, p)
            totals[j] += float(np.sum(weights * integrand * density))
    values = tuple(0.0 if (m - j) % 2 else lkc_constant(m, j) * totals[j] for j in range(m + 1))
    return LKCVector(values)


def tube_volume(lkc_vector: LKCVector, rho: float, N: int) -> float:
    """Σ_j ρ^{N−j} ω_{N−j} L_j; valid for ρ below the reach of the set."""
    if len(lkc_vector) != N + 1:
        raise InvalidArgumentError(f"expected {N + 1} LKCs for a set in R^{N}, got {len(lkc_vector)}")
    if rho < 0.0:
        raise InvalidArgumentError(f"tube radius must be nonnegative, got {rho}")
    return float(sum(rho ** (N - j) * ball_volume(N - j) * lkc_vector[j] for j in range(N + 1)))


def reference_lkc(atlas: ManifoldAtlas) -> LKCVector:
    """LKCs of the atlas under its ambient-induced metric."""
    values = lkc(atlas, reference_target(atlas))
    logger.info(f"Reference LKCs of {atlas.name}: {[round(v, 10) for v in values.values]}")
    return values


def lkc_change(a: LKCVector, b: LKCVector) -> float:
    """max_j |a_j − b_j| / max(1, |b_j|)."""
    return max(abs(x - y) / max(1.0, abs(y)) for x, y in zip(a.values, b.values))


def pullback_lkc(e: EmbeddingRealization, atlas: ManifoldAtlas, tol: float = LKC_REFINE_TOL,
                 max_nodes: int = LKC_MAX_NODES) -> LKCVector:
    """
    LKCs of the pullback metric of one realization.

    The quadrature starts at the atlas resolution and doubles the nodes per
    axis until two successive LKC vectors agree to `tol` or the next level
    would exceed `max_nodes`; the finest vector computed is returned.
    tol = 0 keeps the atlas resolution.
    """
    current = atlas
    values = lkc(current, pullback_target(e, current))
    if tol <= 0.0 or not atlas.nodes_per_axis:
        return values
    change = math.inf
    while 2 * current.nodes_per_axis <= max_nodes:
        current = atlas.with_nodes(2 * current.nodes_per_axis)
        finer = lkc(current, pullback_target(e, current))
        change, values = lkc_change(values, finer), finer
        if change < tol:
            logger.debug(f"Pullback LKCs settled at {current.nodes_per_axis} nodes per axis (change {change:.2e})")
            return values
    if change < math.inf:
        logger.warning(f"Pullback LKCs on {atlas.name} (k={e.k}) still moved by {change:.2e} "
                       f"at {current.nodes_per_axis} nodes per axis")
    return values
