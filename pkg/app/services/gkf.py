"""
Closed-form integral geometry: flag coefficients, Gaussian Minkowski
functionals, the Lebesgue/Gaussian tube expansions, the right-hand side of
the Gaussian kinematic formula and the triangular map from LKCs to expected
Euler characteristics of random slices.
"""
import logging
import math
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import eval_hermitenorm, gamma
from scipy.stats import norm

from app.core.errors import InternalConsistencyError, InvalidArgumentError
from app.services.atlas import ManifoldAtlas
from app.services.curvature import LKCVector, reference_lkc
from app.services.special import ball_volume, chi_square_cdf, chi_square_cdf_series

logger = logging.getLogger("GKF")

DEFAULT_J_MAX = 16

POINT = "point"
HALF_LINE = "half-line"
WHOLE_SPACE = "whole-space"


@dataclass(frozen=True)
class GMFTable:
    """Gaussian Minkowski functionals M_0..M_jmax of a set D ⊂ R^n."""
    n: int
    values: Tuple[float, ...]
    kind: str = POINT

    def __getitem__(self, j: int) -> float:
        return self.values[j]

    def __len__(self) -> int:
        return len(self.values)

    @property
    def j_max(self) -> int:
        return len(self.values) - 1


@dataclass(frozen=True, eq=False)
class ZMatrix:
    values: np.ndarray

    @property
    def size(self) -> int:
        return int(self.values.shape[0])

    def apply(self, lkc_values: Sequence[float]) -> np.ndarray:
        return self.values @ np.asarray(lkc_values, dtype=float)


def flag_coefficient(a: int, b: int) -> float:
    """[a over b] = binom(a, b) ω_a / (ω_{a−b} ω_b)."""
    if b < 0 or b > a:
        raise InvalidArgumentError(f"flag coefficient needs 0 <= b <= a, got a={a}, b={b}")
    return math.comb(a, b) * ball_volume(a) / (ball_volume(a - b) * ball_volume(b))


def gmf_point(n: int, j_max: int = DEFAULT_J_MAX) -> GMFTable:
    """
    M_j of {0} ⊂ R^n: j! times the ρ^j coefficient of P{χ²_n ≤ ρ²}. Only
    j = n + 2ℓ survive, with
        M_{n+2ℓ} = (n+2ℓ)! (−1/2)^ℓ / (2^{n/2} Γ(n/2) ℓ! (n/2 + ℓ)).
    """
    if n < 1:
        raise InvalidArgumentError(f"codimension must be >= 1, got {n}")
    if j_max < 0:
        raise InvalidArgumentError(f"j_max must be nonnegative, got {j_max}")
    norm_const = 2.0 ** (n / 2.0) * gamma(n / 2.0)
    values = [0.0] * (j_max + 1)
    for ell in range((j_max - n) // 2 + 1 if j_max >= n else 0):
        j = n + 2 * ell
        values[j] = math.factorial(j) * (-0.5) ** ell / (norm_const * math.factorial(ell) * (n / 2.0 + ell))
    return GMFTable(n, tuple(float(v) for v in values), POINT)


def gmf_point_numeric(n: int, j_max: int = DEFAULT_J_MAX, radius: float = 1.0, points: int = 64) -> GMFTable:
    """
    M_j of {0} ⊂ R^n from Taylor coefficients of the closed-form chi-square
    CDF, read off by the trapezoid rule for the Cauchy integral on |ρ| = radius.
    """
    if points <= j_max:
        raise InvalidArgumentError(f"need more than j_max={j_max} circle points, got {points}")
    angles = 2.0 * np.pi * np.arange(points) / points
    samples = chi_square_cdf(n, radius * np.exp(1j * angles))
    coefficients = np.fft.fft(samples) / points
    values = [math.factorial(j) * coefficients[j].real / radius ** j for j in range(j_max + 1)]
    return GMFTable(n, tuple(float(v) for v in values), POINT)


def gmf_subspace(k: int, n: int, j: int) -> float:
    """M_j of a codimension-n linear subspace of R^k; equal to that of {0} ⊂ R^n."""
    if not 1 <= n <= k:
        raise InvalidArgumentError(f"subspace codimension needs 1 <= n <= k, got n={n}, k={k}")
    if j < 0:
        raise InvalidArgumentError(f"functional index must be nonnegative, got {j}")
    return gmf_point(n, max(j, n))[j]


def gmf_half_line(u: float, j_max: int = DEFAULT_J_MAX) -> GMFTable:
    """[u, ∞) ⊂ R: M_0 = Ψ(u), M_j = He_{j−1}(u) φ(u)."""
    density = norm.pdf(u)
    values = [float(norm.sf(u))] + [float(eval_hermitenorm(j - 1, u) * density) for j in range(1, j_max + 1)]
    return GMFTable(1, tuple(values), HALF_LINE)


def gmf_whole_space(j_max: int = DEFAULT_J_MAX) -> GMFTable:
    return GMFTable(0, (1.0,) + (0.0,) * j_max, WHOLE_SPACE)


def lebesgue_minkowski(lkc_values: Sequence[float], N: int) -> List[float]:
    """M_j = j! ω_j L_{N−j}."""
    if len(lkc_values) != N + 1:
        raise InvalidArgumentError(f"expected {N + 1} LKCs for a set in R^{N}, got {len(lkc_values)}")
    return [math.factorial(j) * ball_volume(j) * float(lkc_values[N - j]) for j in range(N + 1)]


def tube_volume_minkowski(minkowski: Sequence[float], rho: float) -> float:
    """Σ_j ρ^j / j! M_j."""
    if rho < 0.0:
        raise InvalidArgumentError(f"tube radius must be nonnegative, got {rho}")
    return float(sum(rho ** j / math.factorial(j) * m for j, m in enumerate(minkowski)))


def gaussian_tube_point(n: int, rho: float, series: bool = False) -> float:
    """γ_{R^n}(Tube({0}, ρ)) = P{χ²_n ≤ ρ²}."""
    if rho < 0.0:
        raise InvalidArgumentError(f"tube radius must be nonnegative, got {rho}")
    value = chi_square_cdf_series(n, rho) if series else chi_square_cdf(n, rho)
    return float(np.real(value))


def gkf_rhs(i: int, lkc_values: Sequence[float], gmf: GMFTable, m: int) -> float:
    """Σ_{j=0}^{m−i} [i+j over j] (2π)^{−j/2} L_{i+j}(M) M_j(D)."""
    if not 0 <= i <= m:
        raise InvalidArgumentError(f"GKF index needs 0 <= i <= m, got i={i}, m={m}")
    if len(lkc_values) != m + 1:
        raise InvalidArgumentError(f"expected {m + 1} LKCs, got {len(lkc_values)}")
    if gmf.j_max < m - i:
        raise InvalidArgumentError(f"GMF table stops at j={gmf.j_max}, need j={m - i}")
    return float(sum(
        flag_coefficient(i + j, j) * (2.0 * math.pi) ** (-j / 2.0) * lkc_values[i + j] * gmf[j]
        for j in range(m - i + 1)
    ))


def z_matrix(a: int) -> ZMatrix:
    """Row 0 is e_0; row n ≥ 1 holds (2π)^{−j/2} M_j of {0} ⊂ R^n."""
    if a < 0:
        raise InvalidArgumentError(f"Z matrix order must be nonnegative, got {a}")
    values = np.zeros((a + 1, a + 1))
    values[0, 0] = 1.0
    scale = (2.0 * math.pi) ** (-np.arange(a + 1) / 2.0)
    for n in range(1, a + 1):
        values[n] = scale * np.asarray(gmf_point(n, a).values)
    return ZMatrix(values)


def recover_lkc(z: ZMatrix, mu: Sequence[float]) -> LKCVector:
    """Solve Z L = μ by back-substitution."""
    mu = np.asarray(mu, dtype=float)
    if mu.shape != (z.size,):
        raise InvalidArgumentError(f"expected {z.size} expected-Euler values, got shape {mu.shape}")
    if np.any(np.diag(z.values) == 0.0):
        raise InternalConsistencyError("Z matrix has a zero on its diagonal")
    return LKCVector(tuple(float(v) for v in solve_triangular(z.values, mu, lower=False)))


def gkf_table(atlas: ManifoldAtlas, n: int) -> List[Tuple[int, float]]:
    """Rows (i, E L_i(M ∩ f^{-1}(S))) for a codimension-n subspace S, using reference LKCs."""
    m = atlas.dim
    lkc_values = reference_lkc(atlas)
    table = gmf_point(n, max(m, n))
    rows = [(i, gkf_rhs(i, lkc_values.values, table, m)) for i in range(m + 1)]
    logger.info(f"GKF table for {atlas.name}, codim {n}: {rows}")
    return rows
