"""
Finite atlases for the built-in compact manifolds.

A ManifoldAtlas bundles charts (with exact ambient-map derivatives up to
third order), transition maps, per-chart quadrature and a partition of
unity evaluated exactly at the quadrature nodes. Everything is immutable
after construction.
"""
import itertools
import logging
import math
import threading
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.core.config import JACOBIAN_RANK_TOL, QUADRATURE_NODES, QUADRATURE_TOL
from app.core.errors import InvalidArgumentError, NumericalDegeneracyError

logger = logging.getLogger("Atlas")

ONE, SIN, COS = 0, 1, 2

# Per-chart scalar evaluators: (chart id, coords (N, m)) -> values
ChartField = Callable[[int, np.ndarray], np.ndarray]


def _trig_derivative(kind: int, order: int, t: np.ndarray) -> np.ndarray:
    if kind == ONE:
        return np.ones_like(t) if order == 0 else np.zeros_like(t)
    # sin -> cos -> -sin -> -cos
    step = (order + (1 if kind == COS else 0)) % 4
    if step == 0:
        return np.sin(t)
    if step == 1:
        return np.cos(t)
    if step == 2:
        return -np.sin(t)
    return -np.cos(t)


class TrigMonomialMap:
    """
    Ambient map whose components are products of per-axis trigonometric
    factors:  ι_d(x) = scale_d · Π_a trig_{d,a}(freq_{d,a} x_a + offset_{d,a}).

    Covers the flat-torus and spherical-coordinate embeddings and gives
    exact partial derivatives of any order.
    """

    def __init__(self, scales: Sequence[float], kinds: Sequence[Sequence[int]],
                 freqs: Sequence[Sequence[float]], offsets: Optional[Sequence[Sequence[float]]] = None):
        self.scales = np.asarray(scales, dtype=float)
        self.kinds = np.asarray(kinds, dtype=int)
        self.freqs = np.asarray(freqs, dtype=float)
        self.offsets = np.zeros_like(self.freqs) if offsets is None else np.asarray(offsets, dtype=float)
        self.ambient_dim, self.dim = self.kinds.shape

    def jet(self, x: np.ndarray, order: int = 3) -> List[np.ndarray]:
        """[value (N,D), jacobian (N,D,m), hessian (N,D,m,m), third (N,D,m,m,m)] up to `order`."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        n_points, m = x.shape
        D = self.ambient_dim
        # factors[r, n, d, a] = r-th derivative of the (d, a) factor
        factors = np.empty((order + 1, n_points, D, m))
        args = x[:, None, :] * self.freqs[None, :, :] + self.offsets[None, :, :]
        for d in range(D):
            for a in range(m):
                for r in range(order + 1):
                    factors[r, :, d, a] = self.freqs[d, a] ** r * _trig_derivative(self.kinds[d, a], r, args[:, d, a])

        out = []
        for r in range(order + 1):
            block = np.empty((n_points, D) + (m,) * r)
            for index in itertools.product(range(m), repeat=r):
                counts = np.bincount(np.asarray(index, dtype=int), minlength=m) if r else np.zeros(m, dtype=int)
                prod = np.ones((n_points, D))
                for a in range(m):
                    prod = prod * factors[counts[a], :, :, a]
                block[(slice(None), slice(None)) + index] = prod * self.scales[None, :]
            out.append(block)
        return out


@dataclass(frozen=True)
class ChartPoint:
    chart: int
    coords: Tuple[float, ...]

    def as_array(self) -> np.ndarray:
        return np.asarray(self.coords, dtype=float)[None, :]


@dataclass(frozen=True, eq=False)
class Chart:
    id: int
    dim: int
    lower: np.ndarray
    upper: np.ndarray
    periodic: Tuple[bool, ...]
    embedding: TrigMonomialMap
    inverse: Callable[[np.ndarray], np.ndarray]
    core_lower: np.ndarray
    core_upper: np.ndarray

    def ambient_map(self, x: np.ndarray) -> np.ndarray:
        return self.embedding.jet(x, 0)[0]

    def ambient_jacobian(self, x: np.ndarray) -> np.ndarray:
        return self.embedding.jet(x, 1)[1]

    def ambient_jet(self, x: np.ndarray, order: int = 3) -> List[np.ndarray]:
        return self.embedding.jet(x, order)

    def wrap(self, x: np.ndarray) -> np.ndarray:
        x = np.array(x, dtype=float, copy=True)
        for a, periodic in enumerate(self.periodic):
            if periodic:
                span = self.upper[a] - self.lower[a]
                x[..., a] = self.lower[a] + np.mod(x[..., a] - self.lower[a], span)
        return x

    def contains(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        inside = np.ones(x.shape[0], dtype=bool)
        for a, periodic in enumerate(self.periodic):
            if not periodic:
                inside &= (x[:, a] > self.lower[a]) & (x[:, a] < self.upper[a])
        return inside

    def in_core(self, x: np.ndarray, slack: float = 0.0) -> np.ndarray:
        x = np.atleast_2d(x)
        inside = np.ones(x.shape[0], dtype=bool)
        for a, periodic in enumerate(self.periodic):
            if not periodic:
                inside &= (x[:, a] >= self.core_lower[a] - slack) & (x[:, a] <= self.core_upper[a] + slack)
        return inside


@dataclass(frozen=True, eq=False)
class Quadrature:
    nodes: np.ndarray
    weights: np.ndarray
    partition: np.ndarray


@dataclass(frozen=True, eq=False)
class ManifoldAtlas:
    name: str
    dim: int
    ambient_dim: int
    charts: Tuple[Chart, ...]
    quadrature: Tuple[Quadrature, ...]
    partition: Callable[[np.ndarray], np.ndarray]
    point_sampler: Callable[[np.random.Generator, int], np.ndarray]
    total_volume: float
    quadrature_tol: float = QUADRATURE_TOL
    transitions: Dict[Tuple[int, int], str] = field(default_factory=dict)
    nodes_per_axis: int = 0
    builder: Optional[Callable[[int], "ManifoldAtlas"]] = None
    _resolutions: Dict[int, "ManifoldAtlas"] = field(default_factory=dict, init=False, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, init=False, repr=False)

    def chart(self, chart_id: int) -> Chart:
        return self.charts[chart_id]

    def with_nodes(self, nodes_per_axis: int) -> "ManifoldAtlas":
        """The same manifold and charts at another quadrature resolution, built once per resolution."""
        if nodes_per_axis == self.nodes_per_axis:
            return self
        if self.builder is None:
            raise InvalidArgumentError(f"{self.name} cannot be rebuilt with {nodes_per_axis} nodes per axis")
        with self._lock:
            if nodes_per_axis not in self._resolutions:
                self._resolutions[nodes_per_axis] = self.builder(nodes_per_axis)
            return self._resolutions[nodes_per_axis]

    def partition_weight(self, chart_id: int, coords: np.ndarray) -> np.ndarray:
        chart = self.charts[chart_id]
        coords = np.atleast_2d(coords)
        weights = self.partition(chart.ambient_map(coords))[:, chart_id]
        return np.where(chart.contains(coords), weights, 0.0)

    def reference_metric(self, chart_id: int, coords: np.ndarray) -> np.ndarray:
        jac = self.charts[chart_id].ambient_jacobian(coords)
        return np.einsum("ndi,ndj->nij", jac, jac)

    def active_nodes(self, chart_id: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Quadrature nodes whose combined weight w·ρ is positive: (coords, weights, node indices)."""
        quad = self.quadrature[chart_id]
        combined = quad.weights * quad.partition
        index = np.flatnonzero(combined > 0.0)
        return quad.nodes[index], combined[index], index

    def transition(self, i: int, j: int, coords: np.ndarray) -> np.ndarray:
        if (i, j) not in self.transitions:
            raise InvalidArgumentError(f"charts {i} and {j} do not overlap in {self.name}")
        ambient = self.charts[i].ambient_map(coords)
        return self.charts[j].wrap(self.charts[j].inverse(ambient))

    def transition_jacobian(self, i: int, j: int, coords: np.ndarray) -> np.ndarray:
        target = self.transition(i, j, coords)
        jac_i = self.charts[i].ambient_jacobian(coords)
        jac_j = self.charts[j].ambient_jacobian(target)
        normal = np.einsum("nda,ndb->nab", jac_j, jac_j)
        rhs = np.einsum("nda,ndb->nab", jac_j, jac_i)
        return np.linalg.solve(normal, rhs)

    def locate(self, point: np.ndarray) -> List[ChartPoint]:
        """All charts containing an ambient point, with its coordinates in each."""
        point = np.atleast_2d(point)
        found = []
        for chart in self.charts:
            coords = chart.wrap(chart.inverse(point))
            if chart.contains(coords)[0]:
                found.append(ChartPoint(chart.id, tuple(float(c) for c in coords[0])))
        return found

    def owner(self, point: np.ndarray) -> int:
        weights = self.partition(np.atleast_2d(point))[0]
        return int(np.argmax(weights))

    def evaluation_grid(self, chart_id: int, per_axis: int) -> np.ndarray:
        chart = self.charts[chart_id]
        axes = []
        for a, periodic in enumerate(chart.periodic):
            axes.append(np.linspace(chart.core_lower[a], chart.core_upper[a], per_axis, endpoint=not periodic))
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([axis.ravel() for axis in mesh], axis=-1)

    def partition_defect(self, n_points: int = 1000, seed: int = 0) -> float:
        """max |Σ_ℓ ρ_ℓ − 1| over random points covered by more than one chart."""
        rng = np.random.default_rng(seed)
        worst = 0.0
        for point in self.point_sampler(rng, n_points):
            located = self.locate(point)
            if len(located) < 2 and len(self.charts) > 1:
                continue
            total = sum(float(self.partition_weight(p.chart, p.as_array())[0]) for p in located)
            worst = max(worst, abs(total - 1.0))
        return worst

    def cocycle_defect(self, n_points: int = 200, seed: int = 0) -> float:
        """max distance between x and its image under i -> j -> i, over overlapping pairs."""
        rng = np.random.default_rng(seed)
        points = self.point_sampler(rng, n_points)
        worst = 0.0
        for (i, j) in self.transitions:
            chart_i = self.charts[i]
            coords = chart_i.wrap(chart_i.inverse(points))
            coords = coords[chart_i.contains(coords)]
            there = self.transition(i, j, coords)
            keep = self.charts[j].contains(there)
            back = self.transition(j, i, there[keep])
            delta = back - coords[keep]
            for a, periodic in enumerate(chart_i.periodic):
                if periodic:
                    span = chart_i.upper[a] - chart_i.lower[a]
                    delta[:, a] = (delta[:, a] + span / 2.0) % span - span / 2.0
            if delta.size:
                worst = max(worst, float(np.max(np.abs(delta))))
        return worst


def volume_density(metric: np.ndarray, chart_id: int = None, node_index: np.ndarray = None) -> np.ndarray:
    """sqrt(det g) through a Cholesky factorization; fails loudly on a non-positive-definite node."""
    try:
        factor = np.linalg.cholesky(metric)
    except np.linalg.LinAlgError:
        smallest = np.linalg.eigvalsh(metric)[:, 0]
        bad = int(np.argmax(smallest <= 0.0))
        node = int(node_index[bad]) if node_index is not None else bad
        raise NumericalDegeneracyError("metric is not positive definite", chart=chart_id, node=node)
    return np.prod(np.diagonal(factor, axis1=-2, axis2=-1), axis=-1)


def integrate_scalar(atlas: ManifoldAtlas, field: ChartField, metric: ChartField) -> float:
    """
    Σ_ℓ Σ_nodes w · ρ_ℓ · field · sqrt(det g) in chart coordinates.
    Charts are summed in id order so the result is deterministic.
    """
    total = 0.0
    for chart in atlas.charts:
        coords, weights, index = atlas.active_nodes(chart.id)
        if not len(index):
            continue
        density = volume_density(metric(chart.id, coords), chart.id, index)
        values = np.asarray(field(chart.id, coords), dtype=float)
        total += float(np.sum(weights * values * density))
    return total


def _check_jacobian_rank(atlas: ManifoldAtlas) -> None:
    for chart in atlas.charts:
        coords, _, index = atlas.active_nodes(chart.id)
        if not len(index):
            continue
        smallest = np.linalg.svd(chart.ambient_jacobian(coords), compute_uv=False)[:, -1]
        if np.min(smallest) <= JACOBIAN_RANK_TOL:
            bad = int(np.argmin(smallest))
            raise NumericalDegeneracyError("ambient Jacobian is rank deficient", chart=chart.id, node=int(index[bad]))


def make_flat_torus(m: int, periods: Sequence[float], nodes_per_axis: int = QUADRATURE_NODES,
                    origin: Optional[Sequence[float]] = None) -> ManifoldAtlas:
    """
    Flat torus Π [0, P_i) as one periodic chart, embedded in R^{2m} by
    x_i -> (P_i/2π)(cos 2π(x_i+o_i)/P_i, sin 2π(x_i+o_i)/P_i); the induced metric is δ.
    """
    if m < 1:
        raise InvalidArgumentError(f"torus dimension must be >= 1, got {m}")
    periods = [float(p) for p in periods]
    if len(periods) != m:
        raise InvalidArgumentError(f"expected {m} periods, got {len(periods)}")
    if any(p <= 0.0 for p in periods):
        raise InvalidArgumentError(f"torus periods must be positive, got {periods}")
    if nodes_per_axis < 4:
        raise InvalidArgumentError(f"nodes_per_axis must be >= 4, got {nodes_per_axis}")
    origin = np.zeros(m) if origin is None else np.asarray(origin, dtype=float)

    scales, kinds, freqs, offsets = [], [], [], []
    for a, period in enumerate(periods):
        omega = 2.0 * math.pi / period
        for kind in (COS, SIN):
            row_kind = [ONE] * m
            row_kind[a] = kind
            row_freq = [0.0] * m
            row_freq[a] = omega
            row_offset = [0.0] * m
            row_offset[a] = omega * origin[a]
            scales.append(1.0 / omega)
            kinds.append(row_kind)
            freqs.append(row_freq)
            offsets.append(row_offset)
    embedding = TrigMonomialMap(scales, kinds, freqs, offsets)
    upper = np.asarray(periods)

    def inverse(ambient: np.ndarray) -> np.ndarray:
        ambient = np.atleast_2d(ambient)
        coords = np.empty((ambient.shape[0], m))
        for a, period in enumerate(periods):
            angle = np.arctan2(ambient[:, 2 * a + 1], ambient[:, 2 * a])
            coords[:, a] = np.mod(angle * period / (2.0 * math.pi) - origin[a], period)
        return coords

    chart = Chart(0, m, np.zeros(m), upper, (True,) * m, embedding, inverse, np.zeros(m), upper.copy())

    axes = [np.arange(nodes_per_axis) * (p / nodes_per_axis) for p in periods]
    mesh = np.meshgrid(*axes, indexing="ij")
    nodes = np.stack([axis.ravel() for axis in mesh], axis=-1)
    weights = np.full(nodes.shape[0], float(np.prod(periods)) / nodes_per_axis ** m)
    quadrature = Quadrature(nodes, weights, np.ones(nodes.shape[0]))

    def partition(ambient: np.ndarray) -> np.ndarray:
        return np.ones((np.atleast_2d(ambient).shape[0], 1))

    def sampler(rng: np.random.Generator, count: int) -> np.ndarray:
        return chart.ambient_map(rng.uniform(0.0, 1.0, size=(count, m)) * upper)

    atlas = ManifoldAtlas(
        name=f"torus:{m}:{','.join(repr(p) for p in periods)}",
        dim=m,
        ambient_dim=2 * m,
        charts=(chart,),
        quadrature=(quadrature,),
        partition=partition,
        point_sampler=sampler,
        total_volume=float(np.prod(periods)),
        transitions={(0, 0): "periodic wrap"},
        nodes_per_axis=nodes_per_axis,
        builder=lambda n: make_flat_torus(m, periods, n, origin),
    )
    _check_jacobian_rank(atlas)
    logger.info(f"Built {atlas.name} with {nodes.shape[0]} quadrature nodes")
    return atlas


def make_round_sphere(radius: float, nodes: int = QUADRATURE_NODES) -> ManifoldAtlas:
    """
    Round sphere of the given radius in R³ with two spherical-coordinate charts:
    chart 0 about the z axis, chart 1 about the x axis. Each chart misses only
    its own pair of poles; the partition of unity

        ρ_0 = (1 − z²/r²) / (2 − z²/r² − x²/r²),   ρ_1 = 1 − ρ_0

    is real-analytic and vanishes at the poles of its chart, so Gauss–Legendre
    (colatitude) × trapezoidal (longitude) quadrature converges exponentially.

    This is not the polar-cap atlas blended by a quintic smoothstep over the
    colatitude band (π/3, 2π/3): that partition is only C², which caps the
    quadrature at algebraic order. Ownership under this partition keeps every
    point in its owner's core box, colatitude [π/6, 5π/6].
    """
    radius = float(radius)
    if radius <= 0.0:
        raise InvalidArgumentError(f"sphere radius must be positive, got {radius}")
    if nodes < 4:
        raise InvalidArgumentError(f"nodes must be >= 4, got {nodes}")

    ones = [[1.0, 1.0]] * 3
    about_z = TrigMonomialMap([radius] * 3, [[SIN, COS], [SIN, SIN], [COS, ONE]], ones)
    about_x = TrigMonomialMap([radius] * 3, [[COS, ONE], [SIN, COS], [SIN, SIN]], ones)

    def inverse_z(ambient: np.ndarray) -> np.ndarray:
        ambient = np.atleast_2d(ambient)
        theta = np.arccos(np.clip(ambient[:, 2] / radius, -1.0, 1.0))
        phi = np.mod(np.arctan2(ambient[:, 1], ambient[:, 0]), 2.0 * math.pi)
        return np.stack([theta, phi], axis=-1)

    def inverse_x(ambient: np.ndarray) -> np.ndarray:
        ambient = np.atleast_2d(ambient)
        theta = np.arccos(np.clip(ambient[:, 0] / radius, -1.0, 1.0))
        phi = np.mod(np.arctan2(ambient[:, 2], ambient[:, 1]), 2.0 * math.pi)
        return np.stack([theta, phi], axis=-1)

    lower = np.array([0.0, 0.0])
    upper = np.array([math.pi, 2.0 * math.pi])
    core_lower = np.array([math.pi / 6.0, 0.0])
    core_upper = np.array([5.0 * math.pi / 6.0, 2.0 * math.pi])
    charts = (
        Chart(0, 2, lower, upper, (False, True), about_z, inverse_z, core_lower, core_upper),
        Chart(1, 2, lower, upper, (False, True), about_x, inverse_x, core_lower, core_upper),
    )

    def partition(ambient: np.ndarray) -> np.ndarray:
        unit = np.atleast_2d(ambient) / radius
        u_z = 1.0 - unit[:, 2] ** 2
        u_x = 1.0 - unit[:, 0] ** 2
        total = u_z + u_x
        return np.stack([u_z / total, u_x / total], axis=-1)

    t, w = np.polynomial.legendre.leggauss(nodes)
    theta = 0.5 * math.pi * (t + 1.0)
    w_theta = 0.5 * math.pi * w
    n_phi = 2 * nodes
    phi = np.arange(n_phi) * (2.0 * math.pi / n_phi)
    grid_theta, grid_phi = np.meshgrid(theta, phi, indexing="ij")
    node_coords = np.stack([grid_theta.ravel(), grid_phi.ravel()], axis=-1)
    node_weights = np.repeat(w_theta, n_phi) * (2.0 * math.pi / n_phi)
    quadrature = tuple(
        Quadrature(node_coords, node_weights, partition(chart.ambient_map(node_coords))[:, chart.id])
        for chart in charts
    )

    def sampler(rng: np.random.Generator, count: int) -> np.ndarray:
        points = rng.standard_normal((count, 3))
        return radius * points / np.linalg.norm(points, axis=1, keepdims=True)

    atlas = ManifoldAtlas(
        name=f"sphere:{radius!r}",
        dim=2,
        ambient_dim=3,
        charts=charts,
        quadrature=quadrature,
        partition=partition,
        point_sampler=sampler,
        total_volume=4.0 * math.pi * radius ** 2,
        transitions={(0, 1): "rotate z->x", (1, 0): "rotate x->z"},
        nodes_per_axis=nodes,
        builder=lambda n: make_round_sphere(radius, n),
    )
    _check_jacobian_rank(atlas)
    logger.info(f"Built {atlas.name} with 2 x {node_coords.shape[0]} quadrature nodes")
    return atlas


def parse_manifold(spec: str, nodes: int = QUADRATURE_NODES) -> ManifoldAtlas:
    """`torus:<m>[:<P1,..,Pm>]` or `sphere:<radius>`."""
    parts = spec.strip().split(":")
    kind = parts[0].lower()
    try:
        if kind == "torus" and len(parts) in (2, 3):
            m = int(parts[1])
            periods = [float(p) for p in parts[2].split(",")] if len(parts) == 3 else [2.0 * math.pi] * m
            return make_flat_torus(m, periods, nodes)
        if kind == "sphere" and len(parts) == 2:
            return make_round_sphere(float(parts[1]), nodes)
    except ValueError as exc:
        if isinstance(exc, InvalidArgumentError):
            raise
        raise InvalidArgumentError(f"cannot parse manifold '{spec}': {exc}") from exc
    raise InvalidArgumentError(f"unknown manifold '{spec}', expected torus:<m>:<P1,..> or sphere:<radius>")


def manifold_dimension(spec: str) -> int:
    """Dimension named by a manifold string, without building the atlas."""
    parts = spec.strip().split(":")
    kind = parts[0].lower()
    if kind == "sphere" and len(parts) == 2:
        return 2
    if kind == "torus" and len(parts) in (2, 3):
        try:
            m = int(parts[1])
        except ValueError:
            raise InvalidArgumentError(f"cannot parse torus dimension in '{spec}'")
        if m < 1:
            raise InvalidArgumentError(f"torus dimension must be >= 1, got {m}")
        return m
    raise InvalidArgumentError(f"unknown manifold '{spec}', expected torus:<m>:<P1,..> or sphere:<radius>")
