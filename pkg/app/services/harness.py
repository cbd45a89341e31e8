"""
Monte Carlo experiments over replicates of random embeddings.

Every replicate is a pure function of (config, root seed, k, replicate index):
its seed comes from replicate_seed() and every random draw inside it is
derived from that seed. Replicates run on a thread pool; results are
collected under a lock and always reported in (k, replicate) order.
"""
import logging
import math
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np

from app import __version__
from app.core.errors import GeometryError, NumericalDegeneracyError
from app.models import ExperimentConfig, ExperimentKind
from app.services.atlas import ManifoldAtlas, parse_manifold
from app.services.curvature import LKCVector, pullback_lkc, reference_lkc
from app.services.embedding import (
    deviation_norms,
    expected_volume_ratio,
    min_pullback_eigenvalue,
    realize,
    reference_target,
)
from app.services.gp_model import GPModel, build_model
from app.services.seeding import replicate_seed
from app.services.zero_count import count_common_zeros, predicted_zero_count, zero_fields

logger = logging.getLogger("Harness")

OK, EXCLUDED, FLAGGED = "ok", "excluded", "flagged"

# z-scores are taken against max(SE, floor · max(1, |target|)) so that
# quantities that are exact per replicate (Gauss–Bonnet) do not divide by ~0
SE_FLOOR = 1e-6

Payload = Dict[str, float]


@dataclass
class ReplicateResult:
    k: int
    replicate: int
    seed: int
    payload: Payload = field(default_factory=dict)
    status: str = OK
    reason: Optional[str] = None
    wall_time: float = 0.0


class ResultCollector:
    """Thread-safe sink for replicate results."""

    def __init__(self):
        self._results: List[ReplicateResult] = []
        self._lock = threading.Lock()

    def add(self, result: ReplicateResult) -> None:
        with self._lock:
            self._results.append(result)

    def __len__(self) -> int:
        with self._lock:
            return len(self._results)

    def ordered(self) -> List[ReplicateResult]:
        with self._lock:
            return sorted(self._results, key=lambda r: (r.k, r.replicate))


@dataclass
class ExperimentResult:
    kind: ExperimentKind
    config: ExperimentConfig
    columns: List[str]
    rows: List[ReplicateResult]
    summary: Dict[str, Any]

    @property
    def root_seed(self) -> int:
        return self.config.seed

    @property
    def excluded(self) -> int:
        return sum(1 for r in self.rows if r.status != OK)

    def used(self, k: Optional[int] = None) -> List[ReplicateResult]:
        return [r for r in self.rows if r.status == OK and (k is None or r.k == k)]


@dataclass(frozen=True)
class Setup:
    atlas: ManifoldAtlas
    model: GPModel
    reference: LKCVector


def prepare(cfg: ExperimentConfig) -> Setup:
    atlas = parse_manifold(cfg.manifold, cfg.nodes)
    model = build_model(atlas, cfg.waves, cfg.spectrum, cfg.seed)
    return Setup(atlas, model, reference_lkc(atlas))


def run_replicates(cfg: ExperimentConfig, worker: Callable[[int, int, int], Tuple[Payload, str]]) -> List[ReplicateResult]:
    """
    Run worker(k, replicate, seed) for every (k, replicate) on cfg.threads
    threads. Numerical degeneracy excludes the replicate with its reason.
    """
    collector = ResultCollector()
    jobs = [(k, rep, replicate_seed(cfg.seed, k, rep)) for k in cfg.k_list for rep in range(cfg.replicates)]

    def run(job: Tuple[int, int, int]) -> None:
        k, rep, seed = job
        start = time.perf_counter()
        try:
            payload, status = worker(k, rep, seed)
            result = ReplicateResult(k, rep, seed, payload, status)
        except NumericalDegeneracyError as exc:
            logger.warning(f"Excluding replicate k={k} rep={rep} seed={seed}: {exc}")
            result = ReplicateResult(k, rep, seed, status=EXCLUDED, reason=str(exc))
        result.wall_time = time.perf_counter() - start
        logger.debug(f"Replicate k={k} rep={rep} finished in {result.wall_time:.3f}s ({result.status})")
        collector.add(result)

    with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
        # list() re-raises the first worker exception that is not a degeneracy
        list(pool.map(run, jobs))

    rows = collector.ordered()
    if len(rows) != len(jobs):
        raise GeometryError(f"collected {len(rows)} results for {len(jobs)} replicates")
    return rows


def _quartiles(values: List[float]) -> Dict[str, float]:
    if not values:
        return {"n": 0}
    q1, median, q3 = np.percentile(values, [25, 50, 75])
    return {"n": len(values), "median": float(median), "q1": float(q1), "q3": float(q3)}


def _mean_se(values: List[float]) -> Tuple[float, float]:
    n = len(values)
    if n == 0:
        return math.nan, math.nan
    mean = float(np.mean(values))
    se = float(np.std(values, ddof=1) / math.sqrt(n)) if n > 1 else math.nan
    return mean, se


def _z(mean: float, se: float, target: float) -> float:
    scale = max(se if not math.isnan(se) else 0.0, SE_FLOOR * max(1.0, abs(target)))
    return (mean - target) / scale


def _log_slope(ks: List[int], medians: List[float]) -> Optional[float]:
    points = [(k, v) for k, v in zip(ks, medians) if v is not None and v > 0.0]
    if len(points) < 2:
        return None
    x = np.log([p[0] for p in points])
    y = np.log([p[1] for p in points])
    return float(np.polyfit(x, y, 1)[0])


def _base_summary(cfg: ExperimentConfig, setup: Setup, rows: List[ReplicateResult]) -> Dict[str, Any]:
    return {
        "kind": cfg.kind.value,
        "version": __version__,
        "root_seed": cfg.seed,
        "config": cfg.model_dump(mode="json"),
        "manifold": setup.atlas.name,
        "reference_lkc": setup.reference.to_list(),
        "replicates": len(rows),
        "excluded": sum(1 for r in rows if r.status != OK),
        "seeds": [
            {"k": r.k, "replicate": r.replicate, "seed": r.seed, "status": r.status, "reason": r.reason}
            for r in rows
        ],
    }


def _lkc_columns(m: int) -> List[str]:
    return [f"L{j}" for j in range(m + 1)]


def run_converge(cfg: ExperimentConfig, setup: Optional[Setup] = None) -> ExperimentResult:
    """C⁰, C¹, C² deviation of the pullback metric from the induced metric, per k."""
    setup = setup or prepare(cfg)
    atlas, model = setup.atlas, setup.model
    target = reference_target(atlas)
    logger.info(f"converge on {atlas.name}: k={cfg.k_list}, {cfg.replicates} replicates, grid {cfg.grid}")

    def worker(k: int, rep: int, seed: int) -> Tuple[Payload, str]:
        e = realize(model, k, seed)
        smallest = min_pullback_eigenvalue(e, atlas, cfg.grid)
        if smallest <= 0.0:
            raise NumericalDegeneracyError(f"pullback metric is not positive definite (min eigenvalue {smallest:.3e})")
        order0, order1, order2 = deviation_norms(e, atlas, target, cfg.grid)
        return {"order0": order0, "order1": order1, "order2": order2}, OK

    rows = run_replicates(cfg, worker)
    columns = ["order0", "order1", "order2"]
    summary = _base_summary(cfg, setup, rows)
    per_k = {}
    for k in cfg.k_list:
        used = [r for r in rows if r.k == k and r.status == OK]
        per_k[str(k)] = {c: _quartiles([r.payload[c] for r in used]) for c in columns}
    summary["per_k"] = per_k
    summary["slope"] = {
        c: _log_slope(cfg.k_list, [per_k[str(k)][c].get("median") for k in cfg.k_list]) for c in columns
    }
    summary["norms_monotone_in_order"] = all(
        r.payload["order0"] <= r.payload["order1"] <= r.payload["order2"] for r in rows if r.status == OK
    )
    logger.info(f"converge done: slopes {summary['slope']}, excluded {summary['excluded']}")
    return ExperimentResult(cfg.kind, cfg, columns, rows, summary)


def run_lkc_converge(cfg: ExperimentConfig, setup: Optional[Setup] = None) -> ExperimentResult:
    """|L_j(h^k(M)) − L_j(M)| per replicate and k."""
    setup = setup or prepare(cfg)
    atlas, model, reference = setup.atlas, setup.model, setup.reference
    m = atlas.dim
    logger.info(f"lkc-converge on {atlas.name}: k={cfg.k_list}, {cfg.replicates} replicates")

    def worker(k: int, rep: int, seed: int) -> Tuple[Payload, str]:
        values = pullback_lkc(realize(model, k, seed), atlas)
        payload = {f"L{j}": values[j] for j in range(m + 1)}
        payload.update({f"dev{j}": abs(values[j] - reference[j]) for j in range(m + 1)})
        return payload, OK

    rows = run_replicates(cfg, worker)
    columns = _lkc_columns(m) + [f"dev{j}" for j in range(m + 1)]
    summary = _base_summary(cfg, setup, rows)
    summary["per_k"] = {
        str(k): {
            f"dev{j}": _quartiles([r.payload[f"dev{j}"] for r in rows if r.k == k and r.status == OK])
            for j in range(m + 1)
        }
        for k in cfg.k_list
    }
    summary["odd_terms_exactly_zero"] = all(
        r.payload[f"L{j}"] == 0.0 for r in rows if r.status == OK for j in range(m + 1) if (m - j) % 2
    )
    logger.info(f"lkc-converge done: excluded {summary['excluded']}")
    return ExperimentResult(cfg.kind, cfg, columns, rows, summary)


def finite_k_expectation(reference: LKCVector, j: int, k: int) -> Optional[float]:
    """
    Exact E L_j(h^k(M)) where it is known in closed form: the volume term
    carries the Wishart factor, and L_0 of a surface is topological.
    """
    m = reference.dim
    if (m - j) % 2:
        return 0.0
    if j == m:
        return expected_volume_ratio(m, k) * reference[m]
    if j == 0 and m == 2:
        return reference[0]
    return None


def run_unbiased(cfg: ExperimentConfig, setup: Optional[Setup] = None) -> ExperimentResult:
    """Sample mean and SE of L_j(h^k(M)) for each fixed k, with z-scores."""
    setup = setup or prepare(cfg)
    atlas, model, reference = setup.atlas, setup.model, setup.reference
    m = atlas.dim
    logger.info(f"unbiased on {atlas.name}: k={cfg.k_list}, {cfg.replicates} replicates")

    def worker(k: int, rep: int, seed: int) -> Tuple[Payload, str]:
        values = pullback_lkc(realize(model, k, seed), atlas)
        return {f"L{j}": values[j] for j in range(m + 1)}, OK

    rows = run_replicates(cfg, worker)
    summary = _base_summary(cfg, setup, rows)
    even = [j for j in range(m + 1) if (m - j) % 2 == 0]
    per_k: Dict[str, Any] = {}
    for k in cfg.k_list:
        stats = {}
        for j in even:
            mean, se = _mean_se([r.payload[f"L{j}"] for r in rows if r.k == k and r.status == OK])
            expected = finite_k_expectation(reference, j, k)
            stats[f"L{j}"] = {
                "mean": mean,
                "se": se,
                "target": reference[j],
                "z": _z(mean, se, reference[j]),
                "finite_k_expected": expected,
                "z_finite_k": None if expected is None else _z(mean, se, expected),
            }
        per_k[str(k)] = stats
    summary["per_k"] = per_k

    # k-independence between consecutive k values; the volume term is
    # compared after dividing out its Wishart factor
    pairs = []
    for k1, k2 in zip(cfg.k_list, cfg.k_list[1:]):
        entry = {"k1": k1, "k2": k2}
        for j in even:
            a, b = per_k[str(k1)][f"L{j}"], per_k[str(k2)][f"L{j}"]
            r1 = expected_volume_ratio(m, k1) if j == m else 1.0
            r2 = expected_volume_ratio(m, k2) if j == m else 1.0
            joint = math.sqrt((a["se"] / r1) ** 2 + (b["se"] / r2) ** 2)
            entry[f"L{j}"] = {
                "difference": a["mean"] - b["mean"],
                "z": _z(a["mean"] - b["mean"], math.sqrt(a["se"] ** 2 + b["se"] ** 2), 0.0),
                "z_corrected": _z(a["mean"] / r1 - b["mean"] / r2, joint, 0.0),
            }
        pairs.append(entry)
    summary["k_independence"] = pairs
    logger.info(f"unbiased done: excluded {summary['excluded']}")
    return ExperimentResult(cfg.kind, cfg, _lkc_columns(m), rows, summary)


def run_zero_count(cfg: ExperimentConfig, setup: Optional[Setup] = None) -> ExperimentResult:
    """Common zeros of two extra i.i.d. fields per replicate against the GKF mean."""
    setup = setup or prepare(cfg)
    atlas, model, reference = setup.atlas, setup.model, setup.reference
    prediction = predicted_zero_count(reference.values)
    logger.info(f"zero-count on {atlas.name}: {cfg.replicates} replicates, predicted mean {prediction:.6f}")

    def worker(k: int, rep: int, seed: int) -> Tuple[Payload, str]:
        counted = count_common_zeros(zero_fields(model, seed), atlas, cfg.zero_grid)
        payload = {"count": float(counted.count), "candidates": float(counted.candidates),
                   "flagged_cells": float(counted.flagged_cells)}
        return payload, FLAGGED if counted.flagged else OK

    rows = run_replicates(cfg, worker)
    summary = _base_summary(cfg, setup, rows)
    summary["flagged"] = [
        {"k": r.k, "replicate": r.replicate, "seed": r.seed, "flagged_cells": r.payload["flagged_cells"]}
        for r in rows if r.status == FLAGGED
    ]
    per_k = {}
    for k in cfg.k_list:
        mean, se = _mean_se([r.payload["count"] for r in rows if r.k == k and r.status == OK])
        per_k[str(k)] = {"mean": mean, "se": se, "predicted": prediction, "z": _z(mean, se, prediction)}
    summary["per_k"] = per_k
    summary["predicted"] = prediction
    logger.info(f"zero-count done: {per_k}, flagged {len(summary['flagged'])}")
    return ExperimentResult(cfg.kind, cfg, ["count", "candidates", "flagged_cells"], rows, summary)


RUNNERS = {
    ExperimentKind.CONVERGE: run_converge,
    ExperimentKind.LKC_CONVERGE: run_lkc_converge,
    ExperimentKind.UNBIASED: run_unbiased,
    ExperimentKind.ZERO_COUNT: run_zero_count,
}


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    return RUNNERS[cfg.kind](cfg)
