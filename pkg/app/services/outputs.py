"""
Result files of an experiment run.

<kind>.csv          one row per replicate, header
                    k,replicate,seed,<payload columns>,status
                    floats written with repr() so reruns are byte-identical;
                    excluded replicates keep their row with empty payload cells
<kind>_summary.json config echo, code version, root seed, per-replicate seeds
                    and per-k statistics (NaN written as null)
<kind>.svg          optional: per-k medians (or means ± SE) against k
"""
import csv
import io
import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, Union

import matplotlib

matplotlib.use("Agg")
# fixed element ids so SVG output is byte-stable
matplotlib.rcParams["svg.hashsalt"] = "gauss-embed"
import matplotlib.pyplot as plt  # noqa: E402

from app.core.errors import InvalidArgumentError, OutputWriteError
from app.models import ExperimentKind
from app.services.harness import ExperimentResult

logger = logging.getLogger("Outputs")


def _cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def render_csv(result: ExperimentResult) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["k", "replicate", "seed"] + result.columns + ["status"])
    for row in result.rows:
        writer.writerow(
            [row.k, row.replicate, row.seed]
            + [_cell(row.payload.get(c)) for c in result.columns]
            + [row.status]
        )
    return buffer.getvalue()


def json_safe(value: Any) -> Any:
    if isinstance(value, float) and (math.isnan(value) or math.isinf(value)):
        return None
    if isinstance(value, dict):
        return {k: json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [json_safe(v) for v in value]
    return value


def render_summary(result: ExperimentResult) -> str:
    return json.dumps(json_safe(result.summary), indent=2)


def render_plot(result: ExperimentResult, path: Path) -> None:
    summary = result.summary
    ks = result.config.k_list
    fig, ax = plt.subplots(figsize=(6, 4))
    if result.kind in (ExperimentKind.CONVERGE, ExperimentKind.LKC_CONVERGE):
        for column in summary["per_k"][str(ks[0])]:
            medians = [summary["per_k"][str(k)][column].get("median") for k in ks]
            points = [(k, v) for k, v in zip(ks, medians) if v is not None and v > 0.0]
            if points:
                ax.plot(*zip(*points), marker="o", label=column)
        ax.set_xscale("log")
        ax.set_yscale("log")
        ax.set_ylabel("median deviation")
    else:
        if result.kind is ExperimentKind.ZERO_COUNT:
            series = {"count": [summary["per_k"][str(k)] for k in ks]}
        else:
            series = {name: [summary["per_k"][str(k)][name] for k in ks] for name in summary["per_k"][str(ks[0])]}
        for name, stats in series.items():
            means = [s["mean"] for s in stats]
            ses = [0.0 if s["se"] is None or math.isnan(s["se"]) else s["se"] for s in stats]
            ax.errorbar(ks, means, yerr=ses, marker="o", capsize=3, label=name)
        ax.set_xscale("log")
        ax.set_ylabel("mean ± SE")
    ax.set_xlabel("k")
    ax.set_title(f"{result.kind.value} on {summary['manifold']}")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def emit_outputs(result: ExperimentResult, out_dir: Union[str, Path], plot: bool = False) -> Dict[str, Path]:
    """
    Write CSV, JSON summary and optionally an SVG. The in-memory result is
    untouched on failure, so a caller can retry with another directory.
    """
    if not result.rows:
        raise InvalidArgumentError("no replicate results to write")
    out_dir = Path(out_dir)
    stem = result.kind.value
    paths = {"csv": out_dir / f"{stem}.csv", "summary": out_dir / f"{stem}_summary.json"}
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        paths["csv"].write_text(render_csv(result))
        paths["summary"].write_text(render_summary(result))
        if plot:
            paths["plot"] = out_dir / f"{stem}.svg"
            render_plot(result, paths["plot"])
    except OSError as exc:
        raise OutputWriteError(f"cannot write results to {out_dir}: {exc}") from exc
    for name, path in paths.items():
        logger.info(f"Wrote {name}: {path}")
    return paths
