import json
import math

import pytest

from app.core.errors import InvalidArgumentError, OutputWriteError
from app.models import build_config
from app.services.harness import ExperimentResult, ReplicateResult, run_unbiased
from app.services.outputs import emit_outputs, json_safe, render_csv


@pytest.fixture(scope="module")
def unbiased_result():
    cfg = build_config({"kind": "unbiased", "manifold": "torus:2", "waves": 16, "nodes": 16,
                        "k_list": [10, 20], "replicates": 2})
    return run_unbiased(cfg)


def test_json_safe_replaces_non_finite_values():
    assert json_safe({"a": [math.nan, 1.0], "b": (math.inf,)}) == {"a": [None, 1.0], "b": [None]}


def test_csv_keeps_excluded_rows(unbiased_result):
    cfg = unbiased_result.config
    rows = [ReplicateResult(10, 0, 5, {"L0": 0.1}), ReplicateResult(10, 1, 6, status="excluded", reason="bad")]
    text = render_csv(ExperimentResult(cfg.kind, cfg, ["L0"], rows, {}))
    assert text.splitlines() == ["k,replicate,seed,L0,status", "10,0,5,0.1,ok", "10,1,6,,excluded"]


def test_emit_writes_all_files(tmp_path, unbiased_result):
    paths = emit_outputs(unbiased_result, tmp_path, plot=True)
    assert set(paths) == {"csv", "summary", "plot"}
    assert paths["plot"].read_text().lstrip().startswith("<?xml")
    summary = json.loads(paths["summary"].read_text())
    assert summary["root_seed"] == unbiased_result.config.seed
    assert len(summary["seeds"]) == 4
    assert summary["version"]


def test_plot_is_reproducible(tmp_path, unbiased_result):
    first = emit_outputs(unbiased_result, tmp_path / "a", plot=True)["plot"].read_bytes()
    second = emit_outputs(unbiased_result, tmp_path / "b", plot=True)["plot"].read_bytes()
    assert first == second


def test_emit_rejects_empty_results(tmp_path, unbiased_result):
    empty = ExperimentResult(unbiased_result.kind, unbiased_result.config, [], [], {})
    with pytest.raises(InvalidArgumentError):
        emit_outputs(empty, tmp_path)


def test_emit_reports_unwritable_directory(tmp_path, unbiased_result):
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(OutputWriteError):
        emit_outputs(unbiased_result, blocker / "out")
    assert unbiased_result.rows
