import json
import math

import numpy as np
import pytest

from pdmp_boundary import cli, export
from pdmp_boundary.errors import SchemaMismatch


def _run(tmp_path, name, *flags):
    out = tmp_path / name
    assert cli.main(["run", "--out", str(out), *flags]) == 0
    return out


def test_event_horizon_rows(tmp_path):
    out = _run(tmp_path, "a", "--dim", "2", "--alpha-out", "0", "--horizon", "events:10")
    lines = (out / "chain_000.csv").read_text().splitlines()
    assert lines[0] == "t,tag,x1,x2,v1,v2"
    assert len(lines) == 1 + 12
    assert lines[1].split(",")[1] == "start" and lines[-1].split(",")[1] == "end"
    assert (out / "trajectory.svg").exists()


def test_summary_keys_and_null_timing(tmp_path):
    out = _run(tmp_path, "a", "--chains", "2", "--horizon", "events:200")
    s = json.loads((out / "summary.json").read_text())
    assert set(s) == {"config", "per_chain", "pooled"}
    assert len(s["per_chain"]) == 2
    pooled = s["pooled"]
    for key in ("mean", "second_moment", "occupancy", "events", "events_per_sec", "boundary_hit_rate"):
        assert key in pooled
    assert pooled["events_per_sec"] is None
    assert np.shape(pooled["second_moment"]) == (2, 2)
    assert s["config"]["refresh_rate"] == 1.0
    assert s["config"]["velocity"] == "sphere"


def test_timing_flag_records_rate(tmp_path):
    out = _run(tmp_path, "a", "--horizon", "events:200", "--timing", "--no-svg")
    s = json.loads((out / "summary.json").read_text())
    assert s["pooled"]["events_per_sec"] > 0
    assert not (out / "trajectory.svg").exists()


@pytest.mark.parametrize("sampler", ["bps", "zigzag", "cs"])
def test_reruns_are_byte_identical(tmp_path, sampler):
    flags = ["--dim", "3", "--sampler", sampler, "--kernel", "mh:2", "--basis", "rotated:7", "--chains", "3",
             "--alpha-out", "0.5", "--horizon", "time:20", "--seed", "123"]
    a = _run(tmp_path, "a", *flags)
    b = _run(tmp_path, "b", *flags)
    for name in ("chain_000.csv", "chain_001.csv", "chain_002.csv", "summary.json", "trajectory.svg"):
        assert (a / name).read_bytes() == (b / name).read_bytes(), name


def test_chains_differ(tmp_path):
    out = _run(tmp_path, "a", "--chains", "2", "--horizon", "events:50")
    assert (out / "chain_000.csv").read_text() != (out / "chain_001.csv").read_text()


def test_summarize_round_trip(tmp_path):
    out = _run(tmp_path, "a", "--chains", "3", "--alpha-out", "1", "--alpha-in", "2",
               "--sampler", "zigzag", "--basis", "rotated:3", "--horizon", "events:3000")
    run_pooled = json.loads((out / "summary.json").read_text())["pooled"]
    target = tmp_path / "s.json"
    paths = sorted(str(p) for p in out.glob("chain_*.csv"))
    assert cli.main(["summarize", *paths, "--out", str(target)]) == 0
    assert json.loads(target.read_text())["pooled"] == run_pooled


def test_summarize_single_and_duplicate_chain(tmp_path):
    out = _run(tmp_path, "a", "--horizon", "events:500", "--alpha-out", "1")
    path = str(out / "chain_000.csv")
    one = export.summarize([path])
    chain = one["per_chain"][0]
    for key in ("mean", "second_moment", "occupancy", "events", "total_time"):
        assert one["pooled"][key] == chain[key]
    two = export.summarize([path, path])
    assert two["pooled"]["mean"] == chain["mean"]
    assert two["pooled"]["second_moment"] == chain["second_moment"]
    assert two["pooled"]["between_chain_sd"] == [0.0, 0.0]


def test_summarize_symmetric_mean(tmp_path):
    out = _run(tmp_path, "a", "--chains", "6", "--alpha-out", "0", "--horizon", "time:400", "--seed", "5")
    s = export.summarize(sorted(out.glob("chain_*.csv")))
    means = np.array([c["mean"] for c in s["per_chain"]])
    se = means.std(axis=0, ddof=1) / math.sqrt(len(means))
    assert np.all(np.abs(np.array(s["pooled"]["mean"])) < 4 * se)


def test_schema_mismatch(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("t,tag,x1,v2\n0,start,0,1\n")
    with pytest.raises(SchemaMismatch):
        export.read_skeleton_csv(bad)
    a = _run(tmp_path, "a", "--dim", "2", "--horizon", "events:5", "--no-svg")
    b = _run(tmp_path, "b", "--dim", "3", "--horizon", "events:5", "--no-svg")
    with pytest.raises(SchemaMismatch):
        export.summarize([a / "chain_000.csv", b / "chain_000.csv"])
    assert cli.main(["summarize", str(bad)]) == 2


@pytest.mark.parametrize(
    "flags",
    [
        ["--sampler", "zigzag", "--velocity", "sphere"],
        ["--sampler", "hmc"],
        ["--kernel", "mh:0"],
        ["--horizon", "steps:10"],
        ["--basis", "rotated:x"],
        ["--alpha-in", "0", "--alpha-out", "0"],
        ["--sigma-in", "-1"],
    ],
)
def test_bad_configs_exit_nonzero(tmp_path, flags, capsys):
    assert cli.main(["run", "--out", str(tmp_path / "x"), *flags]) == 2
    assert "error:" in capsys.readouterr().err


def test_config_file_with_flag_override(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"dim": 3, "sampler": "cs", "horizon": "events:20", "seed": 4}))
    out = _run(tmp_path, "a", "--config", str(cfg), "--dim", "2")
    s = json.loads((out / "summary.json").read_text())
    assert s["config"]["dim"] == 2
    assert s["config"]["sampler"] == "cs"
    assert s["config"]["seed"] == 4
    cfg.write_text(json.dumps({"dimension": 3}))
    assert cli.main(["run", "--out", str(tmp_path / "b"), "--config", str(cfg)]) == 2


def test_outside_start_when_cube_is_empty(tmp_path):
    out = _run(tmp_path, "a", "--alpha-in", "0", "--alpha-out", "1", "--horizon", "events:500")
    s = json.loads((out / "summary.json").read_text())
    assert s["pooled"]["occupancy"]["outside"] == 1.0


def test_one_dimension_skips_plot(tmp_path):
    out = _run(tmp_path, "a", "--dim", "1", "--horizon", "events:20")
    assert not (out / "trajectory.svg").exists()


def test_figure_grid_small(tmp_path):
    summaries = cli.figure_grid(tmp_path, dims=(2,), horizon="events:50")
    assert len(summaries) == 9
    assert (tmp_path / "grid_d2.svg").exists()
    assert (tmp_path / "zigzag_mh100_d2" / "chain_000.csv").exists()
