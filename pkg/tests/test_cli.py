import csv
import json
import subprocess
import sys

import jsonschema
import pytest

from msmwc import cli

MINIMAL = {"environment": {"kind": "adversarial_uniform"}, "learner": {"kind": "thm1"},
           "predictor": "zero", "d": 2, "T": 100}


def _write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def test_minimal_run_writes_trace_and_summary(tmp_path):
    out = tmp_path / "out"
    assert cli.main(["run", "--config", _write(tmp_path, MINIMAL), "--out", str(out)]) == 0
    assert sorted(p.name for p in out.iterdir()) == ["summary.json", "timing.json", "trace.csv"]
    with open(out / "trace.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t", "learner_loss", "comparator_e1_loss", "comparator_e2_loss", "regret_e1", "regret_e2", "event"]
    assert len(rows) == 101 and rows[-1][0] == "100"
    summary = json.loads((out / "summary.json").read_text())
    jsonschema.validate(summary, cli.load_schema("summary"))
    assert {r["checkpoint"] for r in summary["reports"]} == {25, 50, 100}


def test_seed_range_gives_suffixed_files(tmp_path):
    out = tmp_path / "out"
    assert cli.main(["run", "--config", _write(tmp_path, MINIMAL), "--out", str(out), "--seed", "1..8"]) == 0
    traces = sorted(p.name for p in out.glob("trace_seed*.csv"))
    assert traces == sorted(f"trace_seed{i}.csv" for i in range(1, 9))
    assert len(list(out.glob("summary_seed*.json"))) == 8


@pytest.mark.parametrize(
    "cfg",
    [
        {"environment": {"kind": "adversarial_uniform"}, "d": 2, "T": 10},
        dict(MINIMAL, extra_key=1),
        dict(MINIMAL, environment={"kind": "volcano"}),
        dict(MINIMAL, learner={"kind": "thm1", "typo": 3}),
        dict(MINIMAL, predictor="psychic"),
        dict(MINIMAL, checkpoints=[500]),
    ],
)
def test_malformed_config_exit_2_without_output(tmp_path, cfg):
    out = tmp_path / "out"
    assert cli.main(["run", "--config", _write(tmp_path, cfg), "--out", str(out)]) == 2
    assert not out.exists()


def test_unparseable_config(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    assert cli.main(["run", "--config", str(p), "--out", str(tmp_path / "o")]) == 2
    assert cli.main(["run", "--config", _write(tmp_path, MINIMAL), "--seed", "5..2"]) == 2


def test_learner_failure_exit_3(tmp_path, monkeypatch, capsys):
    import msmwc.harness as H

    real = H.build_learner

    class Failing:
        def __init__(self, inner):
            self.inner = inner

        def begin_round(self, hint=None):
            if self.inner.t == 5:
                raise ArithmeticError("synthetic")
            return self.inner.begin_round(hint)

        def end_round(self, loss, correction_target=None):
            self.inner.end_round(loss, correction_target)

    def patched(*a, **k):
        learner, info = real(*a, **k)
        return Failing(learner), info

    monkeypatch.setattr(H, "build_learner", patched)
    out = tmp_path / "out"
    assert cli.main(["run", "--config", _write(tmp_path, MINIMAL), "--out", str(out)]) == 3
    assert "round 5" in capsys.readouterr().err
    assert not out.exists()


def test_byte_identical_outputs(tmp_path):
    cfg = _write(tmp_path, dict(MINIMAL, predictor="last", learner={"kind": "kl"}))
    for name in ("a", "b"):
        assert cli.main(["run", "--config", cfg, "--out", str(tmp_path / name)]) == 0
    for f in ("trace.csv", "summary.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_sweep_grid_and_index(tmp_path):
    cfg = dict(MINIMAL, environment={"kind": "gap_stochastic"}, T=50,
               grid={"environment.gap": [0.05, 0.1, 0.2], "seed": [0, 1, 2]})
    out = tmp_path / "sweep"
    path = _write(tmp_path, cfg)
    assert cli.main(["sweep", "--config", path, "--out", str(out)]) == 0
    index = json.loads((out / "index.json").read_text())["points"]
    assert len(index) == 9
    assert all((out / p["out"] / "summary.json").exists() for p in index)
    gaps = {p["point"]["environment.gap"] for p in index}
    assert gaps == {0.05, 0.1, 0.2}
    summary = json.loads((out / index[0]["out"] / "summary.json").read_text())
    assert summary["config"]["environment"]["gap"] == index[0]["point"]["environment.gap"]


def test_sweep_resume_skips_existing(tmp_path):
    cfg = dict(MINIMAL, T=30, grid={"seed": [0, 1]})
    out = tmp_path / "sweep"
    path = _write(tmp_path, cfg)
    assert cli.sweep_config(json.loads(open(path).read()), out) == (2, 2)
    (out / "point_0001" / "summary.json").unlink()
    assert cli.sweep_config(json.loads(open(path).read()), out, resume=True) == (1, 2)


@pytest.mark.parametrize("grid", [{}, {"seed": []}])
def test_empty_grid_exit_2(tmp_path, grid):
    cfg = dict(MINIMAL, grid=grid)
    out = tmp_path / "sweep"
    assert cli.main(["sweep", "--config", _write(tmp_path, cfg), "--out", str(out)]) == 2
    assert not out.exists()


def test_sweep_parallel_matches_serial(tmp_path, monkeypatch):
    cfg = dict(MINIMAL, T=40, grid={"seed": [0, 1, 2]})
    cli.sweep_config(cfg, tmp_path / "serial")
    monkeypatch.setenv("MSMWC_THREADS", "2")
    cli.sweep_config(cfg, tmp_path / "parallel")
    for i in range(3):
        a = (tmp_path / "serial" / f"point_{i:04d}" / "trace.csv").read_bytes()
        assert a == (tmp_path / "parallel" / f"point_{i:04d}" / "trace.csv").read_bytes()


def test_grid_rejected_for_run(tmp_path):
    assert cli.main(["run", "--config", _write(tmp_path, dict(MINIMAL, grid={"seed": [1]})),
                     "--out", str(tmp_path / "o")]) == 2


def test_verify_only_filters(capsys):
    assert cli.main(["verify", "--only", "predictors"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["status"] == "pass"
    assert report["passed"] and all(p.startswith("predictors/") for p in report["passed"])


def test_verify_unknown_module():
    assert cli.main(["verify", "--only", "astrology"]) == 2


def test_verify_names_broken_f_kl(monkeypatch, capsys):
    import msmwc.bounds as B

    monkeypatch.setattr(B, "f_kl", lambda a, b: 0.0 * (a if isinstance(a, float) else 0.0))
    assert cli.main(["verify", "--only", "bounds"]) == 1
    report = json.loads(capsys.readouterr().out)
    assert report["status"] == "fail" and report["module"] == "bounds"
    assert "bounds/f_kl" in [f["check"] for f in report["failures"]]


def test_verify_stops_after_first_failing_module(monkeypatch):
    from msmwc import checks

    monkeypatch.setitem(checks.REGISTRY["core_types"], "forced", lambda: (_ for _ in ()).throw(AssertionError("x")))
    report = checks.verify()
    assert report["module"] == "core_types"
    assert not any(p.startswith("entropy_omd/") for p in report["passed"])


def test_module_entry_point(tmp_path):
    out = tmp_path / "o"
    proc = subprocess.run([sys.executable, "-m", "msmwc", "run", "--config", _write(tmp_path, MINIMAL), "--out", str(out)],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and (out / "trace.csv").exists()
