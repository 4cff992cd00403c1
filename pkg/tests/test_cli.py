import json
import subprocess
import sys

import pytest

from maxmart.checks import RunConfig
from maxmart.cli import emit_report, exit_status, main
from maxmart.errors import StructuralError


def write_config(tmp_path, **overrides):
    cfg = {"model": {"variant": "PoissonDeath", "lambda": 1.0}, "n_paths": 5000, "seed": 42,
           "checks": ["doob", "d-uniform"]}
    cfg.update(overrides)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return str(path)


def test_run_writes_summary_and_csvs(tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["run", "--config", write_config(tmp_path), "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["model"]["variant"] == "PoissonDeath"
    assert (summary["n_paths"], summary["seed"]) == (5000, 42)
    doob = summary["checks"][0]
    assert set(doob) == {"name", "metric", "value", "target", "tolerance", "pass"}
    assert (doob["name"], doob["metric"], doob["pass"]) == ("doob", "ks_d", True)
    assert (out / "doob.csv").exists() and (out / "d_uniform.csv").exists()
    assert "wall_time_s" in json.loads((out / "timing.json").read_text())
    assert "PASS" in capsys.readouterr().out


def test_summary_is_byte_identical_across_jobs(tmp_path):
    cfg = write_config(tmp_path, checks=["doob", "hedge", "azema"], n_inner=200)
    for jobs in ("1", "2"):
        assert main(["run", "--config", cfg, "--jobs", jobs, "--out", str(tmp_path / jobs)]) == 0
    assert (tmp_path / "1" / "summary.json").read_bytes() == \
        (tmp_path / "2" / "summary.json").read_bytes()


def test_seed_override_changes_report(tmp_path):
    cfg = write_config(tmp_path)
    main(["run", "--config", cfg, "--out", str(tmp_path / "a")])
    main(["run", "--config", cfg, "--seed", "7", "--out", str(tmp_path / "b")])
    a = json.loads((tmp_path / "a" / "summary.json").read_text())
    b = json.loads((tmp_path / "b" / "summary.json").read_text())
    assert b["seed"] == 7 and a["checks"] != b["checks"]


@pytest.mark.parametrize("overrides,needle", [
    ({"strikes": [0.5]}, "strikes"),
    ({"checks": ["doob", "magic"]}, "magic"),
    ({"model": {"variant": "Heston"}}, "Heston"),
    ({"model": {"variant": "PoissonDeath", "lambda": -1}}, "lambda"),
    ({"n_pths": 10}, "n_pths"),
    ({"checks": ["azema"], "n_inner": 10}, "n_inner"),
])
def test_config_errors_exit_2(tmp_path, capsys, overrides, needle):
    assert main(["run", "--config", write_config(tmp_path, **overrides)]) == 2
    assert needle in capsys.readouterr().err


def test_missing_config_and_bad_json(tmp_path):
    assert main(["run", "--config", str(tmp_path / "nope.json")]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["run", "--config", str(bad)]) == 2
    assert main(["frobnicate"]) == 2


def test_exit_status_from_summary():
    summary = {"checks": [{"pass": True}, {"pass": False}]}
    assert exit_status(summary) == 1
    assert exit_status({"checks": [{"pass": True}]}) == 0


def test_emit_report_requires_results():
    cfg = RunConfig.from_dict({"model": {"variant": "PoissonUp"}, "checks": ["doob"]})
    with pytest.raises(StructuralError):
        emit_report([], cfg)


def test_jobs_from_environment(tmp_path):
    cfg = write_config(tmp_path, n_paths=2000)
    env_out = tmp_path / "env"
    r = subprocess.run([sys.executable, "-m", "maxmart", "run", "--config", cfg, "--out",
                        str(env_out)], env={"MAXMART_JOBS": "2", "PATH": ""},
                       capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
    r = subprocess.run([sys.executable, "-m", "maxmart", "run", "--config", cfg],
                       env={"MAXMART_JOBS": "zero"}, capture_output=True, text=True)
    assert r.returncode == 2


def test_failing_check_exits_1(tmp_path):
    # at alpha = 0.999 the KS test rejects all but 0.1% of uniform samples
    assert main(["run", "--config", write_config(tmp_path, alpha=0.999),
                 "--out", str(tmp_path / "o")]) == 1
    summary = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert not summary["checks"][0]["pass"]
