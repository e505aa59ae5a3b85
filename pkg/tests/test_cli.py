import csv
import io
import json
import subprocess
import sys

import jsonschema
import pytest

from zrplab.cli import main
from zrplab.experiments import report_schema

CONFIG = {"experiments": [
    {"scenario": "stationarity", "name": "stat", "N": 8, "R": 16},
    {"scenario": "martingale", "name": "mart", "N": 16, "R": 256},
]}


def _run(tmp_path, sub, config=CONFIG, parallel="1", seed="7"):
    cfg = tmp_path / "config.json"
    cfg.write_text(json.dumps(config), encoding="utf-8")
    out = tmp_path / sub
    code = main(["run", "--config", str(cfg), "--out", str(out), "--seed", seed, "--parallel", parallel])
    return code, out


def test_run_writes_reports_samples_and_manifest(tmp_path):
    code, out = _run(tmp_path, "o")
    manifest = json.loads((out / "manifest.json").read_text())
    assert set(manifest) >= {"version", "config_digest", "master_seed", "seed_rule", "started", "finished",
                             "experiments"}
    assert manifest["master_seed"] == 7
    for name in ("stat", "mart"):
        report = json.loads((out / name / "report.json").read_text())
        jsonschema.validate(report, report_schema())
        header = (out / name / "samples.csv").read_bytes().split(b"\n")[0]
        assert header == b"replica,t,observable,label,value"
    # the stated quadratic variation gate fails, so the suite exits nonzero with every report present
    assert code == 1 and manifest["experiments"]["mart"]["passed"] is False


def test_outputs_identical_across_parallelism(tmp_path):
    _, a = _run(tmp_path, "a", parallel="1")
    _, b = _run(tmp_path, "b", parallel="2")
    for name in ("stat", "mart"):
        for f in ("report.json", "samples.csv"):
            assert (a / name / f).read_bytes() == (b / name / f).read_bytes()
    ma = json.loads((a / "manifest.json").read_text())
    mb = json.loads((b / "manifest.json").read_text())
    for key in ("started", "finished"):
        ma.pop(key), mb.pop(key)
    assert ma == mb


def test_digest_changes_with_config(tmp_path):
    _, a = _run(tmp_path, "a", config={"experiments": CONFIG["experiments"][:1]})
    changed = {"experiments": [dict(CONFIG["experiments"][0], N=16)]}
    _, b = _run(tmp_path, "b", config=changed)
    da = json.loads((a / "manifest.json").read_text())["config_digest"]
    db = json.loads((b / "manifest.json").read_text())["config_digest"]
    assert da != db


def test_passing_suite_exits_zero(tmp_path):
    code, _ = _run(tmp_path, "p", config={"experiments": [{"scenario": "stationarity", "N": 8, "R": 16}]})
    assert code == 0


def test_errored_experiment_does_not_stop_the_suite(tmp_path):
    config = {"experiments": [{"scenario": "field_covariance", "name": "bad", "c": 4, "R": 16},
                              {"scenario": "stationarity", "name": "good", "N": 8, "R": 16}]}
    code, out = _run(tmp_path, "e", config=config)
    assert code == 1
    bad = json.loads((out / "bad" / "report.json").read_text())
    assert bad["status"] == "errored"
    assert json.loads((out / "good" / "report.json").read_text())["passed"]


def test_config_error_exit_code(tmp_path, capsys):
    code, _ = _run(tmp_path, "x", config={"scenario": "bg_decay", "gamma": 0.5})
    assert code == 2
    assert "experiments[0].gamma" in capsys.readouterr().err


def test_riemann_csv(capsys):
    assert main(["riemann", "--rho-left", "0", "--rho-right", "1", "--t", "1", "--points", "5"]) == 0
    out = capsys.readouterr().out
    rows = list(csv.reader(io.StringIO(out)))
    assert rows[0] == ["xi", "rho"] and len(rows) == 6
    assert "\r" not in out
    assert [float(r[1]) for r in rows[1:]] == [0.0, 0.0, 0.0, 1.0, 1.0]


def test_sample_and_selftest(tmp_path, capsys):
    path = tmp_path / "s.csv"
    assert main(["sample", "--L", "10", "--count", "3", "--seed", "1", "--out", str(path)]) == 0
    rows = path.read_text().splitlines()
    assert rows[0] == "replica,site,occupancy" and len(rows) == 31
    assert main(["selftest", "--trials", "20"]) == 0
    assert json.loads(capsys.readouterr().out)["passed"]


@pytest.mark.parametrize("args", [["run", "--config", "x", "--out", "y", "--parallel", "0"],
                                  ["run", "--config", "x", "--out", "y", "--seed", "-1"]])
def test_bad_arguments(args):
    with pytest.raises(SystemExit):
        main(args)


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "zrplab", "riemann", "--rho-left", "1", "--rho-right", "0",
                          "--points", "3"], capture_output=True, text=True, check=True)
    assert res.stdout.splitlines()[0] == "xi,rho"
