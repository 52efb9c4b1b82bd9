import csv
import io
import json
import math
import shutil
import subprocess
import sys

import pytest

from pairstab.cli import EXPERIMENTS, HEADER, ResultRow, emit, main, parse_config, run_experiment
from pairstab.errors import ConfigError

AUDIT = {"experiment": "gradient-audit", "seed": 3, "trials": 20, "cert_trials": 200,
         "losses": [{"name": "auc", "mu": 2, "B1": 1, "d": 2}, {"name": "synthetic-convex", "beta": 1, "r": 1, "n": 6}]}
MINIMAX = {"experiment": "minimax", "seed": 0, "grid_points": 2001,
           "problems": [{"kind": "convex", "beta": 1, "r": 1, "nu": 1.1, "n": 6}]}
SWEEP = {"experiment": "stability-sweep", "seed": 1,
         "loss": {"name": "auc", "mu": 2, "B1": 1, "d": 2},
         "data": {"kind": "gaussian-classification", "d": 2, "B1": 1},
         "n": 12, "T": [6, 8], "rule": "permutation", "schedule": {"kind": "constant", "alpha": 0.1},
         "replicates": 10, "probes": 10, "neighbors": 2, "projected": True,
         "bounds": {"last": "sconvex-const-last", "avg": "sconvex-const-avg"}}


def write(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


# ---------------------------------------------------------------- exit codes


def test_list(capsys):
    assert main(["--list"]) == 0
    assert capsys.readouterr().out.split() == list(EXPERIMENTS)
    assert len(EXPERIMENTS) == 6


def test_missing_config_is_usage_error(capsys):
    assert main([]) == 1
    assert "--config" in capsys.readouterr().err


def test_unknown_flag_is_usage_error():
    assert main(["--bogus"]) == 1
    assert main(["--config", "x.json", "--format", "xml"]) == 1


def test_unreadable_and_malformed_config(tmp_path):
    assert main(["--config", str(tmp_path / "absent.json")]) == 1
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["--config", str(bad)]) == 1


def test_unknown_key_rejected(tmp_path, capsys):
    assert main(["--config", write(tmp_path, dict(AUDIT, colour="red"))]) == 1
    assert "colour" in capsys.readouterr().err


def test_passing_config_exits_zero(tmp_path):
    out = tmp_path / "out.csv"
    assert main(["--config", write(tmp_path, AUDIT), "--out", str(out)]) == 0
    rows = list(csv.DictReader(io.StringIO(out.read_text())))
    assert rows and all(r["pass"] == "true" for r in rows)
    assert tuple(rows[0]) == HEADER


def test_failing_config_exits_two(tmp_path):
    # the construction's claimed excess at the origin disagrees with the exact value
    out = tmp_path / "out.csv"
    assert main(["--config", write(tmp_path, MINIMAX), "--out", str(out)]) == 2
    rows = {r["metric"]: r for r in csv.DictReader(io.StringIO(out.read_text()))}
    assert rows["excess_at_origin_claimed"]["pass"] == "false"
    assert rows["delta"]["pass"] == "true" and rows["stationarity_residual"]["pass"] == "true"


def test_stdout_when_no_out(tmp_path, capsys):
    assert main(["--config", write(tmp_path, AUDIT)]) == 0
    assert capsys.readouterr().out.startswith(",".join(HEADER))


# ---------------------------------------------------------------- overrides and formats


def test_seed_and_format_overrides(tmp_path):
    out = tmp_path / "o.json"
    assert main(["--config", write(tmp_path, AUDIT), "--seed", "11", "--format", "json", "--out", str(out)]) == 0
    data = json.loads(out.read_text())
    assert data and all(r["seed"] == 11 for r in data)
    assert set(data[0]) == set(HEADER)


def test_experiment_override_validates(tmp_path):
    assert main(["--config", write(tmp_path, AUDIT), "--experiment", "minimax"]) == 1
    assert main(["--config", write(tmp_path, AUDIT), "--experiment", "nope"]) == 1


@pytest.mark.parametrize("patch,field", [
    ({"seed": -1}, "seed"),
    ({"seed": True}, "seed"),
    ({"format": "xml"}, "format"),
    ({"trials": 0}, "trials"),
    ({"eps": 0.5}, "eps"),
    ({"losses": []}, "losses"),
    ({"losses": [{"name": "hinge"}]}, "losses[0]"),
])
def test_parse_config_errors_name_field(patch, field):
    with pytest.raises(ConfigError) as exc:
        parse_config(dict(AUDIT, **patch))
    assert field in str(exc.value)


@pytest.mark.parametrize("patch", [
    {"rule": "cyclic"},
    {"schedule": {"kind": "cosine"}},
    {"bounds": {"last": "convex-median"}},
    {"n": 1},
    {"T": []},
    {"projected": "yes"},
])
def test_sweep_config_errors(patch):
    with pytest.raises(ConfigError):
        parse_config(dict(SWEEP, **patch))


def test_threads_env(tmp_path, monkeypatch):
    path = write(tmp_path, SWEEP)
    monkeypatch.setenv("PAIRSTAB_THREADS", "0")
    assert main(["--config", path]) == 1
    monkeypatch.setenv("PAIRSTAB_THREADS", "many")
    assert main(["--config", path]) == 1


# ---------------------------------------------------------------- determinism


def test_byte_identical_reruns(tmp_path, monkeypatch):
    path = write(tmp_path, SWEEP)
    a, b, c = tmp_path / "a.csv", tmp_path / "b.csv", tmp_path / "c.csv"
    assert main(["--config", path, "--out", str(a)]) == 0
    assert main(["--config", path, "--out", str(b)]) == 0
    monkeypatch.setenv("PAIRSTAB_THREADS", "3")
    assert main(["--config", path, "--out", str(c)]) == 0
    assert a.read_bytes() == b.read_bytes() == c.read_bytes()


def test_rows_sorted_and_carry_seed():
    rows = run_experiment(parse_config(SWEEP))
    assert rows == sorted(rows, key=ResultRow.sort_key)
    assert {r.seed for r in rows} == {1}
    assert {json.loads(r.params)["T"] for r in rows} == {6, 8}


def test_emit_formatting():
    rows = [ResultRow("x", "{}", "b", math.inf, None, 1.0, True, 0),
            ResultRow("x", "{}", "a", math.nan, 0.5, None, False, 0)]
    text = emit(rows, "csv")
    lines = text.splitlines()
    assert lines[1] == "x,{},a,nan,0.5,,false,0" and lines[2] == "x,{},b,inf,,1.0,true,0"
    data = json.loads(emit(rows, "json"))
    assert data[0]["value"] == "nan" and data[1]["stderr"] is None
    with pytest.raises(ConfigError):
        emit(rows, "xml")


def test_error_rows_do_not_mask_other_points():
    # constant step above the strongly convex ceiling: the bound's precondition fails at every point
    cfg = parse_config(dict(SWEEP, schedule={"kind": "constant", "alpha": 0.5}, T=[6]))
    rows = run_experiment(cfg)
    assert any(r.metric == "error" and not r.passed for r in rows)


def test_console_script():
    exe = shutil.which("pairstab")
    cmd = [exe, "--list"] if exe else [sys.executable, "-m", "pairstab.cli", "--list"]
    res = subprocess.run(cmd, capture_output=True, text=True, check=False)
    assert res.returncode == 0 and res.stdout.split() == list(EXPERIMENTS)
