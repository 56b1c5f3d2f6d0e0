import csv
import hashlib
import json
import shutil
import subprocess
from pathlib import Path

import pytest

from oucl.cli import main
from oucl.config import SCHEMA, validate_config
from oucl.errors import ConfigError

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

UNIFORM_MODEL = {"A": [[-1.0]], "B": [[1.0]], "nu": {"kind": "density", "intervals": [[0.0, 1.0]]}}


def write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return p


def small_tv(**over):
    cfg = {"schema_version": 1, "experiment": "tv_decay", "seed": 7, "model": UNIFORM_MODEL,
           "t_grid": [1, 2, 4, 8], "sample_count": 4000, "params": {"chunk": 1000, "C": 1.0}}
    cfg.update(over)
    return cfg


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


# config validation

def test_shipped_configs_validate():
    names = sorted(p.name for p in CONFIGS.glob("*.json"))
    assert len(names) >= 8
    for p in CONFIGS.glob("*.json"):
        validate_config(json.loads(p.read_text()), CONFIGS)


@pytest.mark.parametrize("patch,pointer", [
    ({"experiment": "nope"}, "/experiment"),
    ({"schema_version": 2}, "/schema_version"),
    ({"sample_count": 10}, "/sample_count"),
    ({"extra": 1}, "/"),
    ({"params": {"bins": 0}}, "/params/bins"),
    ({"model": {"A": [[-1.0, 0.0]], "B": [[1.0]]}}, "/model/A"),
])
def test_config_errors_carry_pointer(patch, pointer):
    cfg = small_tv(**patch)
    with pytest.raises(ConfigError) as exc:
        validate_config(cfg)
    assert exc.value.pointer == pointer


def test_missing_t_grid():
    cfg = small_tv()
    del cfg["t_grid"]
    with pytest.raises(ConfigError) as exc:
        validate_config(cfg)
    assert exc.value.pointer == "/t_grid"


def test_model_file(tmp_path):
    (tmp_path / "model.json").write_text(json.dumps(UNIFORM_MODEL))
    cfg = small_tv()
    del cfg["model"]
    cfg["model_file"] = "model.json"
    assert validate_config(cfg, tmp_path)["model"] == UNIFORM_MODEL
    cfg["model_file"] = "missing.json"
    with pytest.raises(ConfigError) as exc:
        validate_config(cfg, tmp_path)
    assert exc.value.pointer == "/model_file"


def test_schema_is_draft_2020_12():
    assert SCHEMA["$schema"].endswith("2020-12/schema")


# exit codes

def test_run_ok_and_artifacts(tmp_path, capsys):
    cfg = write(tmp_path, small_tv())
    code, out, _ = run(["run", cfg, "--out", tmp_path / "o"], capsys)
    assert code == 0 and json.loads(out)["passed"] in (True, False)
    o = tmp_path / "o"
    man = json.loads((o / "manifest.json").read_text())
    for name, digest in man["files"].items():
        assert hashlib.sha256((o / name).read_bytes()).hexdigest() == digest
    with open(o / "tv_curve.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t", "tv_hat", "std_err", "bound_thm11", "bound_thm17"] and len(rows) == 5
    side = json.loads((o / "tv_curve.csv.json").read_text())
    assert side["config"]["seed"] == 7 and "workers" not in side["config"]
    assert "time" not in json.dumps(man) and "workers" not in json.dumps(man)


def test_config_error_exit(tmp_path, capsys):
    code, _, err = run(["run", write(tmp_path, small_tv(experiment="nope"))], capsys)
    assert code == 2 and "/experiment" in err
    code, _, _ = run(["run", tmp_path / "absent.json"], capsys)
    assert code == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    assert run(["run", bad], capsys)[0] == 2


def test_samples_override_is_validated(tmp_path, capsys):
    assert run(["run", write(tmp_path, small_tv()), "--samples", "10"], capsys)[0] == 2


def test_gate_error_exit(tmp_path, capsys):
    model = dict(UNIFORM_MODEL, A=[[1.0]])
    cfg = write(tmp_path, small_tv(model=model))
    code, _, err = run(["run", cfg, "--out", tmp_path / "o"], capsys)
    assert code == 3 and "SpectralGateError" in err
    code, out, _ = run(["check-model", cfg], capsys)
    assert code == 3 and json.loads(out)["passed"] is False


def test_overlap_gate_exit(tmp_path, capsys):
    model = {"A": [[-1.0]], "B": [[1.0]], "nu": {"kind": "atomic", "atoms": [[1.0, 1.0]]}}
    cfg = write(tmp_path, small_tv(model=model))
    code, _, err = run(["run", cfg, "--out", tmp_path / "o"], capsys)
    assert code == 3 and "overlap" in err


def test_accuracy_error_exit(tmp_path, capsys):
    cfg = {"schema_version": 1, "experiment": "symbol_bounds", "seed": 0, "t_grid": [1.0],
           "model": {"A": [[800.0]], "B": [[1.0]], "nu": {"kind": "stable", "alpha": 1.5}}}
    code, _, err = run(["run", write(tmp_path, cfg), "--out", tmp_path / "o"], capsys)
    assert code == 4 and "overflow" in err


def test_check_model_ok(tmp_path, capsys):
    code, out, _ = run(["check-model", write(tmp_path, small_tv())], capsys)
    assert code == 0 and json.loads(out)["passed"] is True


# determinism

def test_outputs_independent_of_workers(tmp_path, capsys):
    cfg = write(tmp_path, small_tv())
    for w in (1, 3):
        assert run(["run", cfg, "--out", tmp_path / f"w{w}", "--workers", w], capsys)[0] == 0
    m1 = (tmp_path / "w1" / "manifest.json").read_bytes()
    m3 = (tmp_path / "w3" / "manifest.json").read_bytes()
    assert m1 == m3


def test_seed_changes_output(tmp_path, capsys):
    cfg = write(tmp_path, small_tv())
    run(["run", cfg, "--out", tmp_path / "a"], capsys)
    run(["run", cfg, "--out", tmp_path / "b", "--seed", "8"], capsys)
    a = (tmp_path / "a" / "tv_curve.csv").read_text()
    b = (tmp_path / "b" / "tv_curve.csv").read_text()
    assert a != b


def test_coupling_tail_small(tmp_path, capsys):
    cfg = json.loads((CONFIGS / "coupling_tail.json").read_text())
    cfg["sample_count"] = 1000
    code, _, _ = run(["run", write(tmp_path, cfg), "--out", tmp_path / "o"], capsys)
    assert code == 0
    with open(tmp_path / "o" / "runs.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["run_id", "jump_count", "coupling_step", "gap"] and len(rows) == 1001


# utility subcommands

def test_svc(capsys):
    code, out, _ = run(["svc", "--level", "3", "--list"], capsys)
    d = json.loads(out)
    assert code == 0 and d["intervals"] == 8 and d["length"] == "25/32" and len(d["endpoints"]) == 8


@pytest.mark.parametrize("removed", ["1.5", "0", "abc"])
def test_svc_bad_removed(removed, capsys):
    assert run(["svc", "--level", "2", "--removed", removed], capsys)[0] == 2


def test_lemma23(capsys):
    code, out, _ = run(["lemma23", "--kmax", "5", "--r", "0", "1/2"], capsys)
    d = json.loads(out)
    assert code == 0 and d["violations"] == [] and d["checked"] == 2 * 4 * 15


def test_cantor_demo_artifacts(tmp_path, capsys):
    cfg = {"schema_version": 1, "experiment": "cantor_demo", "seed": 0,
           "params": {"level": 4, "delta": "1/10", "grid": 21}}
    code, _, _ = run(["run", write(tmp_path, cfg), "--out", tmp_path / "o"], capsys)
    assert code == 0
    with open(tmp_path / "o" / "overlap.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["z", "overlap", "overlap_float", "ge_quarter"] and len(rows) == 22
    assert all(r[3] == "true" for r in rows[1:])


@pytest.mark.skipif(shutil.which("oucl") is None, reason="console script not installed")
def test_console_script():
    res = subprocess.run(["oucl", "svc", "--level", "1"], capture_output=True, text=True)
    assert res.returncode == 0 and json.loads(res.stdout)["length"] == "7/8"
