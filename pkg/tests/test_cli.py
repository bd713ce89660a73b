import json
import subprocess
import sys

import numpy as np
import pytest

from symlab.cli import EXIT_FORMAT, EXIT_OK, EXIT_USAGE, _workers, main, run
from symlab.numerics.tensor_io import read_tensor, write_tensor


def _cfg(tmp_path, obj, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(obj))
    return str(path)


def test_ising_default_outputs_and_snapshot(tmp_path):
    code, written = run(["ising", "--out", str(tmp_path), "--seed", "4"])
    assert code == EXIT_OK
    assert sorted(p.name for p in written) == ["ising_h0.45.csv", "ising_h0.csv"]
    snap = json.loads((tmp_path / "resolved_config.json").read_text())
    assert snap["command"] == "ising" and snap["seed"] == 4 and snap["L"] == 5 and snap["count"] == 1000
    assert len((tmp_path / "ising_h0.csv").read_text().splitlines()) == 1001


def test_ising_rerun_is_byte_identical(tmp_path):
    run(["ising", "--out", str(tmp_path / "a"), "--seed", "9"])
    run(["ising", "--out", str(tmp_path / "b"), "--seed", "9"])
    for name in ("ising_h0.csv", "ising_h0.45.csv", "resolved_config.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_ising_usage_errors(tmp_path, capsys):
    assert run(["ising", "--L", "1", "--out", str(tmp_path)])[0] == EXIT_USAGE
    assert "L must be" in capsys.readouterr().err
    assert run(["ising", "--bogus", "--out", str(tmp_path)])[0] == EXIT_USAGE
    assert run(["--out", str(tmp_path)])[0] == EXIT_USAGE


def test_unknown_config_key(tmp_path):
    cfg = _cfg(tmp_path, {"L": 4, "temperature": 2})
    assert run(["ising", "--config", cfg, "--out", str(tmp_path)])[0] == EXIT_USAGE


def test_invalid_json_config(tmp_path):
    (tmp_path / "bad.json").write_text("{nope")
    assert run(["ising", "--config", str(tmp_path / "bad.json"), "--out", str(tmp_path)])[0] == EXIT_FORMAT


def test_flags_override_config(tmp_path):
    cfg = _cfg(tmp_path, {"L": 3, "count": 10, "seed": 2})
    run(["ising", "--config", cfg, "--count", "7", "--out", str(tmp_path)])
    snap = json.loads((tmp_path / "resolved_config.json").read_text())
    assert (snap["L"], snap["count"], snap["seed"]) == (3, 7, 2)


def test_expand_command(tmp_path):
    src = tmp_path / "img.bin"
    write_tensor(src, np.random.default_rng(0).uniform(size=(32, 32, 3)))
    code, _ = run(["expand", "--input", str(src), "-K", "2", "--out", str(tmp_path)])
    assert code == EXIT_OK
    out = read_tensor(tmp_path / "expanded.bin")
    assert out.shape == (64, 64, 3)


def test_expand_warning_still_succeeds(tmp_path, capsys):
    src = tmp_path / "img.bin"
    write_tensor(src, np.zeros((4, 4, 1)))
    code, _ = run(["expand", "--input", str(src), "-K", "5", "--first-kernel", "3", "--out", str(tmp_path)])
    assert code == EXIT_OK
    assert "exceeds first kernel size" in capsys.readouterr().err


def test_expand_errors(tmp_path):
    src = tmp_path / "img.bin"
    write_tensor(src, np.zeros((4, 4, 1)))
    assert run(["expand", "--input", str(src), "-K", "0", "--out", str(tmp_path)])[0] == EXIT_USAGE
    raw = src.read_bytes()
    src.write_bytes(raw[:-3])
    assert run(["expand", "--input", str(src), "--out", str(tmp_path)])[0] == EXIT_FORMAT
    assert run(["expand", "--input", str(tmp_path / "nope.bin"), "--out", str(tmp_path)])[0] == EXIT_USAGE


def test_enumerate_config_runs_and_worker_independence(tmp_path):
    runs = [
        {"name": "small_raw", "family": "scalar_net", "variant": "raw", "hidden_sizes": [3, 2]},
        {"name": "small_exp", "family": "scalar_net", "variant": "expanded", "hidden_sizes": [3, 2]},
    ]
    cfg = _cfg(tmp_path, {"runs": runs})
    assert run(["enumerate", "--config", cfg, "--workers", "1", "--out", str(tmp_path / "w1")])[0] == EXIT_OK
    assert run(["enumerate", "--config", cfg, "--workers", "3", "--out", str(tmp_path / "w3")])[0] == EXIT_OK
    for name in ("small_raw.csv", "small_exp.csv", "small_raw.profile.json", "comparison.json"):
        assert (tmp_path / "w1" / name).read_bytes() == (tmp_path / "w3" / name).read_bytes()
    comp = json.loads((tmp_path / "w1" / "comparison.json").read_text())
    assert list(comp) == ["small_raw__vs__small_exp"]


def test_enumerate_bad_run(tmp_path):
    cfg = _cfg(tmp_path, {"runs": [{"family": "scalar_net", "depth": 3}]})
    assert run(["enumerate", "--config", cfg, "--out", str(tmp_path)])[0] == EXIT_USAGE
    assert run(["enumerate", "--preset", "nope", "--out", str(tmp_path)])[0] == EXIT_USAGE


def test_replica_small_run_and_cache(tmp_path):
    cfg = _cfg(tmp_path, {
        "archs": ["simple_cnn", "flip_equivariance_cnn"],
        "dataset": {"n": 20, "test_n": 10},
        "train": {"epochs": 1},
        "reduce_dim": 5,
    })
    code, written = run(["replica", "--config", cfg, "--out", str(tmp_path)])
    assert code == EXIT_OK
    table = json.loads((tmp_path / "comparison.json").read_text())
    assert {row["arch"] for row in table} == {"simple_cnn", "flip_equivariance_cnn"}
    assert all(row["pairs"] == 190 for row in table)
    cached = sorted((tmp_path / "cache").glob("*.bin"))
    assert len(cached) == 2
    stamp = [p.stat().st_mtime_ns for p in cached]
    before = (tmp_path / "report_simple_cnn.json").read_bytes()
    assert run(["replica", "--config", cfg, "--out", str(tmp_path)])[0] == EXIT_OK
    assert [p.stat().st_mtime_ns for p in cached] == stamp
    assert (tmp_path / "report_simple_cnn.json").read_bytes() == before


def test_replica_paper_flag_resolves(tmp_path):
    cfg = _cfg(tmp_path, {"archs": ["nope"]})
    assert run(["replica", "--paper", "--config", cfg, "--out", str(tmp_path)])[0] == EXIT_USAGE
    snap = json.loads((tmp_path / "resolved_config.json").read_text())
    assert snap["preset"] == "paper"


def test_qcd_eos(tmp_path):
    assert run(["qcd", "eos", "--out", str(tmp_path)])[0] == EXIT_OK
    rows = [r.split(",") for r in (tmp_path / "eos.csv").read_text().splitlines()[1:]]
    assert len(rows) == 20
    for T, p, e, s in ((float(v) for v in r) for r in rows):
        assert s == pytest.approx(p + e, rel=1e-10)


def test_qcd_fit_report(tmp_path):
    cfg = _cfg(tmp_path, {"epochs": 3, "n": 6})
    assert run(["qcd", "fit", "--config", cfg, "--out", str(tmp_path)])[0] == EXIT_OK
    rep = json.loads((tmp_path / "fit_report.json").read_text())
    assert len(rep["raw"]["abs_err_P_over_T4"]) == len(rep["expanded"]["abs_err_P_over_T4"]) == 6


def test_qcd_missing_target(tmp_path, capsys):
    assert run(["qcd", "fit", "--target", str(tmp_path / "none.csv"), "--out", str(tmp_path)])[0] == EXIT_USAGE
    assert "not found" in capsys.readouterr().err


def test_worker_precedence(monkeypatch):
    monkeypatch.setenv("SYMLAB_WORKERS", "3")
    assert _workers(None, None) == 3
    assert _workers(None, 2) == 2
    assert _workers(5, 2) == 5
    monkeypatch.delenv("SYMLAB_WORKERS")
    assert _workers(None, None) == 1


def test_bad_worker_env(tmp_path, monkeypatch):
    monkeypatch.setenv("SYMLAB_WORKERS", "many")
    assert run(["ising", "--count", "2", "--out", str(tmp_path)])[0] == EXIT_USAGE


def test_console_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "symlab.cli", "ising", "--L", "1", "--out", str(tmp_path)],
        capture_output=True, text=True,
    )
    assert proc.returncode == EXIT_USAGE
    assert main(["ising", "--count", "3", "--out", str(tmp_path)]) == EXIT_OK
