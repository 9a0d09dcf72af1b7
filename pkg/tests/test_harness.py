import csv
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from airynls.harness import (
    ConfigError,
    compare_delta6_routes,
    config_from_dict,
    read_snapshot,
    run_energy_scan,
    run_exact_residual,
    run_gauge_check,
    run_rescale_check,
    run_simulate,
    run_verify,
    write_snapshot,
)
from airynls.models import EquationParams
from airynls.multilinear import delta6_multiplier
from airynls.spectral import MultiplierSymbol, make_grid, random_field


def _cli(*args):
    return subprocess.run(
        [sys.executable, "-m", "airynls.cli", *args],
        capture_output=True, text=True, timeout=600,
    )


def test_cli_usage_without_command():
    proc = _cli()
    assert proc.returncode == 2


def test_cli_rejects_bad_config(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    proc = _cli("simulate", "--config", str(bad))
    assert proc.returncode == 2
    assert "config error" in proc.stderr


def test_cli_rejects_invalid_params(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"kind": "simulate",
                               "equation": {"a": 0, "b": 0, "c": 0, "d": 1, "e": 1}}))
    proc = _cli("simulate", "--config", str(cfg))
    assert proc.returncode == 2


def test_config_unknown_keys_rejected():
    with pytest.raises(ConfigError):
        config_from_dict({"kind": "simulate", "nope": 1})
    with pytest.raises(ConfigError):
        config_from_dict({"kind": "wrong"})
    with pytest.raises(ConfigError):
        config_from_dict({"kind": "energy-scan",
                          "multiplier": {"cutoffs": [8.0, 4.0]}})


def test_config_overrides_take_precedence():
    cfg = config_from_dict(
        {"kind": "simulate", "grid": {"modes": 64, "box_length": 10.0}, "seed": 1},
        overrides={"modes": 128, "seed": 2, "cutoffs": [3.0], "sobolev_s": 0.4},
    )
    assert cfg.modes == 128 and cfg.box_length == 10.0
    assert cfg.seed == 2 and cfg.cutoffs == (3.0,) and cfg.sobolev_s == 0.4


def test_smallness_monitor_reported_in_scan_manifest(tmp_path):
    doc = {
        "kind": "energy-scan",
        "equation": {"a": 0, "b": 1, "c": 0, "d": 1, "e": 1},
        "grid": {"modes": 64, "box_length": 6 * np.pi},
        "stepper": {"final_time": 1.0, "tolerance": 1e-6},
        "multiplier": {"cutoffs": [2.0], "sobolev_s": 0.3},
        "initial_data": {"type": "random", "amplitude": 0.8, "decay": 1.5, "band": 20},
        "out_dir": str(tmp_path),
        "plots": False,
    }
    run_energy_scan(config_from_dict(doc))
    man = json.loads((tmp_path / "manifest.json").read_text())
    rows = man["smallness_monitor"]["2.0"]
    assert len(rows) == 2  # t = 0 and t = 1
    t0 = rows[0]
    assert t0[1] <= t0[2] and t0[3] is True  # within threshold at start


def test_config_alias_kinds_and_hash_stability():
    cfg1 = config_from_dict({"kind": "verify-identities"})
    assert cfg1.kind == "verify"
    cfg2 = config_from_dict({"kind": "verify"})
    assert cfg1.config_hash() == cfg2.config_hash()
    cfg3 = config_from_dict({"kind": "verify", "seed": 7})
    assert cfg3.config_hash() != cfg2.config_hash()


def test_snapshot_roundtrip(tmp_path):
    g = make_grid(64, 12.5)
    f = random_field(g, np.random.default_rng(0))
    path = tmp_path / "snap.bin"
    write_snapshot(path, f, t=0.75)
    assert path.stat().st_size == 32 + 16 * g.K
    back, t = read_snapshot(path)
    assert t == 0.75
    assert back.grid.K == g.K and back.grid.L == g.L
    assert np.array_equal(back.values, f.values)
    write_snapshot(path, f, t=0.75, dtype="complex64")
    back32, _ = read_snapshot(path)
    assert np.max(np.abs(back32.values - f.values)) < 1e-6


def test_run_simulate_soliton_outputs(tmp_path):
    cfg = config_from_dict({
        "kind": "simulate",
        "out_dir": str(tmp_path),
        "equation": {"a": 0, "b": 1, "c": 0, "d": 1, "e": 0},
        "grid": {"modes": 128, "box_length": 40.0},
        "stepper": {"final_time": 0.1, "tolerance": 1e-9},
        "initial_data": {"type": "soliton_two_param", "eta": 1.0, "carrier": 0.5},
        "snapshots": True,
        "plots": True,
    })
    code, checks = run_simulate(cfg)
    assert code == 0
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["checks"]["i1_drift"] <= 1e-10
    assert man["checks"]["final_err_linf"] <= 1e-6
    files = {Path(p).name for p in man["files"]}
    assert "energies.csv" in files and "energies.svg" in files
    assert any(name.startswith("field_") for name in files)
    with open(tmp_path / "energies.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t", "I1", "I2", "E1", "E2", "dE2_fd", "lambda6", "err_linf"]
    assert len(rows) > 2


def test_run_simulate_linear_flow_conserves_mass(tmp_path):
    cfg = config_from_dict({
        "kind": "simulate",
        "out_dir": str(tmp_path),
        "equation": {"a": 0.5, "b": 1, "c": 0, "d": 0, "e": 0},
        "grid": {"modes": 64, "box_length": 40.0},
        "stepper": {"final_time": 0.2},
        "initial_data": {"type": "sech", "amplitude": 1.0, "width": 1.0},
    })
    code, checks = run_simulate(cfg)
    assert code == 0
    assert checks["i1_drift"] <= 1e-13


def test_run_gauge_check_mkdv(tmp_path):
    L = 80.0
    lam = 8 * 2 * np.pi / L
    a = 3.0 * lam
    d, e = 1.0, 0.5
    cfg = config_from_dict({
        "kind": "gauge-check",
        "out_dir": str(tmp_path),
        "equation": {"a": a, "b": 1.0, "c": (d - e) * a / 3.0, "d": d, "e": e},
        "grid": {"modes": 192, "box_length": L},
        "stepper": {"final_time": 0.25, "tolerance": 1e-10},
        "initial_data": {"type": "sech", "amplitude": 1.0, "width": 1.4},
        "gauge": {"mode": "mkdv"},
    })
    code, checks = run_gauge_check(cfg)
    assert code == 0
    assert checks["commuting_square_maxnorm"] <= 1e-6


def test_run_gauge_check_rejects_incommensurate(tmp_path):
    cfg = config_from_dict({
        "kind": "gauge-check",
        "out_dir": str(tmp_path),
        "equation": {"a": 0, "b": 1, "c": 0, "d": 1, "e": 1},
        "grid": {"modes": 64, "box_length": 80.0},
        "gauge": {"lam": 0.1},
    })
    from airynls.models import GaugeError

    with pytest.raises(GaugeError):
        run_gauge_check(cfg)


def test_energy_scan_small_and_deterministic(tmp_path):
    base = {
        "kind": "energy-scan",
        "equation": {"a": 0, "b": 1, "c": 0, "d": 1, "e": 1},
        "grid": {"modes": 64, "box_length": 6 * np.pi},
        "stepper": {"final_time": 1.0, "tolerance": 1e-7},
        "multiplier": {"cutoffs": [2.0, 4.0], "sobolev_s": 0.3},
        "initial_data": {"type": "random", "amplitude": 1.2, "decay": 1.5, "band": 20},
        "seed": 99,
        "plots": False,
    }
    outs = []
    for workers, sub in ((1, "w1"), (2, "w2")):
        doc = dict(base)
        doc["workers"] = workers
        doc["out_dir"] = str(tmp_path / sub)
        code, checks = run_energy_scan(config_from_dict(doc))
        assert code == 0
        assert not checks["degenerate"]
        outs.append((tmp_path / sub / "scan.csv").read_bytes())
    assert outs[0] == outs[1]


def test_energy_scan_increments_stable_under_refinement(tmp_path):
    # doubling the mode count at fixed cutoff moves the unit increment by
    # well under a percent for resolved band-limited data
    incs = {}
    for K, sub in ((64, "k64"), (128, "k128")):
        doc = {
            "kind": "energy-scan",
            "equation": {"a": 0, "b": 1, "c": 0, "d": 1, "e": 1},
            "grid": {"modes": K, "box_length": 6 * np.pi},
            "stepper": {"final_time": 1.0, "tolerance": 1e-7},
            "multiplier": {"cutoffs": [2.0, 4.0], "sobolev_s": 0.3},
            "initial_data": {"type": "random", "amplitude": 1.2, "decay": 1.5, "band": 20},
            "seed": 99,
            "plots": False,
            "out_dir": str(tmp_path / sub),
        }
        run_energy_scan(config_from_dict(doc))
        with open(tmp_path / sub / "scan.csv", newline="") as fh:
            rows = list(csv.reader(fh))[1:]
        for row in rows:
            incs[(K, float(row[0]))] = float(row[1])
    for N in (2.0, 4.0):
        rel = abs(incs[(64, N)] - incs[(128, N)]) / abs(incs[(128, N)])
        assert rel <= 0.01


def test_energy_scan_short_circuits_in_identity_regime(tmp_path):
    doc = {
        "kind": "energy-scan",
        "equation": {"a": 0, "b": 1, "c": 0, "d": 1, "e": 1},
        "grid": {"modes": 64, "box_length": 6 * np.pi},
        "stepper": {"final_time": 1.0, "tolerance": 1e-6},
        "multiplier": {"cutoffs": [50.0, 80.0], "sobolev_s": 0.3},
        "initial_data": {"type": "random", "amplitude": 1.0, "decay": 1.5, "band": 20},
        "out_dir": str(tmp_path),
        "plots": False,
    }
    code, checks = run_energy_scan(config_from_dict(doc))
    assert code == 0
    assert checks["short_circuit"] and checks["degenerate"]


def test_run_rescale_check(tmp_path):
    cfg = config_from_dict({
        "kind": "rescale-check",
        "out_dir": str(tmp_path),
        "grid": {"modes": 256, "box_length": 80.0},
        "multiplier": {"sobolev_s": 0.3},
        "rescale": {"c0": 0.5, "cutoff": 16.0},
    })
    code, checks = run_rescale_check(cfg)
    assert code == 0 and checks["passed"]
    assert (tmp_path / "rescale_ratios.csv").exists()
    assert (tmp_path / "rescale_certificates.csv").exists()


def test_run_exact_residual_default(tmp_path):
    cfg = config_from_dict({"kind": "exact-residual", "out_dir": str(tmp_path)})
    code, checks = run_exact_residual(cfg)
    assert code == 0 and checks["passed"]
    assert checks["worst_residual"] <= 1e-10


def test_verify_quick_profile_and_mutation(tmp_path):
    cfg = config_from_dict({"kind": "verify", "out_dir": str(tmp_path / "ok"),
                            "profile": "quick"})
    code, checks = run_verify(cfg)
    assert code == 0 and checks["passed"]
    assert (tmp_path / "ok" / "verify.junit.xml").exists()

    bad = config_from_dict({"kind": "verify", "out_dir": str(tmp_path / "mut"),
                            "profile": "quick"})
    bad.mutation = "delta4-sign"
    code, checks = run_verify(bad)
    assert code == 1
    assert not checks["delta4-identity-constant"]


def test_verify_quick_csv_deterministic_across_workers(tmp_path):
    blobs = []
    for workers, sub in ((1, "a"), (8, "b")):
        cfg = config_from_dict({"kind": "verify", "out_dir": str(tmp_path / sub),
                                "profile": "quick", "workers": workers})
        run_verify(cfg)
        blobs.append((tmp_path / sub / "verify.csv").read_bytes())
    assert blobs[0] == blobs[1]


def test_cli_verify_quick_exit_codes(tmp_path):
    proc = _cli("verify", "--profile", "quick", "--out", str(tmp_path / "v"))
    assert proc.returncode == 0
    proc = _cli("verify", "--profile", "quick", "--self-test-mutation", "delta4-sign",
                "--out", str(tmp_path / "m"))
    assert proc.returncode == 1


def test_delta6_discrepancy_report_written_on_mismatch(tmp_path):
    g = make_grid(12, 2 * np.pi)
    f = random_field(g, np.random.default_rng(1))
    p = EquationParams(0, 1, 0, 1, 1)
    sym = MultiplierSymbol(N=2.0, s=0.45)
    good = compare_delta6_routes(f, p, sym, out_dir=tmp_path)
    assert good["agree"]
    assert not (tmp_path / "delta6_discrepancy.json").exists()
    # inject a defect into the printed route; the report must appear
    broken = -1.0 * delta6_multiplier(p, sym, route="printed")
    rep = compare_delta6_routes(f, p, sym, out_dir=tmp_path, printed=broken)
    assert not rep["agree"]
    path = tmp_path / "delta6_discrepancy.json"
    assert path.exists()
    doc = json.loads(path.read_text())
    assert doc["arbiter"] == "generated"
