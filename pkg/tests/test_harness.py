import json
import math
import time

import numpy as np
import pytest

from nsgalerkin import cli, harness
from nsgalerkin.config import ScenarioConfig, load_bundled
from nsgalerkin.errors import BasisMismatchError, InvalidArgumentError
from nsgalerkin.solver import EnergyTrace, concat_traces

FORCED = {
    "name": "forced", "k_max": 2, "nu": 0.1, "dt": 0.01, "t_end": 2.0,
    "initial": {"type": "spectrum", "energy": 1.0, "seed": 3},
    "forcing": {"envelope": {"kind": "cutoff", "t0": 1.0, "amplitude": 0.8}, "weights": {"rule": "random"}},
    "seed": 3,
}


def forced(**kw):
    d = json.loads(json.dumps(FORCED))
    d.update(kw)
    return ScenarioConfig.from_dict(d)


def write_config(tmp_path, **kw):
    d = json.loads(json.dumps(FORCED))
    d.update(kw)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(d))
    return str(path)


# ------------------------------------------------------------------ run_scenario

def test_single_mode_decay_scenario(tmp_path, cache_dir):
    start = time.perf_counter()
    res = harness.run_scenario(load_bundled("single-mode-decay"), cache_dir, tmp_path / "t.csv")
    assert time.perf_counter() - start < 5.0
    assert res.exit_code == 0
    trace = EnergyTrace.from_csv(tmp_path / "t.csv")
    assert abs(trace.g[-1] - math.exp(-0.2)) <= 1e-8


def test_reruns_are_byte_identical(tmp_path, cache_dir):
    cfg = forced()
    harness.run_scenario(cfg, cache_dir, tmp_path / "a.csv")
    harness.run_scenario(cfg, cache_dir, tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_stability_violation_exits_2(cache_dir):
    res = harness.run_scenario(forced(scheme="rk4", nu=1.0, dt=1.0, t_end=2.0), cache_dir)
    assert res.exit_code == harness.EXIT_VALIDATION
    assert "0.7" in res.message


def test_blow_up_exits_3_with_partial_trace(tmp_path, cache_dir):
    cfg = forced(initial={"type": "spectrum", "energy": 1e240, "seed": 3}, forcing={"envelope": {"kind": "zero"}})
    res = harness.run_scenario(cfg, cache_dir, tmp_path / "partial.csv")
    assert res.exit_code == harness.EXIT_BLOWUP
    assert EnergyTrace.from_csv(tmp_path / "partial.csv").t.size >= 1


def test_outputs_written(tmp_path, cache_dir):
    outs = {k: str(tmp_path / f"{k}.out") for k in ("trace", "snapshot", "bounds", "overlay")}
    res = harness.run_scenario(forced(outputs=outs), cache_dir)
    assert res.exit_code == 0 and set(res.artifacts) == set(outs)
    assert json.loads((tmp_path / "snapshot.out").read_text())["t"] == 2.0
    assert (tmp_path / "bounds.out").read_text().startswith("t,bound_sqrt_g")


# ------------------------------------------------------------------ snapshots

def split_run(tmp_path, cache_dir, cfg):
    half = cfg.replace(t_end=cfg.t_end / 2, outputs={"snapshot": str(tmp_path / "snap.json")})
    first = harness.run_scenario(half, cache_dir)
    second, final = harness.snapshot_resume(tmp_path / "snap.json", cfg, cache_dir)
    return first, second, final


@pytest.mark.parametrize("scheme", ["rk4", "if_rk4"])
def test_split_resume_matches_straight_run(tmp_path, cache_dir, scheme):
    cfg = forced(scheme=scheme)
    straight = harness.run_scenario(cfg, cache_dir)
    first, second, final = split_run(tmp_path, cache_dir, cfg)
    assert np.max(np.abs(final.c - straight.final.c)) <= 1e-12
    n = len(first.trace)
    assert len(second) == n and len(concat_traces(first.trace, second)) == 2 * n - 1
    joined = concat_traces(first.trace, second)
    np.testing.assert_allclose(joined.t, straight.trace.t, rtol=0, atol=1e-15)
    np.testing.assert_allclose(joined.g, straight.trace.g, rtol=1e-12)
    np.testing.assert_allclose(joined.energy_residual, straight.trace.energy_residual, atol=1e-12)
    np.testing.assert_allclose(joined.bound_g, straight.trace.bound_g, rtol=1e-12)


@pytest.mark.parametrize("change", [{"nu": 0.2}, {"dt": 0.005}, {"scheme": "rk4"},
                                    {"forcing": {"envelope": {"kind": "zero"}}}])
def test_resume_rejects_physics_change(tmp_path, cache_dir, change):
    cfg = forced()
    split_run(tmp_path, cache_dir, cfg)
    with pytest.raises(InvalidArgumentError):
        harness.snapshot_resume(tmp_path / "snap.json", cfg.replace(**change), cache_dir)


def test_resume_rejects_basis_mismatch(tmp_path, cache_dir):
    cfg = forced()
    split_run(tmp_path, cache_dir, cfg)
    with pytest.raises(BasisMismatchError):
        harness.snapshot_resume(tmp_path / "snap.json", cfg.replace(k_max=3), cache_dir)


@pytest.mark.parametrize("payload", ["{truncated", "[]", json.dumps({"format_version": 1})])
def test_corrupted_snapshot_is_parse_error(tmp_path, cache_dir, payload):
    path = tmp_path / "bad.json"
    path.write_text(payload)
    with pytest.raises(harness.SnapshotError):
        harness.snapshot_resume(path, forced(), cache_dir)


def test_snapshot_with_nonfinite_coefficients(tmp_path, cache_dir):
    split_run(tmp_path, cache_dir, forced())
    doc = json.loads((tmp_path / "snap.json").read_text())
    doc["c"][0] = "nan"
    (tmp_path / "snap.json").write_text(json.dumps(doc))
    with pytest.raises(harness.SnapshotError):
        harness.read_snapshot(tmp_path / "snap.json")


# ------------------------------------------------------------------ overlay

def overlay_rows(text):
    lines = text.strip().splitlines()
    assert lines[0].split(",") == list(harness.OVERLAY_COLUMNS)
    return np.array([[float(x) for x in line.split(",")] for line in lines[1:]])


def test_overlay_unforced_all_clear(cache_dir):
    res = harness.run_scenario(forced(forcing={"envelope": {"kind": "zero"}}), cache_dir)
    rows = overlay_rows(harness.emit_overlay(res.trace, harness.scenario_bounds(forced(), res.trace.t, 1.0)))
    assert not np.any(rows[:, 6])


def test_overlay_zero_run(cache_dir):
    cfg = forced(initial={"type": "explicit", "coefficients": [0.0]}, forcing={"envelope": {"kind": "zero"}})
    res = harness.run_scenario(cfg, cache_dir)
    rows = overlay_rows(harness.emit_overlay(res.trace, harness.scenario_bounds(cfg, res.trace.t, 0.0)))
    assert not np.any(rows[:, 1:])


def test_overlay_forced_variants(cache_dir):
    cfg = forced()
    res = harness.run_scenario(cfg, cache_dir)
    g0 = res.trace.metadata["g0"]
    sharp = harness.emit_overlay(res.trace, harness.scenario_bounds(cfg, res.trace.t, g0, "sharp"))
    halved = harness.emit_overlay(res.trace, harness.scenario_bounds(cfg, res.trace.t, g0, "paper"))
    assert harness.overlay_flags(sharp) == (0, 0)
    g_flags, ext_flags = harness.overlay_flags(halved)
    assert ext_flags == len(res.trace) - 1  # every sample with I(t) > 0


def test_overlay_grid_mismatch(cache_dir):
    res = harness.run_scenario(forced(), cache_dir)
    curves = harness.scenario_bounds(forced(), res.trace.t[:-1], 1.0)
    with pytest.raises(InvalidArgumentError):
        harness.emit_overlay(res.trace, curves)


# ------------------------------------------------------------------ verify

def test_verify_report_passes(cache_dir):
    code, report = harness.run_verify(forced(verify={"w1_threshold": 10.0}), cache_dir)
    assert code == 0 and report["passed"]
    assert report["traces"]["main"].startswith("t,g,G,b,energy_residual")
    unq = report["suites"]["uniqueness"]["perturbed"]
    assert unq["sup_norm_v"] > 0 and unq["serrin_integral"] > 0
    assert report["suites"]["dominance"]["extremal_exceeds_half_kappa_samples"] > 0
    json.dumps(report, default=cli._json_default, allow_nan=False)


def test_verify_exit_4_on_failed_invariant(cache_dir):
    code, report = harness.run_verify(forced(verify={"suites": ["w1"], "w1_threshold": 1e-3}), cache_dir)
    assert code == harness.EXIT_INVARIANT and not report["passed"]


def test_cache_dir_resolution(monkeypatch, tmp_path):
    assert harness.default_cache_dir(tmp_path / "x") == tmp_path / "x"
    monkeypatch.setenv(harness.CACHE_ENV, str(tmp_path / "env"))
    assert harness.default_cache_dir() == tmp_path / "env"
    monkeypatch.delenv(harness.CACHE_ENV)
    assert harness.default_cache_dir().name == "nsgalerkin"


# ------------------------------------------------------------------ CLI

def test_cli_basis(tmp_path, capsys):
    assert cli.main(["basis", "--k-max", "2", "--lambda-max", "2"]) == 0
    assert len(json.loads(capsys.readouterr().out)) == 36


def test_cli_tensor(tmp_path, capsys):
    assert cli.main(["tensor", "--k-max", "2", "--cache-dir", str(tmp_path), "--out", str(tmp_path / "t.json")]) == 0
    info = json.loads(capsys.readouterr().out)
    assert info["m"] == 64 and (tmp_path / "tensor-k2-v1.npz").exists() and (tmp_path / "t.json").exists()


def test_cli_simulate_and_resume(tmp_path, cache_dir):
    cfg = write_config(tmp_path)
    args = ["--config", cfg, "--cache-dir", str(cache_dir)]
    assert cli.main(["simulate", *args, "--out", str(tmp_path / "full.csv")]) == 0
    assert cli.main(["simulate", *args, "--t-end", "1.0", "--snapshot", str(tmp_path / "s.json"),
                     "--out", str(tmp_path / "a.csv")]) == 0
    assert cli.main(["simulate", *args, "--resume", str(tmp_path / "s.json"), "--out", str(tmp_path / "b.csv")]) == 0
    full = EnergyTrace.from_csv(tmp_path / "full.csv")
    b = EnergyTrace.from_csv(tmp_path / "b.csv")
    assert abs(full.g[-1] - b.g[-1]) <= 1e-12


def test_cli_exit_codes(tmp_path, cache_dir, capsys):
    bad = write_config(tmp_path, nu=-1)
    assert cli.main(["simulate", "--config", bad]) == 2
    assert "nu" in capsys.readouterr().err
    unstable = write_config(tmp_path, scheme="rk4", nu=1.0, dt=1.0)
    assert cli.main(["simulate", "--config", unstable, "--cache-dir", str(cache_dir)]) == 2
    blow = write_config(tmp_path, initial={"type": "spectrum", "energy": 1e240}, forcing={})
    assert cli.main(["simulate", "--config", blow, "--cache-dir", str(cache_dir), "--out", str(tmp_path / "p.csv")]) == 3
    assert cli.main(["simulate", "--scenario", "single-mode-decay", "--config", bad]) == 2
    assert cli.main(["simulate", "--config", write_config(tmp_path), "--resume", str(tmp_path / "missing.json"),
                     "--cache-dir", str(cache_dir)]) == 2


def test_cli_verify_bounds_overlay(tmp_path, cache_dir):
    cfg = write_config(tmp_path, verify={"w1_threshold": 10.0})
    common = ["--config", cfg, "--cache-dir", str(cache_dir)]
    assert cli.main(["verify", *common, "--out", str(tmp_path / "r.json")]) == 0
    assert json.loads((tmp_path / "r.json").read_text())["passed"]
    assert cli.main(["verify", *common, "--suites", "w1", "--seed", "3", "--out", str(tmp_path / "r2.json")]) == 0
    assert cli.main(["bounds", *common, "--variant", "paper", "--out", str(tmp_path / "b.csv")]) == 0
    assert (tmp_path / "b.csv").read_text().count("\n") == 202
    assert cli.main(["overlay", *common, "--out", str(tmp_path / "o.csv")]) == 0
    assert harness.overlay_flags((tmp_path / "o.csv").read_text())[0] == 0
    strict = write_config(tmp_path, verify={"suites": ["w1"], "w1_threshold": 1e-3})
    assert cli.main(["verify", "--config", strict, "--cache-dir", str(cache_dir), "--out", str(tmp_path / "r3.json")]) == 4
