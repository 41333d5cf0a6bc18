"""Run orchestration: simulate, snapshot/resume, overlays and verify reports."""
from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels
from .basis import build_basis, mode_normal
from .bounds import BoundSpec, bound_curves, bounds_csv
from .config import ScenarioConfig
from .errors import (BasisMismatchError, BlowUpError, InvalidArgumentError, NSGalerkinError,
                     StabilityError)
from .solver import CoefficientState, EnergyTrace, concat_traces, energy, integrate
from .tensor import basis_and_tensor
from .verification import (convergence_study, dominance_margin, ladyzhenskaya_ratio, poincare_check,
                           uniform_decay_check, uniqueness_experiment, w1_check)

log = logging.getLogger(__name__)

EXIT_OK, EXIT_VALIDATION, EXIT_BLOWUP, EXIT_INVARIANT = 0, 2, 3, 4
CACHE_ENV = "NSGALERKIN_CACHE_DIR"
SNAPSHOT_VERSION = 1
LAMBDA_1 = 1.0  # smallest Stokes eigenvalue on the 2pi torus


class SnapshotError(NSGalerkinError):
    pass


def default_cache_dir(cache_dir=None) -> Path:
    if cache_dir is not None:
        return Path(cache_dir)
    env = os.environ.get(CACHE_ENV)
    if env:
        return Path(env)
    return Path(os.environ.get("XDG_CACHE_HOME", Path.home() / ".cache")) / "nsgalerkin"


@dataclass
class RunResult:
    exit_code: int
    message: str = ""
    trace: EnergyTrace | None = None
    final: CoefficientState | None = None
    artifacts: dict = field(default_factory=dict)


# ------------------------------------------------------------------ snapshots

def write_snapshot(path, state: CoefficientState, trace: EnergyTrace, config: ScenarioConfig) -> Path:
    meta = trace.metadata
    doc = {
        "format_version": SNAPSHOT_VERSION,
        "t": state.t,
        "step": state.step,
        "c": [float(x) for x in state.c],
        "basis_id": state.basis.basis_id,
        "k_max": state.basis.k_max,
        "nu": config.nu,
        "dt": config.dt,
        "scheme": config.scheme,
        "forcing": config.forcing,
        "variant": meta.get("variant", config.variant),
        "g0": meta["g0"],
        "energy_integral": meta["energy_integral"],
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=1) + "\n")
    return path


def read_snapshot(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise SnapshotError(f"cannot parse snapshot {path}: {exc}") from exc
    required = {"format_version", "t", "step", "c", "basis_id", "k_max", "nu", "dt", "scheme", "forcing", "g0",
                "energy_integral"}
    if not isinstance(doc, dict) or required - set(doc):
        raise SnapshotError(f"snapshot {path} is missing fields {sorted(required - set(doc or {}))}")
    if doc["format_version"] != SNAPSHOT_VERSION:
        raise SnapshotError(f"snapshot format version {doc['format_version']} != {SNAPSHOT_VERSION}")
    c = doc["c"]
    if not isinstance(c, list) or not all(isinstance(x, (int, float)) and math.isfinite(x) for x in c):
        raise SnapshotError("snapshot coefficients are not a list of finite numbers")
    return doc


def snapshot_resume(snapshot_path, config: ScenarioConfig, cache_dir=None, **overrides) -> tuple[EnergyTrace, CoefficientState]:
    """Continue a run from a snapshot up to ``config.t_end`` (after overrides).

    Physics (nu, forcing) and step layout (dt, scheme) must match the
    snapshot; only the end time and output settings may change.
    """
    if overrides:
        config = config.replace(**overrides)
    snap = read_snapshot(snapshot_path)
    basis, tensor = basis_and_tensor(config.k_max, default_cache_dir(cache_dir))
    if snap["basis_id"] != basis.basis_id:
        raise BasisMismatchError(f"snapshot basis {snap['basis_id']} does not match config basis {basis.basis_id}")
    for key in ("nu", "dt", "scheme", "forcing"):
        if snap[key] != getattr(config, key):
            raise InvalidArgumentError(
                f"resume with changed {key} ({snap[key]!r} -> {getattr(config, key)!r}) is not supported"
            )
    if len(snap["c"]) != basis.m:
        raise SnapshotError(f"snapshot holds {len(snap['c'])} coefficients, basis has {basis.m}")
    if not config.t_end > snap["t"]:
        raise InvalidArgumentError(f"t_end={config.t_end} must exceed the snapshot time {snap['t']}")
    state = CoefficientState(snap["t"], snap["c"], basis, snap["step"])
    params = config.solver_params()
    history = {"g0": snap["g0"], "energy_integral": snap["energy_integral"]}
    return integrate(state, tensor, config.forcing_profile(basis), params, config.variant, history=history)


# ------------------------------------------------------------------ overlay

OVERLAY_COLUMNS = ("t", "g", "G", "bound_sqrt_g_sq", "bound_g", "extremal_g", "g_exceeds_bound",
                   "extremal_exceeds_bound")


def emit_overlay(trace: EnergyTrace, bounds: dict, path=None) -> str:
    """Align simulated energies with the bound curves.

    ``g_exceeds_bound`` flags g > bound_g; ``extremal_exceeds_bound`` flags
    samples where the saturating scalar trajectory lies above bound_sqrt_g
    (the square-root form), which happens for the kappa = 1/2 variant
    whenever I(t) > 0.
    """
    t = np.asarray(trace.t, dtype=float)
    bt = np.asarray(bounds["t"], dtype=float)
    if t.shape != bt.shape or np.any(np.abs(t - bt) > 1e-12 * np.maximum(1.0, np.abs(t))):
        raise InvalidArgumentError("trace and bound curves are on different time grids")
    g = np.asarray(trace.g)
    bsq = np.asarray(bounds["bound_sqrt_g"])
    bg = np.asarray(bounds["bound_g"])
    ext = np.asarray(bounds["extremal_g"])
    g_flag = g > bg
    ext_flag = np.sqrt(ext) > bsq * (1.0 + 1e-12) + 1e-300
    lines = [",".join(OVERLAY_COLUMNS)]
    for row in zip(t, g, trace.G, bsq * bsq, bg, ext, g_flag, ext_flag):
        lines.append(",".join([*(repr(float(x)) for x in row[:6]), str(int(row[6])), str(int(row[7]))]))
    text = "\n".join(lines) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text


def overlay_flags(text: str) -> tuple[int, int]:
    """Count (g_exceeds_bound, extremal_exceeds_bound) flags in overlay CSV text."""
    rows = [r.split(",") for r in text.strip().splitlines()[1:]]
    return sum(int(r[6]) for r in rows), sum(int(r[7]) for r in rows)


# ------------------------------------------------------------------ simulate

def _output(config, key, out):
    if out is not None:
        return Path(out)
    return Path(config.outputs[key]) if key in config.outputs else None


def run_scenario(config: ScenarioConfig, cache_dir=None, out=None) -> RunResult:
    """Simulate one scenario and write the configured artifacts.

    Exit codes: 0 ok, 2 validation (including the rk4 stability precheck),
    3 numerical blow-up (partial trace still written).
    """
    try:
        basis, tensor, ic, forcing, params = config.materialize(cache_dir=default_cache_dir(cache_dir))
    except InvalidArgumentError as exc:
        return RunResult(EXIT_VALIDATION, str(exc))
    trace_path = _output(config, "trace", out)
    try:
        trace, final = integrate(ic, tensor, forcing, params, config.variant)
    except StabilityError as exc:
        return RunResult(EXIT_VALIDATION, str(exc))
    except BlowUpError as exc:
        res = RunResult(EXIT_BLOWUP, str(exc), exc.trace, exc.state)
        if trace_path is not None and exc.trace is not None:
            exc.trace.to_csv(trace_path)
            res.artifacts["trace"] = str(trace_path)
        return res
    res = RunResult(EXIT_OK, f"{config.name}: {len(trace)} rows, final g={trace.g[-1]!r}", trace, final)
    if trace_path is not None:
        trace.to_csv(trace_path)
        res.artifacts["trace"] = str(trace_path)
    if "snapshot" in config.outputs:
        res.artifacts["snapshot"] = str(write_snapshot(config.outputs["snapshot"], final, trace, config))
    if "bounds" in config.outputs or "overlay" in config.outputs:
        curves = scenario_bounds(config, trace.t, g0=trace.metadata["g0"])
        if "bounds" in config.outputs:
            bounds_csv(curves, config.outputs["bounds"])
            res.artifacts["bounds"] = config.outputs["bounds"]
        if "overlay" in config.outputs:
            emit_overlay(trace, curves, config.outputs["overlay"])
            res.artifacts["overlay"] = config.outputs["overlay"]
    return res


def scenario_bounds(config: ScenarioConfig, times=None, g0=None, variant=None) -> dict:
    """Bound curves for a scenario with gamma = nu lambda_1 and g0 from its initial state."""
    if g0 is None:
        basis = build_basis(config.k_max)
        g0 = energy(config.initial_state(basis))[0]
    if times is None:
        n = int(round(config.t_end / config.dt))
        steps = list(range(0, n, config.sample_every)) + [n]
        times = np.array([s * config.dt for s in steps])
    spec = BoundSpec(config.nu * LAMBDA_1, g0, config.envelope(), variant or config.variant)
    return bound_curves(spec, times)


# ------------------------------------------------------------------ verify

def _perturbation(basis, seed):
    d = np.array([mode_normal(seed, md, stream=2) for md in basis.modes])
    return d / np.linalg.norm(d)


def run_verify(config: ScenarioConfig, cache_dir=None) -> tuple[int, dict]:
    """Run the configured verification suites; exit code 4 iff any invariant fails."""
    cache = default_cache_dir(cache_dir)
    vcfg = config.verify
    suites = vcfg.get("suites", ["uniqueness", "w1", "inequalities", "dominance"])
    try:
        basis, tensor, ic, forcing, params = config.materialize(cache_dir=cache)
        trace, final = integrate(ic, tensor, forcing, params, "sharp")
    except StabilityError as exc:
        return EXIT_VALIDATION, {"error": str(exc)}
    except BlowUpError as exc:
        return EXIT_BLOWUP, {"error": str(exc)}
    except InvalidArgumentError as exc:
        return EXIT_VALIDATION, {"error": str(exc)}

    invariants = []

    def check(name, passed, **detail):
        invariants.append({"name": name, "passed": bool(passed), **detail})

    report = {
        "scenario": config.name,
        "basis_id": basis.basis_id,
        "backend": _kernels.BACKEND,
        "note": "certifies Galerkin trajectories, not exact weak solutions",
        "suites": {},
        "traces": {"main": trace.to_csv()},
    }
    threshold = vcfg.get("w1_threshold", math.inf)

    if "uniqueness" in suites:
        delta = vcfg.get("perturbation", 1e-6)
        tol = vcfg.get("gronwall_tolerance", 0.05)
        same = uniqueness_experiment(ic, CoefficientState(0.0, ic.c, basis), tensor, forcing, params, tol)
        ic2 = CoefficientState(0.0, ic.c + delta * _perturbation(basis, config.seed), basis)
        pert = uniqueness_experiment(ic, ic2, tensor, forcing, params, tol)
        report["suites"]["uniqueness"] = {"identical": same.summary(), "perturbed": pert.summary(), "delta": delta}
        report["traces"]["uniqueness"] = pert.csv()
        check("identical data give h == 0", same.identical)
        check("Gronwall ceiling log(h/h0) <= c t", pert.within_ceiling, c_sup=pert.c_sup, c_hat=pert.c_hat)
        if math.isfinite(threshold):
            check("W1 hypothesis sup ||v|| <= threshold", pert.sup_norm_v <= threshold,
                  sup_norm_v=pert.sup_norm_v, threshold=threshold)

    if "w1" in suites:
        w1 = w1_check(trace, threshold)
        report["suites"]["w1"] = {**w1.to_dict(), "threshold": None if not math.isfinite(threshold) else threshold}
        if math.isfinite(threshold):
            check("W1 sup ||v|| within threshold", w1.within, sup_norm=w1.sup_norm)

    if "inequalities" in suites:
        rng_seed = config.seed
        n = vcfg.get("ladyzhenskaya_samples", 20)
        ratios, lady = [], []
        for i in range(n):
            rng = np.random.default_rng([rng_seed, 7, i])
            st = CoefficientState(0.0, rng.standard_normal(basis.m), basis)
            ratios.append(poincare_check(st))
            lady.append(ladyzhenskaya_ratio(st))
        entry = {"poincare_min": min(ratios), "ladyzhenskaya_min": min(lady), "ladyzhenskaya_max": max(lady)}
        check("Poincare G/g >= 1", min(ratios) >= 1.0 - 1e-12, poincare_min=min(ratios))
        if energy(final)[0] > 0:
            r1 = ladyzhenskaya_ratio(final)
            scale_err = max(abs(ladyzhenskaya_ratio(final.scaled(a)) - r1) for a in (1e-3, 1e3))
            entry.update(ladyzhenskaya_final=r1, scale_invariance_error=scale_err)
            check("Ladyzhenskaya ratio scale invariant", scale_err <= 1e-10 * max(1.0, r1), error=scale_err)
        report["suites"]["inequalities"] = entry

    if "dominance" in suites:
        margin = dominance_margin(trace)
        halved = scenario_bounds(config, trace.t, trace.metadata["g0"], "paper")
        sharp = scenario_bounds(config, trace.t, trace.metadata["g0"], "sharp")
        _, halved_ext = overlay_flags(emit_overlay(trace, halved))
        _, sharp_ext = overlay_flags(emit_overlay(trace, sharp))
        report["suites"]["dominance"] = {
            "min_slack_sharp": margin,
            "extremal_exceeds_sharp_samples": sharp_ext,
            "extremal_exceeds_half_kappa_samples": halved_ext,
            "sample_count": len(trace),
        }
        check("g <= bound_g (sharp)", margin >= 0.0, min_slack=margin)
        check("extremal saturates sharp bound", sharp_ext == 0)

    if "uniform_decay" in suites:
        ks = vcfg.get("k_max_list", [1, 2, 3])
        table = uniform_decay_check(config, ks, cache)
        report["suites"]["uniform_decay"] = table.to_dict()
        check("uniform decay spread <= 1.5", table.spread <= 1.5, spread=table.spread)
        check("uniform decay no increasing trend", not table.increasing_trend, spearman=table.spearman)
        check("uniform decay dominated by bound_g", all(r.dominated for r in table.rows))

    if "convergence" in suites:
        ks = vcfg.get("k_max_list", [1, 2, 3])
        cps = vcfg.get("checkpoints", [config.t_end])
        table = convergence_study(config, ks, cps, cache)
        report["suites"]["convergence"] = table.to_dict()
        for i, cp in enumerate(table.checkpoints):
            if cp > 0:
                check(f"Cauchy differences nonincreasing at t={cp}", table.monotone(i))

    report["invariants"] = invariants
    report["passed"] = all(inv["passed"] for inv in invariants)
    return (EXIT_OK if report["passed"] else EXIT_INVARIANT), report
