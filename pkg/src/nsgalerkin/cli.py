"""Command-line front end: ``nsgalerkin {basis,tensor,simulate,bounds,verify,overlay}``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import harness
from .basis import build_basis
from .bounds import bounds_csv
from .config import ScenarioConfig, bundled_scenarios, load_bundled
from .errors import BlowUpError, InvalidArgumentError, NSGalerkinError, StabilityError
from .tensor import load_or_assemble

log = logging.getLogger("nsgalerkin")


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def dumps(obj) -> str:
    return json.dumps(obj, indent=1, default=_json_default, allow_nan=False) + "\n"


def _emit(text: str, out) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)


def _load_config(args) -> ScenarioConfig:
    if (args.config is None) == (args.scenario is None):
        raise InvalidArgumentError("give exactly one of --config PATH or --scenario NAME")
    cfg = ScenarioConfig.load(args.config) if args.config else load_bundled(args.scenario)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.variant is not None:
        changes["variant"] = args.variant
    if getattr(args, "t_end", None) is not None:
        changes["t_end"] = args.t_end
    return cfg.replace(**changes) if changes else cfg


# ------------------------------------------------------------------ commands

def cmd_basis(args) -> int:
    basis = build_basis(args.k_max, args.lambda_max)
    _emit(basis.to_json() + "\n", args.out)
    return 0


def cmd_tensor(args) -> int:
    basis = build_basis(args.k_max)
    cache = harness.default_cache_dir(args.cache_dir)
    tensor = load_or_assemble(basis, cache)
    info = {"k_max": args.k_max, "m": basis.m, "nnz": tensor.nnz, "cache": str(cache)}
    if args.out:
        tensor.save(args.out)
        info["written"] = args.out
    sys.stdout.write(dumps(info))
    return 0


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    if args.snapshot:
        cfg = cfg.replace(outputs={**cfg.outputs, "snapshot": args.snapshot})
    if args.resume:
        try:
            trace, final = harness.snapshot_resume(args.resume, cfg, args.cache_dir)
        except (StabilityError, InvalidArgumentError) as exc:
            log.error("%s", exc)
            return harness.EXIT_VALIDATION
        except BlowUpError as exc:
            log.error("%s", exc)
            if exc.trace is not None:
                _emit(exc.trace.to_csv(), args.out or cfg.outputs.get("trace"))
            return harness.EXIT_BLOWUP
        _emit(trace.to_csv(), args.out or cfg.outputs.get("trace"))
        if "snapshot" in cfg.outputs:
            harness.write_snapshot(cfg.outputs["snapshot"], final, trace, cfg)
        return harness.EXIT_OK
    res = harness.run_scenario(cfg, args.cache_dir, args.out)
    if res.exit_code != 0:
        log.error("%s", res.message)
    else:
        log.info("%s", res.message)
    if "trace" not in res.artifacts and res.trace is not None:
        sys.stdout.write(res.trace.to_csv())
    return res.exit_code


def cmd_bounds(args) -> int:
    cfg = _load_config(args)
    curves = harness.scenario_bounds(cfg)
    _emit(bounds_csv(curves), args.out)
    return 0


def cmd_verify(args) -> int:
    cfg = _load_config(args)
    if args.suites:
        cfg = cfg.replace(verify={**cfg.verify, "suites": args.suites.split(",")})
    code, report = harness.run_verify(cfg, args.cache_dir)
    _emit(dumps(report), args.out or cfg.outputs.get("report"))
    for inv in report.get("invariants", []):
        log.info("%s %s", "PASS" if inv["passed"] else "FAIL", inv["name"])
    return code


def cmd_overlay(args) -> int:
    cfg = _load_config(args)
    res = harness.run_scenario(cfg.replace(outputs={}), args.cache_dir)
    if res.exit_code != 0:
        log.error("%s", res.message)
        return res.exit_code
    curves = harness.scenario_bounds(cfg, res.trace.t, res.trace.metadata["g0"])
    text = harness.emit_overlay(res.trace, curves)
    _emit(text, args.out or cfg.outputs.get("overlay"))
    g_flags, ext_flags = harness.overlay_flags(text)
    log.info("g > bound_g at %d samples; extremal above sqrt bound at %d samples", g_flags, ext_flags)
    return 0


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--cache-dir", help=f"tensor cache directory (default ${harness.CACHE_ENV} or ~/.cache/nsgalerkin)")
    common.add_argument("--out", help="output path (stdout when omitted)")
    common.add_argument("-v", "--verbose", action="store_true")

    scen = argparse.ArgumentParser(add_help=False)
    scen.add_argument("--config", help="scenario JSON file")
    scen.add_argument("--scenario", help=f"bundled scenario name ({', '.join(bundled_scenarios())})")
    scen.add_argument("--seed", type=int)
    scen.add_argument("--variant", choices=("sharp", "paper"))

    parser = argparse.ArgumentParser(prog="nsgalerkin", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("basis", parents=[common], help="dump the basis as JSON")
    p.add_argument("--k-max", type=int, required=True)
    p.add_argument("--lambda-max", type=float)
    p.set_defaults(func=cmd_basis)

    p = sub.add_parser("tensor", parents=[common], help="assemble (or load) the cached interaction tensor")
    p.add_argument("--k-max", type=int, required=True)
    p.set_defaults(func=cmd_tensor)

    p = sub.add_parser("simulate", parents=[common, scen], help="run a scenario and write its trace")
    p.add_argument("--snapshot", help="write the final state snapshot here")
    p.add_argument("--resume", help="continue from this snapshot")
    p.add_argument("--t-end", type=float, help="override the end time")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("bounds", parents=[common, scen], help="tabulate the energy bound curves")
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("verify", parents=[common, scen], help="run verification suites, write a JSON report")
    p.add_argument("--suites", help="comma-separated suite list overriding the config")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("overlay", parents=[common, scen], help="simulation vs bound curves CSV")
    p.set_defaults(func=cmd_overlay)

    p = sub.add_parser("scenarios", help="list bundled scenarios")
    p.set_defaults(func=lambda a: print("\n".join(bundled_scenarios())) or 0, verbose=False)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (InvalidArgumentError, harness.SnapshotError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return harness.EXIT_VALIDATION
    except NSGalerkinError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return harness.EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
