"""Strict JSON scenario configuration.

A scenario names a truncation, physical/step parameters, initial data and a
forcing profile.  Unknown keys and out-of-range values raise
:class:`~nsgalerkin.errors.ConfigError` naming the offending field, before
any numerical work starts.
"""
from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .errors import ConfigError, InvalidArgumentError

_TOP_KEYS = {
    "name", "k_max", "nu", "dt", "t_end", "scheme", "sample_every", "initial",
    "forcing", "outputs", "variant", "seed", "verify",
}
_REQUIRED = ("name", "k_max", "nu", "dt", "t_end", "initial")
_INITIAL_KEYS = {
    "explicit": {"type", "coefficients"},
    "mode": {"type", "k", "polarization", "parity", "amplitude"},
    "spectrum": {"type", "energy", "decay", "seed", "max_lambda", "normalize_k_max"},
}
_FORCING_KEYS = {"envelope", "weights"}
_OUTPUT_KEYS = {"trace", "report", "snapshot", "bounds", "overlay"}
_VERIFY_KEYS = {
    "suites", "perturbation", "w1_threshold", "k_max_list", "checkpoints",
    "ladyzhenskaya_samples", "gronwall_tolerance",
}
VERIFY_SUITES = ("uniqueness", "w1", "inequalities", "dominance", "uniform_decay", "convergence")
MAX_K = 4


def _fail(path, msg):
    raise ConfigError(path, msg)


def _keys(obj, allowed, path):
    if not isinstance(obj, dict):
        _fail(path, "must be a JSON object")
    extra = sorted(set(obj) - set(allowed))
    if extra:
        _fail(path, f"unknown key(s) {extra}")


def _pos_float(obj, key, path, default=None):
    val = obj.get(key, default)
    if isinstance(val, bool) or not isinstance(val, (int, float)) or not math.isfinite(val) or val <= 0:
        _fail(f"{path}.{key}" if path else key, f"must be a positive finite number, got {val!r}")
    return float(val)


def _pos_int(obj, key, path, default=None, upper=None):
    val = obj.get(key, default)
    if isinstance(val, bool) or not isinstance(val, int) or val < 1 or (upper is not None and val > upper):
        rng = f" in [1, {upper}]" if upper else ""
        _fail(f"{path}.{key}" if path else key, f"must be a positive integer{rng}, got {val!r}")
    return val


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    k_max: int
    nu: float
    dt: float
    t_end: float
    initial: dict
    scheme: str = "if_rk4"
    sample_every: int = 1
    forcing: dict = field(default_factory=lambda: {"envelope": {"kind": "zero"}, "weights": {"rule": "mode", "index": 0}})
    outputs: dict = field(default_factory=dict)
    variant: str = "sharp"
    seed: int = 0
    verify: dict = field(default_factory=dict)

    # -------------------------------------------------------------- parsing

    @classmethod
    def from_dict(cls, raw: dict) -> "ScenarioConfig":
        _keys(raw, _TOP_KEYS, "config")
        for key in _REQUIRED:
            if key not in raw:
                _fail(key, "is required")
        if not isinstance(raw["name"], str) or not raw["name"]:
            _fail("name", "must be a non-empty string")
        k_max = _pos_int(raw, "k_max", "", upper=MAX_K)
        nu = _pos_float(raw, "nu", "")
        dt = _pos_float(raw, "dt", "")
        t_end = _pos_float(raw, "t_end", "")
        if t_end < dt:
            _fail("t_end", "must be >= dt")
        steps = round(t_end / dt)
        if abs(steps * dt - t_end) > 1e-9 * t_end:
            _fail("t_end", f"must be an integer multiple of dt={dt!r}")
        scheme = raw.get("scheme", "if_rk4")
        if scheme not in ("rk4", "if_rk4"):
            _fail("scheme", f"must be 'rk4' or 'if_rk4', got {scheme!r}")
        sample_every = _pos_int(raw, "sample_every", "", default=1)
        variant = raw.get("variant", "sharp")
        if variant not in ("sharp", "paper"):
            _fail("variant", f"must be 'sharp' or 'paper', got {variant!r}")
        seed = raw.get("seed", 0)
        if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
            _fail("seed", f"must be a nonnegative integer, got {seed!r}")

        initial = _parse_initial(raw["initial"], k_max)
        forcing = _parse_forcing(raw.get("forcing", {"envelope": {"kind": "zero"}}))
        outputs = raw.get("outputs", {})
        _keys(outputs, _OUTPUT_KEYS, "outputs")
        for k, v in outputs.items():
            if not isinstance(v, str) or not v:
                _fail(f"outputs.{k}", "must be a non-empty path string")
        verify = _parse_verify(raw.get("verify", {}), k_max)
        return cls(raw["name"], k_max, nu, dt, t_end, initial, scheme, sample_every, forcing,
                   dict(outputs), variant, seed, verify)

    @classmethod
    def from_json(cls, text: str) -> "ScenarioConfig":
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError("config", f"invalid JSON: {exc}") from None
        return cls.from_dict(raw)

    @classmethod
    def load(cls, path) -> "ScenarioConfig":
        return cls.from_json(Path(path).read_text())

    def to_dict(self) -> dict:
        return {
            "name": self.name, "k_max": self.k_max, "nu": self.nu, "dt": self.dt, "t_end": self.t_end,
            "scheme": self.scheme, "sample_every": self.sample_every, "initial": copy.deepcopy(self.initial),
            "forcing": copy.deepcopy(self.forcing), "outputs": dict(self.outputs), "variant": self.variant,
            "seed": self.seed, "verify": copy.deepcopy(self.verify),
        }

    def replace(self, **changes) -> "ScenarioConfig":
        d = self.to_dict()
        d.update(changes)
        return ScenarioConfig.from_dict(d)

    # -------------------------------------------------------------- building

    def solver_params(self):
        from .solver import SolverParams

        return SolverParams(self.nu, self.dt, self.t_end, self.scheme, self.sample_every)

    def envelope(self):
        from .forcing import envelope_from_dict

        return envelope_from_dict(self.forcing["envelope"])

    def initial_state(self, basis):
        from .basis import RandomSpectrum, project_initial
        from .solver import CoefficientState

        init = self.initial
        kind = init["type"]
        if kind == "explicit":
            return project_initial(init["coefficients"], basis)
        if kind == "mode":
            c = [0.0] * basis.m
            c[basis.index_of(init["k"], init.get("polarization", 1), init.get("parity", "cos"))] = init.get("amplitude", 1.0)
            return CoefficientState(0.0, c, basis)
        spec = RandomSpectrum(
            energy=init["energy"], decay=init.get("decay", 2.0), seed=init.get("seed", self.seed),
            max_lambda=init.get("max_lambda"), normalize_k_max=init.get("normalize_k_max"),
        )
        return project_initial(spec, basis)

    def forcing_profile(self, basis):
        from .forcing import ForcingProfile, make_weights

        rule = dict(self.forcing.get("weights", {"rule": "mode", "index": 0}))
        if rule.get("rule") == "random":
            rule.setdefault("seed", self.seed)
        return ForcingProfile(self.envelope(), make_weights(rule, basis))

    def materialize(self, k_max: int | None = None, cache_dir=None):
        """(basis, tensor, initial state, forcing, solver params) for this scenario."""
        from .tensor import basis_and_tensor

        basis, tensor = basis_and_tensor(self.k_max if k_max is None else k_max, cache_dir)
        return basis, tensor, self.initial_state(basis), self.forcing_profile(basis), self.solver_params()


def _parse_initial(init, k_max):
    if not isinstance(init, dict):
        _fail("initial", "must be a JSON object")
    kind = init.get("type")
    if kind not in _INITIAL_KEYS:
        _fail("initial.type", f"must be one of {sorted(_INITIAL_KEYS)}, got {kind!r}")
    _keys(init, _INITIAL_KEYS[kind], "initial")
    if kind == "explicit":
        coeffs = init.get("coefficients")
        if not isinstance(coeffs, list) or not all(
            isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x) for x in coeffs
        ):
            _fail("initial.coefficients", "must be a list of finite numbers")
    elif kind == "mode":
        k = init.get("k")
        if not (isinstance(k, list) and len(k) == 3 and all(isinstance(x, int) and not isinstance(x, bool) for x in k)):
            _fail("initial.k", "must be a list of three integers")
        if k == [0, 0, 0] or sum(x * x for x in k) > k_max * k_max:
            _fail("initial.k", f"must be nonzero with |k|^2 <= k_max^2 = {k_max * k_max}")
        if init.get("polarization", 1) not in (1, 2):
            _fail("initial.polarization", "must be 1 or 2")
        if init.get("parity", "cos") not in ("cos", "sin"):
            _fail("initial.parity", "must be 'cos' or 'sin'")
        amp = init.get("amplitude", 1.0)
        if isinstance(amp, bool) or not isinstance(amp, (int, float)) or not math.isfinite(amp):
            _fail("initial.amplitude", "must be a finite number")
    else:
        energy = init.get("energy")
        if isinstance(energy, bool) or not isinstance(energy, (int, float)) or not math.isfinite(energy) or energy < 0:
            _fail("initial.energy", "must be a nonnegative finite number")
        decay = init.get("decay", 2.0)
        if isinstance(decay, bool) or not isinstance(decay, (int, float)) or not math.isfinite(decay):
            _fail("initial.decay", "must be a finite number")
        if "seed" in init and (isinstance(init["seed"], bool) or not isinstance(init["seed"], int) or init["seed"] < 0):
            _fail("initial.seed", "must be a nonnegative integer")
        if "max_lambda" in init:
            _pos_float(init, "max_lambda", "initial")
        if "normalize_k_max" in init:
            nk = _pos_int(init, "normalize_k_max", "initial", upper=MAX_K)
            if nk < k_max:
                _fail("initial.normalize_k_max", "must be >= k_max")
    return copy.deepcopy(init)


def _parse_forcing(forcing):
    from .forcing import envelope_from_dict

    _keys(forcing, _FORCING_KEYS, "forcing")
    env = forcing.get("envelope", {"kind": "zero"})
    try:
        envelope_from_dict(env)
    except (InvalidArgumentError, TypeError) as exc:
        _fail("forcing.envelope", str(exc))
    weights = forcing.get("weights", {"rule": "mode", "index": 0})
    if not isinstance(weights, (dict, str)):
        _fail("forcing.weights", "must be a rule object")
    rule = weights if isinstance(weights, dict) else {"rule": weights}
    if rule.get("rule") not in ("mode", "uniform", "random", "explicit"):
        _fail("forcing.weights.rule", f"unknown rule {rule.get('rule')!r}")
    allowed = {"mode": {"rule", "index"}, "uniform": {"rule"}, "random": {"rule", "seed", "max_lambda"},
               "explicit": {"rule", "values"}}[rule["rule"]]
    _keys(rule, allowed, "forcing.weights")
    return {"envelope": copy.deepcopy(env), "weights": copy.deepcopy(rule)}


def _parse_verify(verify, k_max):
    _keys(verify, _VERIFY_KEYS, "verify")
    out = copy.deepcopy(verify)
    suites = out.get("suites", ["uniqueness", "w1", "inequalities", "dominance"])
    if not isinstance(suites, list) or any(s not in VERIFY_SUITES for s in suites):
        _fail("verify.suites", f"must be a list drawn from {list(VERIFY_SUITES)}")
    out["suites"] = suites
    if "perturbation" in out:
        _pos_float(out, "perturbation", "verify")
    if "w1_threshold" in out:
        _pos_float(out, "w1_threshold", "verify")
    if "gronwall_tolerance" in out:
        _pos_float(out, "gronwall_tolerance", "verify")
    if "ladyzhenskaya_samples" in out:
        _pos_int(out, "ladyzhenskaya_samples", "verify")
    if "k_max_list" in out:
        lst = out["k_max_list"]
        if not isinstance(lst, list) or not lst or any(
            isinstance(k, bool) or not isinstance(k, int) or not 1 <= k <= MAX_K for k in lst
        ):
            _fail("verify.k_max_list", f"must be a non-empty list of integers in [1, {MAX_K}]")
    if "checkpoints" in out:
        cps = out["checkpoints"]
        if not isinstance(cps, list) or not cps or any(
            isinstance(x, bool) or not isinstance(x, (int, float)) or x < 0 for x in cps
        ):
            _fail("verify.checkpoints", "must be a non-empty list of nonnegative times")
    return out


def bundled_scenarios() -> list[str]:
    root = resources.files("nsgalerkin") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def load_bundled(name: str) -> ScenarioConfig:
    root = resources.files("nsgalerkin") / "scenarios"
    res = root / f"{name}.json"
    if not res.is_file():
        raise ConfigError("scenario", f"no bundled scenario {name!r}; available: {bundled_scenarios()}")
    return ScenarioConfig.from_json(res.read_text())
