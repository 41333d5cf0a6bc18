"""Separable forcing ``f(t, x) = b(t) * sum_j w_j phi_j(x)`` with unit weights.

Because the weights are a unit vector, ``|f(t)| = b(t)`` exactly, which is
the scalar the decay bounds consume.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .basis import Basis, mode_normal
from .errors import EvaluationError, InvalidArgumentError


def _nonneg(name, value):
    value = float(value)
    if not math.isfinite(value) or value < 0.0:
        raise InvalidArgumentError(f"{name} must be finite and >= 0, got {value!r}")
    return value


class Envelope:
    """Scalar temporal envelope b(t) >= 0."""

    kind = "abstract"

    def __call__(self, t):
        raise NotImplementedError

    def derivative(self, t):
        raise NotImplementedError

    def log_derivative(self, t):
        """b'(t)/b(t); NaN where b vanishes."""
        b = np.asarray(self(t), dtype=float)
        db = np.asarray(self.derivative(t), dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(b > 0.0, db / np.where(b > 0.0, b, 1.0), np.nan)
        return out if out.ndim else float(out)

    def convolution(self, gamma: float, t: float):
        """Closed form of int_0^t exp(-gamma (t - s)) b(s) ds, or None."""
        return None

    @property
    def breakpoints(self) -> tuple[float, ...]:
        return ()

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class ZeroEnvelope(Envelope):
    kind = "zero"

    def __call__(self, t):
        return np.zeros_like(np.asarray(t, dtype=float)) + 0.0

    def derivative(self, t):
        return self(t)

    def convolution(self, gamma, t):
        return 0.0

    def to_dict(self):
        return {"kind": "zero"}


@dataclass(frozen=True)
class CutoffEnvelope(Envelope):
    """``amplitude`` on [0, t0], zero afterwards."""

    t0: float
    amplitude: float = 1.0
    kind = "cutoff"

    def __post_init__(self):
        object.__setattr__(self, "t0", _nonneg("t0", self.t0))
        object.__setattr__(self, "amplitude", _nonneg("amplitude", self.amplitude))

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return np.where(t <= self.t0, self.amplitude, 0.0) + 0.0 * t

    def derivative(self, t):
        return np.zeros_like(np.asarray(t, dtype=float)) + 0.0

    def convolution(self, gamma, t):
        s_end = min(t, self.t0)
        # e^{-g t} (e^{g s_end} - 1) / g, written to stay finite for large t
        return self.amplitude * math.exp(-gamma * (t - s_end)) * -math.expm1(-gamma * s_end) / gamma

    @property
    def breakpoints(self):
        return (self.t0,)

    def to_dict(self):
        return {"kind": "cutoff", "t0": self.t0, "amplitude": self.amplitude}


@dataclass(frozen=True)
class ExponentialEnvelope(Envelope):
    """``amplitude * exp(-k t)``."""

    k: float
    amplitude: float = 1.0
    kind = "exponential"

    def __post_init__(self):
        k = float(self.k)
        if not math.isfinite(k):
            raise InvalidArgumentError("k must be finite")
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "amplitude", _nonneg("amplitude", self.amplitude))

    def __call__(self, t):
        return self.amplitude * np.exp(-self.k * np.asarray(t, dtype=float))

    def derivative(self, t):
        return -self.k * self(t)

    def log_derivative(self, t):
        t = np.asarray(t, dtype=float)
        if self.amplitude == 0.0:
            return np.full_like(t, np.nan) if t.ndim else float("nan")
        return np.full_like(t, -self.k) if t.ndim else -self.k

    def convolution(self, gamma, t):
        d = gamma - self.k
        if d == 0.0:
            return self.amplitude * t * math.exp(-gamma * t)
        # (e^{-k t} - e^{-gamma t}) / (gamma - k) without cancellation
        return self.amplitude * math.exp(-gamma * t) * math.expm1(d * t) / d if d < 0 else (
            self.amplitude * math.exp(-self.k * t) * -math.expm1(-d * t) / d
        )

    def to_dict(self):
        return {"kind": "exponential", "k": self.k, "amplitude": self.amplitude}


@dataclass(frozen=True)
class PolynomialEnvelope(Envelope):
    """``amplitude * (1 + t)^-a``; ``a = 0`` is the constant envelope."""

    a: float
    amplitude: float = 1.0
    kind = "polynomial"

    def __post_init__(self):
        object.__setattr__(self, "a", _nonneg("a", self.a))
        object.__setattr__(self, "amplitude", _nonneg("amplitude", self.amplitude))

    def __call__(self, t):
        return self.amplitude * (1.0 + np.asarray(t, dtype=float)) ** (-self.a)

    def derivative(self, t):
        t = np.asarray(t, dtype=float)
        return -self.a * self.amplitude * (1.0 + t) ** (-self.a - 1.0)

    def log_derivative(self, t):
        t = np.asarray(t, dtype=float)
        if self.amplitude == 0.0:
            return np.full_like(t, np.nan) if t.ndim else float("nan")
        out = -self.a / (1.0 + t)
        return out if out.ndim else float(out)

    def convolution(self, gamma, t):
        if self.a == 0.0:
            return self.amplitude * -math.expm1(-gamma * t) / gamma
        return None

    def to_dict(self):
        return {"kind": "polynomial", "a": self.a, "amplitude": self.amplitude}


@dataclass(frozen=True, eq=False)
class TableEnvelope(Envelope):
    """Piecewise-linear interpolation of sampled (t, b) pairs.

    Evaluation outside [times[0], times[-1]] raises :class:`EvaluationError`.
    """

    times: tuple[float, ...]
    values: tuple[float, ...]
    kind = "table"

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        b = np.asarray(self.values, dtype=float)
        if t.ndim != 1 or t.shape != b.shape or t.size < 2:
            raise InvalidArgumentError("table envelope needs >= 2 matching (t, b) samples")
        if t[0] != 0.0 or np.any(np.diff(t) <= 0.0):
            raise InvalidArgumentError("table times must start at 0 and increase strictly")
        if not np.all(np.isfinite(b)) or np.any(b < 0.0):
            raise InvalidArgumentError("table values must be finite and >= 0")
        object.__setattr__(self, "times", tuple(t.tolist()))
        object.__setattr__(self, "values", tuple(b.tolist()))

    def __eq__(self, other):
        return isinstance(other, TableEnvelope) and self.to_dict() == other.to_dict()

    def __hash__(self):
        return hash((self.times, self.values))

    def _check(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < self.times[0]) or np.any(t > self.times[-1]):
            raise EvaluationError(
                f"table envelope defined on [{self.times[0]}, {self.times[-1]}]; asked for t outside"
            )
        return t

    def __call__(self, t):
        t = self._check(t)
        out = np.interp(t, self.times, self.values)
        return out if out.ndim else float(out)

    def derivative(self, t):
        t = self._check(t)
        tt = np.asarray(self.times)
        slopes = np.diff(self.values) / np.diff(tt)
        idx = np.clip(np.searchsorted(tt, t, side="right") - 1, 0, slopes.size - 1)
        out = slopes[idx]
        return out if np.ndim(out) else float(out)

    @property
    def breakpoints(self):
        return self.times[1:-1]

    def to_dict(self):
        return {"kind": "table", "times": list(self.times), "values": list(self.values)}


_KINDS = {
    "zero": (ZeroEnvelope, ()),
    "cutoff": (CutoffEnvelope, ("t0", "amplitude")),
    "exponential": (ExponentialEnvelope, ("k", "amplitude")),
    "polynomial": (PolynomialEnvelope, ("a", "amplitude")),
    "table": (TableEnvelope, ("times", "values")),
}


def envelope_from_dict(d: dict) -> Envelope:
    d = dict(d)
    kind = d.pop("kind", None)
    if kind not in _KINDS:
        raise InvalidArgumentError(f"unknown envelope kind {kind!r}; expected one of {sorted(_KINDS)}")
    cls, allowed = _KINDS[kind]
    extra = set(d) - set(allowed)
    if extra:
        raise InvalidArgumentError(f"unexpected keys for {kind} envelope: {sorted(extra)}")
    try:
        return cls(**d)
    except TypeError as exc:
        raise InvalidArgumentError(f"{kind} envelope: {exc}") from None


@dataclass(frozen=True, eq=False)
class ForcingProfile:
    envelope: Envelope
    weights: np.ndarray = field(repr=False)

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        if w.ndim != 1 or not np.all(np.isfinite(w)):
            raise InvalidArgumentError("weights must be a finite 1-D vector")
        if abs(float(np.dot(w, w)) - 1.0) > 1e-12:
            raise InvalidArgumentError("forcing weights must be a unit vector (sum w^2 = 1)")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def m(self) -> int:
        return self.weights.size

    def amplitude(self, t):
        return self.envelope(t)

    def modal(self, t) -> np.ndarray:
        """f_j(t) = b(t) w_j."""
        return float(self.envelope(t)) * self.weights

    @property
    def forcing_id(self) -> str:
        return f"{self.envelope.kind}:{self.envelope.to_dict()}"


def unforced(m: int) -> ForcingProfile:
    w = np.zeros(m)
    w[0] = 1.0
    return ForcingProfile(ZeroEnvelope(), w)


def make_weights(rule: dict | str, basis: Basis) -> np.ndarray:
    """Unit weight vector from a rule.

    Rules: ``{"rule": "mode", "index": i}``, ``{"rule": "uniform"}``,
    ``{"rule": "random", "seed": s, "max_lambda": L}`` (keyed per mode, so
    nested truncations share the same weights when ``max_lambda`` keeps
    them inside the smallest basis), ``{"rule": "explicit", "values": [...]}``
    (normalised, zero-padded).
    """
    if isinstance(rule, str):
        rule = {"rule": rule}
    rule = dict(rule)
    name = rule.pop("rule", None)
    allowed = {"mode": {"index"}, "uniform": set(), "random": {"seed", "max_lambda"}, "explicit": {"values"}}
    if name not in allowed:
        raise InvalidArgumentError(f"unknown weights rule {name!r}; expected one of {sorted(allowed)}")
    if set(rule) - allowed[name]:
        raise InvalidArgumentError(f"unexpected keys for weights rule {name!r}: {sorted(set(rule) - allowed[name])}")
    m = basis.m
    if name == "mode":
        idx = int(rule.get("index", 0))
        if not 0 <= idx < m:
            raise InvalidArgumentError(f"weights mode index {idx} out of range for m={m}")
        w = np.zeros(m)
        w[idx] = 1.0
        return w
    if name == "uniform":
        return np.full(m, 1.0 / math.sqrt(m))
    if name == "random":
        seed = int(rule.get("seed", 0))
        lam_cap = rule.get("max_lambda")
        w = np.array([
            0.0 if lam_cap is not None and md.eigenvalue > lam_cap else mode_normal(seed, md, stream=1)
            for md in basis.modes
        ])
    else:
        vals = np.asarray(rule.get("values", []), dtype=float).ravel()
        if vals.size > m:
            raise InvalidArgumentError("explicit weights longer than the basis")
        w = np.zeros(m)
        w[: vals.size] = vals
    norm = float(np.linalg.norm(w))
    if norm == 0.0:
        raise InvalidArgumentError("weights rule produced a zero vector")
    return w / norm
