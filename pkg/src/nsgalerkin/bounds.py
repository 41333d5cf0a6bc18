"""Decay envelopes for the differential inequality g' + 2 gamma g <= 2 b(t) g^(1/2).

Writing y = g^(1/2), the equality case is the linear ODE y' + gamma y = b
whose solution is ``exp(-gamma t) y(0) + I(t)`` with the convolution

    I(t) = int_0^t exp(-gamma (t - s)) b(s) ds.

That is the ``sharp`` bound (integral coefficient kappa = 1).  The variant
named ``paper`` uses kappa = 1/2 and is kept for side-by-side reporting:
the extremal trajectory exceeds it whenever I(t) > 0.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .errors import DivisionError, EvaluationError, InvalidArgumentError
from .forcing import Envelope, ExponentialEnvelope

VARIANTS = {"sharp": 1.0, "paper": 0.5}
QUAD_EPSABS = 1e-10


@dataclass(frozen=True)
class BoundSpec:
    gamma: float
    g0: float
    envelope: Envelope
    variant: str = "sharp"

    def __post_init__(self):
        if not (math.isfinite(self.gamma) and self.gamma > 0):
            raise InvalidArgumentError(f"gamma must be positive, got {self.gamma!r}")
        if not (math.isfinite(self.g0) and self.g0 >= 0):
            raise InvalidArgumentError(f"g0 must be nonnegative, got {self.g0!r}")
        if self.variant not in VARIANTS:
            raise InvalidArgumentError(f"variant must be one of {sorted(VARIANTS)}, got {self.variant!r}")

    @property
    def kappa(self) -> float:
        return VARIANTS[self.variant]


def _check_t(t):
    t = float(t)
    if not math.isfinite(t) or t < 0:
        raise InvalidArgumentError(f"t must be finite and >= 0, got {t!r}")
    return t


def _quad_segment(envelope, gamma, t_lo, t_hi):
    """int_{t_lo}^{t_hi} exp(-gamma (t_hi - s)) b(s) ds, integrated in u = t_hi - s."""
    span = t_hi - t_lo
    if span <= 0.0:
        return 0.0
    pts = {t_hi - bp for bp in envelope.breakpoints if t_lo < bp < t_hi}
    pts.update(x for x in (1.0 / gamma, 10.0 / gamma, 40.0 / gamma) if x < span)
    edges = [0.0, *sorted(pts), span]

    def integrand(u):
        return math.exp(-gamma * u) * float(envelope(t_hi - u))

    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        val, _ = integrate.quad(integrand, lo, hi, epsabs=QUAD_EPSABS / len(edges), epsrel=1e-13, limit=200)
        total += val
    return total


def convolution_bound(spec: BoundSpec, t: float, method: str = "auto") -> float:
    """I(t); ``method`` is ``auto`` (closed form when available) or ``quad``."""
    t = _check_t(t)
    if method not in ("auto", "quad"):
        raise InvalidArgumentError("method must be 'auto' or 'quad'")
    if method == "auto":
        closed = spec.envelope.convolution(spec.gamma, t)
        if closed is not None:
            return float(closed)
    return _quad_segment(spec.envelope, spec.gamma, 0.0, t)


def convolution_grid(spec: BoundSpec, times, method: str = "auto") -> np.ndarray:
    """I at each of the nondecreasing ``times``; quadrature runs interval-by-interval."""
    times = np.asarray(times, dtype=float)
    if times.size == 0:
        return np.zeros(0)
    if np.any(np.diff(times) < 0) or times[0] < 0:
        raise InvalidArgumentError("times must be nondecreasing and >= 0")
    env, gamma = spec.envelope, spec.gamma
    if method == "auto" and env.convolution(gamma, float(times[0])) is not None:
        return np.array([env.convolution(gamma, float(t)) for t in times])
    out = np.empty(times.size)
    out[0] = _quad_segment(env, gamma, 0.0, float(times[0]))
    for i in range(1, times.size):
        a, b = float(times[i - 1]), float(times[i])
        out[i] = math.exp(-gamma * (b - a)) * out[i - 1] + _quad_segment(env, gamma, a, b)
    return out


def _sqrt_form(spec, t, conv):
    return np.exp(-spec.gamma * t) * math.sqrt(spec.g0) + spec.kappa * conv


def _squared_form(spec, t, conv):
    return 2.0 * np.exp(-2.0 * spec.gamma * t) * spec.g0 + 2.0 * spec.kappa**2 * conv**2


def bound_sqrt_g(spec: BoundSpec, t: float) -> float:
    """exp(-gamma t) g0^(1/2) + kappa I(t)."""
    t = _check_t(t)
    return float(_sqrt_form(spec, t, convolution_bound(spec, t)))


def bound_g(spec: BoundSpec, t: float, method: str = "auto") -> float:
    """2 exp(-2 gamma t) g0 + 2 kappa^2 I(t)^2, from (a + b)^2 <= 2 (a^2 + b^2)."""
    t = _check_t(t)
    return float(_squared_form(spec, t, convolution_bound(spec, t, method)))


def bound_curves(spec: BoundSpec, times, extremal: bool = True, method: str = "auto") -> dict:
    """Bound columns on a time grid: t, b, I, bound_sqrt_g, bound_g and extremal_g."""
    times = np.asarray(times, dtype=float)
    conv = convolution_grid(spec, times, method)
    out = {
        "t": times,
        "b": np.asarray(spec.envelope(times), dtype=float) + 0.0 * times,
        "I": conv,
        "bound_sqrt_g": _sqrt_form(spec, times, conv),
        "bound_g": _squared_form(spec, times, conv),
    }
    if extremal:
        out["extremal_g"] = (np.exp(-spec.gamma * times) * math.sqrt(spec.g0) + conv) ** 2
    return out


BOUND_CSV_COLUMNS = ("t", "bound_sqrt_g", "bound_g", "extremal_g", "I", "b")


def bounds_csv(curves: dict, path=None) -> str:
    lines = [",".join(BOUND_CSV_COLUMNS)]
    cols = [np.asarray(curves[c], dtype=float) for c in BOUND_CSV_COLUMNS]
    for row in zip(*cols):
        lines.append(",".join(repr(float(x)) for x in row))
    text = "\n".join(lines) + "\n"
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text


def asymptotic_ratio(spec: BoundSpec, t: float) -> float:
    """I(t) / b(t); tends to 1/gamma under the slow-variation conditions."""
    t = _check_t(t)
    b = float(spec.envelope(t))
    if b == 0.0:
        raise DivisionError(f"b({t}) = 0: asymptotic ratio undefined")
    return convolution_bound(spec, t) / b


def asymptotic_limit_error(spec: BoundSpec, t: float) -> float:
    """|gamma * I(t) / b(t) - 1|."""
    return abs(spec.gamma * asymptotic_ratio(spec, t) - 1.0)


@dataclass(frozen=True)
class Conditions6Report:
    lim_b: float
    lim_ratio_bprime_b: float
    satisfied: bool
    vacuous: bool
    samples: tuple
    note: str = ""


SAMPLE_TIMES = (1e2, 1e3, 1e4)
_MIN_DECAY_SLOPE = 0.1


def _limit_estimate(x):
    """Aitken extrapolation of a three-term sequence; last value if degenerate."""
    x1, x2, x3 = x
    denom = (x3 - x2) - (x2 - x1)
    if denom == 0.0 or not np.isfinite(denom):
        return float(x3)
    est = x3 - (x3 - x2) ** 2 / denom
    # Aitken may overshoot past zero on power laws; never beyond the last sample's sign
    return float(est) if est * x3 > 0 else 0.0


def _tends_to_zero(x) -> bool:
    a = np.abs(np.asarray(x, dtype=float))
    if a[-1] == 0.0:
        return True
    if not (a[0] > a[1] > a[2] > 0.0):
        return False
    slope = math.log(a[2] / a[1]) / math.log(SAMPLE_TIMES[2] / SAMPLE_TIMES[1])
    return slope <= -_MIN_DECAY_SLOPE


def conditions6_check(envelope: Envelope) -> Conditions6Report:
    """Numerically assess lim b = 0 and lim b'/b = 0 from samples at t = 1e2, 1e3, 1e4."""
    try:
        b = np.array([float(envelope(t)) for t in SAMPLE_TIMES])
        ratio = np.array([float(envelope.log_derivative(t)) for t in SAMPLE_TIMES])
    except EvaluationError as exc:
        raise EvaluationError(f"envelope not evaluable at large t: {exc}") from exc
    samples = tuple(zip(SAMPLE_TIMES, b.tolist(), ratio.tolist()))
    if np.any(~np.isfinite(b)):
        raise EvaluationError("envelope returned a non-finite value at large t")
    if np.all(b == 0.0):
        return Conditions6Report(0.0, 0.0, True, True, samples,
                                 "b vanishes at large t: hypothesis b(t) > 0 fails, conditions hold vacuously")
    lim_b = _limit_estimate(b)
    if not np.all(np.isfinite(ratio)):
        return Conditions6Report(lim_b, float("nan"), False, False, samples, "b'/b not evaluable at every sample")
    ok = _tends_to_zero(b) and _tends_to_zero(ratio)
    return Conditions6Report(lim_b, _limit_estimate(ratio), bool(ok), False, samples)


def remark1_bound(gamma: float, g0: float, t0: float, t: float, variant: str = "sharp") -> float:
    """Closed-form bound on g after a unit forcing switched off at t0.

    2 e^{-2 gamma t} g0 + 2 kappa^2 e^{-2 gamma t} ((e^{gamma t0} - 1) / gamma)^2
    """
    if not t >= t0 >= 0:
        raise InvalidArgumentError(f"need t >= t0 >= 0, got t={t!r}, t0={t0!r}")
    kappa = VARIANTS[variant] if variant in VARIANTS else None
    if kappa is None:
        raise InvalidArgumentError(f"variant must be one of {sorted(VARIANTS)}")
    decay = math.exp(-2.0 * gamma * t)
    return 2.0 * decay * g0 + 2.0 * kappa**2 * decay * (math.expm1(gamma * t0) / gamma) ** 2


def extremal_ode(spec: BoundSpec, t_end: float, n_samples: int = 201, times=None) -> tuple[np.ndarray, np.ndarray]:
    """Saturating trajectory of g' = 2 b g^(1/2) - 2 gamma g via y = g^(1/2)."""
    if times is None:
        t_end = _check_t(t_end)
        times = np.linspace(0.0, t_end, n_samples)
    times = np.asarray(times, dtype=float)
    y = np.exp(-spec.gamma * times) * math.sqrt(spec.g0) + convolution_grid(spec, times)
    return times, y * y


def rate_class_check(gamma: float, g0: float, k: float, amplitude: float = 1.0, variant: str = "sharp",
                     t_fit: float = 5.0, t_max: float = 50.0, n: int = 4501) -> dict:
    """Compare bound_g for b = A e^{-kt} with the decay class e^{-2 min(k, gamma) t}.

    ``fit_constant`` is bound_g(t_fit) e^{2 r t_fit}; ``max_fit_ratio`` is the
    largest bound_g(t) / (fit_constant e^{-2 r t}) over [t_fit, t_max].
    ``sup_constant`` is the analytic uniform constant 2 g0 + 2 kappa^2 A^2 / (gamma - k)^2.
    """
    if k == gamma:
        raise InvalidArgumentError("rate classes are defined for k != gamma")
    spec = BoundSpec(gamma, g0, ExponentialEnvelope(k, amplitude), variant)
    rate = min(k, gamma)
    ts = np.linspace(t_fit, t_max, n)
    bg = bound_curves(spec, ts, extremal=False)["bound_g"]
    scaled = bg * np.exp(2.0 * rate * ts)
    fit_constant = float(scaled[0])
    sup_constant = 2.0 * g0 + 2.0 * spec.kappa**2 * amplitude**2 / (gamma - k) ** 2
    return {
        "rate": rate,
        "fit_constant": fit_constant,
        "max_fit_ratio": float(np.max(scaled / fit_constant)),
        "sup_constant": sup_constant,
        "max_sup_ratio": float(np.max(scaled / sup_constant)),
        "wrong_class_growth": float(
            (bg[-1] * np.exp(2.0 * max(k, gamma) * ts[-1])) / (bg[0] * np.exp(2.0 * max(k, gamma) * ts[0]))
        ),
    }
