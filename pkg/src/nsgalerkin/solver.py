"""Truncated Galerkin ODE system and its fixed-step integrators.

    c_j' = -nu lambda_j c_j - N_j(c) + b(t) w_j

``rk4`` is classical Runge-Kutta on the full right-hand side; ``if_rk4``
removes the stiff diagonal with the integrating factor exp(nu lambda t) and
applies RK4 (Lawson form) to what remains, so pure viscous decay is exact.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels
from .basis import Basis
from .errors import BlowUpError, InvalidArgumentError, StabilityError
from .forcing import ForcingProfile
from .tensor import InteractionTensor, apply_nonlinearity

SCHEMES = ("rk4", "if_rk4")
RK4_STABILITY = 2.8
TRACE_COLUMNS = ("t", "g", "G", "b", "energy_residual", "bound_sqrt_g", "bound_g")


@dataclass(frozen=True)
class SolverParams:
    nu: float
    dt: float
    t_end: float
    scheme: str = "if_rk4"
    sample_every: int = 1

    def __post_init__(self):
        for name in ("nu", "dt", "t_end"):
            val = getattr(self, name)
            if isinstance(val, bool) or not isinstance(val, (int, float)) or not math.isfinite(val) or val <= 0:
                raise InvalidArgumentError(f"{name} must be a finite positive number, got {val!r}")
            object.__setattr__(self, name, float(val))
        if self.t_end < self.dt:
            raise InvalidArgumentError("t_end must be >= dt")
        if self.scheme not in SCHEMES:
            raise InvalidArgumentError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if isinstance(self.sample_every, bool) or not isinstance(self.sample_every, int) or self.sample_every < 1:
            raise InvalidArgumentError("sample_every must be a positive integer")


@dataclass(frozen=True, eq=False)
class CoefficientState:
    """Galerkin coefficients at time ``t``.

    ``step`` is the global step index when the state came out of a
    fixed-step run; resuming from it keeps step boundaries bit-identical.
    """

    t: float
    c: np.ndarray = field(repr=False)
    basis: Basis = field(repr=False)
    step: int | None = None

    def __post_init__(self):
        c = np.array(self.c, dtype=float)
        if c.shape != (self.basis.m,):
            raise InvalidArgumentError(f"state needs {self.basis.m} coefficients, got shape {c.shape}")
        if not np.all(np.isfinite(c)):
            raise InvalidArgumentError("state coefficients must be finite")
        if not (math.isfinite(self.t) and self.t >= 0.0):
            raise InvalidArgumentError("state time must be finite and >= 0")
        c.setflags(write=False)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "t", float(self.t))

    @property
    def m(self) -> int:
        return self.basis.m

    def scaled(self, alpha: float) -> "CoefficientState":
        return CoefficientState(self.t, alpha * self.c, self.basis, self.step)


def energy(state) -> tuple[float, float]:
    """(g, G) = (sum c_j^2, sum lambda_j c_j^2)."""
    c = state.c
    return float(np.dot(c, c)), float(np.dot(state.basis.eigenvalues, c * c))


def _check_dims(state, tensor, forcing):
    m = state.basis.m
    if tensor.m != m:
        raise InvalidArgumentError(f"tensor has m={tensor.m}, state has m={m}")
    if forcing.m != m:
        raise InvalidArgumentError(f"forcing weights have length {forcing.m}, state has m={m}")


def rhs(state: CoefficientState, tensor: InteractionTensor, forcing: ForcingProfile, params: SolverParams) -> np.ndarray:
    _check_dims(state, tensor, forcing)
    c = state.c
    return -params.nu * state.basis.eigenvalues * c - apply_nonlinearity(tensor, c) + forcing.modal(state.t)


@dataclass(eq=False)
class EnergyTrace:
    """Sampled energy history of one run.

    The seven CSV columns are stored as arrays; ``coefficients`` and
    ``rates`` (c and c' at each sample) are kept in memory only and feed the
    quadrature in :func:`energy_balance_residual`.
    """

    t: np.ndarray
    g: np.ndarray
    G: np.ndarray
    b: np.ndarray
    energy_residual: np.ndarray
    bound_sqrt_g: np.ndarray
    bound_g: np.ndarray
    coefficients: np.ndarray | None = None
    rates: np.ndarray | None = None
    basis: Basis | None = None
    metadata: dict = field(default_factory=dict)

    def __len__(self):
        return int(np.size(self.t))

    def columns(self) -> dict:
        return {name: np.asarray(getattr(self, name)) for name in TRACE_COLUMNS}

    def to_csv(self, path=None) -> str:
        """Serialise with round-trip ``repr`` formatting; returns the text."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(TRACE_COLUMNS)
        cols = [np.asarray(getattr(self, n), dtype=float) for n in TRACE_COLUMNS]
        for row in zip(*cols):
            writer.writerow([repr(float(x)) for x in row])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, source) -> "EnergyTrace":
        text = Path(source).read_text() if not isinstance(source, str) or "\n" not in source else source
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or tuple(rows[0]) != TRACE_COLUMNS:
            raise InvalidArgumentError(f"trace CSV header must be {','.join(TRACE_COLUMNS)}")
        data = np.array([[float(x) for x in r] for r in rows[1:]], dtype=float).reshape(-1, len(TRACE_COLUMNS))
        return cls(*(data[:, i] for i in range(len(TRACE_COLUMNS))))

    def slice(self, stop: int) -> "EnergyTrace":
        cut = {n: np.asarray(getattr(self, n))[:stop] for n in TRACE_COLUMNS}
        return EnergyTrace(
            **cut,
            coefficients=None if self.coefficients is None else self.coefficients[:stop],
            rates=None if self.rates is None else self.rates[:stop],
            basis=self.basis,
            metadata=dict(self.metadata),
        )

    def check_invariants(self, tol: float = 1e-12) -> None:
        t = np.asarray(self.t)
        if np.any(np.diff(t) <= 0):
            raise InvalidArgumentError("trace times must increase strictly")
        if np.any(self.g < 0) or np.any(self.G < self.g * (1.0 - tol) - tol):
            raise InvalidArgumentError("trace violates G >= g >= 0")


def concat_traces(first: EnergyTrace, second: EnergyTrace) -> EnergyTrace:
    """Join a run and its resumption, dropping the duplicated boundary row."""
    if len(first) and len(second) and second.t[0] == first.t[-1]:
        second = EnergyTrace(
            **{n: np.asarray(getattr(second, n))[1:] for n in TRACE_COLUMNS},
            coefficients=None if second.coefficients is None else second.coefficients[1:],
            rates=None if second.rates is None else second.rates[1:],
            basis=second.basis,
            metadata=second.metadata,
        )
    cols = {n: np.concatenate([getattr(first, n), getattr(second, n)]) for n in TRACE_COLUMNS}
    both = first.coefficients is not None and second.coefficients is not None
    return EnergyTrace(
        **cols,
        coefficients=np.vstack([first.coefficients, second.coefficients]) if both else None,
        rates=np.vstack([first.rates, second.rates]) if both and first.rates is not None and second.rates is not None else None,
        basis=first.basis,
        metadata=dict(first.metadata),
    )


def _interval_integrals(t, f, df=None):
    """Per-interval integrals of f on the sample grid.

    With derivatives the two-point Hermite (end-corrected trapezoid) rule is
    used, which is fourth order; without them plain trapezoid.
    """
    h = np.diff(t)
    out = 0.5 * h * (f[1:] + f[:-1])
    if df is not None:
        out -= h * h / 12.0 * (df[1:] - df[:-1])
    return out


def _energy_terms(coefficients, rates, eigenvalues, forcing, t):
    c = coefficients
    G = c * c @ eigenvalues
    b = np.asarray(forcing.envelope(t), dtype=float)
    wc = c @ forcing.weights
    power = b * wc
    if rates is None:
        return G, power, None, None
    dG = 2.0 * np.einsum("ij,ij,j->i", c, rates, eigenvalues)
    db = np.asarray(forcing.envelope.derivative(t), dtype=float)
    dpower = db * wc + b * (rates @ forcing.weights)
    return G, power, dG, dpower


def _running_residual(t, g, G, power, dG, dpower, nu, g0, integral0=0.0):
    f = 2.0 * nu * G - 2.0 * power
    df = None if dG is None else 2.0 * nu * dG - 2.0 * dpower
    cum = integral0 + np.concatenate([[0.0], np.cumsum(_interval_integrals(t, f, df))])
    return g + cum - g0, cum


def energy_balance_residual(trace: EnergyTrace, forcing: ForcingProfile, params: SolverParams) -> float:
    """max_t |g(t) + 2 nu int G - g(0) - 2 int (f, v)| on the trace grid.

    Needs a trace carrying coefficients (as produced by :func:`integrate`);
    the running integral starts at the first row.
    """
    if len(trace) < 2:
        raise InvalidArgumentError("energy balance needs a trace with at least two rows")
    if trace.coefficients is None or trace.basis is None:
        raise InvalidArgumentError("energy balance needs a trace with coefficients and basis")
    t = np.asarray(trace.t, dtype=float)
    c = trace.coefficients
    g = np.einsum("ij,ij->i", c, c)
    G, power, dG, dpower = _energy_terms(c, trace.rates, trace.basis.eigenvalues, forcing, t)
    res, _ = _running_residual(t, g, G, power, dG, dpower, params.nu, g[0])
    return float(np.max(np.abs(res)))


def rk4_stability_bound(nu: float, basis: Basis) -> float:
    return RK4_STABILITY / (nu * float(basis.eigenvalues.max()))


def integrate(
    initial: CoefficientState,
    tensor: InteractionTensor,
    forcing: ForcingProfile,
    params: SolverParams,
    variant: str = "sharp",
    history: dict | None = None,
) -> tuple[EnergyTrace, CoefficientState]:
    """Fixed-step integration from ``initial.t`` to ``params.t_end``.

    ``history`` continues a split run: ``{"g0": g(0), "energy_integral":
    int_0^t (2 nu G - 2 (f, v)) ds}`` at the starting time.  Bounds always
    refer to the origin t = 0 with gamma = nu * lambda_1.
    """
    from .bounds import BoundSpec, bound_curves

    _check_dims(initial, tensor, forcing)
    basis = initial.basis
    dt = params.dt
    if params.scheme == "rk4":
        bound = rk4_stability_bound(params.nu, basis)
        if dt > bound:
            raise StabilityError(dt, bound)

    step0 = initial.step if initial.step is not None else int(round(initial.t / dt))
    if initial.step is None and abs(step0 * dt - initial.t) > 1e-12 * max(1.0, initial.t):
        step0 = None  # off-grid start: count steps locally
    span = params.t_end - initial.t
    nsteps = int(round(span / dt))
    if nsteps < 1 or abs(nsteps * dt - span) > 1e-9 * max(1.0, params.t_end):
        raise InvalidArgumentError(
            f"(t_end - t_start)={span!r} is not a positive integer multiple of dt={dt!r}"
        )

    def time_of(n):
        return (step0 + n) * dt if step0 is not None else initial.t + n * dt

    if history is None:
        if initial.t != 0.0:
            raise InvalidArgumentError("a run starting at t > 0 needs `history` (g0 and energy integral)")
        g0 = float(np.dot(initial.c, initial.c))
        integral0 = 0.0
    else:
        g0 = float(history["g0"])
        integral0 = float(history["energy_integral"])

    nu_lam = params.nu * np.asarray(basis.eigenvalues, dtype=float)
    advance = _kernels.rk4_advance if params.scheme == "rk4" else _kernels.ifrk4_advance
    w = np.ascontiguousarray(forcing.weights)
    env = forcing.envelope

    sample_steps = list(range(0, nsteps, params.sample_every)) + [nsteps]
    coeffs = np.empty((len(sample_steps), basis.m))
    coeffs[0] = initial.c
    c = np.array(initial.c)
    filled = 1
    failed_at = None
    for i in range(1, len(sample_steps)):
        a, b_ = sample_steps[i - 1], sample_steps[i]
        n = np.arange(a, b_)
        if step0 is not None:
            stage_t = np.stack([(step0 + n) * dt, (step0 + n + 0.5) * dt, (step0 + n + 1) * dt], axis=1)
        else:
            stage_t = initial.t + np.stack([n * dt, (n + 0.5) * dt, (n + 1) * dt], axis=1)
        bstage = np.ascontiguousarray(np.asarray(env(stage_t), dtype=float).reshape(-1, 3))
        c_new, bad = advance(c, nu_lam, tensor.indptr, tensor.p_idx, tensor.q_idx, tensor.values, w, bstage, dt)
        if bad >= 0:
            failed_at = time_of(a + bad)
            break
        c = c_new
        coeffs[i] = c
        filled += 1

    times = np.array([time_of(s) for s in sample_steps[:filled]])
    times[0] = initial.t
    coeffs = coeffs[:filled]
    rates = np.empty_like(coeffs)
    for i in range(filled):
        rates[i] = -nu_lam * coeffs[i] - apply_nonlinearity(tensor, coeffs[i]) + float(env(times[i])) * w

    g = np.einsum("ij,ij->i", coeffs, coeffs)
    G, power, dG, dpower = _energy_terms(coeffs, rates, basis.eigenvalues, forcing, times)
    residual, cum = _running_residual(times, g, G, power, dG, dpower, params.nu, g0, integral0)
    gamma = params.nu * basis.lambda_min
    curves = bound_curves(BoundSpec(gamma, g0, env, variant), times, extremal=False)

    trace = EnergyTrace(
        t=times,
        g=g,
        G=G,
        b=np.asarray(env(times), dtype=float) + 0.0 * times,
        energy_residual=residual,
        bound_sqrt_g=curves["bound_sqrt_g"],
        bound_g=curves["bound_g"],
        coefficients=coeffs,
        rates=rates,
        basis=basis,
        metadata={
            "basis_id": basis.basis_id,
            "nu": params.nu,
            "dt": dt,
            "scheme": params.scheme,
            "sample_every": params.sample_every,
            "forcing_id": forcing.forcing_id,
            "variant": variant,
            "gamma": gamma,
            "g0": g0,
            "energy_integral": float(cum[-1]),
            "backend": _kernels.BACKEND,
        },
    )
    last_step = sample_steps[filled - 1]
    final = CoefficientState(
        float(times[-1]), coeffs[-1], basis, None if step0 is None else step0 + last_step
    )
    if failed_at is not None:
        raise BlowUpError(failed_at, trace, final)
    return trace, final
