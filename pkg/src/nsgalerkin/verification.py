"""Numerical certificates for the functional inequalities, the Gronwall
uniqueness argument and uniform-in-truncation decay.

Everything here works on Galerkin trajectories: the reports certify the
quantitative skeleton of the estimates (growth rate of the difference
energy, the bounded-Dirichlet-norm hypothesis, the quartic time integral)
rather than statements about exact weak solutions.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .basis import VOLUME, Basis, evaluate_field
from .errors import AliasingError, BasisMismatchError, DivisionError, InvalidArgumentError
from .forcing import CutoffEnvelope, ExponentialEnvelope, ForcingProfile, ZeroEnvelope
from .solver import CoefficientState, EnergyTrace, SolverParams, energy, integrate
from .tensor import InteractionTensor


def _trapezoid(y, t):
    y = np.asarray(y, dtype=float)
    t = np.asarray(t, dtype=float)
    if y.size < 2:
        return 0.0
    return float(np.sum(0.5 * np.diff(t) * (y[1:] + y[:-1])))


# ------------------------------------------------------------------ W1 / (A)

@dataclass(frozen=True)
class W1Report:
    sup_norm: float
    within: bool
    serrin_integral: float
    threshold: float

    def to_dict(self):
        return {"sup_norm": self.sup_norm, "within": self.within,
                "serrin_integral": self.serrin_integral, "threshold": self.threshold}


def w1_check(trace: EnergyTrace, threshold: float) -> W1Report:
    """sup_t ||v(t)|| = sup G^(1/2) and int_0^T ||v||^4 = int G^2 (trapezoid)."""
    if len(trace) == 0:
        raise InvalidArgumentError("w1_check needs a nonempty trace")
    G = np.asarray(trace.G, dtype=float)
    sup_norm = float(np.sqrt(G.max()))
    return W1Report(sup_norm, bool(sup_norm <= threshold), _trapezoid(G * G, trace.t), float(threshold))


# ------------------------------------------------------------------ uniqueness

@dataclass(frozen=True, eq=False)
class UniquenessReport:
    t: np.ndarray = field(repr=False)
    h: np.ndarray = field(repr=False)
    H: np.ndarray = field(repr=False)
    c_hat: float
    c_sup: float
    sup_norm_v: float
    serrin_integral: float
    h0: float
    tolerance: float
    within_ceiling: bool
    within_fitted_ceiling: bool = False

    @property
    def identical(self) -> bool:
        return bool(self.h0 == 0.0 and np.all(self.h == 0.0))

    def csv(self) -> str:
        lines = ["t,h,H"] + [f"{t!r},{h!r},{H!r}" for t, h, H in zip(self.t.tolist(), self.h.tolist(), self.H.tolist())]
        return "\n".join(lines) + "\n"

    def summary(self) -> dict:
        return {
            "c_hat": self.c_hat, "c_sup": self.c_sup, "sup_norm_v": self.sup_norm_v,
            "serrin_integral": self.serrin_integral, "h0": self.h0, "h_final": float(self.h[-1]),
            "tolerance": self.tolerance, "within_ceiling": self.within_ceiling,
            "within_fitted_ceiling": self.within_fitted_ceiling, "identical": self.identical,
        }


def fit_gronwall_rate(t, h, h0) -> float:
    """Least-squares slope of log(h/h0) against t through the origin, first half of the run."""
    t = np.asarray(t, dtype=float)
    h = np.asarray(h, dtype=float)
    if h0 <= 0.0:
        return 0.0
    sel = (t <= t[0] + 0.5 * (t[-1] - t[0])) & (h > 0) & (t > t[0])
    if not np.any(sel):
        return 0.0
    x = t[sel] - t[0]
    y = np.log(h[sel] / h0)
    return float(np.dot(x, y) / np.dot(x, x))


def uniqueness_experiment(
    ic1: CoefficientState,
    ic2: CoefficientState,
    tensor: InteractionTensor,
    forcing: ForcingProfile,
    params: SolverParams,
    tolerance: float = 0.05,
) -> UniquenessReport:
    """Run two trajectories and track the difference energy h = |u|^2, u = v - w.

    ``c_hat`` is the fitted log-linear rate; ``c_sup`` the largest sampled
    instantaneous rate h'/h = 2 (u, u')/|u|^2 (the constant of h' <= c h).
    The asserted ceiling is log(h/h0) <= (c_sup + tolerance |c_sup|) t;
    the same test with ``c_hat`` is reported as ``within_fitted_ceiling`` but
    is not a theorem (the fitted line need not dominate the second half).
    """
    if ic1.basis != ic2.basis:
        raise BasisMismatchError("uniqueness experiment needs both states on the same basis")
    tr1, _ = integrate(ic1, tensor, forcing, params)
    tr2, _ = integrate(ic2, tensor, forcing, params)
    lam = ic1.basis.eigenvalues
    u = tr1.coefficients - tr2.coefficients
    du = tr1.rates - tr2.rates
    h = np.einsum("ij,ij->i", u, u)
    H = (u * u) @ lam
    h0 = float(h[0])
    t = np.asarray(tr1.t)
    c_hat = fit_gronwall_rate(t, h, h0)
    if h0 > 0.0:
        with np.errstate(divide="ignore", invalid="ignore"):
            inst = np.where(h > 0, 2.0 * np.einsum("ij,ij->i", u, du) / h, -np.inf)
        c_sup = float(np.max(inst))
        with np.errstate(divide="ignore"):
            growth = np.log(h / h0)
        elapsed = t - t[0]
        within = bool(np.all(growth <= (c_sup + tolerance * abs(c_sup)) * elapsed + 1e-9))
        within_fit = bool(np.all(growth <= (c_hat + tolerance * abs(c_hat)) * elapsed + 1e-9))
    else:
        c_sup = 0.0
        within = within_fit = bool(np.all(h == 0.0))
    w1 = w1_check(tr1, math.inf)
    return UniquenessReport(t, h, H, c_hat, c_sup, w1.sup_norm, w1.serrin_integral, h0, tolerance, within,
                            within_fit)


# ------------------------------------------------------------------ inequalities

def poincare_check(state) -> float:
    """Rayleigh quotient G/g >= lambda_1 = 1."""
    g, G = energy(state)
    if g == 0.0:
        raise DivisionError("Poincare ratio undefined for the zero state")
    return G / g


def ladyzhenskaya_ratio(state, basis: Basis | None = None, grid_n: int | None = None) -> float:
    """||v||_{L4}^2 / (|v|^(1/2) ||v||^(3/2)) with an exact quartic quadrature grid."""
    basis = state.basis if basis is None else basis
    need = 4 * basis.k_max + 1
    grid_n = need if grid_n is None else grid_n
    if grid_n < need:
        raise AliasingError(f"quartic integrand needs grid_n >= {need}, got {grid_n}")
    g, G = energy(state)
    if g == 0.0:
        raise DivisionError("Ladyzhenskaya ratio undefined for the zero state")
    v = evaluate_field(state, basis, grid_n)
    l4_fourth = float(np.sum(np.sum(v * v, axis=0) ** 2)) * VOLUME / grid_n**3
    return math.sqrt(l4_fourth) / (g**0.25 * G**0.75)


# ------------------------------------------------------------------ truncation sweeps

def _decay_admissible(envelope, gamma) -> None:
    if isinstance(envelope, (ZeroEnvelope, CutoffEnvelope)):
        return
    if isinstance(envelope, ExponentialEnvelope) and envelope.k >= 2.0 * gamma * (1.0 - 1e-12):
        return
    if isinstance(envelope, ExponentialEnvelope) and envelope.amplitude == 0.0:
        return
    raise InvalidArgumentError(
        f"uniform decay needs |f(t)| <= O(exp(-2 gamma t)) with gamma={gamma!r}; "
        f"envelope {envelope.to_dict()} decays more slowly"
    )


def _check_nested(k_max_list):
    ks = list(k_max_list)
    if not ks or any(b <= a for a, b in zip(ks, ks[1:])):
        raise InvalidArgumentError(f"k_max_list must be strictly ascending (nested truncations), got {ks}")
    return ks


def _spearman(x, y) -> float:
    if len(x) < 2 or np.ptp(y) == 0.0:
        return 0.0
    return float(stats.spearmanr(x, y).statistic)


@dataclass(frozen=True)
class UniformDecayRow:
    k_max: int
    m: int
    sup_reweighted: float
    bound_sup_reweighted: float
    dominated: bool


@dataclass(frozen=True)
class UniformDecayTable:
    rows: tuple
    gamma: float
    spread: float
    spearman: float
    increasing_trend: bool

    def column(self):
        return np.array([r.sup_reweighted for r in self.rows])

    def to_dict(self):
        return {
            "gamma": self.gamma, "spread": self.spread, "spearman": self.spearman,
            "increasing_trend": self.increasing_trend,
            "rows": [r.__dict__ for r in self.rows],
        }


# relative differences below this are roundoff, not a trend
TREND_NOISE = 1e-9


def uniform_decay_check(scenario, k_max_list, cache_dir=None) -> UniformDecayTable:
    """sup_t g_m(t) exp(2 gamma t) for each truncation, gamma = nu lambda_1."""
    ks = _check_nested(k_max_list)
    gamma = scenario.nu  # lambda_1 = 1 on the integer torus
    _decay_admissible(scenario.envelope(), gamma)
    rows = []
    for k in ks:
        basis, tensor, ic, forcing, params = scenario.materialize(k, cache_dir)
        trace, _ = integrate(ic, tensor, forcing, params, variant="sharp")
        t = np.asarray(trace.t)
        weight = np.exp(2.0 * params.nu * basis.lambda_min * t)
        rows.append(UniformDecayRow(
            k, basis.m,
            float(np.max(trace.g * weight)),
            float(np.max(trace.bound_g * weight)),
            bool(np.all(trace.g <= trace.bound_g)),
        ))
    col = np.array([r.sup_reweighted for r in rows])
    spread = float(col.max() / col.min()) if col.min() > 0 else (1.0 if col.max() == 0 else math.inf)
    rho = _spearman(ks, col)
    increasing = bool(rho > 0.5 and (col.max() - col.min()) > TREND_NOISE * max(col.max(), 1e-300))
    return UniformDecayTable(tuple(rows), gamma, spread, rho, increasing)


@dataclass(frozen=True)
class ConvergenceTable:
    k_max_list: tuple
    m_list: tuple
    checkpoints: tuple
    g: np.ndarray  # (n_truncations, n_checkpoints)
    cauchy: np.ndarray  # (n_truncations - 1, n_checkpoints), |g_{m'} - g_m|

    def monotone(self, checkpoint_index: int = 0) -> bool:
        d = self.cauchy[:, checkpoint_index]
        return bool(np.all(np.diff(d) <= 0.0))

    def to_dict(self):
        return {
            "k_max_list": list(self.k_max_list), "m_list": list(self.m_list),
            "checkpoints": list(self.checkpoints), "g": self.g.tolist(), "cauchy": self.cauchy.tolist(),
        }


def convergence_study(scenario, k_max_list, checkpoints, cache_dir=None) -> ConvergenceTable:
    """g_m at each checkpoint for nested truncations and successive Cauchy differences."""
    ks = _check_nested(k_max_list)
    cps = [float(x) for x in checkpoints]
    if any(c < 0 or c > scenario.t_end * (1 + 1e-12) for c in cps):
        raise InvalidArgumentError("checkpoints must lie in [0, t_end]")
    rows, ms = [], []
    for k in ks:
        basis, tensor, ic, forcing, params = scenario.materialize(k, cache_dir)
        params = SolverParams(params.nu, params.dt, params.t_end, params.scheme, 1)
        trace, _ = integrate(ic, tensor, forcing, params)
        t = np.asarray(trace.t)
        vals = []
        for cp in cps:
            i = int(np.argmin(np.abs(t - cp)))
            if abs(t[i] - cp) > 1e-9 * max(1.0, cp):
                raise InvalidArgumentError(f"checkpoint {cp} is not on the step grid dt={params.dt}")
            vals.append(float(trace.g[i]))
        rows.append(vals)
        ms.append(basis.m)
    g = np.array(rows)
    return ConvergenceTable(tuple(ks), tuple(ms), tuple(cps), g, np.abs(np.diff(g, axis=0)))


# ------------------------------------------------------------------ dominance

def dominance_margin(trace: EnergyTrace) -> float:
    """min over samples of bound_g - g (>= 0 when the bound holds)."""
    return float(np.min(np.asarray(trace.bound_g) - np.asarray(trace.g)))
