import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import solve_ivp

from nsgalerkin.bounds import (BoundSpec, asymptotic_limit_error, asymptotic_ratio, bound_curves, bound_g,
                               bound_sqrt_g, bounds_csv, conditions6_check, convolution_bound, convolution_grid,
                               extremal_ode, rate_class_check, remark1_bound)
from nsgalerkin.errors import DivisionError, EvaluationError, InvalidArgumentError
from nsgalerkin.forcing import (CutoffEnvelope, ExponentialEnvelope, PolynomialEnvelope, TableEnvelope,
                                ZeroEnvelope)

mp.mp.dps = 30

ENVELOPES = [
    ZeroEnvelope(),
    CutoffEnvelope(1.0),
    CutoffEnvelope(2.5, 0.4),
    ExponentialEnvelope(0.3, 1.0),
    ExponentialEnvelope(2.0, 0.7),
    ExponentialEnvelope(1.0, 1.0),
    PolynomialEnvelope(2.0, 1.0),
    PolynomialEnvelope(0.5, 3.0),
    TableEnvelope([0.0, 1.0, 3.0, 60.0], [0.0, 2.0, 0.5, 0.1]),
]


def mp_convolution(env, gamma, t):
    """High-precision reference with breakpoints split out."""
    pts = [0] + [p for p in getattr(env, "breakpoints", ()) if 0 < p < t] + [t]
    f = lambda s: mp.exp(-gamma * (t - s)) * mp.mpf(float(env(float(s))))
    return float(mp.quad(f, pts))


def mp_convolution_poly(a, amp, gamma, t):
    return float(mp.quad(lambda s: mp.exp(-gamma * (t - s)) * amp * (1 + s) ** (-a), [0, t]))


@pytest.mark.parametrize("env", ENVELOPES, ids=lambda e: e.kind)
@pytest.mark.parametrize("gamma", [0.1, 1.0, 2.5])
@pytest.mark.parametrize("t", [0.0, 0.5, 3.0, 20.0])
def test_convolution_against_mpmath(env, gamma, t):
    spec = BoundSpec(gamma, 1.0, env)
    if isinstance(env, PolynomialEnvelope):
        ref = mp_convolution_poly(env.a, env.amplitude, gamma, t)
    else:
        ref = mp_convolution(env, gamma, t)
    for method in ("auto", "quad"):
        assert abs(convolution_bound(spec, t, method) - ref) <= 1e-10


def test_convolution_examples():
    assert convolution_bound(BoundSpec(1.0, 1.0, ZeroEnvelope()), 7.0) == 0.0
    const = BoundSpec(1.0, 1.0, PolynomialEnvelope(0.0, 1.0))
    assert abs(convolution_bound(const, 1.0) - (1 - math.exp(-1))) <= 1e-12
    expo = BoundSpec(1.0, 1.0, ExponentialEnvelope(0.3))
    assert abs(convolution_bound(expo, 2.0) - (math.exp(-0.6) - math.exp(-2)) / 0.7) <= 1e-10


def test_convolution_grid_matches_pointwise():
    for env in ENVELOPES:
        spec = BoundSpec(0.7, 1.0, env)
        times = np.linspace(0, 30, 61)
        grid = convolution_grid(spec, times)
        point = [convolution_bound(spec, t, "quad") for t in times]
        assert np.max(np.abs(grid - point)) <= 1e-10


def test_negative_time_and_bad_spec():
    spec = BoundSpec(1.0, 1.0, ZeroEnvelope())
    with pytest.raises(InvalidArgumentError):
        convolution_bound(spec, -1.0)
    with pytest.raises(InvalidArgumentError):
        BoundSpec(0.0, 1.0, ZeroEnvelope())
    with pytest.raises(InvalidArgumentError):
        BoundSpec(1.0, -1.0, ZeroEnvelope())
    with pytest.raises(InvalidArgumentError):
        BoundSpec(1.0, 1.0, ZeroEnvelope(), "loose")


def test_bound_examples():
    assert abs(bound_sqrt_g(BoundSpec(0.5, 1.0, ZeroEnvelope()), 2.0) - math.exp(-1)) <= 1e-15
    spec = BoundSpec(1.0, 0.0, CutoffEnvelope(1.0), "paper")
    assert bound_sqrt_g(spec, 3.0) == pytest.approx(0.5 * convolution_bound(spec, 3.0), rel=1e-15)
    e = BoundSpec(1.0, 4.0, ExponentialEnvelope(2.0))
    assert abs(bound_sqrt_g(e, 3.0) - (math.exp(-3) * 2 + math.exp(-3) - math.exp(-6))) <= 1e-13
    z = BoundSpec(0.4, 3.0, ZeroEnvelope())
    assert bound_g(z, 2.0) == pytest.approx(2 * math.exp(-1.6) * 3.0, rel=1e-14)
    g0 = BoundSpec(0.4, 0.0, ExponentialEnvelope(0.1), "paper")
    assert bound_g(g0, 2.0) == pytest.approx(2 * 0.25 * convolution_bound(g0, 2.0) ** 2, rel=1e-14)


@settings(max_examples=1000, deadline=None)
@given(st.floats(0.01, 5.0), st.floats(0.0, 40.0), st.floats(0.0, 10.0), st.sampled_from(ENVELOPES),
       st.sampled_from(["sharp", "paper"]))
def test_squared_form_dominates(gamma, t, g0, env, variant):
    spec = BoundSpec(gamma, g0, env, variant)
    s = bound_sqrt_g(spec, t)
    g = bound_g(spec, t)
    assert g >= s * s * (1 - 1e-14)
    # consistency of the two constructions
    I = convolution_bound(spec, t)
    k = spec.kappa
    assert abs(g - (2 * math.exp(-2 * gamma * t) * g0 + 2 * k * k * I * I)) <= 1e-12 * max(1.0, g)


@pytest.mark.parametrize("env", ENVELOPES, ids=lambda e: e.kind)
def test_bound_nonincreasing_in_gamma(env):
    ts = np.linspace(0, 15, 31)
    prev = None
    for gamma in (0.2, 0.5, 1.0, 2.0):
        cur = bound_curves(BoundSpec(gamma, 1.5, env), ts, extremal=False)["bound_sqrt_g"]
        if prev is not None:
            assert np.all(cur <= prev + 1e-14)
        prev = cur


def test_asymptotic_ratio():
    poly = BoundSpec(1.0, 1.0, PolynomialEnvelope(2.0))
    # mpmath reference of gamma I / b at t = 100
    ref = mp_convolution_poly(2.0, 1.0, 1.0, 100.0) * 101.0**2
    assert abs(asymptotic_ratio(poly, 100.0) - ref) <= 1e-8
    expo = BoundSpec(1.0, 1.0, ExponentialEnvelope(0.3))
    assert abs(asymptotic_ratio(expo, 40.0) - 1 / 0.7) <= 1e-6
    const = BoundSpec(2.0, 1.0, PolynomialEnvelope(0.0, 3.0))
    assert abs(asymptotic_ratio(const, 30.0) - 0.5) <= 1e-12
    assert asymptotic_limit_error(const, 30.0) <= 1e-12
    with pytest.raises(DivisionError):
        asymptotic_ratio(BoundSpec(1.0, 1.0, CutoffEnvelope(1.0)), 5.0)


def test_conditions6():
    assert conditions6_check(PolynomialEnvelope(2.0)).satisfied
    assert conditions6_check(PolynomialEnvelope(0.5)).satisfied
    assert not conditions6_check(ExponentialEnvelope(0.3)).satisfied
    assert not conditions6_check(ExponentialEnvelope(0.01)).satisfied
    # a nonzero constant fails lim b = 0
    rep = conditions6_check(PolynomialEnvelope(0.0, 2.0))
    assert not rep.satisfied and rep.lim_b == pytest.approx(2.0)
    z = conditions6_check(ZeroEnvelope())
    assert z.satisfied and z.vacuous
    assert conditions6_check(CutoffEnvelope(3.0)).vacuous
    with pytest.raises(EvaluationError):
        conditions6_check(TableEnvelope([0.0, 10.0], [1.0, 0.5]))


def test_cutoff_closed_form_examples():
    assert remark1_bound(0.7, 2.0, 0.0, 3.0) == pytest.approx(2 * math.exp(-4.2) * 2.0, rel=1e-15)
    expect = 2 * math.exp(-6) + math.exp(-6) / 2 * (math.e - 1) ** 2
    assert abs(remark1_bound(1.0, 1.0, 1.0, 3.0, "paper") - expect) <= 1e-12
    spec = BoundSpec(1.0, 1.0, CutoffEnvelope(1.0), "paper")
    assert abs(bound_g(spec, 3.0) - expect) <= 1e-12
    with pytest.raises(InvalidArgumentError):
        remark1_bound(1.0, 1.0, 2.0, 1.0)


@pytest.mark.parametrize("variant", ["sharp", "paper"])
def test_cutoff_closed_form_matches_quadrature(variant):
    spec = BoundSpec(0.6, 1.3, CutoffEnvelope(1.5), variant)
    for t in np.linspace(1.5, 11.5, 41):
        closed = remark1_bound(0.6, 1.3, 1.5, t, variant)
        assert abs(bound_g(spec, t, "quad") / closed - 1) <= 1e-8


def _ode_reference(spec, times):
    """Solve the equality case of the differential inequality directly."""
    g0, gamma, env = spec.g0, spec.gamma, spec.envelope
    if g0 > 0:
        f = lambda t, g: 2 * float(env(t)) * np.sqrt(np.maximum(g, 0)) - 2 * gamma * g
        y0, square = [g0], False
    else:
        # g' = 2 b sqrt(g) is non-Lipschitz at 0; the maximal solution is y^2 with y' = b - gamma y
        f = lambda t, y: float(env(t)) - gamma * y
        y0, square = [0.0], True
    # integrate piecewise so kinks in b never sit inside a step
    segs = sorted({0.0, *[p for p in env.breakpoints if 0 < p < times[-1]], float(times[-1])})
    out = np.empty(len(times))
    y = y0
    for a, b in zip(segs, segs[1:]):
        sol = solve_ivp(f, (a, b), y, method="DOP853", rtol=1e-12, atol=1e-14, dense_output=True)
        sel = (times >= a) & (times <= b)
        out[sel] = sol.sol(times[sel])[0]
        y = sol.y[:, -1]
    return out**2 if square else out


@pytest.mark.parametrize("env", [e for e in ENVELOPES if not isinstance(e, TableEnvelope)], ids=lambda e: e.kind)
@pytest.mark.parametrize("g0", [0.0, 1.0])
def test_extremal_against_ode_solver(env, g0):
    spec = BoundSpec(0.8, g0, env)
    times, g = extremal_ode(spec, 10.0, 41)
    ref = _ode_reference(spec, times)
    assert np.max(np.abs(g - ref)) <= 1e-8
    assert np.all(g >= 0)


@pytest.mark.parametrize("env", ENVELOPES, ids=lambda e: e.kind)
def test_extremal_saturates_sharp_and_beats_half_kappa(env):
    times = np.linspace(0, 10, 101)
    _, g = extremal_ode(BoundSpec(1.0, 1.0, env), 0, times=times)
    sharp = bound_curves(BoundSpec(1.0, 1.0, env, "sharp"), times)
    halved = bound_curves(BoundSpec(1.0, 1.0, env, "paper"), times)
    assert np.max(np.abs(np.sqrt(g) - sharp["bound_sqrt_g"])) <= 1e-8
    positive = sharp["I"] > 0
    assert np.all(np.sqrt(g[positive]) > halved["bound_sqrt_g"][positive])
    assert np.allclose(np.sqrt(g[~positive]), halved["bound_sqrt_g"][~positive], rtol=1e-14)


def test_extremal_zero_forcing_exact():
    times, g = extremal_ode(BoundSpec(0.3, 2.0, ZeroEnvelope()), 5.0)
    np.testing.assert_allclose(g, 2.0 * np.exp(-0.6 * times), rtol=1e-15)


def test_rate_classes_uniform_constant():
    for k in (0.3, 3.0):
        rep = rate_class_check(1.0, 1.0, k)
        assert rep["rate"] == min(k, 1.0)
        assert rep["max_sup_ratio"] <= 1.0 + 1e-12
        assert rep["wrong_class_growth"] > 1e3


def test_bounds_csv_columns():
    curves = bound_curves(BoundSpec(1.0, 1.0, CutoffEnvelope(1.0)), np.linspace(0, 2, 5))
    lines = bounds_csv(curves).splitlines()
    assert lines[0] == "t,bound_sqrt_g,bound_g,extremal_g,I,b"
    assert len(lines) == 6
