"""Hot loops of the time stepper.

Two interchangeable backends implement the same functions:

* ``numba``  -- ``@njit`` compiled loops (default when numba imports)
* ``numpy``  -- vectorised pure-numpy fallback

Set ``NSGALERKIN_DISABLE_NUMBA=1`` before import to force the numpy path.
Both backends visit the triad entries in the same order; results agree to
roundoff (a few ulps per step), not necessarily bit for bit.

The nonlinear term is stored CSR-style by output index ``j``: entries
``indptr[j]:indptr[j+1]`` of ``p_idx``, ``q_idx``, ``vals`` hold every
``T[p, q, j]``.
"""
import os

import numpy as np

_DISABLE = os.environ.get("NSGALERKIN_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes", "on")

try:
    if _DISABLE:
        raise ImportError("numba disabled by NSGALERKIN_DISABLE_NUMBA")
    from numba import njit
    HAS_NUMBA = True
except ImportError:
    HAS_NUMBA = False

BACKEND = "numba" if HAS_NUMBA else "numpy"


# ---------------------------------------------------------------- numpy path

def _np_triad_contract(indptr, p_idx, q_idx, vals, c, out):
    m = out.shape[0]
    j_idx = np.repeat(np.arange(m), np.diff(indptr))
    out[:] = np.bincount(j_idx, weights=vals * c[p_idx] * c[q_idx], minlength=m)
    return out


def _np_forcing_nonlinear(indptr, p_idx, q_idx, vals, c, w, b, out):
    _np_triad_contract(indptr, p_idx, q_idx, vals, c, out)
    out *= -1.0
    out += b * w
    return out


def _quiet(fn):
    # overflow is reported through the returned step index, not as a warning
    def wrapper(*args):
        with np.errstate(over="ignore", invalid="ignore"):
            return fn(*args)

    wrapper.__name__ = fn.__name__
    return wrapper


@_quiet
def _np_rk4_advance(c, nu_lam, indptr, p_idx, q_idx, vals, w, bstage, dt):
    m = c.shape[0]
    j_idx = np.repeat(np.arange(m), np.diff(indptr))

    def f(x, b):
        n = np.bincount(j_idx, weights=vals * x[p_idx] * x[q_idx], minlength=m)
        return -nu_lam * x - n + b * w

    c = c.copy()
    for n in range(bstage.shape[0]):
        k1 = f(c, bstage[n, 0])
        k2 = f(c + 0.5 * dt * k1, bstage[n, 1])
        k3 = f(c + 0.5 * dt * k2, bstage[n, 1])
        k4 = f(c + dt * k3, bstage[n, 2])
        c = c + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(c)):
            return c, n
    return c, -1


@_quiet
def _np_ifrk4_advance(c, nu_lam, indptr, p_idx, q_idx, vals, w, bstage, dt):
    m = c.shape[0]
    j_idx = np.repeat(np.arange(m), np.diff(indptr))
    e_half = np.exp(-0.5 * dt * nu_lam)
    e_full = e_half * e_half

    def f(x, b):
        n = np.bincount(j_idx, weights=vals * x[p_idx] * x[q_idx], minlength=m)
        return b * w - n

    c = c.copy()
    for n in range(bstage.shape[0]):
        k1 = f(c, bstage[n, 0])
        k2 = f(e_half * (c + 0.5 * dt * k1), bstage[n, 1])
        k3 = f(e_half * c + 0.5 * dt * k2, bstage[n, 1])
        k4 = f(e_full * c + dt * e_half * k3, bstage[n, 2])
        c = e_full * c + (dt / 6.0) * (e_full * k1 + 2.0 * e_half * (k2 + k3) + k4)
        if not np.all(np.isfinite(c)):
            return c, n
    return c, -1


# ---------------------------------------------------------------- numba path

if HAS_NUMBA:

    @njit(cache=True)
    def _nb_triad_contract(indptr, p_idx, q_idx, vals, c, out):
        m = out.shape[0]
        for j in range(m):
            s = 0.0
            for e in range(indptr[j], indptr[j + 1]):
                s += vals[e] * c[p_idx[e]] * c[q_idx[e]]
            out[j] = s
        return out

    @njit(cache=True)
    def _nb_forcing_nonlinear(indptr, p_idx, q_idx, vals, c, w, b, out):
        m = out.shape[0]
        for j in range(m):
            s = 0.0
            for e in range(indptr[j], indptr[j + 1]):
                s += vals[e] * c[p_idx[e]] * c[q_idx[e]]
            out[j] = b * w[j] - s
        return out

    @njit(cache=True)
    def _nb_rk4_advance(c, nu_lam, indptr, p_idx, q_idx, vals, w, bstage, dt):
        m = c.shape[0]
        c = c.copy()
        k1 = np.empty(m)
        k2 = np.empty(m)
        k3 = np.empty(m)
        k4 = np.empty(m)
        x = np.empty(m)
        for n in range(bstage.shape[0]):
            _nb_forcing_nonlinear(indptr, p_idx, q_idx, vals, c, w, bstage[n, 0], k1)
            for i in range(m):
                k1[i] -= nu_lam[i] * c[i]
                x[i] = c[i] + 0.5 * dt * k1[i]
            _nb_forcing_nonlinear(indptr, p_idx, q_idx, vals, x, w, bstage[n, 1], k2)
            for i in range(m):
                k2[i] -= nu_lam[i] * x[i]
                x[i] = c[i] + 0.5 * dt * k2[i]
            _nb_forcing_nonlinear(indptr, p_idx, q_idx, vals, x, w, bstage[n, 1], k3)
            for i in range(m):
                k3[i] -= nu_lam[i] * x[i]
                x[i] = c[i] + dt * k3[i]
            _nb_forcing_nonlinear(indptr, p_idx, q_idx, vals, x, w, bstage[n, 2], k4)
            finite = True
            for i in range(m):
                k4[i] -= nu_lam[i] * x[i]
                c[i] = c[i] + (dt / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
                if not np.isfinite(c[i]):
                    finite = False
            if not finite:
                return c, n
        return c, -1

    @njit(cache=True)
    def _nb_ifrk4_advance(c, nu_lam, indptr, p_idx, q_idx, vals, w, bstage, dt):
        m = c.shape[0]
        c = c.copy()
        e_half = np.exp(-0.5 * dt * nu_lam)
        e_full = e_half * e_half
        k1 = np.empty(m)
        k2 = np.empty(m)
        k3 = np.empty(m)
        k4 = np.empty(m)
        x = np.empty(m)
        for n in range(bstage.shape[0]):
            _nb_forcing_nonlinear(indptr, p_idx, q_idx, vals, c, w, bstage[n, 0], k1)
            for i in range(m):
                x[i] = e_half[i] * (c[i] + 0.5 * dt * k1[i])
            _nb_forcing_nonlinear(indptr, p_idx, q_idx, vals, x, w, bstage[n, 1], k2)
            for i in range(m):
                x[i] = e_half[i] * c[i] + 0.5 * dt * k2[i]
            _nb_forcing_nonlinear(indptr, p_idx, q_idx, vals, x, w, bstage[n, 1], k3)
            for i in range(m):
                x[i] = e_full[i] * c[i] + dt * e_half[i] * k3[i]
            _nb_forcing_nonlinear(indptr, p_idx, q_idx, vals, x, w, bstage[n, 2], k4)
            finite = True
            for i in range(m):
                c[i] = e_full[i] * c[i] + (dt / 6.0) * (
                    e_full[i] * k1[i] + 2.0 * e_half[i] * (k2[i] + k3[i]) + k4[i]
                )
                if not np.isfinite(c[i]):
                    finite = False
            if not finite:
                return c, n
        return c, -1

    triad_contract = _nb_triad_contract
    rk4_advance = _nb_rk4_advance
    ifrk4_advance = _nb_ifrk4_advance
else:
    triad_contract = _np_triad_contract
    rk4_advance = _np_rk4_advance
    ifrk4_advance = _np_ifrk4_advance


NUMPY_KERNELS = {
    "triad_contract": _np_triad_contract,
    "rk4_advance": _np_rk4_advance,
    "ifrk4_advance": _np_ifrk4_advance,
}

NUMBA_KERNELS = (
    {
        "triad_contract": _nb_triad_contract,
        "rk4_advance": _nb_rk4_advance,
        "ifrk4_advance": _nb_ifrk4_advance,
    }
    if HAS_NUMBA
    else {}
)
