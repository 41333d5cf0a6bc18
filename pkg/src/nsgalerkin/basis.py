"""Divergence-free Stokes eigenbasis on the mean-zero periodic box [0, 2*pi)^3.

Each mode is a real field ``A * e * trig(k . x)`` with ``trig`` in {cos, sin},
``e`` one of two unit polarisations orthogonal to the integer wavevector
``k`` and ``A = (2 / (2 pi)^3)^(1/2)`` so that the family is orthonormal in
L^2.  The Stokes eigenvalue of such a mode is ``|k|^2``; the lowest one on
the integer torus is 1, which doubles as the Poincare constant.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import AliasingError, InvalidArgumentError, TruncationError

VOLUME = (2.0 * np.pi) ** 3
AMPLITUDE = np.sqrt(2.0 / VOLUME)

COS, SIN = "cos", "sin"
_PARITIES = (COS, SIN)
_UNIT = np.eye(3)


def canonical(k) -> tuple[int, int, int]:
    """Half-lattice representative of +-k: first nonzero component positive."""
    k = tuple(int(x) for x in k)
    for x in k:
        if x != 0:
            return k if x > 0 else tuple(-y for y in k)
    raise InvalidArgumentError("zero wavevector has no half-lattice representative")


def polarizations(k) -> tuple[np.ndarray, np.ndarray]:
    """Unit vectors ``e1 = k x a / |k x a|`` and ``e2 = k x e1 / |k x e1|``.

    ``a`` is the first standard basis vector not parallel to ``k``.
    """
    kv = np.asarray(k, dtype=float)
    for a in _UNIT:
        cross = np.cross(kv, a)
        if np.dot(cross, cross) > 0.5:  # integer k: |k x a|^2 is 0 or >= 1
            break
    e1 = cross / np.linalg.norm(cross)
    e2 = np.cross(kv, e1)
    e2 /= np.linalg.norm(e2)
    return e1, e2


@dataclass(frozen=True)
class Mode:
    wavevector: tuple[int, int, int]
    polarization: int
    parity: str
    eigenvalue: float = field(init=False)

    def __post_init__(self):
        k = tuple(int(x) for x in self.wavevector)
        if k == (0, 0, 0):
            raise InvalidArgumentError("mode wavevector must be nonzero")
        if canonical(k) != k:
            raise InvalidArgumentError(f"wavevector {k} is not the half-lattice representative")
        if self.polarization not in (1, 2):
            raise InvalidArgumentError("polarization must be 1 or 2")
        if self.parity not in _PARITIES:
            raise InvalidArgumentError("parity must be 'cos' or 'sin'")
        object.__setattr__(self, "wavevector", k)
        object.__setattr__(self, "eigenvalue", float(sum(x * x for x in k)))

    @property
    def direction(self) -> np.ndarray:
        return polarizations(self.wavevector)[self.polarization - 1]

    def sort_key(self):
        return (self.eigenvalue, self.wavevector, self.polarization, _PARITIES.index(self.parity))

    def to_dict(self) -> dict:
        return {
            "k": list(self.wavevector),
            "polarization": self.polarization,
            "parity": self.parity,
            "lambda": self.eigenvalue,
        }


@dataclass(frozen=True, eq=False)
class Basis:
    """Ordered, immutable truncated eigenbasis.

    Per-mode arrays (``wavevectors``, ``directions``, ``eigenvalues``,
    ``is_sine``) are cached on construction for the vectorised kernels.
    """

    modes: tuple[Mode, ...]
    k_max: int
    lambda_max: float

    def __post_init__(self):
        ks = np.array([md.wavevector for md in self.modes], dtype=np.int64).reshape(-1, 3)
        dirs = np.array([md.direction for md in self.modes]).reshape(-1, 3)
        lam = np.array([md.eigenvalue for md in self.modes])
        sine = np.array([md.parity == SIN for md in self.modes])
        for name, arr in (("wavevectors", ks), ("directions", dirs), ("eigenvalues", lam), ("is_sine", sine)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def m(self) -> int:
        return len(self.modes)

    @property
    def lambda_min(self) -> float:
        return float(self.eigenvalues.min())

    @property
    def basis_id(self) -> str:
        if self.lambda_max == self.k_max**2:
            return f"torus-k{self.k_max}-m{self.m}"
        return f"torus-k{self.k_max}-l{self.lambda_max:g}-m{self.m}"

    def __len__(self):
        return self.m

    def __eq__(self, other):
        return isinstance(other, Basis) and self.modes == other.modes

    def __hash__(self):
        return hash(self.modes)

    def index_of(self, k, polarization: int, parity: str) -> int:
        return self.modes.index(Mode(canonical(k), polarization, parity))

    def to_json(self) -> str:
        return json.dumps([md.to_dict() for md in self.modes])

    def min_grid(self, degree: int = 2) -> int:
        """Smallest uniform grid integrating a degree-``degree`` trig product exactly."""
        return degree * self.k_max + 1


def build_basis(k_max: int, lambda_max: float | None = None) -> Basis:
    """All modes with ``|k|^2 <= lambda_max`` (default ``k_max**2``).

    ``lambda_max`` may tighten the spherical shell below ``k_max**2``
    (e.g. ``k_max=2, lambda_max=2``); ``k_max`` still bounds every component
    and sets the grid sizes used downstream.
    """
    if isinstance(k_max, bool) or not isinstance(k_max, (int, np.integer)) or k_max < 1:
        raise InvalidArgumentError(f"k_max must be a positive integer, got {k_max!r}")
    k_max = int(k_max)
    if lambda_max is None:
        lambda_max = float(k_max * k_max)
    lambda_max = float(lambda_max)
    if not 1.0 <= lambda_max <= k_max * k_max:
        raise InvalidArgumentError(f"lambda_max must lie in [1, k_max^2], got {lambda_max!r}")

    r = np.arange(-k_max, k_max + 1)
    modes = []
    for k in np.stack(np.meshgrid(r, r, r, indexing="ij"), axis=-1).reshape(-1, 3):
        k = tuple(int(x) for x in k)
        if k == (0, 0, 0) or canonical(k) != k or sum(x * x for x in k) > lambda_max:
            continue
        for pol in (1, 2):
            for par in _PARITIES:
                modes.append(Mode(k, pol, par))
    modes.sort(key=Mode.sort_key)
    return Basis(tuple(modes), k_max, lambda_max)


def grid_points(grid_n: int) -> np.ndarray:
    """Uniform grid coordinates, shape (3, n, n, n)."""
    x = 2.0 * np.pi * np.arange(grid_n) / grid_n
    return np.stack(np.meshgrid(x, x, x, indexing="ij"))


def _phases(basis: Basis, grid_n: int) -> np.ndarray:
    x = grid_points(grid_n).reshape(3, -1)
    return basis.wavevectors.astype(float) @ x  # (m, N)


def mode_values(basis: Basis, grid_n: int) -> np.ndarray:
    """Sampled mode fields, shape (m, 3, N) with N = grid_n**3."""
    theta = _phases(basis, grid_n)
    trig = np.where(basis.is_sine[:, None], np.sin(theta), np.cos(theta))
    return AMPLITUDE * basis.directions[:, :, None] * trig[:, None, :]


def mode_gradients(basis: Basis, grid_n: int) -> np.ndarray:
    """Sampled gradients ``d phi^i / d x_a``, shape (m, 3 [a], 3 [i], N)."""
    theta = _phases(basis, grid_n)
    dtrig = np.where(basis.is_sine[:, None], np.cos(theta), -np.sin(theta))
    k = basis.wavevectors.astype(float)
    return AMPLITUDE * k[:, :, None, None] * basis.directions[:, None, :, None] * dtrig[:, None, None, :]


def _check_grid(basis: Basis, grid_n: int, degree: int) -> None:
    need = basis.min_grid(degree)
    if grid_n < need:
        raise AliasingError(
            f"grid_n={grid_n} aliases a degree-{degree} product at k_max={basis.k_max}; need >= {need}"
        )


def evaluate_field(state, basis: Basis, grid_n: int) -> np.ndarray:
    """Point samples of ``sum_j c_j phi_j`` on a grid_n^3 grid, shape (3, n, n, n)."""
    _check_grid(basis, grid_n, 2)
    c = _coefficients(state, basis)
    v = np.tensordot(c, mode_values(basis, grid_n), axes=(0, 0))
    return v.reshape(3, grid_n, grid_n, grid_n)


def spectral_divergence(field: np.ndarray) -> np.ndarray:
    """Divergence of a sampled periodic field via FFT differentiation."""
    n = field.shape[-1]
    freq = np.fft.fftfreq(n, d=1.0 / n)
    if n % 2 == 0:
        freq[n // 2] = 0.0  # Nyquist derivative is not real-representable
    kk = np.meshgrid(freq, freq, freq, indexing="ij")
    div_hat = sum(1j * kk[a] * np.fft.fftn(field[a]) for a in range(3))
    return np.real(np.fft.ifftn(div_hat))


def gram_matrices(basis: Basis, grid_n: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """L^2 and Dirichlet Gram matrices by exact uniform-grid quadrature."""
    grid_n = basis.min_grid(2) if grid_n is None else grid_n
    _check_grid(basis, grid_n, 2)
    w = VOLUME / grid_n**3
    phi = mode_values(basis, grid_n).reshape(basis.m, -1)
    dphi = mode_gradients(basis, grid_n).reshape(basis.m, -1)
    return w * phi @ phi.T, w * dphi @ dphi.T


def _coefficients(state, basis: Basis) -> np.ndarray:
    c = np.asarray(getattr(state, "c", state), dtype=float)
    if c.shape != (basis.m,):
        raise InvalidArgumentError(f"expected {basis.m} coefficients, got shape {c.shape}")
    return c


@dataclass(frozen=True)
class RandomSpectrum:
    """Seeded random initial data with per-mode energy proportional to lambda^-decay.

    The Gaussian draw for each mode depends only on ``(seed, k, polarization,
    parity)``, so nested truncations see the same underlying field.  The
    total energy is normalised over the modes of ``build_basis(normalize_k_max)``
    (default: the target basis) restricted to ``max_lambda``.
    """

    energy: float
    decay: float = 2.0
    seed: int = 0
    max_lambda: float | None = None
    normalize_k_max: int | None = None

    def __post_init__(self):
        if not self.energy >= 0.0:
            raise InvalidArgumentError("energy must be nonnegative")
        if isinstance(self.seed, bool) or int(self.seed) != self.seed or self.seed < 0:
            raise InvalidArgumentError("seed must be a nonnegative integer")

    def raw(self, modes: Sequence[Mode]) -> np.ndarray:
        out = np.empty(len(modes))
        for i, md in enumerate(modes):
            out[i] = mode_normal(self.seed, md) * md.eigenvalue ** (-0.5 * self.decay)
            if self.max_lambda is not None and md.eigenvalue > self.max_lambda:
                out[i] = 0.0
        return out

    def coefficients(self, basis: Basis) -> np.ndarray:
        c = self.raw(basis.modes)
        if self.normalize_k_max is None:
            ref = c
        else:
            if self.normalize_k_max < basis.k_max:
                raise InvalidArgumentError("normalize_k_max must not be below the basis k_max")
            ref = self.raw(build_basis(self.normalize_k_max).modes)
        total = float(np.dot(ref, ref))
        if total == 0.0:
            if self.energy == 0.0:
                return np.zeros(basis.m)
            raise InvalidArgumentError("random spectrum has no support on the basis")
        return c * np.sqrt(self.energy / total)


def mode_normal(seed: int, mode: Mode, stream: int = 0) -> float:
    """Standard normal draw keyed by a mode's identity (independent of ordering)."""
    k = mode.wavevector
    key = [int(seed), int(stream), k[0] + 1024, k[1] + 1024, k[2] + 1024,
           mode.polarization, _PARITIES.index(mode.parity)]
    return float(np.random.default_rng(key).standard_normal())


def project_initial(spec, basis: Basis):
    """Initial coefficients ``c_j(0) = (v0, phi_j)`` as a :class:`CoefficientState`.

    ``spec`` is either an explicit coefficient sequence (zero-padded to m;
    longer than m is rejected) or a :class:`RandomSpectrum`.
    """
    from .solver import CoefficientState

    if isinstance(spec, RandomSpectrum):
        c = spec.coefficients(basis)
    else:
        vals = np.asarray(spec, dtype=float).ravel()
        if vals.size > basis.m:
            raise TruncationError(
                f"{vals.size} coefficients given for a basis of m={basis.m}; refusing to truncate"
            )
        if not np.all(np.isfinite(vals)):
            raise InvalidArgumentError("initial coefficients must be finite")
        c = np.zeros(basis.m)
        c[: vals.size] = vals
    return CoefficientState(0.0, c, basis)
