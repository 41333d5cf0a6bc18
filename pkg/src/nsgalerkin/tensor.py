"""Galerkin triad coefficients T[p, q, j] = ((phi_p . grad) phi_q, phi_j).

Assembly integrates the full vector integrand on a uniform grid with
``n >= 3 k_max + 1`` points per axis.  The integrand is a trigonometric
polynomial of per-axis degree <= 3 k_max, so the periodic rectangle rule is
exact up to roundoff.  Only entries obeying the triad selection rule
``k_j = canonical(k_p +- k_q)`` and exceeding ``DROP_TOLERANCE`` are kept.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels
from .basis import VOLUME, Basis, build_basis, canonical, mode_gradients, mode_values
from .errors import AliasingError, InvalidArgumentError, NSGalerkinError

DROP_TOLERANCE = 1e-14
FORMAT_VERSION = 1
# off-rule quadrature output above this means the quadrature itself is broken
_SELECTION_SANITY = 1e-12


@dataclass(frozen=True, eq=False)
class InteractionTensor:
    """Sparse triad table stored CSR-style by output index ``j``."""

    m: int
    indptr: np.ndarray = field(repr=False)
    p_idx: np.ndarray = field(repr=False)
    q_idx: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    quadrature_grid_n: int = 0
    k_max: int = 0

    def __post_init__(self):
        for name, dtype in (("indptr", np.int64), ("p_idx", np.int64), ("q_idx", np.int64), ("values", float)):
            arr = np.ascontiguousarray(getattr(self, name), dtype=dtype)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.indptr.shape != (self.m + 1,) or self.indptr[-1] != self.values.size:
            raise InvalidArgumentError("inconsistent CSR layout for interaction tensor")

    @property
    def nnz(self) -> int:
        return int(self.values.size)

    @property
    def j_idx(self) -> np.ndarray:
        return np.repeat(np.arange(self.m), np.diff(self.indptr))

    def triples(self):
        """(p, q, j, value) arrays in storage order."""
        return self.p_idx, self.q_idx, self.j_idx, self.values

    def as_dict(self) -> dict:
        return {(int(p), int(q), int(j)): float(v) for p, q, j, v in zip(*self.triples())}

    def dense(self) -> np.ndarray:
        """Dense (m, m, m) array; only sensible for small bases."""
        out = np.zeros((self.m,) * 3)
        p, q, j, v = self.triples()
        out[p, q, j] = v
        return out

    # -------------------------------------------------------------- persistence

    def save(self, path) -> Path:
        """Write ``.npz`` (binary) or ``.json`` (p, q, j, value) table."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        if path.suffix == ".json":
            p, q, j, v = self.triples()
            doc = {
                "format_version": FORMAT_VERSION,
                "k_max": self.k_max,
                "m": self.m,
                "quadrature_grid_n": self.quadrature_grid_n,
                "entries": [[int(a), int(b), int(c), repr(float(x))] for a, b, c, x in zip(p, q, j, v)],
            }
            path.write_text(json.dumps(doc))
        else:
            with open(path, "wb") as fh:
                np.savez(
                    fh,
                    format_version=FORMAT_VERSION,
                    k_max=self.k_max,
                    m=self.m,
                    quadrature_grid_n=self.quadrature_grid_n,
                    indptr=self.indptr,
                    p_idx=self.p_idx,
                    q_idx=self.q_idx,
                    values=self.values,
                )
        return path

    @classmethod
    def load(cls, path) -> "InteractionTensor":
        path = Path(path)
        try:
            if path.suffix == ".json":
                doc = json.loads(path.read_text())
                version = doc["format_version"]
                entries = doc["entries"]
                if entries:
                    p, q, j = (np.array(col, dtype=np.int64) for col in list(zip(*entries))[:3])
                    v = np.array([float(e[3]) for e in entries])
                else:
                    p = q = j = np.zeros(0, dtype=np.int64)
                    v = np.zeros(0)
                if version != FORMAT_VERSION:
                    raise TensorCacheError(f"tensor format version {version} != {FORMAT_VERSION}")
                return from_triples(doc["m"], p, q, j, v, doc["quadrature_grid_n"], doc["k_max"])
            with np.load(path) as z:
                version = int(z["format_version"])
                if version != FORMAT_VERSION:
                    raise TensorCacheError(f"tensor format version {version} != {FORMAT_VERSION}")
                return cls(
                    int(z["m"]), z["indptr"], z["p_idx"], z["q_idx"], z["values"],
                    int(z["quadrature_grid_n"]), int(z["k_max"]),
                )
        except TensorCacheError:
            raise
        except (OSError, KeyError, ValueError, TypeError, IndexError) as exc:
            raise TensorCacheError(f"cannot read tensor file {path}: {exc}") from exc


class TensorCacheError(NSGalerkinError):
    pass


def from_triples(m, p, q, j, v, quadrature_grid_n=0, k_max=0) -> InteractionTensor:
    p, q, j = (np.asarray(a, dtype=np.int64) for a in (p, q, j))
    v = np.asarray(v, dtype=float)
    order = np.lexsort((q, p, j))
    counts = np.bincount(j, minlength=m)
    indptr = np.concatenate([[0], np.cumsum(counts)])
    return InteractionTensor(m, indptr, p[order], q[order], v[order], quadrature_grid_n, k_max)


def selection_mask(basis: Basis) -> np.ndarray:
    """Boolean (m, m, m) mask: True where k_p +- k_q +- k_j = 0 for some signs."""
    ks = [md.wavevector for md in basis.modes]
    uniq = sorted(set(ks))
    pos = {k: i for i, k in enumerate(uniq)}
    kid = np.array([pos[k] for k in ks])
    nk = len(uniq)
    allowed = np.zeros((nk, nk, nk), dtype=bool)
    for a, ka in enumerate(uniq):
        for b, kb in enumerate(uniq):
            for s in (1, -1):
                comb = tuple(x + s * y for x, y in zip(ka, kb))
                if comb != (0, 0, 0):
                    c = pos.get(canonical(comb))
                    if c is not None:
                        allowed[a, b, c] = True
    return allowed[np.ix_(kid, kid, kid)]


def assemble_tensor(basis: Basis, grid_n: int | None = None) -> InteractionTensor:
    """Exact-quadrature assembly of the triad table."""
    need = 3 * basis.k_max + 1
    grid_n = need if grid_n is None else int(grid_n)
    if grid_n < need:
        raise AliasingError(f"tensor quadrature needs grid_n >= {need} at k_max={basis.k_max}, got {grid_n}")
    m = basis.m
    weight = VOLUME / grid_n**3
    phi = mode_values(basis, grid_n)  # (m, 3[i], N)
    dphi = mode_gradients(basis, grid_n)  # (m, 3[a], 3[i], N)
    phi_flat = phi.reshape(m, -1)
    mask = selection_mask(basis)

    ps, qs, js, vs = [], [], [], []
    for p in range(m):
        # advective derivative of every phi_q along phi_p: (m[q], 3[i], N)
        adv = np.einsum("an,qain->qin", phi[p], dphi, optimize=True)
        row = weight * (adv.reshape(m, -1) @ phi_flat.T)  # (q, j)
        off = np.abs(row[~mask[p]])
        if off.size and off.max() > _SELECTION_SANITY:
            raise NSGalerkinError(f"quadrature produced an off-triad entry of size {off.max():.3e}")
        keep = mask[p] & (np.abs(row) > DROP_TOLERANCE)
        q, j = np.nonzero(keep)
        ps.append(np.full(q.size, p))
        qs.append(q)
        js.append(j)
        vs.append(row[q, j])
    return from_triples(
        m, np.concatenate(ps), np.concatenate(qs), np.concatenate(js), np.concatenate(vs), grid_n, basis.k_max
    )


def apply_nonlinearity(tensor: InteractionTensor, c) -> np.ndarray:
    """N_j = sum_pq T[p, q, j] c_p c_q."""
    c = np.ascontiguousarray(c, dtype=float)
    if c.shape != (tensor.m,):
        raise InvalidArgumentError(f"coefficient vector must have length {tensor.m}, got shape {c.shape}")
    out = np.empty(tensor.m)
    _kernels.triad_contract(tensor.indptr, tensor.p_idx, tensor.q_idx, tensor.values, c, out)
    return out


def cache_path(cache_dir, k_max: int) -> Path:
    return Path(cache_dir) / f"tensor-k{k_max}-v{FORMAT_VERSION}.npz"


def load_or_assemble(basis: Basis, cache_dir=None) -> InteractionTensor:
    """Return a cached tensor for ``basis.k_max`` or assemble and store one.

    Cached files with another format version or a mismatched ``m`` are
    ignored and overwritten.  Non-default ``lambda_max`` bases bypass the cache.
    """
    if cache_dir is None or basis.lambda_max != basis.k_max**2:
        return assemble_tensor(basis)
    path = cache_path(cache_dir, basis.k_max)
    if path.exists():
        try:
            tensor = InteractionTensor.load(path)
            if tensor.m == basis.m and tensor.k_max == basis.k_max:
                return tensor
        except TensorCacheError:
            pass
    tensor = assemble_tensor(basis)
    tmp = path.with_name(path.name + ".tmp")
    tensor.save(tmp)
    tmp.replace(path)
    return tensor


def basis_and_tensor(k_max: int, cache_dir=None) -> tuple[Basis, InteractionTensor]:
    basis = build_basis(k_max)
    return basis, load_or_assemble(basis, cache_dir)
