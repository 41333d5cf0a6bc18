import itertools
import json

import numpy as np
import pytest

from nsgalerkin.basis import VOLUME, build_basis, polarizations
from nsgalerkin.errors import InvalidArgumentError
from nsgalerkin.tensor import (FORMAT_VERSION, InteractionTensor, TensorCacheError, apply_nonlinearity,
                               assemble_tensor, cache_path, load_or_assemble, selection_mask)

AMP = np.sqrt(2.0 / VOLUME)


def _trig_terms(parity, derivative=False):
    """cos/sin (or their derivatives) as {sign s: coefficient of e^{i s theta}}."""
    if parity == "cos":
        terms = {1: 0.5, -1: 0.5}
    else:
        terms = {1: -0.5j, -1: 0.5j}
    if derivative:
        terms = {s: 1j * s * a for s, a in terms.items()}
    return terms


def triad_oracle(mp, mq, mj):
    """int (phi_p . grad) phi_q . phi_j over the torus via exponential sums.

    phi = A e trig(k.x), so the integrand is
    A^3 (e_p . k_q)(e_q . e_j) trig_p(k_p.x) trig_q'(k_q.x) trig_j(k_j.x)
    and each exponential product integrates to (2 pi)^3 exactly when the
    signed wavevector sum vanishes.
    """
    ep = polarizations(mp.wavevector)[mp.polarization - 1]
    eq = polarizations(mq.wavevector)[mq.polarization - 1]
    ej = polarizations(mj.wavevector)[mj.polarization - 1]
    pref = AMP**3 * np.dot(ep, mq.wavevector) * np.dot(eq, ej)
    total = 0.0
    kp, kq, kj = (np.array(md.wavevector) for md in (mp, mq, mj))
    for (sp, ap), (sq, aq), (sj, aj) in itertools.product(
        _trig_terms(mp.parity).items(), _trig_terms(mq.parity, True).items(), _trig_terms(mj.parity).items()
    ):
        if not np.any(sp * kp + sq * kq + sj * kj):
            total += ap * aq * aj * VOLUME
    assert abs(total.imag if isinstance(total, complex) else 0.0) < 1e-12
    return pref * complex(total).real


@pytest.mark.parametrize("k_max", [1, 2, 3])
def test_skew_symmetry_and_selection(system, k_max):
    basis, tensor = system(k_max)
    d = tensor.as_dict()
    worst = max((abs(v + d.get((p, j, q), 0.0)) for (p, q, j), v in d.items()), default=0.0)
    assert worst <= 1e-13
    mask = selection_mask(basis)
    p, q, j, _ = tensor.triples()
    assert np.all(mask[p, q, j])


def test_entries_match_closed_form_oracle(system):
    basis, tensor = system(2)
    d = tensor.as_dict()
    rng = np.random.default_rng(5)
    keys = list(d)
    picks = [keys[i] for i in rng.choice(len(keys), 200, replace=False)]
    for p, q, j in picks:
        ref = triad_oracle(basis.modes[p], basis.modes[q], basis.modes[j])
        assert abs(d[p, q, j] - ref) <= 1e-13
    # oracle also confirms dropped triples are zero
    mask = selection_mask(basis)
    cand = np.argwhere(mask)
    for p, q, j in cand[rng.choice(len(cand), 300, replace=False)]:
        ref = triad_oracle(basis.modes[p], basis.modes[q], basis.modes[j])
        assert abs(d.get((int(p), int(q), int(j)), 0.0) - ref) <= 1e-13


def test_full_oracle_k1(system):
    # unit axis wavevectors close no triad: the tensor is empty
    basis, tensor = system(1)
    dense = tensor.dense()
    for p, q, j in itertools.product(range(basis.m), repeat=3):
        assert abs(dense[p, q, j] - triad_oracle(*(basis.modes[i] for i in (p, q, j)))) <= 1e-13


def test_selection_rule_example(system):
    basis, tensor = system(2)
    p_set = [i for i, md in enumerate(basis.modes) if md.wavevector == (1, 0, 0)]
    q_set = [i for i, md in enumerate(basis.modes) if md.wavevector == (0, 1, 0)]
    d = tensor.as_dict()
    hits = {basis.modes[j].wavevector for (p, q, j) in d if p in p_set and q in q_set}
    assert hits == {(1, 1, 0), (1, -1, 0)}


def test_grid_independence():
    basis = build_basis(2)
    a = assemble_tensor(basis)
    b = assemble_tensor(basis, grid_n=9)
    da, db = a.as_dict(), b.as_dict()
    assert set(da) == set(db)
    assert max(abs(da[k] - db[k]) for k in da) <= 1e-13


def test_assemble_rejects_aliasing_grid():
    with pytest.raises(InvalidArgumentError):
        assemble_tensor(build_basis(2), grid_n=6)


@pytest.mark.parametrize("k_max", [1, 2, 3])
def test_energy_neutrality_random(system, k_max):
    _, tensor = system(k_max)
    rng = np.random.default_rng(k_max)
    for _ in range(100):
        c = rng.standard_normal(tensor.m) * rng.uniform(0.01, 100)
        n = apply_nonlinearity(tensor, c)
        assert abs(np.dot(n, c)) <= 1e-12 * np.linalg.norm(c) ** 3


def test_nonlinearity_trivial_cases(system):
    basis, tensor = system(2)
    assert not np.any(apply_nonlinearity(tensor, np.zeros(basis.m)))
    rng = np.random.default_rng(0)
    for k in [(1, 0, 0), (1, 1, 0), (1, -1, 1)]:
        c = np.zeros(basis.m)
        idx = [i for i, md in enumerate(basis.modes) if md.wavevector == k]
        c[idx] = rng.standard_normal(len(idx))
        assert not np.any(apply_nonlinearity(tensor, c))
    with pytest.raises(InvalidArgumentError):
        apply_nonlinearity(tensor, np.zeros(basis.m + 1))


def test_sparsity(system):
    _, tensor = system(3)
    assert tensor.nnz < 0.01 * tensor.m**3


@pytest.mark.parametrize("suffix", [".npz", ".json"])
def test_save_load_roundtrip(system, tmp_path, suffix):
    _, tensor = system(2)
    path = tensor.save(tmp_path / f"t{suffix}")
    back = InteractionTensor.load(path)
    assert back.m == tensor.m and back.k_max == 2
    assert back.as_dict() == tensor.as_dict()


def test_load_rejects_version_and_corruption(system, tmp_path):
    _, tensor = system(1)
    path = tensor.save(tmp_path / "t.json")
    doc = json.loads(path.read_text())
    doc["format_version"] = FORMAT_VERSION + 1
    path.write_text(json.dumps(doc))
    with pytest.raises(TensorCacheError):
        InteractionTensor.load(path)
    bad = tmp_path / "bad.npz"
    bad.write_bytes(b"not a zip")
    with pytest.raises(TensorCacheError):
        InteractionTensor.load(bad)


def test_cache_ignores_stale_version(tmp_path):
    basis = build_basis(1)
    path = cache_path(tmp_path, 1)
    path.write_bytes(b"garbage")
    tensor = load_or_assemble(basis, tmp_path)
    assert InteractionTensor.load(path).as_dict() == tensor.as_dict()
    assert load_or_assemble(basis, tmp_path).as_dict() == tensor.as_dict()
