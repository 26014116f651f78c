import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from branchcount.errors import DimensionMismatch, InvalidOperator, NoFreeDirection
from branchcount.hilbert import (
    DEFAULT_TOL,
    DirectionPool,
    FullSpace,
    KronSubspace,
    ProjectorOp,
    StateVector,
    Subspace,
    Tolerance,
    UnitaryOp,
    apply,
    embed,
    embed_projector,
    inner,
    orthonormal_complement_vector,
    random_isometry,
    random_projector,
    random_unitary,
    tensor,
    unitary_fixing,
)

dims = st.integers(min_value=1, max_value=12)
seeds = st.integers(min_value=0, max_value=2**32 - 1)


def test_inner_example():
    e1 = StateVector.basis(2, 0)
    e2 = StateVector.basis(2, 1)
    assert inner(e1 * 2, e1 * 3 + e2 * 4) == pytest.approx(6.0)


def test_inner_conjugates_left():
    u = StateVector([1j, 0])
    v = StateVector([1, 0])
    assert inner(u, v) == pytest.approx(-1j)


def test_inner_dim_mismatch():
    with pytest.raises(DimensionMismatch):
        inner(StateVector.zero(2), StateVector.zero(3))


def test_state_is_read_only():
    v = StateVector.random(3, 0)
    with pytest.raises(ValueError):
        v.components[0] = 1.0


def test_pairs_roundtrip():
    v = StateVector.random(5, 1)
    assert np.array_equal(StateVector.from_pairs(v.to_pairs()).components, v.components)


def test_tensor_index_order():
    a = StateVector([1, 2])
    b = StateVector([3, 5, 7])
    t = tensor(a, b)
    assert t.dim == 6
    assert t.components[1 * 3 + 2] == 14


def test_embed_keeps_norm():
    v = StateVector.random(3, 2)
    w = embed(v, 7)
    assert w.dim == 7 and w.norm == pytest.approx(v.norm)
    with pytest.raises(ValueError):
        embed(v, 2)


def test_tolerance_env(monkeypatch):
    monkeypatch.setenv("BRANCHCOUNT_TOL", "1e-6")
    assert Tolerance.from_env().rel == 1e-6
    assert Tolerance.from_env(1e-8).rel == 1e-8
    monkeypatch.delenv("BRANCHCOUNT_TOL")
    assert Tolerance.from_env() == DEFAULT_TOL


def test_tolerance_rejects_nonpositive():
    with pytest.raises(ValueError):
        Tolerance(rel=0.0)


def test_projector_validation():
    with pytest.raises(InvalidOperator):
        ProjectorOp(np.array([[1.0, 1.0], [0.0, 0.0]]))
    with pytest.raises(InvalidOperator):
        ProjectorOp(2 * np.eye(2))


def test_unitary_validation():
    with pytest.raises(InvalidOperator):
        UnitaryOp(np.array([[1.0, 1.0], [0.0, 1.0]]))


@settings(max_examples=30, deadline=None)
@given(dim=dims, data=st.data(), seed=seeds)
def test_random_projector_properties(dim, data, seed):
    rank = data.draw(st.integers(min_value=0, max_value=dim))
    p = random_projector(dim, rank, seed)
    m = p.matrix
    assert np.allclose(m, m.conj().T, atol=1e-12)
    assert np.allclose(m @ m, m, atol=1e-12)
    assert p.rank == rank
    assert p.range_space.rank + p.complement_space.rank == dim
    # range and complement bases are orthonormal and orthogonal to each other
    b = np.hstack([p.range_space.basis, p.complement_space.basis])
    assert np.allclose(b.conj().T @ b, np.eye(dim), atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(dim=dims, seed=seeds)
def test_random_unitary_is_unitary(dim, seed):
    u = random_unitary(dim, seed).matrix
    assert np.allclose(u.conj().T @ u, np.eye(dim), atol=1e-12)


def test_random_objects_are_seeded():
    assert np.array_equal(random_unitary(4, 9).matrix, random_unitary(4, 9).matrix)
    assert np.array_equal(StateVector.random(4, 9).components, StateVector.random(4, 9).components)


def test_embed_projector_keeps_born_weight():
    p = random_projector(5, 2, 3)
    psi = StateVector.random(5, 4)
    q = embed_projector(p, 3, 2)
    assert q.dim == 10 and q.rank == 5
    before = np.linalg.norm(p.matrix @ psi.components) ** 2
    after = np.linalg.norm(q.matrix @ embed(psi, 10).components) ** 2
    assert after == pytest.approx(before, abs=1e-14)
    assert np.allclose(q.range_space.basis @ q.range_space.basis.conj().T, q.matrix, atol=1e-12)


def test_complement_is_projector():
    p = random_projector(6, 2, 1)
    c = p.complement()
    assert np.allclose(p.matrix + c.matrix, np.eye(6), atol=1e-12)


def test_apply_checks_dims():
    with pytest.raises(DimensionMismatch):
        apply(np.eye(3), StateVector.zero(2))


@settings(max_examples=25, deadline=None)
@given(left=st.integers(1, 4), right=st.integers(1, 4), seed=seeds, batch=st.integers(1, 3))
def test_kron_subspace_matches_dense(left, right, seed, batch):
    rng = np.random.default_rng(seed)
    lb = Subspace(random_isometry(left + 1, left, rng))
    rb = FullSpace(right) if seed % 2 else Subspace(random_isometry(right + 2, right, rng))
    k = KronSubspace(lb, rb)
    dense = k.basis
    v = rng.standard_normal((batch, k.dim)) + 1j * rng.standard_normal((batch, k.dim))
    assert np.allclose(k.to_coords(v), v @ dense.conj(), atol=1e-12)
    c = rng.standard_normal((batch, k.rank)) + 0j
    assert np.allclose(k.from_coords(c), c @ dense.T, atol=1e-12)
    assert k.to_coords(v[0]).shape == (k.rank,)


@settings(max_examples=25, deadline=None)
@given(dim=st.integers(2, 16), data=st.data(), seed=seeds)
def test_direction_pool_orthonormal_and_excluding(dim, data, seed):
    n_ex = data.draw(st.integers(0, dim - 1))
    rng = np.random.default_rng(seed)
    ex = rng.standard_normal((n_ex, dim)) + 0j
    pool = DirectionPool(FullSpace(dim), list(ex), seed=rng)
    free = pool.remaining
    assert free == dim - n_ex
    k1 = data.draw(st.integers(0, free))
    first = pool.take(k1)
    second = pool.take(free - k1)
    rows = np.vstack([first, second])
    assert np.allclose(rows.conj() @ rows.T, np.eye(free), atol=1e-10)
    if n_ex:
        assert np.abs(rows.conj() @ ex.T).max(initial=0.0) < 1e-9
    with pytest.raises(NoFreeDirection):
        pool.take_one()


def test_complement_vector_full_exclusion():
    with pytest.raises(NoFreeDirection):
        orthonormal_complement_vector(np.eye(3), 3, 0)


def test_unitary_fixing_fixes():
    fixed = [StateVector.random(6, 1), StateVector.random(6, 2)]
    u = unitary_fixing(fixed, 6, 5).matrix
    assert np.allclose(u.conj().T @ u, np.eye(6), atol=1e-12)
    for f in fixed:
        assert np.allclose(u @ f.components, f.components, atol=1e-12)
