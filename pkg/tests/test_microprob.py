import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from branchcount.errors import DimensionTooSmall, ZeroState
from branchcount.hilbert import (
    FullSpace,
    ProjectorOp,
    StateVector,
    Subspace,
    random_projector,
    random_unitary,
)
from branchcount.microprob import (
    Label,
    adapt,
    adapt_family,
    born_weight,
    converge,
    count,
    embed_for_counting,
    locality_check,
    uniqueness_check,
    unitary_on_complement,
)

seeds = st.integers(min_value=0, max_value=2**32 - 1)


def _diag_projector(dim, rank):
    return ProjectorOp(np.diag([1.0] * rank + [0.0] * (dim - rank)))


def _weighted_state(dim, rank, w):
    """Unit state with Born weight exactly w for the first-`rank` coordinate projector."""
    v = np.zeros(dim, dtype=complex)
    v[0] = math.sqrt(w)
    v[rank] = math.sqrt(1 - w)
    return StateVector(v)


def test_born_weight_examples():
    psi = StateVector([1, 1]) / math.sqrt(2)
    assert born_weight(ProjectorOp.identity(2), psi) == pytest.approx(1.0)
    assert born_weight(_diag_projector(2, 1), psi) == pytest.approx(0.5)


def test_born_weight_zero_state():
    with pytest.raises(ZeroState):
        born_weight(ProjectorOp.identity(2), StateVector.zero(2))


def test_one_third_of_ten():
    P = _diag_projector(12, 4)
    psi = _weighted_state(12, 4, 1 / 3)
    c = count(P, psi, 10, 0)
    assert (c.m, c.m_complement, c.cats) == (3, 6, 1)
    assert c.interval == pytest.approx((0.3, 0.4))
    assert c.brackets_born()
    assert c.fraction == Fraction(3, 10)


def test_half_of_four_both_paths():
    P = _diag_projector(8, 4)
    psi = _weighted_state(8, 4, 0.5)
    snap = adapt(P, psi, 4, 1)
    plain = adapt(P, psi, 4, 1, exact_shortcut=False)
    assert [snap.count(x) for x in Label] == [2, 2, 0]
    assert [plain.count(x) for x in Label] == [2, 1, 1]
    assert snap.check().ok and plain.check().ok


def test_identity_projector():
    psi = StateVector.random(9, 2)
    ad = adapt(ProjectorOp.identity(9), psi, 7, 3)
    assert all(lb is Label.IN_P for lb in ad.labels)
    c = count(ProjectorOp.identity(9), psi, 7, 3)
    assert c.m == 7 and c.interval == (1.0, 1.0)


def test_half_of_hundred_exact():
    P = _diag_projector(128, 64)
    c = count(P, _weighted_state(128, 64, 0.5), 100, 0)
    assert c.m == 50 and c.error == 0


def test_random_projector_thousand():
    P = random_projector(48, 20, 5)
    psi = StateVector.random(48, 6)
    P2, psi2 = embed_for_counting(P, psi, 1000)
    c = count(P2, psi2, 1000, 7)
    assert c.error < 1 / 1000
    assert c.born == pytest.approx(born_weight(P, psi), abs=1e-14)


def test_orthogonal_projector_counts_zero():
    P = _diag_projector(16, 3)
    psi = StateVector.basis(16, 5)
    for row in converge(P, psi, [2, 4, 8], 0):
        assert row.count.m == 0 and row.ok


def test_adapt_dimension_checks():
    with pytest.raises(DimensionTooSmall):
        adapt(_diag_projector(4, 1), _weighted_state(4, 1, 0.5), 6)
    # rank too small for m + 1 microstates
    with pytest.raises(DimensionTooSmall):
        adapt(_diag_projector(8, 1), _weighted_state(8, 1, 0.4), 8)


@settings(max_examples=30, deadline=None)
@given(dim=st.integers(2, 24), data=st.data(), seed=seeds)
def test_adapted_invariants_and_bound(dim, data, seed):
    rank = data.draw(st.integers(0, dim))
    P = random_projector(dim, rank, seed)
    psi = StateVector.random(dim, seed + 1) * data.draw(st.floats(0.1, 10.0))
    n = data.draw(st.integers(1, 40))
    P2, psi2 = embed_for_counting(P, psi, n)
    ad = adapt(P2, psi2, n, seed)
    rep = ad.check()
    assert rep.ok, rep
    c = count(P2, psi2, n, seed)
    w = born_weight(P, psi)
    assert c.m == ad.count(Label.IN_P)
    assert c.m + c.m_complement + c.cats == n
    assert c.cats <= 1
    # floor bound: m = floor(n w) away from integer points
    if abs(n * w - round(n * w)) > 1e-8:
        assert c.m == math.floor(n * w)
    assert abs(c.m / n - w) < 1 / n + 1e-12


@settings(max_examples=15, deadline=None)
@given(dim=st.integers(3, 12), data=st.data(), seed=seeds)
def test_adapt_family_partition(dim, data, seed):
    rng = np.random.default_rng(seed)
    q = np.linalg.qr(rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim)))[0]
    cut = sorted(data.draw(st.lists(st.integers(1, dim - 1), min_size=1, max_size=3, unique=True)))
    bounds = [0, *cut, dim]
    spaces = [Subspace(q[:, a:b]) for a, b in zip(bounds, bounds[1:])]
    psi = StateVector.random(dim, rng)
    n = data.draw(st.integers(1, 4))
    try:
        fam = adapt_family(spaces, psi, n, seed)
    except DimensionTooSmall:
        return
    lam = fam.expansion
    assert lam.n == n
    g = lam.vectors.conj() @ lam.vectors.T
    assert np.allclose(g, np.eye(n) * psi.norm2 / n, atol=1e-10)
    assert np.allclose(lam.vectors.sum(axis=0), psi.components, atol=1e-10)
    assert sum(fam.counts) + fam.cats == n
    for row, cell in zip(lam.vectors, fam.cells):
        if cell >= 0:
            assert np.allclose(spaces[cell].project(row), row, atol=1e-10)


def test_uniqueness_examples():
    P = _diag_projector(16, 8)
    psi = _weighted_state(16, 8, 0.5)
    assert uniqueness_check(P, psi, 8, 10, 0)
    P = random_projector(70, 30, 1)
    psi = StateVector.random(70, 2)
    assert uniqueness_check(P, psi, 64, 10, 3)
    assert uniqueness_check(P, psi, 1, 10, 3)


def test_different_seeds_give_different_expansions():
    P = random_projector(20, 8, 1)
    psi = StateVector.random(20, 2)
    a = adapt(P, psi, 10, 1).expansion.vectors
    b = adapt(P, psi, 10, 2).expansion.vectors
    assert not np.allclose(a, b)


def test_locality_identity_and_failing_antecedent():
    P = random_projector(12, 5, 0)
    psi = StateVector.random(12, 1)
    rep = locality_check(P, psi, np.eye(12), 6, 2)
    assert rep.applicable and rep.counts_equal and not rep.violation
    # a unitary mixing range(P) with its complement breaks the antecedent
    rep = locality_check(P, psi, random_unitary(12, 3), 6, 2)
    assert not rep.applicable and not rep.violation


@settings(max_examples=20, deadline=None)
@given(dim=st.integers(4, 16), data=st.data(), seed=seeds)
def test_locality_property(dim, data, seed):
    rank = data.draw(st.integers(1, dim - 1))
    P = random_projector(dim, rank, seed)
    psi = StateVector.random(dim, seed + 1)
    n = data.draw(st.integers(1, 8))
    P2, psi2 = embed_for_counting(P, psi, n)
    U = unitary_on_complement(P2, seed + 2)
    rep = locality_check(P2, psi2, U, n, seed)
    assert rep.applicable and rep.counts_equal


def test_converge_error_bound():
    P = random_projector(30, 11, 4)
    psi = StateVector.random(30, 5)
    rows = converge(P, psi, [4, 16, 64, 256], 6, auto_embed=True)
    for row in rows:
        assert row.ok and row.count.error < 1 / row.count.n
    assert [r.count.n for r in rows] == [4, 16, 64, 256]


def test_embed_for_counting_noop_when_feasible():
    P = random_projector(20, 10, 0)
    psi = StateVector.random(20, 1)
    P2, psi2 = embed_for_counting(P, psi, 4)
    assert P2 is P and psi2.dim == 20


def test_full_space_family_single_cell():
    psi = StateVector.random(5, 0)
    fam = adapt_family([FullSpace(5)], psi, 5, 1)
    assert fam.counts == (5,) and fam.cats == 0
