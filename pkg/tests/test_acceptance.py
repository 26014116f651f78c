"""Acceptance criteria, one test each, at the stated tolerances.

Every test records a PASS/FAIL line which is printed again in the pytest
terminal summary under "acceptance criteria".
"""

import math
from fractions import Fraction

import numpy as np

from branchcount.eprb import (
    EprbScenario,
    Setting,
    chsh,
    joint_born,
    joint_table,
    outcome_independence,
    parameter_independence,
    product_counting,
    random_product,
    random_two_qubit,
    required_pad,
    singlet,
)
from branchcount.event_space import build_swap_triple, forced_equalities
from branchcount.expansion import construct, extend, split_two, validate
from branchcount.hilbert import StateVector, random_projector, random_unitary, unitary_fixing
from branchcount.microprob import born_weight, count, embed_for_counting, locality_check, uniqueness_check

ROOT_SEED = 20240611


def _rng(k):
    return np.random.default_rng([ROOT_SEED, k])


def test_criterion_1_equiamplitude_construction(criterion):
    rng = _rng(1)
    worst_violation = 0.0
    worst_theta = 0.0
    checked = 0
    for dim in (4, 8, 32, 128):
        psi = StateVector.random(dim, rng) * rng.uniform(0.1, 10)
        rep = validate(construct(psi, 1))
        worst_violation = max(worst_violation, rep.max_violation)
        checked += 1
        # every n from 2 to dim, by growing one expansion step by step
        lam = split_two(psi, rng)
        while True:
            rep = validate(lam)
            assert rep.ok, (dim, lam.n, rep)
            worst_violation = max(worst_violation, rep.max_violation)
            checked += 1
            if lam.n == dim:
                break
            lam = extend(lam, rng)
        for m, theta in enumerate(lam.theta_log, start=1):
            worst_theta = max(worst_theta, abs(theta - math.atan(1 / math.sqrt(m))))
    ok = worst_violation <= 1e-10 and worst_theta <= 1e-9
    criterion(1, ok, f"{checked} expansions, max violation {worst_violation:.2e} (<= 1e-10), "
                     f"max theta error {worst_theta:.2e} (<= 1e-9)")
    assert ok


def test_criterion_2_equiprobability(criterion):
    rng = _rng(2)
    worst_res = 0.0
    failures = []
    for trial in range(25):
        n = int(rng.integers(2, 7))
        lam = construct(StateVector.random(n + 3, rng), n, rng)
        i, j = rng.choice(n, size=2, replace=False)
        tr = build_swap_triple(lam, int(i), int(j), rng)
        worst_res = max(worst_res, tr.composite_residual(lam.psi))
        fe = forced_equalities(lam, rng)
        worst_res = max(worst_res, max(fe.residuals, default=0.0))
        if not (fe.classes == (tuple(range(n)),) and fe.solution_dim == 0 and np.allclose(fe.mu, 1 / n, atol=1e-10)):
            failures.append((trial, n, fe.classes, fe.solution_dim))
    ok = worst_res <= 1e-10 and not failures
    criterion(2, ok, f"25 expansions, max composite residual {worst_res:.2e} (<= 1e-10), "
                     f"{25 - len(failures)}/25 single class with mu = 1/n and solution dim 0")
    assert ok, failures


def _irrational_instance(rng, grid):
    while True:
        dim = int(rng.integers(6, 40))
        rank = int(rng.integers(1, dim))
        P = random_projector(dim, rank, rng)
        psi = StateVector.random(dim, rng)
        w = born_weight(P, psi)
        if min(abs(n * w - round(n * w)) for n in grid) > 1e-6:
            return P, psi, w


def test_criterion_3_born_convergence(criterion):
    rng = _rng(3)
    grid = (4, 16, 64, 256, 1024)
    unique_grid = (4, 16, 64, 256)
    worst_ratio = 0.0
    not_unique = []
    for inst in range(10):
        P, psi, w = _irrational_instance(rng, grid)
        for n in grid:
            p_n, psi_n = embed_for_counting(P, psi, n)
            c = count(p_n, psi_n, n, rng)
            worst_ratio = max(worst_ratio, abs(c.m / n - w) * n)
            # n = 1024 costs ~0.5 s per count here, so its 10-seed check runs on the first instance only
            if (n in unique_grid or inst == 0) and not uniqueness_check(p_n, psi_n, n, 10, rng):
                not_unique.append((inst, n))
    ok = worst_ratio < 1 and not not_unique
    criterion(3, ok, f"10 instances x n in {grid}: max n|m/n - w| = {worst_ratio:.4f} (< 1); "
                     f"uniqueness over 10 seeds failed at {not_unique or 'none'} "
                     f"(all instances for n <= 256, first instance for n = 1024)")
    assert ok


def _local_unitary(P, psi, rng, kind):
    """A unitary meeting U P psi = P psi and P U psi = P psi."""
    dim = P.dim
    R = P.range_space.basis
    C = P.complement_space.basis
    if kind == 0:
        # Haar on range(I - P), identity on range(P)
        vc = random_unitary(C.shape[1], rng).matrix if C.shape[1] else np.zeros((0, 0))
        return R @ R.conj().T + C @ vc @ C.conj().T
    # also rotate range(P) about P psi
    coords = R.conj().T @ psi.components
    vr = unitary_fixing([coords], R.shape[1], rng).matrix if R.shape[1] else np.zeros((0, 0))
    vc = random_unitary(C.shape[1], rng).matrix if C.shape[1] else np.zeros((0, 0))
    u = R @ vr @ R.conj().T + C @ vc @ C.conj().T
    assert u.shape == (dim, dim)
    return u


def test_criterion_4_locality(criterion):
    rng = _rng(4)
    applicable = failures = 0
    for k in range(100):
        dim = int(rng.integers(3, 24))
        rank = int(rng.integers(1, dim))
        P = random_projector(dim, rank, rng)
        psi = StateVector.random(dim, rng)
        n = int(rng.integers(1, 40))
        p_n, psi_n = embed_for_counting(P, psi, n)
        U = _local_unitary(p_n, psi_n, rng, k % 2)
        rep = locality_check(p_n, psi_n, U, n, rng)
        applicable += rep.applicable
        failures += rep.violation or not rep.applicable
    ok = applicable == 100 and failures == 0
    criterion(4, ok, f"{applicable}/100 instances met the antecedent, {failures} count changes")
    assert ok


def test_criterion_5_parameter_independence(criterion):
    rng = _rng(5)
    worst = 0.0
    bad = []
    runs = 0
    states = [None] + [int(s) for s in rng.integers(2**32, size=20)]
    for n in (64, 512):
        pad = required_pad(n, joint=False)
        for state_seed in states:
            state = singlet(pad) if state_seed is None else random_two_qubit(state_seed, pad)
            a, a2, b, b2 = rng.uniform(0, 2 * math.pi, size=4)
            sc = EprbScenario(state, pad, (a, a2), (b, b2), n)
            rep = parameter_independence(sc, rng)
            worst = max(worst, rep.born_max_deviation)
            runs += 1
            if not rep.counts_ok:
                bad.append((n, state_seed))
    ok = worst <= 1e-10 and not bad
    criterion(5, ok, f"{runs} scenarios (singlet + 20 random, n in (64, 512)): max Born marginal spread "
                     f"{worst:.2e} (<= 1e-10), count mismatches {len(bad)}")
    assert ok, bad


def test_criterion_6_product_factorization(criterion):
    rng = _rng(6)
    worst = 0.0
    bad = []
    for k in range(20):
        phi, chi = random_product(rng)
        sc = EprbScenario.product(phi, chi, (0, 0), (0, 0), 4, pad=0)
        for a, b in rng.uniform(0, 2 * math.pi, size=(5, 2)):
            worst = max(worst, outcome_independence(sc, a, b).max_deviation)
        n_a, n_b = (int(x) for x in rng.integers(2, 13, size=2))
        a, b = rng.uniform(0, 2 * math.pi, size=2)
        rep = product_counting(phi, chi, a, b, n_a, n_b, rng, pad=2 * max(n_a, n_b))
        exact = Fraction(rep.joint_count, n_a * n_b) == Fraction(rep.m_a, n_a) * Fraction(rep.m_b, n_b)
        if not (rep.ok and exact and sum(rep.families.values()) == n_a * n_b):
            bad.append(k)
    ok = worst <= 1e-10 and not bad
    criterion(6, ok, f"20 product states: max outcome-independence deviation {worst:.2e} (<= 1e-10), "
                     f"exact product counting in {20 - len(bad)}/20")
    assert ok, bad


def test_criterion_7_singlet_nonfactorizable(criterion):
    rng = _rng(7)
    worst_dev = 0.0
    worst_born = 0.0
    counts = []
    for x in [0.0, *rng.uniform(0, 2 * math.pi, size=4)]:
        born = joint_born(singlet(), x, x, 0)
        worst_born = max(worst_born, abs(born[(1, 1)]))
        sc = EprbScenario.singlet((x, x), (x, x), 4, pad=0)
        worst_dev = max(worst_dev, abs(outcome_independence(sc, x, x).deviations[(1, 1)] - 0.25))
        for n in (4, 16, 64, 256):
            sc = EprbScenario.singlet((x, x), (x, x), n)
            counts.append(joint_table(sc, x, x, rng, marginals=False).entries[(1, 1)].m)
    ok = worst_born <= 1e-10 and worst_dev <= 1e-10 and not any(counts)
    criterion(7, ok, f"5 equal settings: max p(+,+) {worst_born:.2e}, deviation from 0.25 {worst_dev:.2e} "
                     f"(<= 1e-10), m(+,+) = {sorted(set(counts))} over n in (4, 16, 64, 256)")
    assert ok


def test_criterion_8_chsh(criterion):
    rng = _rng(8)
    settings = ((Setting.degrees(0), Setting.degrees(90)), (Setting.degrees(45), Setting.degrees(135)))
    details = []
    ok = True
    for n, pad in ((100, None), (1000, 64)):
        rep = chsh(EprbScenario.singlet(*settings, n, pad), rng)
        ok &= abs(rep.s_born - 2 * math.sqrt(2)) <= 1e-6 and rep.within_bound
        details.append(f"n={n}: S_born {rep.s_born:.10f}, S_count {rep.s_count:.4f} (bound {16 / n:.3f})")
    worst_product = 0.0
    for _ in range(20):
        phi, chi = random_product(rng)
        a, a2, b, b2 = rng.uniform(0, 2 * math.pi, size=4)
        rep = chsh(EprbScenario.product(phi, chi, (a, a2), (b, b2), 8), rng)
        worst_product = max(worst_product, rep.s_born)
    ok &= worst_product <= 2 + 1e-9
    details.append(f"20 product states max S {worst_product:.6f} (<= 2)")
    criterion(8, ok, "; ".join(details))
    assert ok
