"""Boolean event spaces over an expansion and the swap argument for equiprobability.

Events are subsets of microstate indices (0-based); the event vector of a
subset is the sum of its microstates and the empty subset is the zero
vector.  Disjoint subsets give orthogonal vectors because the microstates
are orthogonal.

The swap machinery moves one microstate out to a fresh direction, moves a
second into the vacated place and brings the first back into the second's
place.  Each step fixes every other microstate, so locality pins those
probabilities and normalisation forces the moved one.  When the two
microstates have equal norms the three unitaries compose to a map fixing
psi, and the probabilities of the two are forced equal.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping

import numpy as np

from .errors import NoFreeDirection
from .expansion import Expansion
from .hilbert import (
    DEFAULT_TOL,
    SeedLike,
    StateVector,
    Tolerance,
    UnitaryOp,
    make_rng,
    orthonormal_complement_vector,
)

ENUMERATION_LIMIT = 16
EQUAL_NORM_RTOL = 1e-9
SV_CUTOFF = 1e-8


def _subset(s: Iterable[int]) -> frozenset:
    return s if isinstance(s, frozenset) else frozenset(int(k) for k in s)


@dataclass(frozen=True, eq=False)
class EventSpace:
    base: Expansion

    @property
    def n(self) -> int:
        return self.base.n

    @property
    def full(self) -> frozenset:
        return frozenset(range(self.n))

    def _check(self, s: frozenset) -> frozenset:
        bad = [k for k in s if not 0 <= k < self.n]
        if bad:
            raise IndexError(f"microstate indices {sorted(bad)} outside 0..{self.n - 1}")
        return s

    def event(self, s) -> StateVector:
        s = self._check(_subset(s))
        if not s:
            return StateVector.zero(self.base.dim)
        return StateVector(self.base.vectors[sorted(s)].sum(axis=0))

    def complement(self, s) -> frozenset:
        return self.full - self._check(_subset(s))

    def union(self, s, t) -> frozenset:
        return self._check(_subset(s) | _subset(t))

    def meet(self, s, t) -> frozenset:
        return self._check(_subset(s) & _subset(t))

    def disjoint(self, s, t) -> bool:
        return not (_subset(s) & _subset(t))

    def events(self) -> Iterator[frozenset]:
        """All 2^n events, smallest first; lazy, so large n is usable piecemeal."""
        for r in range(self.n + 1):
            for combo in itertools.combinations(range(self.n), r):
                yield frozenset(combo)


def build_event_space(lam: Expansion) -> EventSpace:
    return EventSpace(lam)


@dataclass(frozen=True, eq=False)
class ProbAssignment:
    """Candidate probabilities; subsets missing from ``mu`` extend additively from singletons."""

    space: EventSpace
    mu: Mapping[frozenset, float]

    def __post_init__(self):
        object.__setattr__(self, "mu", {_subset(k): float(v) for k, v in self.mu.items()})
        missing = [k for k in range(self.space.n) if frozenset((k,)) not in self.mu]
        if missing:
            raise ValueError(f"assignment lacks singletons {missing}")

    def __getitem__(self, s) -> float:
        s = _subset(s)
        if s in self.mu:
            return self.mu[s]
        return float(sum(self.mu[frozenset((k,))] for k in s))


def uniform_assignment(space: EventSpace) -> ProbAssignment:
    return ProbAssignment(space, {frozenset((k,)): 1.0 / space.n for k in range(space.n)})


def born_assignment(space: EventSpace, max_events: int = 1 << 12) -> ProbAssignment:
    """mu[S] = |event(S)|^2 / |psi|^2, tabulated on up to ``max_events`` subsets."""
    psi2 = space.base.psi.norm2
    mu = {}
    for s in itertools.islice(space.events(), max_events):
        mu[s] = space.event(s).norm2 / psi2
    for k in range(space.n):
        s = frozenset((k,))
        if s not in mu:
            mu[s] = space.event(s).norm2 / psi2
    return ProbAssignment(space, mu)


@dataclass(frozen=True)
class AssignmentReport:
    bounds: bool
    normalization: bool
    empty: bool
    additivity: bool
    violations: tuple = field(default=())

    @property
    def ok(self) -> bool:
        return self.bounds and self.normalization and self.empty and self.additivity


def check_assignment(pa: ProbAssignment, tol: Tolerance = DEFAULT_TOL) -> AssignmentReport:
    """Check bounds, mu[psi] = 1, mu[empty] = 0 and additivity on disjoint pairs.

    Additivity is checked for every tabulated event S against the split
    (S minus its least index, that index); together these imply it for every
    disjoint pair in the table.  Violations are (kind, witness, defect).
    """
    eps = tol.rel
    violations = []
    for s, v in pa.mu.items():
        if v < -eps or v > 1 + eps:
            violations.append(("bounds", tuple(sorted(s)), v))
    total = pa[pa.space.full]
    if abs(total - 1.0) > eps:
        violations.append(("normalization", tuple(sorted(pa.space.full)), total - 1.0))
    empty = pa[frozenset()]
    if abs(empty) > eps:
        violations.append(("empty", (), empty))
    for s in pa.mu:
        if len(s) < 2:
            continue
        k = min(s)
        rest = s - {k}
        defect = pa.mu[s] - (pa[rest] + pa[frozenset((k,))])
        if abs(defect) > eps:
            violations.append(("additivity", (tuple(sorted(rest)), (k,)), defect))
    kinds = {v[0] for v in violations}
    return AssignmentReport(
        bounds="bounds" not in kinds,
        normalization="normalization" not in kinds,
        empty="empty" not in kinds,
        additivity="additivity" not in kinds,
        violations=tuple(violations),
    )


def transfer_unitary(src, dst, phase: complex = 1.0) -> UnitaryOp:
    """Unitary sending src/|src| to phase * dst/|dst| and dst/|dst| to -conj(phase) src/|src|.

    ``src`` and ``dst`` must be orthogonal; the map is the identity on the
    orthogonal complement of their span.
    """
    s = np.asarray(src.components if isinstance(src, StateVector) else src, dtype=np.complex128)
    d = np.asarray(dst.components if isinstance(dst, StateVector) else dst, dtype=np.complex128)
    s = s / np.linalg.norm(s)
    d = d / np.linalg.norm(d)
    m = (
        np.eye(s.shape[0], dtype=np.complex128)
        - np.outer(s, s.conj())
        - np.outer(d, d.conj())
        + phase * np.outer(d, s.conj())
        - np.conj(phase) * np.outer(s, d.conj())
    )
    return UnitaryOp(m, check=False)


@dataclass(frozen=True, eq=False)
class SwapTriple:
    """Three unitaries exchanging microstates i and j through a fresh direction.

    ``z_a`` and ``z_b`` are the coefficients produced before phase
    absorption; ``U_a`` and ``U_b`` are stored with their phases absorbed.
    """

    i: int
    j: int
    U_a: UnitaryOp
    U_b: UnitaryOp
    U_c: UnitaryOp
    z_a: complex
    z_b: complex
    aux_dir: StateVector

    def composite(self) -> np.ndarray:
        return self.U_c.matrix @ self.U_b.matrix @ self.U_a.matrix

    def stages(self, lam: Expansion) -> list[np.ndarray]:
        """Microstate rows after 0, 1, 2 and 3 of the unitaries."""
        rows = [lam.vectors]
        for u in (self.U_a, self.U_b, self.U_c):
            rows.append(rows[-1] @ u.matrix.T)
        return rows

    def composite_residual(self, psi) -> float:
        v = np.asarray(psi.components if isinstance(psi, StateVector) else psi)
        return float(np.linalg.norm(self.composite() @ v - v) / np.linalg.norm(v))


def build_swap_triple(lam: Expansion, i: int, j: int, seed: SeedLike = None, tol: Tolerance = DEFAULT_TOL) -> SwapTriple:
    n = lam.n
    if i == j:
        raise ValueError(f"swap needs two distinct microstates, got i = j = {i}")
    for k in (i, j):
        if not 0 <= k < n:
            raise IndexError(f"microstate index {k} outside 0..{n - 1}")
    if lam.dim <= n:
        raise NoFreeDirection(f"dim {lam.dim} leaves no direction outside {n} microstates")
    rng = make_rng(seed)
    xi_i, xi_j = lam.vectors[i], lam.vectors[j]
    norm_i, norm_j = np.linalg.norm(xi_i), np.linalg.norm(xi_j)
    phi_c = norm_i * orthonormal_complement_vector(lam.vectors, lam.dim, rng, tol).components

    # U_a: xi_i -> phi_c exactly; U_b, U_c carry arbitrary phases as in the general case
    beta, gamma = rng.uniform(0.0, 2 * np.pi, size=2)
    u_b_raw = transfer_unitary(xi_j, xi_i, np.exp(1j * beta))
    u_c = transfer_unitary(phi_c, xi_j, np.exp(1j * gamma))
    z_b = np.vdot(xi_i, u_b_raw.matrix @ xi_j) / norm_i**2
    z_a = np.vdot(xi_j, u_c.matrix @ phi_c) / norm_j**2

    # absorb: U_b sends xi_j along xi_i with no phase, U_a pre-compensates U_c's phase
    u_a = transfer_unitary(xi_i, phi_c, np.conj(z_a) / abs(z_a))
    u_b = transfer_unitary(xi_j, xi_i, np.exp(1j * beta) * np.conj(z_b) / abs(z_b))
    return SwapTriple(i, j, u_a, u_b, u_c, complex(z_a), complex(z_b), StateVector(phi_c))


def _matches(rows_a: np.ndarray, rows_b: np.ndarray, tol: Tolerance) -> np.ndarray:
    """For each row of ``rows_a`` the index of an equal row of ``rows_b``, or -1."""
    out = np.full(len(rows_a), -1)
    for t, v in enumerate(rows_a):
        dist = np.linalg.norm(rows_b - v, axis=1)
        u = int(np.argmin(dist))
        if dist[u] <= tol.rel * max(np.linalg.norm(v), np.linalg.norm(rows_b[u])):
            out[t] = u
    return out


def _fixed_slots(before: np.ndarray, after: np.ndarray, tol: Tolerance) -> np.ndarray:
    dist = np.linalg.norm(after - before, axis=1)
    return dist <= tol.rel * np.linalg.norm(before, axis=1)


def propagate(lam: Expansion, triple: SwapTriple, mu0, tol: Tolerance = DEFAULT_TOL) -> np.ndarray:
    """Push singleton probabilities through the three steps using locality and normalisation.

    Returns the final probabilities indexed by the original microstate each
    final event vector coincides with.  Requires every final vector to
    coincide with one of the original microstates.
    """
    mu = np.asarray(mu0, dtype=float).copy()
    stages = triple.stages(lam)
    for before, after in zip(stages, stages[1:]):
        fixed = _fixed_slots(before, after, tol)
        moved = np.flatnonzero(~fixed)
        if len(moved) != 1:
            raise ValueError(f"expected one moved microstate per step, found {len(moved)}")
        mu[moved[0]] = 1.0 - mu[fixed].sum()
    where = _matches(stages[-1], stages[0], tol)
    if (where < 0).any():
        raise ValueError("final event vectors do not coincide with the original microstates")
    final = np.empty_like(mu)
    final[where] = mu
    return final


@dataclass(frozen=True)
class ForcedEqualities:
    classes: tuple
    solution_dim: int
    mu: np.ndarray
    pairs: tuple
    residuals: tuple

    @property
    def unique(self) -> bool:
        return self.solution_dim == 0


def _norm_groups(norms: np.ndarray, rtol: float) -> list[list[int]]:
    order = np.argsort(norms)
    groups: list[list[int]] = []
    for k in order:
        if groups and abs(norms[k] - norms[groups[-1][0]]) <= rtol * max(norms[k], norms[groups[-1][0]]):
            groups[-1].append(int(k))
        else:
            groups.append([int(k)])
    return groups


def forced_equalities(
    lam: Expansion,
    seed: SeedLike = None,
    tol: Tolerance = DEFAULT_TOL,
    equal_rtol: float = EQUAL_NORM_RTOL,
    sv_cutoff: float = SV_CUTOFF,
) -> ForcedEqualities:
    """Partition microstates into classes whose probabilities the postulates force equal.

    Unknowns are the singleton probabilities of the original expansion plus,
    for every swap, those of the three intermediate expansions.  Rows encode
    normalisation of each expansion, locality (a microstate fixed by a step
    keeps its probability) and, when the composite returns psi with the same
    microstates, that equal states carry equal probabilities.
    """
    n = lam.n
    if n == 1:
        return ForcedEqualities(((0,),), 0, np.ones(1), (), ())
    rng = make_rng(seed)
    norms = np.linalg.norm(lam.vectors, axis=1)
    groups = _norm_groups(norms, equal_rtol)
    pairs = [(g[k], g[k + 1]) for g in groups for k in range(len(g) - 1)]

    n_vars = n * (1 + 3 * len(pairs))
    rows, rhs = [], []

    def equate(p, q):
        r = np.zeros(n_vars)
        r[p], r[q] = 1.0, -1.0
        rows.append(r)
        rhs.append(0.0)

    def normalise(offset):
        r = np.zeros(n_vars)
        r[offset : offset + n] = 1.0
        rows.append(r)
        rhs.append(1.0)

    normalise(0)
    residuals = []
    for p, (i, j) in enumerate(pairs):
        triple = build_swap_triple(lam, i, j, rng, tol)
        stages = triple.stages(lam)
        offsets = [0] + [n * (1 + 3 * p + s) for s in range(3)]
        for s in range(1, 4):
            normalise(offsets[s])
            fixed = _fixed_slots(stages[s - 1], stages[s], tol)
            for t in np.flatnonzero(fixed):
                equate(offsets[s] + t, offsets[s - 1] + t)
        res = triple.composite_residual(lam.psi)
        residuals.append(res)
        if res <= tol.rel:
            where = _matches(stages[3], stages[0], tol)
            if (where >= 0).all():
                for t, u in enumerate(where):
                    equate(offsets[3] + t, u)

    a = np.array(rows)
    b = np.array(rhs)
    _, s, vh = np.linalg.svd(a)
    rank = int((s > sv_cutoff).sum())
    null = vh[rank:].conj().T  # n_vars x (n_vars - rank)
    x, *_ = np.linalg.lstsq(a, b, rcond=None)

    parent = list(range(n))

    def find(k):
        while parent[k] != k:
            parent[k] = parent[parent[k]]
            k = parent[k]
        return k

    for p in range(n):
        for q in range(p + 1, n):
            same_free = np.linalg.norm(null[p] - null[q]) <= sv_cutoff if null.size else True
            if same_free and abs(x[p] - x[q]) <= sv_cutoff:
                parent[find(q)] = find(p)
    classes: dict[int, list[int]] = {}
    for k in range(n):
        classes.setdefault(find(k), []).append(k)
    ordered = tuple(sorted(tuple(c) for c in classes.values()))
    return ForcedEqualities(ordered, n_vars - rank, x[:n].copy(), tuple(pairs), tuple(residuals))
