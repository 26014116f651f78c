"""Probability as the fraction of microstates lying in a projector.

An expansion is *adapted* to an orthogonal family of subspaces when every
microstate lies in one of them, except for a few residual "cat" microstates
that straddle several.  With n microstates of norm^2 |psi|^2/n, cell c gets
m_c = floor(n w_c) microstates, where w_c is its Born weight, and the
R = n - sum(m_c) leftover microstates are cats.  Hence
m_c/n <= w_c < (m_c + R)/n, and for a yes/no question |m/n - w| < 1/n.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Sequence

import numpy as np

from .errors import DimensionMismatch, DimensionTooSmall, ZeroState
from .expansion import Expansion, ExpansionReport, peel_sequence, validate
from .hilbert import (
    DEFAULT_TOL,
    DirectionPool,
    ProjectorOp,
    SeedLike,
    StateVector,
    Subspace,
    Tolerance,
    UnitaryOp,
    as_state,
    embed,
    embed_projector,
    make_rng,
    random_unitary,
)

INTEGER_TOL = 1e-9
CAT = -1


class Label(str, Enum):
    IN_P = "in_p"
    IN_NOT_P = "in_not_p"
    CAT = "cat"


def born_weight(P: ProjectorOp, psi, tol: Tolerance = DEFAULT_TOL) -> float:
    """|P psi|^2 / |psi|^2, clamped into [0, 1] when within tol.abs outside it."""
    psi = as_state(psi)
    if P.dim != psi.dim:
        raise DimensionMismatch(P.dim, psi.dim, "projector and state")
    if psi.is_zero(tol):
        raise ZeroState("Born weight of the zero state is undefined")
    p_psi = P.matrix @ psi.components
    w = float(np.vdot(p_psi, p_psi).real / psi.norm2)
    if -tol.abs <= w < 0:
        w = 0.0
    elif 1 < w <= 1 + tol.abs:
        w = 1.0
    return w


def _integer_tol(tol: Tolerance) -> float:
    # an "exact" cell absorbs |n w - m| into one microstate's norm, so it must stay below tol.rel
    return min(INTEGER_TOL, tol.rel)


def _apportion(weights: Sequence[float], n: int, int_tol: float | None):
    """Floor apportionment with an optional snap to integers.

    Returns (counts, exact flags, number of cats).
    """
    counts, exact = [], []
    for w in weights:
        x = n * w
        k = round(x)
        if int_tol is not None and abs(x - k) <= int_tol:
            counts.append(int(k))
            exact.append(True)
        else:
            counts.append(int(math.floor(x)))
            exact.append(False)
    return counts, exact, n - sum(counts)


def _rank_needed(m: int, exact: bool) -> int:
    # m peeled microstates plus the residual they leave behind
    return m if exact else m + 1


@dataclass(frozen=True, eq=False)
class FamilyAdaptation:
    """An expansion adapted to an orthogonal family of subspaces.

    ``cells[k]`` is the index of the subspace microstate k lies in, or
    ``CAT`` (-1) for a residual microstate.
    """

    expansion: Expansion
    cells: tuple
    counts: tuple
    cats: int
    weights: tuple

    @property
    def n(self) -> int:
        return self.expansion.n


def adapt_family(
    spaces: Sequence[Subspace],
    psi,
    n: int,
    seed: SeedLike = None,
    tol: Tolerance = DEFAULT_TOL,
    exact_shortcut: bool = True,
) -> FamilyAdaptation:
    """Build an n-part equiamplitude expansion of psi adapted to ``spaces``.

    ``spaces`` must be mutually orthogonal and span the whole space.  Each
    cell's part of psi is peeled into m_c microstates inside that cell; the
    leftovers are pooled and split into the R cat microstates.  With
    ``exact_shortcut`` a cell whose n w_c is an integer (to within
    min(1e-9, tol.rel)) is used up exactly and leaves no leftover.
    """
    psi = as_state(psi)
    if n < 1:
        raise ValueError(f"n must be positive, got {n}")
    if psi.is_zero(tol):
        raise ZeroState("cannot adapt an expansion of the zero state")
    if n > psi.dim:
        raise DimensionTooSmall(f"n = {n} microstates need dim >= {n}, have {psi.dim}")
    for sp in spaces:
        if sp.dim != psi.dim:
            raise DimensionMismatch(sp.dim, psi.dim, "subspace and state")

    rng = make_rng(seed)
    psi2 = psi.norm2
    a = math.sqrt(psi2 / n)
    coords = [sp.to_coords(psi.components) for sp in spaces]
    weights = [min(max(float(np.vdot(c, c).real) / psi2, 0.0), 1.0) for c in coords]
    counts, exact, cats = _apportion(weights, n, _integer_tol(tol) if exact_shortcut else None)
    if cats == 0 and not exact_shortcut:
        # without the snap the last occupied cell always hands one microstate to a cat
        last = max(k for k, m in enumerate(counts) if m)
        counts[last] -= 1
        cats = 1

    short = [
        (k, sp.rank, _rank_needed(m, ex))
        for k, (sp, m, ex) in enumerate(zip(spaces, counts, exact))
        if (m or not ex) and sp.rank < _rank_needed(m, ex)
    ]
    if short:
        k, have, need = short[0]
        raise DimensionTooSmall(f"cell {k} has rank {have} but needs {need} for n = {n}; embed first")

    pools = []
    rows: list[np.ndarray] = []
    cells: list[int] = []
    cat_pool = np.zeros(psi.dim, dtype=np.complex128)
    dust = np.zeros(psi.dim, dtype=np.complex128)
    for k, (sp, c, m, ex) in enumerate(zip(spaces, coords, counts, exact)):
        chi = sp.from_coords(c)
        if ex and m == 0:
            dust += chi
            pools.append(None)
            continue
        if not ex and np.vdot(c, c).real == 0:
            pools.append(None)
            continue
        pool = DirectionPool(sp, [chi], seed=rng, tol=tol)
        pools.append(pool)
        n_peel = m - 1 if ex else m
        parts, rest = peel_sequence(chi, a, n_peel, pool.take(n_peel), tol)
        rows.extend(parts)
        cells.extend([k] * n_peel)
        if ex:
            rows.append(rest)
            cells.append(k)
        else:
            cat_pool += rest

    if cats == 0:
        dust += cat_pool
    else:
        cat_pool += dust
        dust = np.zeros_like(dust)
        need = cats - 1
        dirs = []
        for pool in sorted((p for p in pools if p is not None), key=lambda p: -p.remaining):
            take = min(need - len(dirs), pool.remaining)
            if take > 0:
                dirs.extend(pool.take(take))
        if len(dirs) < need:
            raise DimensionTooSmall(f"no room left for {cats} cat microstates")
        parts, rest = peel_sequence(cat_pool, a, need, np.array(dirs).reshape(need, psi.dim), tol)
        rows.extend(parts)
        rows.append(rest)
        cells.extend([CAT] * cats)

    vectors = np.array(rows)
    if np.any(dust):
        # numerical dust from cells snapped to zero; lives in an exact cell's last microstate
        biggest = max((k for k in range(len(spaces)) if exact[k] and counts[k]), key=lambda k: counts[k])
        last = max(i for i, cell in enumerate(cells) if cell == biggest)
        vectors[last] += dust
    return FamilyAdaptation(Expansion(psi, vectors), tuple(cells), tuple(counts), cats, tuple(weights))


@dataclass(frozen=True, eq=False)
class AdaptedExpansion:
    """Expansion with each microstate labelled IN_P, IN_NOT_P or CAT."""

    expansion: Expansion
    labels: tuple
    projector: ProjectorOp
    born: float

    @property
    def n(self) -> int:
        return self.expansion.n

    def count(self, label: Label) -> int:
        return sum(1 for lb in self.labels if lb is label)

    def check(self, tol: Tolerance = DEFAULT_TOL) -> "AdaptationReport":
        """Verify the labels geometrically and the underlying expansion invariants."""
        v = self.expansion.vectors
        pv = v @ self.projector.matrix.T
        norms = np.linalg.norm(v, axis=1)
        worst_in = worst_out = 0.0
        for k, lb in enumerate(self.labels):
            if lb is Label.IN_P:
                worst_in = max(worst_in, np.linalg.norm(pv[k] - v[k]) / norms[k])
            elif lb is Label.IN_NOT_P:
                worst_out = max(worst_out, np.linalg.norm(pv[k]) / norms[k])
        in_rows = [k for k, lb in enumerate(self.labels) if lb is Label.IN_P]
        cat_rows = [k for k, lb in enumerate(self.labels) if lb is Label.CAT]
        target = self.projector.matrix @ self.expansion.psi.components
        got = v[in_rows].sum(axis=0) + pv[cat_rows].sum(axis=0)
        mismatch = float(np.linalg.norm(got - target) / self.expansion.psi.norm)
        return AdaptationReport(
            labels_ok=worst_in <= tol.rel and worst_out <= tol.rel,
            projection_ok=mismatch <= tol.rel,
            worst_in=float(worst_in),
            worst_out=float(worst_out),
            projection_residual=mismatch,
            expansion=validate(self.expansion, tol),
        )


@dataclass(frozen=True)
class AdaptationReport:
    labels_ok: bool
    projection_ok: bool
    worst_in: float
    worst_out: float
    projection_residual: float
    expansion: ExpansionReport

    @property
    def ok(self) -> bool:
        return self.labels_ok and self.projection_ok and self.expansion.ok


def adapt(
    P: ProjectorOp,
    psi,
    n: int,
    seed: SeedLike = None,
    tol: Tolerance = DEFAULT_TOL,
    exact_shortcut: bool = True,
) -> AdaptedExpansion:
    """Expansion diagonalising P up to at most one cat microstate."""
    psi = as_state(psi)
    if P.dim != psi.dim:
        raise DimensionMismatch(P.dim, psi.dim, "projector and state")
    fam = adapt_family([P.range_space, P.complement_space], psi, n, seed, tol, exact_shortcut)
    names = {0: Label.IN_P, 1: Label.IN_NOT_P, CAT: Label.CAT}
    labels = tuple(names[c] for c in fam.cells)
    return AdaptedExpansion(fam.expansion, labels, P, fam.weights[0])


@dataclass(frozen=True)
class BranchCount:
    n: int
    m: int
    m_complement: int
    cats: int
    born: float

    @property
    def fraction(self) -> Fraction:
        return Fraction(self.m, self.n)

    @property
    def interval(self) -> tuple[float, float]:
        return (self.m / self.n, (self.m + self.cats) / self.n)

    @property
    def error(self) -> float:
        return abs(self.m / self.n - self.born)

    def brackets_born(self, slack: float = 0.0) -> bool:
        lo, hi = self.interval
        return lo - slack <= self.born <= hi + slack

    def key(self) -> tuple[int, int, int]:
        return (self.m, self.m_complement, self.cats)

    def as_dict(self) -> dict:
        lo, hi = self.interval
        return {
            "n": self.n,
            "m": self.m,
            "m_complement": self.m_complement,
            "cats": self.cats,
            "fraction": self.m / self.n,
            "interval": [lo, hi],
            "born": self.born,
            "error": self.error,
            "bound": 1.0 / self.n,
        }


def _counts_of(ad: AdaptedExpansion) -> BranchCount:
    return BranchCount(
        n=ad.n,
        m=ad.count(Label.IN_P),
        m_complement=ad.count(Label.IN_NOT_P),
        cats=ad.count(Label.CAT),
        born=ad.born,
    )


def count(P: ProjectorOp, psi, n: int, seed: SeedLike = None, tol: Tolerance = DEFAULT_TOL) -> BranchCount:
    """Count the microstates of an adapted expansion lying in P."""
    return _counts_of(adapt(P, psi, n, seed, tol))


def uniqueness_check(
    P: ProjectorOp, psi, n: int, trials: int = 10, seed: SeedLike = None, tol: Tolerance = DEFAULT_TOL
) -> bool:
    """Do ``trials`` independently drawn adapted expansions give the same counts?"""
    if trials < 1:
        raise ValueError("trials must be positive")
    if isinstance(seed, np.random.Generator):
        seed = int(seed.integers(2**63))
    streams = np.random.SeedSequence(seed).spawn(trials)
    keys = {count(P, psi, n, np.random.default_rng(s), tol).key() for s in streams}
    return len(keys) == 1


def embed_for_counting(
    P: ProjectorOp, psi, n: int, tol: Tolerance = DEFAULT_TOL, exact_shortcut: bool = True
) -> tuple[ProjectorOp, StateVector]:
    """Zero-pad (P, psi) just enough for an n-part adapted expansion.

    Pad directions are split between P's range and its complement as needed;
    psi has no amplitude there, so the Born weight is unchanged.
    """
    w = born_weight(P, psi, tol)
    counts, exact, _ = _apportion([w, 1.0 - w], n, _integer_tol(tol) if exact_shortcut else None)
    need = [
        _rank_needed(m, ex) if (m or not ex) else 0 for m, ex in zip(counts, exact)
    ]
    extra_in = max(0, need[0] - P.rank)
    extra_out = max(0, need[1] - (P.dim - P.rank))
    if extra_in == 0 and extra_out == 0 and n <= P.dim:
        return P, as_state(psi)
    extra_out += max(0, n - (P.dim + extra_in + extra_out))
    return embed_projector(P, extra_in, extra_out), embed(psi, P.dim + extra_in + extra_out)


@dataclass(frozen=True)
class LocalityReport:
    antecedent: bool
    up_residual: float
    pu_residual: float
    before: BranchCount
    after: BranchCount | None
    counts_equal: bool | None

    @property
    def applicable(self) -> bool:
        return self.antecedent

    @property
    def violation(self) -> bool:
        return self.antecedent and not self.counts_equal


def locality_check(
    P: ProjectorOp, psi, U, n: int, seed: SeedLike = None, tol: Tolerance = DEFAULT_TOL
) -> LocalityReport:
    """If U P psi = P psi and P U psi = P psi, the count for P must not change under U."""
    psi = as_state(psi)
    u = U.matrix if isinstance(U, UnitaryOp) else np.asarray(U, dtype=np.complex128)
    if u.shape[0] != psi.dim or P.dim != psi.dim:
        raise DimensionMismatch(u.shape[0], psi.dim, "unitary and state")
    p_psi = P.matrix @ psi.components
    u_psi = u @ psi.components
    up = float(np.linalg.norm(u @ p_psi - p_psi))
    pu = float(np.linalg.norm(P.matrix @ u_psi - p_psi))
    gate = tol.rel * psi.norm
    held = up <= gate and pu <= gate
    before = count(P, psi, n, seed, tol)
    if not held:
        return LocalityReport(False, up, pu, before, None, None)
    after = count(P, StateVector(u_psi), n, seed, tol)
    return LocalityReport(True, up, pu, before, after, before.key()[0::2] == after.key()[0::2])


def unitary_on_complement(P: ProjectorOp, seed: SeedLike = None) -> UnitaryOp:
    """P + V on range(I - P) with V Haar-random: satisfies the locality antecedent for any psi."""
    comp = P.complement_space.basis
    v = random_unitary(comp.shape[1], seed).matrix if comp.shape[1] else np.zeros((0, 0))
    return UnitaryOp(P.matrix + comp @ v @ comp.conj().T, check=False)


@dataclass(frozen=True)
class ConvergenceRow:
    count: BranchCount
    dim: int

    @property
    def ok(self) -> bool:
        return self.count.error < 1.0 / self.count.n

    def as_dict(self) -> dict:
        return {**self.count.as_dict(), "dim": self.dim, "ok": self.ok}


def converge(
    P: ProjectorOp,
    psi,
    n_grid: Sequence[int],
    seed: SeedLike = None,
    tol: Tolerance = DEFAULT_TOL,
    auto_embed: bool = False,
) -> list[ConvergenceRow]:
    """Count at each n in the grid; every row must satisfy |m/n - w| < 1/n."""
    psi = as_state(psi)
    rng = make_rng(seed)
    rows = []
    for n in n_grid:
        p_n, psi_n = embed_for_counting(P, psi, n, tol) if auto_embed else (P, psi)
        rows.append(ConvergenceRow(count(p_n, psi_n, n, rng, tol), psi_n.dim))
    return rows
