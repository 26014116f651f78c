"""EPRB harness: two spin-1/2 systems, local settings, joint tables and CHSH.

Each local space is C^2 plus ``pad`` extra directions (a direct sum).  The
pad carries no amplitude in physical states; it only gives the counting
construction room to put microstates.  Pad directions are split between the
two outcomes, the first ceil(pad/2) joining "+" and the rest joining "-", so
a local spin projector has rank 1 + its share of the pad and P+ + P- = I.

Alice's index is the slow one: the bipartite amplitude for local basis
states (i, j) sits at ``i * L + j`` with ``L = 2 + pad``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .errors import DimensionMismatch, ZeroState
from .expansion import Expansion, ExpansionReport, validate
from .hilbert import (
    DEFAULT_TOL,
    FullSpace,
    KronSubspace,
    ProjectorOp,
    SeedLike,
    StateVector,
    Subspace,
    Tolerance,
    UnitaryOp,
    as_state,
    make_rng,
    random_unitary,
)
from .microprob import CAT, Label, adapt, adapt_family

OUTCOMES = (1, -1)
CELLS = ((1, 1), (1, -1), (-1, 1), (-1, -1))
CHSH_ERROR_NUMERATOR = 16


@dataclass(frozen=True)
class Setting:
    """Measurement direction (sin a, 0, cos a) in the x-z plane, angle in radians."""

    angle: float

    def __post_init__(self):
        if not math.isfinite(self.angle):
            raise ValueError(f"setting angle must be finite, got {self.angle}")
        object.__setattr__(self, "angle", float(self.angle) % (2 * math.pi))

    @classmethod
    def degrees(cls, deg: float) -> "Setting":
        return cls(math.radians(deg))


def _angle(setting) -> float:
    return setting.angle if isinstance(setting, Setting) else Setting(setting).angle


def local_dim(pad: int) -> int:
    return 2 + pad


def pad_split(pad: int) -> tuple[int, int]:
    """Pad directions assigned to the + and - outcome."""
    plus = (pad + 1) // 2
    return plus, pad - plus


def spin_vector(setting, outcome: int) -> np.ndarray:
    """Eigenvector of n.sigma with eigenvalue ``outcome``."""
    a = _angle(setting)
    if outcome == 1:
        return np.array([math.cos(a / 2), math.sin(a / 2)], dtype=np.complex128)
    if outcome == -1:
        return np.array([-math.sin(a / 2), math.cos(a / 2)], dtype=np.complex128)
    raise ValueError(f"outcome must be +1 or -1, got {outcome}")


def spin_space(setting, outcome: int, pad: int = 0) -> Subspace:
    """Range of the local spin projector, including its share of the pad."""
    plus, minus = pad_split(pad)
    share, start = (plus, 2) if outcome == 1 else (minus, 2 + plus)
    basis = np.zeros((local_dim(pad), 1 + share), dtype=np.complex128)
    basis[:2, 0] = spin_vector(setting, outcome)
    basis[start : start + share, 1:] = np.eye(share)
    return Subspace(basis)


def spin_projector(setting, outcome: int, pad: int = 0) -> ProjectorOp:
    """(I + outcome n.sigma)/2 on the spin block, plus the outcome's pad share."""
    return ProjectorOp.from_basis(spin_space(setting, outcome, pad).basis)


def singlet(pad: int = 0) -> StateVector:
    """(|01> - |10>)/sqrt(2) inside the padded bipartite space."""
    if pad < 0:
        raise ValueError("pad must be non-negative")
    L = local_dim(pad)
    v = np.zeros(L * L, dtype=np.complex128)
    v[0 * L + 1] = 1 / math.sqrt(2)
    v[1 * L + 0] = -1 / math.sqrt(2)
    return StateVector(v)


def embed_local(v, pad: int) -> StateVector:
    v = np.asarray(as_state(v).components)
    if v.shape[0] == local_dim(pad):
        return StateVector(v)
    if v.shape[0] != 2:
        raise DimensionMismatch(v.shape[0], 2, "local spin state")
    out = np.zeros(local_dim(pad), dtype=np.complex128)
    out[:2] = v
    return StateVector(out)


def product_state(phi, chi, pad: int = 0) -> StateVector:
    return StateVector(np.kron(embed_local(phi, pad).components, embed_local(chi, pad).components))


def two_qubit_state(amplitudes, pad: int = 0) -> StateVector:
    """Embed a 4-component two-qubit vector (Alice slow) into the padded space."""
    amp = np.asarray(amplitudes, dtype=np.complex128).reshape(2, 2)
    L = local_dim(pad)
    m = np.zeros((L, L), dtype=np.complex128)
    m[:2, :2] = amp
    return StateVector(m.ravel())


def random_two_qubit(seed: SeedLike = None, pad: int = 0) -> StateVector:
    return two_qubit_state(StateVector.random(4, seed).components, pad)


def random_product(seed: SeedLike = None, pad: int = 0) -> tuple[StateVector, StateVector]:
    rng = make_rng(seed)
    return embed_local(StateVector.random(2, rng), pad), embed_local(StateVector.random(2, rng), pad)


def required_pad(n: int, joint: bool = True) -> int:
    """Smallest pad that leaves room for n microstates plus a residual.

    With ``joint`` every one of the four joint cells must fit; otherwise
    only the yes/no cells P_s (x) I used for local marginals.
    """
    def fits(pad):
        L = local_dim(pad)
        small = 1 + pad_split(pad)[1]
        room = small**2 if joint else small * L
        return room >= n + 1 and L * L >= n

    pad = 0
    while not fits(pad):
        pad += 1
    return pad


@dataclass(frozen=True, eq=False)
class EprbScenario:
    state: StateVector
    pad: int
    alice: tuple
    bob: tuple
    n: int
    kind: str = "custom"

    def __post_init__(self):
        L = local_dim(self.pad)
        if self.state.dim != L * L:
            raise DimensionMismatch(self.state.dim, L * L, "state and padded bipartite space")
        if self.state.is_zero():
            raise ZeroState("EPRB state must be non-zero")
        object.__setattr__(self, "alice", tuple(s if isinstance(s, Setting) else Setting(s) for s in self.alice))
        object.__setattr__(self, "bob", tuple(s if isinstance(s, Setting) else Setting(s) for s in self.bob))

    @classmethod
    def singlet(cls, alice, bob, n: int, pad: int | None = None) -> "EprbScenario":
        pad = required_pad(n) if pad is None else pad
        return cls(singlet(pad), pad, tuple(alice), tuple(bob), n, "singlet")

    @classmethod
    def product(cls, phi, chi, alice, bob, n: int, pad: int | None = None) -> "EprbScenario":
        pad = required_pad(n) if pad is None else pad
        return cls(product_state(phi, chi, pad), pad, tuple(alice), tuple(bob), n, "product")

    @property
    def local_dim(self) -> int:
        return local_dim(self.pad)

    def with_state(self, state: StateVector) -> "EprbScenario":
        return EprbScenario(state, self.pad, self.alice, self.bob, self.n, self.kind)


def joint_born(state, a, b, pad: int) -> dict:
    """Born probabilities of the four (s, t) outcome pairs."""
    state = as_state(state)
    out = {}
    for s, t in CELLS:
        c = KronSubspace(spin_space(a, s, pad), spin_space(b, t, pad)).to_coords(state.components)
        out[(s, t)] = float(np.vdot(c, c).real / state.norm2)
    return out


def alice_space(a, s: int, pad: int) -> KronSubspace:
    return KronSubspace(spin_space(a, s, pad), FullSpace(local_dim(pad)))


def bob_space(b, t: int, pad: int) -> KronSubspace:
    return KronSubspace(FullSpace(local_dim(pad)), spin_space(b, t, pad))


def marginal_born(state, setting, outcome: int, pad: int, party: str = "alice") -> float:
    """Born weight of P_s (x) I (Alice) or I (x) P_t (Bob)."""
    state = as_state(state)
    space = alice_space(setting, outcome, pad) if party == "alice" else bob_space(setting, outcome, pad)
    c = space.to_coords(state.components)
    return float(np.vdot(c, c).real / state.norm2)


@dataclass(frozen=True)
class BinaryCount:
    """Yes/no counts for one local setting: m[+1], m[-1] and the cats."""

    m: dict
    cats: int
    n: int

    def key(self) -> tuple[int, int, int]:
        return (self.m[1], self.m[-1], self.cats)


def marginal_count(state, setting, pad: int, n: int, seed: SeedLike = None,
                   party: str = "alice", tol: Tolerance = DEFAULT_TOL) -> BinaryCount:
    """Count microstates in P_+ (x) I and P_- (x) I (or I (x) P_t) in an adapted expansion of ``state``."""
    space = alice_space if party == "alice" else bob_space
    fam = adapt_family([space(setting, s, pad) for s in OUTCOMES], state, n, seed, tol)
    return BinaryCount(dict(zip(OUTCOMES, fam.counts)), fam.cats, n)


@dataclass(frozen=True)
class JointEntry:
    m: int
    n: int
    cats: int
    born: float

    @property
    def fraction(self) -> float:
        return self.m / self.n

    @property
    def interval(self) -> tuple[float, float]:
        return (self.m / self.n, (self.m + self.cats) / self.n)

    def as_dict(self) -> dict:
        return {"m": self.m, "fraction": self.fraction, "interval": list(self.interval), "born": self.born}


@dataclass(frozen=True, eq=False)
class JointTable:
    a: float
    b: float
    n: int
    cats: int
    entries: dict
    alice: dict
    bob: dict
    adaptation: object = field(default=None, repr=False)

    def born_total(self) -> float:
        return sum(e.born for e in self.entries.values())

    def count_total(self) -> int:
        return sum(e.m for e in self.entries.values())

    def correlator(self, use: str = "born") -> float:
        if use == "born":
            return sum(s * t * e.born for (s, t), e in self.entries.items())
        return sum(s * t * e.m for (s, t), e in self.entries.items()) / self.n

    def consistent(self, tol: Tolerance = DEFAULT_TOL) -> bool:
        """Born rows sum to 1, counts leave exactly R cats, intervals bracket Born."""
        if abs(self.born_total() - 1.0) > tol.rel:
            return False
        if self.count_total() != self.n - self.cats or not 0 <= self.cats <= 3:
            return False
        return all(e.interval[0] - tol.rel <= e.born <= e.interval[1] + tol.rel for e in self.entries.values())

    def as_dict(self) -> dict:
        return {
            "a_deg": math.degrees(self.a),
            "b_deg": math.degrees(self.b),
            "n": self.n,
            "cats": self.cats,
            "cells": {f"{_sign(s)}{_sign(t)}": e.as_dict() for (s, t), e in self.entries.items()},
            "alice_marginal": {_sign(s): v for s, v in self.alice.items()},
            "bob_marginal": {_sign(t): v for t, v in self.bob.items()},
        }


def _sign(s: int) -> str:
    return "+" if s == 1 else "-"


def joint_table(sc: EprbScenario, a, b, seed: SeedLike = None, tol: Tolerance = DEFAULT_TOL,
                keep_expansion: bool = False, marginals: bool = True) -> JointTable:
    """Joint outcome table by Born rule and by counting a four-cell adapted expansion.

    Marginals come both from summing the joint cells over the remote outcome
    and from an independent yes/no count of P_s (x) I.  ``marginals=False``
    skips the yes/no counts (the dominant cost for large n).
    """
    rng = make_rng(seed)
    a, b = _angle(a), _angle(b)
    spaces = [KronSubspace(spin_space(a, s, sc.pad), spin_space(b, t, sc.pad)) for s, t in CELLS]
    fam = adapt_family(spaces, sc.state, sc.n, rng, tol)
    born = joint_born(sc.state, a, b, sc.pad)
    entries = {cell: JointEntry(m, sc.n, fam.cats, born[cell]) for cell, m in zip(CELLS, fam.counts)}

    def side(setting, party):
        out = {}
        binary = marginal_count(sc.state, setting, sc.pad, sc.n, rng, party, tol) if marginals else None
        for s in OUTCOMES:
            cells = [c for c in CELLS if (c[0] if party == "alice" else c[1]) == s]
            out[s] = {
                "born_sum": sum(born[c] for c in cells),
                "born_direct": marginal_born(sc.state, setting, s, sc.pad, party),
                "count_sum": sum(entries[c].m for c in cells),
                "count_binary": binary.m[s] if binary else None,
                "cats_binary": binary.cats if binary else None,
            }
        return out

    return JointTable(a, b, sc.n, fam.cats, entries, side(a, "alice"), side(b, "bob"),
                      fam if keep_expansion else None)


def bob_measurement_unitary(setting, pad: int) -> UnitaryOp:
    """Bob's measurement as a local unitary moving |b,t> into a pointer direction.

    With at least one pad direction per outcome, |b,+> and |b,-> go to the
    first pad slot of their outcome's share and those slots come back to
    the spin block; with a smaller pad the b-basis is just rotated onto the
    z-basis.
    """
    L = local_dim(pad)
    plus, minus = pad_split(pad)
    src = np.eye(L, dtype=np.complex128)
    src[:2, 0] = spin_vector(setting, 1)
    src[:2, 1] = spin_vector(setting, -1)
    dst_index = list(range(L))
    if plus and minus:
        p_plus, p_minus = 2, 2 + plus
        dst_index[0], dst_index[1] = p_plus, p_minus
        dst_index[p_plus], dst_index[p_minus] = 0, 1
    dst = np.eye(L, dtype=np.complex128)[:, dst_index]
    return UnitaryOp(dst @ src.conj().T, check=False)


def apply_local(state, u, party: str = "bob") -> StateVector:
    """Apply I (x) U (party 'bob') or U (x) I (party 'alice') without forming the Kronecker product."""
    state = as_state(state)
    m = u.matrix if isinstance(u, UnitaryOp) else np.asarray(u)
    L = m.shape[0]
    psi = state.components.reshape(L, L)
    out = psi @ m.T if party == "bob" else m @ psi
    return StateVector(out.ravel())


@dataclass(frozen=True)
class ParameterIndependenceReport:
    born_max_deviation: float
    counts: dict
    born_ok: bool
    counts_ok: bool

    @property
    def ok(self) -> bool:
        return self.born_ok and self.counts_ok

    def as_dict(self) -> dict:
        return {
            "born_max_deviation": self.born_max_deviation,
            "counts": self.counts,
            "born_ok": self.born_ok,
            "counts_ok": self.counts_ok,
            "ok": self.ok,
        }


def parameter_independence(sc: EprbScenario, seed: SeedLike = None, tol: Tolerance = DEFAULT_TOL,
                           with_tables: bool = True) -> ParameterIndependenceReport:
    """Alice's marginals must not depend on Bob's setting or on any local unitary of Bob's.

    Born: the summed joint marginal under b and b', and P_s (x) I directly.
    Counting: the yes/no count of P_s (x) I in the original state, after
    Bob's measurement interaction at b and at b', and after a Haar-random
    I (x) U, all with the same seed.
    """
    rng = make_rng(seed)
    count_seed = int(rng.integers(2**63))
    u_rand = random_unitary(sc.local_dim, rng)
    states = {"original": sc.state}
    for label, b in zip(("b", "b_prime"), sc.bob):
        states[f"measured_{label}"] = apply_local(sc.state, bob_measurement_unitary(b, sc.pad))
    states["random_local_unitary"] = apply_local(sc.state, u_rand)

    worst = 0.0
    counts = {}
    for ia, a in enumerate(sc.alice):
        for s in OUTCOMES:
            values = [marginal_born(sc.state, a, s, sc.pad)]
            if with_tables:
                for b in sc.bob:
                    born = joint_born(sc.state, a, b, sc.pad)
                    values.append(born[(s, 1)] + born[(s, -1)])
            values.extend(marginal_born(st, a, s, sc.pad) for st in states.values())
            worst = max(worst, max(values) - min(values))
        per_state = {
            name: marginal_count(st, a, sc.pad, sc.n, count_seed, "alice", tol)
            for name, st in states.items()
        }
        for s in OUTCOMES:
            counts[f"{'a' if ia == 0 else 'a_prime'}{_sign(s)}"] = {name: c.m[s] for name, c in per_state.items()}
        counts[f"{'a' if ia == 0 else 'a_prime'}_cats"] = {name: c.cats for name, c in per_state.items()}
    counts_ok = all(len(set(c.values())) == 1 for c in counts.values())
    return ParameterIndependenceReport(worst, counts, worst <= tol.rel, counts_ok)


@dataclass(frozen=True)
class OutcomeIndependenceReport:
    joint: dict
    alice: dict
    bob: dict
    deviations: dict
    max_deviation: float
    conditional: dict
    max_conditional_deviation: float
    classification: str

    def as_dict(self) -> dict:
        key = lambda c: f"{_sign(c[0])}{_sign(c[1])}"
        return {
            "classification": self.classification,
            "max_deviation": self.max_deviation,
            "max_conditional_deviation": self.max_conditional_deviation,
            "joint": {key(c): v for c, v in self.joint.items()},
            "alice_marginal": {_sign(s): v for s, v in self.alice.items()},
            "bob_marginal": {_sign(t): v for t, v in self.bob.items()},
            "deviations": {key(c): v for c, v in self.deviations.items()},
            "conditional": {key(c): v for c, v in self.conditional.items()},
        }


def outcome_independence(sc: EprbScenario, a, b, tol: Tolerance = DEFAULT_TOL) -> OutcomeIndependenceReport:
    """Compare p(s,t) with p(s) p(t), and p(s|t) with p(s), by the Born rule."""
    joint = joint_born(sc.state, a, b, sc.pad)
    pa = {s: joint[(s, 1)] + joint[(s, -1)] for s in OUTCOMES}
    pb = {t: joint[(1, t)] + joint[(-1, t)] for t in OUTCOMES}
    dev = {(s, t): abs(joint[(s, t)] - pa[s] * pb[t]) for s, t in CELLS}
    cond = {}
    for s, t in CELLS:
        if pb[t] > tol.abs:
            cond[(s, t)] = joint[(s, t)] / pb[t]
    cond_dev = max((abs(cond[(s, t)] - pa[s]) for s, t in cond), default=0.0)
    worst = max(dev.values())
    label = "factorizing" if worst <= tol.rel else "violating"
    return OutcomeIndependenceReport(joint, pa, pb, dev, worst, cond, cond_dev, label)


@dataclass(frozen=True, eq=False)
class ProductCountReport:
    m_a: int
    n_a: int
    m_b: int
    n_b: int
    cats_a: int
    cats_b: int
    joint_count: int
    eigen_count: int
    families: dict
    expansion: ExpansionReport
    s: int = 1
    t: int = 1

    @property
    def probability(self) -> Fraction:
        return Fraction(self.joint_count, self.n_a * self.n_b)

    @property
    def marginal_product(self) -> Fraction:
        return Fraction(self.m_a, self.n_a) * Fraction(self.m_b, self.n_b)

    @property
    def ok(self) -> bool:
        return (
            self.joint_count == self.m_a * self.m_b
            and self.eigen_count == self.joint_count
            and self.probability == self.marginal_product
            and sum(self.families.values()) == self.n_a * self.n_b
            and self.expansion.ok
        )

    def as_dict(self) -> dict:
        return {
            "m_a": self.m_a, "n_a": self.n_a, "m_b": self.m_b, "n_b": self.n_b,
            "cats_a": self.cats_a, "cats_b": self.cats_b,
            "joint_count": self.joint_count,
            "eigen_count": self.eigen_count,
            "probability": str(self.probability),
            "marginal_product": str(self.marginal_product),
            "families": self.families,
            "expansion_ok": self.expansion.ok,
            "ok": self.ok,
        }


def product_counting(phi, chi, a, b, n_a: int, n_b: int, seed: SeedLike = None, *, s: int = 1, t: int = 1,
                     pad: int = 0, tol: Tolerance = DEFAULT_TOL) -> ProductCountReport:
    """Tensor two local adapted expansions and count the joint +1 eigenstates.

    Families are keyed "11", "01", "10", "00" by whether the Alice and Bob
    factors lie in P_s^a and P_t^b ("0" includes local cat microstates).
    """
    rng = make_rng(seed)
    phi, chi = embed_local(phi, pad), embed_local(chi, pad)
    ad_a = adapt(spin_projector(a, s, pad), phi, n_a, rng, tol)
    ad_b = adapt(spin_projector(b, t, pad), chi, n_b, rng, tol)
    va, vb = ad_a.expansion.vectors, ad_b.expansion.vectors
    rows = np.einsum("ji,kl->jkil", va, vb).reshape(n_a * n_b, -1)
    psi = StateVector(np.kron(phi.components, chi.components))
    lam = Expansion(psi, rows)

    in_a = np.array([lb is Label.IN_P for lb in ad_a.labels])
    in_b = np.array([lb is Label.IN_P for lb in ad_b.labels])
    families = {
        f"{x}{y}": int(((in_a if x else ~in_a)[:, None] & (in_b if y else ~in_b)[None, :]).sum())
        for x in (1, 0) for y in (1, 0)
    }
    cell = KronSubspace(spin_space(a, s, pad), spin_space(b, t, pad))
    resid = np.linalg.norm(cell.project(rows) - rows, axis=1) / np.linalg.norm(rows, axis=1)
    return ProductCountReport(
        m_a=ad_a.count(Label.IN_P), n_a=n_a, m_b=ad_b.count(Label.IN_P), n_b=n_b,
        cats_a=ad_a.count(Label.CAT), cats_b=ad_b.count(Label.CAT),
        joint_count=families["11"], eigen_count=int((resid <= tol.rel).sum()),
        families=families, expansion=validate(lam, tol), s=s, t=t,
    )


@dataclass(frozen=True)
class CHSHReport:
    correlators_born: dict
    correlators_count: dict
    s_born: float
    s_count: float
    n: int
    classical_bound: float = 2.0

    @property
    def error_bound(self) -> float:
        return CHSH_ERROR_NUMERATOR / self.n

    @property
    def within_bound(self) -> bool:
        return abs(self.s_count - self.s_born) <= self.error_bound

    @property
    def violates_classical(self) -> bool:
        return self.s_born > self.classical_bound

    def as_dict(self) -> dict:
        return {
            "S_born": self.s_born,
            "S_count": self.s_count,
            "error_bound": self.error_bound,
            "within_bound": self.within_bound,
            "classical_bound": self.classical_bound,
            "violates_classical": self.violates_classical,
            "correlators_born": self.correlators_born,
            "correlators_count": self.correlators_count,
            "n": self.n,
        }


def chsh(sc: EprbScenario, seed: SeedLike = None, tol: Tolerance = DEFAULT_TOL) -> CHSHReport:
    """S = |E(a,b) - E(a,b') + E(a',b) + E(a',b')| from Born values and from counts."""
    rng = make_rng(seed)
    (a, a2), (b, b2) = sc.alice, sc.bob
    pairs = {"ab": (a, b), "ab'": (a, b2), "a'b": (a2, b), "a'b'": (a2, b2)}
    e_born, e_count = {}, {}
    for key, (x, y) in pairs.items():
        table = joint_table(sc, x, y, rng, tol, marginals=False)
        e_born[key] = table.correlator("born")
        e_count[key] = table.correlator("count")

    def combine(e):
        return abs(e["ab"] - e["ab'"] + e["a'b"] + e["a'b'"])

    return CHSHReport(e_born, e_count, combine(e_born), combine(e_count), sc.n)
