"""Equiamplitude expansions psi = xi_1 + ... + xi_n with equal, orthogonal parts.

The inductive construction grows an n-part expansion into an (n+1)-part one
by adjoining a fresh orthogonal vector of the common norm, rotating everything
in the real plane of psi and that vector until psi overlaps the newcomer as
much as each old part, and rescaling so the parts again sum to psi.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import bisect

from .errors import DimensionTooSmall, NoFreeDirection, PeelUnderflow, ZeroState
from .hilbert import (
    DEFAULT_TOL,
    DirectionPool,
    FullSpace,
    SeedLike,
    StateVector,
    Subspace,
    Tolerance,
    UnitaryOp,
    as_state,
    make_rng,
    orthonormal_complement_vector,
    unitary_fixing,
)


@dataclass(frozen=True, eq=False)
class Expansion:
    """An ordered family of microstates meant to sum to ``psi``.

    ``vectors`` holds the microstates as rows, shape ``(n, psi.dim)``.  The
    invariants are not enforced here; run :func:`validate`.
    """

    psi: StateVector
    vectors: np.ndarray
    theta_log: tuple = field(default=())

    def __post_init__(self):
        v = np.array(self.vectors, dtype=np.complex128, ndmin=2)
        if v.shape[1] != self.psi.dim:
            raise ValueError(f"microstates have dim {v.shape[1]}, psi has dim {self.psi.dim}")
        v.flags.writeable = False
        object.__setattr__(self, "vectors", v)
        object.__setattr__(self, "theta_log", tuple(float(t) for t in self.theta_log))

    @classmethod
    def from_microstates(cls, psi, microstates, theta_log=()) -> "Expansion":
        rows = [as_state(x).components for x in microstates]
        return cls(as_state(psi), np.stack(rows), theta_log)

    @property
    def n(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.psi.dim

    @property
    def microstates(self) -> list[StateVector]:
        return [StateVector(row) for row in self.vectors]

    def total(self) -> StateVector:
        return StateVector(self.vectors.sum(axis=0))

    def __len__(self):
        return self.n

    def __getitem__(self, k) -> StateVector:
        return StateVector(self.vectors[k])


@dataclass(frozen=True)
class ExpansionReport:
    orthogonality: bool
    equiamplitude: bool
    completeness: bool
    within_dim: bool
    max_overlap: float
    norm_spread: float
    residual: float

    @property
    def ok(self) -> bool:
        return self.orthogonality and self.equiamplitude and self.completeness and self.within_dim

    @property
    def max_violation(self) -> float:
        return max(self.max_overlap, self.norm_spread, self.residual)

    def checks(self) -> dict:
        return {
            "orthogonality": self.orthogonality,
            "equiamplitude": self.equiamplitude,
            "completeness": self.completeness,
        }


def validate(lam: Expansion, tol: Tolerance = DEFAULT_TOL) -> ExpansionReport:
    """Measure the worst orthogonality, norm-spread and reconstruction defects."""
    v = lam.vectors
    n = lam.n
    norm2 = np.einsum("ij,ij->i", v.conj(), v).real
    norms = np.sqrt(norm2)

    if n > 1:
        gram = v.conj() @ v.T
        scale = np.outer(norms, norms)
        np.fill_diagonal(gram, 0.0)
        overlap = np.abs(gram) / np.maximum(scale, np.finfo(float).tiny)
        # an all-zero pair is orthogonal; a zero norm shows up in the spread instead
        overlap[scale == 0] = 0.0
        max_overlap = float(overlap.max())
    else:
        max_overlap = 0.0

    psi_norm2 = lam.psi.norm2
    target = psi_norm2 / n
    if target > 0:
        spread = float(np.abs(norm2 - target).max() / target)
    else:
        spread = float(np.abs(norm2).max())

    diff = np.linalg.norm(v.sum(axis=0) - lam.psi.components)
    residual = float(diff / lam.psi.norm) if psi_norm2 > 0 else float(diff)

    return ExpansionReport(
        orthogonality=max_overlap <= tol.rel,
        equiamplitude=spread <= tol.rel,
        completeness=residual <= tol.rel,
        within_dim=n <= lam.dim,
        max_overlap=max_overlap,
        norm_spread=spread,
        residual=residual,
    )


def _require_nonzero(psi: StateVector, tol: Tolerance) -> None:
    if psi.is_zero(tol):
        raise ZeroState(f"state has norm^2 {psi.norm2:.3g} below {tol.abs:g}")


def split_two(psi, seed: SeedLike = None, tol: Tolerance = DEFAULT_TOL) -> Expansion:
    """Two-part expansion (psi +/- |psi| phi)/2 with phi a unit vector orthogonal to psi.

    This is the first induction step, so pi/4 is logged as its angle.
    """
    psi = as_state(psi)
    _require_nonzero(psi, tol)
    if psi.dim < 2:
        raise NoFreeDirection("a two-part expansion needs dim >= 2")
    phi = orthonormal_complement_vector([psi], psi.dim, seed, tol).components
    half = 0.5 * psi.components
    offset = 0.5 * psi.norm * phi
    return Expansion(psi, np.stack([half + offset, half - offset]), (np.pi / 4,))


def _plane_rotation(psi_hat: np.ndarray, phi_hat: np.ndarray, theta: float):
    """Rotation by theta in the real plane of two orthonormal vectors.

    Turns phi_hat towards psi_hat and psi_hat away from it; identity on the
    orthogonal complement.  Returned as a function acting on row stacks.
    """
    c, s = np.cos(theta), np.sin(theta)
    d_psi = (c - 1) * psi_hat - s * phi_hat
    d_phi = s * psi_hat + (c - 1) * phi_hat

    def rotate(rows: np.ndarray) -> np.ndarray:
        a = rows @ psi_hat.conj()
        b = rows @ phi_hat.conj()
        return rows + np.outer(a, d_psi) + np.outer(b, d_phi)

    return rotate


def equalizing_angle(psi, phi, xis, xtol: float = 1e-15) -> float:
    """Bisect for the angle at which psi overlaps the rotated phi and xi's equally.

    The gap |<psi, R phi>| - |<psi, R xi>| rises monotonically from negative
    to positive on (0, pi/2); the xi overlaps are averaged since they agree
    for a valid expansion.
    """
    psi = np.asarray(as_state(psi).components)
    phi = np.asarray(phi, dtype=np.complex128)
    xis = np.atleast_2d(np.asarray(xis, dtype=np.complex128))
    psi_norm = np.linalg.norm(psi)
    psi_hat = psi / psi_norm
    phi_hat = phi / np.linalg.norm(phi)

    # <psi, R v> = |psi| (cos t <psi_hat, v> + sin t <phi_hat, v>)
    p_phi, q_phi = np.vdot(psi_hat, phi), np.vdot(phi_hat, phi)
    p_xi, q_xi = xis @ psi_hat.conj(), xis @ phi_hat.conj()

    def gap(t: float) -> float:
        c, s = np.cos(t), np.sin(t)
        lhs = abs(c * p_phi + s * q_phi)
        rhs = np.abs(c * p_xi + s * q_xi).mean()
        return psi_norm * (lhs - rhs)

    return float(bisect(gap, 0.0, np.pi / 2, xtol=xtol, rtol=4 * np.finfo(float).eps, maxiter=200))


def extend(lam: Expansion, seed: SeedLike = None, tol: Tolerance = DEFAULT_TOL) -> Expansion:
    """Grow an m-part expansion into an (m+1)-part expansion of the same psi."""
    psi = lam.psi
    m = lam.n
    if psi.dim < m + 1:
        raise NoFreeDirection(f"dim {psi.dim} has no room for {m + 1} orthogonal microstates")
    _require_nonzero(psi, tol)

    common = float(np.sqrt(np.mean(np.einsum("ij,ij->i", lam.vectors.conj(), lam.vectors).real)))
    phi_hat = orthonormal_complement_vector(lam.vectors, psi.dim, seed, tol).components
    phi = common * phi_hat

    theta = equalizing_angle(psi, phi, lam.vectors)
    psi_hat = psi.components / psi.norm
    rotate = _plane_rotation(psi_hat, phi_hat, theta)
    rows = rotate(np.vstack([lam.vectors, phi]))

    total = rows.sum(axis=0)
    scale = psi.norm2 / np.vdot(psi.components, total).real
    return Expansion(psi, scale * rows, lam.theta_log + (theta,))


def construct(psi, n: int, seed: SeedLike = None, tol: Tolerance = DEFAULT_TOL) -> Expansion:
    """Build an n-part equiamplitude expansion by splitting then extending."""
    psi = as_state(psi)
    if n < 1:
        raise ValueError(f"n must be positive, got {n}")
    _require_nonzero(psi, tol)
    if n > psi.dim:
        raise DimensionTooSmall(f"n = {n} microstates need dim >= {n}, have {psi.dim}; embed first")
    if n == 1:
        return Expansion(psi, psi.components[None, :])
    rng = make_rng(seed)
    lam = split_two(psi, rng, tol)
    while lam.n < n:
        lam = extend(lam, rng, tol)
    return lam


def rotate_about(lam: Expansion, unitary) -> Expansion:
    """Apply a unitary that fixes psi to every microstate."""
    w = unitary.matrix if isinstance(unitary, UnitaryOp) else np.asarray(unitary)
    return Expansion(lam.psi, lam.vectors @ w.T, lam.theta_log)


def randomize(lam: Expansion, seed: SeedLike = None) -> Expansion:
    """Rotate the expansion about psi by a Haar-random unitary on psi's complement."""
    w = unitary_fixing([lam.psi], lam.dim, seed)
    return rotate_about(lam, w)


def _peel_step(chi: np.ndarray, chi_norm2: float, a2: float, direction, tol: Tolerance):
    c = a2 / chi_norm2
    d2 = a2 * (1.0 - c)
    if direction is not None and d2 > 0:
        xi = c * chi + np.sqrt(d2) * direction
    elif d2 <= tol.rel * a2:
        # exhaustion: chi already has norm a up to rounding
        xi = c * chi
    else:
        raise NoFreeDirection("peel needs a fresh direction but none was supplied")
    return xi, chi - xi


def peel(
    chi,
    a: float,
    direction=None,
    *,
    exclusions=(),
    within: Subspace | None = None,
    seed: SeedLike = None,
    tol: Tolerance = DEFAULT_TOL,
) -> tuple[StateVector, StateVector]:
    """Split ``chi`` into an orthogonal pair (xi, rest) with |xi| = a.

    xi = c chi + d phi with c = a^2/|chi|^2 and d = sqrt(a^2 (1 - c)), where
    phi is a unit vector orthogonal to chi and to ``exclusions``.  When
    ``direction`` is not given one is drawn (inside ``within`` if set).
    """
    chi = as_state(chi)
    a2 = float(a) ** 2
    n2 = chi.norm2
    if n2 < a2 * (1.0 - tol.rel):
        raise PeelUnderflow(f"|chi|^2 = {n2:.6g} is smaller than a^2 = {a2:.6g}")
    c = a2 / n2
    if direction is None and a2 * (1.0 - c) > tol.rel * a2:
        space = within if within is not None else FullSpace(chi.dim)
        pool = DirectionPool(space, [chi, *exclusions], seed=seed, tol=tol)
        if pool.remaining == 0:
            raise NoFreeDirection("no direction orthogonal to chi and the used microstates")
        direction = pool.take_one()
    elif direction is not None:
        direction = np.asarray(as_state(direction).components)
        direction = direction / np.linalg.norm(direction)
    xi, rest = _peel_step(chi.components, n2, a2, direction, tol)
    return StateVector(xi), StateVector(rest)


def peel_sequence(chi: np.ndarray, a: float, k: int, directions: np.ndarray, tol: Tolerance = DEFAULT_TOL):
    """Peel ``k`` parts of norm ``a`` from ``chi`` using the given direction rows.

    Returns ``(parts, rest)`` with ``parts`` of shape ``(k, dim)``.  The
    directions must be orthonormal and orthogonal to ``chi``.
    """
    a2 = float(a) ** 2
    chi = np.asarray(chi, dtype=np.complex128)
    parts = np.empty((k, chi.shape[0]), dtype=np.complex128)
    for i in range(k):
        n2 = float(np.vdot(chi, chi).real)
        if n2 < a2 * (1.0 - tol.rel):
            raise PeelUnderflow(f"step {i}: |chi|^2 = {n2:.6g} < a^2 = {a2:.6g}")
        direction = directions[i] if i < len(directions) else None
        parts[i], chi = _peel_step(chi, n2, a2, direction, tol)
    return parts, chi
