"""Dense complex linear algebra: states, projectors, unitaries, subspaces.

Every value here is immutable once built; arrays handed out are read-only
views.  Random objects take a ``seed`` that may be an int, ``None`` or an
existing :class:`numpy.random.Generator` (which is then consumed in place).
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence, Union

import numpy as np

from .errors import DimensionMismatch, InvalidOperator, NoFreeDirection

SeedLike = Union[int, None, np.random.Generator]

TOL_ENV_VAR = "BRANCHCOUNT_TOL"


@dataclass(frozen=True)
class Tolerance:
    """Numerical gates.  ``rel`` scales with the largest operand norm."""

    rel: float = 1e-10
    abs: float = 1e-12

    def __post_init__(self):
        if not (self.rel > 0 and self.abs > 0):
            raise ValueError("tolerances must be strictly positive")
        if self.abs > self.rel:
            raise ValueError(f"abs tolerance {self.abs} exceeds rel tolerance {self.rel}")

    @classmethod
    def from_env(cls, override: float | None = None) -> "Tolerance":
        """Build from an explicit override, else ``$BRANCHCOUNT_TOL``, else defaults."""
        rel = override
        if rel is None:
            raw = os.environ.get(TOL_ENV_VAR)
            if raw is not None and raw.strip():
                rel = float(raw)
        if rel is None:
            return cls()
        return cls(rel=rel, abs=min(cls.abs, rel))


DEFAULT_TOL = Tolerance()


def make_rng(seed: SeedLike) -> np.random.Generator:
    return np.random.default_rng(seed)


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


class StateVector:
    """Unnormalised vector in C^dim."""

    __slots__ = ("_v",)

    def __init__(self, components):
        arr = np.array(components, dtype=np.complex128)
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError(f"state components must be a non-empty 1-D sequence, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("state components must be finite")
        self._v = _readonly(arr)

    @property
    def components(self) -> np.ndarray:
        return self._v

    @property
    def dim(self) -> int:
        return self._v.shape[0]

    @property
    def norm2(self) -> float:
        return float(np.vdot(self._v, self._v).real)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self._v))

    def is_zero(self, tol: Tolerance = DEFAULT_TOL) -> bool:
        return self.norm2 < tol.abs

    def normalized(self) -> "StateVector":
        n = self.norm
        if n == 0:
            raise ZeroDivisionError("cannot normalise the zero vector")
        return StateVector(self._v / n)

    def __array__(self, dtype=None, copy=None):
        return self._v if dtype is None else self._v.astype(dtype)

    def __len__(self):
        return self.dim

    def __add__(self, other):
        other = as_state(other)
        _check_dims(self.dim, other.dim)
        return StateVector(self._v + other._v)

    def __sub__(self, other):
        other = as_state(other)
        _check_dims(self.dim, other.dim)
        return StateVector(self._v - other._v)

    def __neg__(self):
        return StateVector(-self._v)

    def __mul__(self, scalar):
        if not np.isscalar(scalar):
            return NotImplemented
        return StateVector(self._v * scalar)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return StateVector(self._v / scalar)

    def __repr__(self):
        return f"StateVector(dim={self.dim}, norm={self.norm:.6g})"

    @classmethod
    def basis(cls, dim: int, k: int) -> "StateVector":
        v = np.zeros(dim, dtype=np.complex128)
        v[k] = 1.0
        return cls(v)

    @classmethod
    def zero(cls, dim: int) -> "StateVector":
        return cls(np.zeros(dim, dtype=np.complex128))

    @classmethod
    def random(cls, dim: int, seed: SeedLike = None, normalize: bool = True) -> "StateVector":
        rng = make_rng(seed)
        v = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
        if normalize:
            v /= np.linalg.norm(v)
        return cls(v)

    @classmethod
    def from_pairs(cls, pairs) -> "StateVector":
        """Parse ``[[re, im], ...]`` as used by the JSON state files."""
        arr = np.asarray(pairs, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != 2:
            raise ValueError("state must be a list of [re, im] pairs")
        return cls(arr[:, 0] + 1j * arr[:, 1])

    def to_pairs(self) -> list[list[float]]:
        return [[float(c.real), float(c.imag)] for c in self._v]


def as_state(v) -> StateVector:
    return v if isinstance(v, StateVector) else StateVector(v)


def _check_dims(a: int, b: int, what: str = "operands") -> None:
    if a != b:
        raise DimensionMismatch(a, b, what)


def _as_matrix(m) -> np.ndarray:
    if isinstance(m, _Operator):
        return m.matrix
    arr = np.asarray(m, dtype=np.complex128)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ValueError(f"operator must be a square matrix, got shape {arr.shape}")
    return arr


class _Operator:
    def __init__(self, matrix):
        m = np.array(_as_matrix(matrix), dtype=np.complex128)
        self._m = _readonly(m)

    @property
    def matrix(self) -> np.ndarray:
        return self._m

    @property
    def dim(self) -> int:
        return self._m.shape[0]

    def __array__(self, dtype=None, copy=None):
        return self._m if dtype is None else self._m.astype(dtype)

    def __matmul__(self, other):
        if isinstance(other, StateVector):
            return apply(self, other)
        return self._m @ _as_matrix(other)

    def __repr__(self):
        return f"{type(self).__name__}(dim={self.dim})"


class ProjectorOp(_Operator):
    """Hermitian idempotent matrix."""

    def __init__(self, matrix, tol: Tolerance = DEFAULT_TOL, check: bool = True):
        super().__init__(matrix)
        if check:
            herm, idem = projector_defects(self._m)
            scale = max(float(np.abs(self._m).max(initial=0.0)), 1.0)
            if herm > tol.rel * scale or idem > tol.rel * scale:
                raise InvalidOperator(
                    f"not a projector: hermiticity defect {herm:.3g}, idempotence defect {idem:.3g}"
                )

    @classmethod
    def from_basis(cls, basis, tol: Tolerance = DEFAULT_TOL) -> "ProjectorOp":
        """Projector onto the span of the orthonormal columns of ``basis``."""
        v = np.asarray(basis, dtype=np.complex128)
        op = cls(v @ v.conj().T, tol=tol)
        op.__dict__["range_space"] = Subspace(v)
        return op

    @classmethod
    def identity(cls, dim: int) -> "ProjectorOp":
        return cls(np.eye(dim), check=False)

    @classmethod
    def zero(cls, dim: int) -> "ProjectorOp":
        return cls(np.zeros((dim, dim)), check=False)

    @cached_property
    def _eig(self):
        vals, vecs = np.linalg.eigh(self._m)
        return vals, vecs

    @property
    def rank(self) -> int:
        return self.range_space.rank

    @cached_property
    def range_space(self) -> "Subspace":
        vals, vecs = self._eig
        return Subspace(vecs[:, vals > 0.5])

    @cached_property
    def complement_space(self) -> "Subspace":
        vals, vecs = self._eig
        return Subspace(vecs[:, vals <= 0.5])

    def complement(self) -> "ProjectorOp":
        op = ProjectorOp(np.eye(self.dim) - self._m, check=False)
        cached = self.__dict__
        if "range_space" in cached:
            op.__dict__["complement_space"] = cached["range_space"]
        if "complement_space" in cached:
            op.__dict__["range_space"] = cached["complement_space"]
        return op


class UnitaryOp(_Operator):
    """Matrix with U^dagger U = I."""

    def __init__(self, matrix, tol: Tolerance = DEFAULT_TOL, check: bool = True):
        super().__init__(matrix)
        if check:
            defect = unitarity_defect(self._m)
            if defect > tol.rel:
                raise InvalidOperator(f"not unitary: max |U^H U - I| = {defect:.3g}")

    @classmethod
    def identity(cls, dim: int) -> "UnitaryOp":
        return cls(np.eye(dim), check=False)

    def dagger(self) -> "UnitaryOp":
        return UnitaryOp(self._m.conj().T, check=False)


def projector_defects(m: np.ndarray) -> tuple[float, float]:
    herm = float(np.abs(m - m.conj().T).max(initial=0.0))
    idem = float(np.abs(m @ m - m).max(initial=0.0))
    return herm, idem


def unitarity_defect(m: np.ndarray) -> float:
    m = _as_matrix(m)
    return float(np.abs(m.conj().T @ m - np.eye(m.shape[0])).max(initial=0.0))


def inner(u, v) -> complex:
    """<u|v>, conjugate-linear in ``u``."""
    u, v = as_state(u), as_state(v)
    _check_dims(u.dim, v.dim, "inner product arguments")
    return complex(np.vdot(u.components, v.components))


def tensor(u, v) -> StateVector:
    """u (x) v with the left factor as the slow index."""
    u, v = as_state(u), as_state(v)
    return StateVector(np.kron(u.components, v.components))


def tensor_op(a, b) -> np.ndarray:
    """Kronecker product matching :func:`tensor`'s index order."""
    return np.kron(_as_matrix(a), _as_matrix(b))


def apply(m, v) -> StateVector:
    mat = _as_matrix(m)
    v = as_state(v)
    _check_dims(mat.shape[1], v.dim, "operator and state")
    return StateVector(mat @ v.components)


def embed(psi, new_dim: int) -> StateVector:
    """Zero-pad ``psi`` into C^new_dim (direct sum with a null block)."""
    psi = as_state(psi)
    if new_dim < psi.dim:
        raise ValueError(f"cannot embed dim {psi.dim} into smaller dim {new_dim}")
    v = np.zeros(new_dim, dtype=np.complex128)
    v[: psi.dim] = psi.components
    return StateVector(v)


def embed_projector(p: ProjectorOp, extra_in: int, extra_out: int) -> ProjectorOp:
    """Extend ``p`` by ``extra_in`` pad directions inside its range and ``extra_out`` outside."""
    d = p.dim
    total = d + extra_in + extra_out
    m = np.zeros((total, total), dtype=np.complex128)
    m[:d, :d] = p.matrix
    m[d : d + extra_in, d : d + extra_in] = np.eye(extra_in)
    out = ProjectorOp(m, check=False)

    def grow(basis: np.ndarray, start: int, count: int) -> Subspace:
        b = np.zeros((total, basis.shape[1] + count), dtype=np.complex128)
        b[:d, : basis.shape[1]] = basis
        b[start : start + count, basis.shape[1] :] = np.eye(count)
        return Subspace(b)

    out.__dict__["range_space"] = grow(p.range_space.basis, d, extra_in)
    out.__dict__["complement_space"] = grow(p.complement_space.basis, d + extra_in, extra_out)
    return out


def random_unitary(dim: int, seed: SeedLike = None) -> UnitaryOp:
    """Haar-distributed unitary from the QR decomposition of a Ginibre matrix."""
    rng = make_rng(seed)
    z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diagonal(r)
    q = q * (d / np.abs(d))
    return UnitaryOp(q, check=False)


def random_isometry(dim: int, rank: int, seed: SeedLike = None) -> np.ndarray:
    rng = make_rng(seed)
    z = rng.standard_normal((dim, rank)) + 1j * rng.standard_normal((dim, rank))
    q, _ = np.linalg.qr(z)
    return q


def random_projector(dim: int, rank: int, seed: SeedLike = None) -> ProjectorOp:
    """Projector onto a uniformly random ``rank``-dimensional subspace."""
    if not 0 <= rank <= dim:
        raise ValueError(f"rank {rank} outside [0, {dim}]")
    if rank == 0:
        op = ProjectorOp.zero(dim)
        op.__dict__["range_space"] = Subspace(np.zeros((dim, 0), dtype=np.complex128))
        op.__dict__["complement_space"] = FullSpace(dim)
        return op
    q = random_isometry(dim, dim, seed)
    op = ProjectorOp.from_basis(q[:, :rank])
    op.__dict__["complement_space"] = Subspace(q[:, rank:])
    return op


def orthonormal_basis(vectors, tol: Tolerance = DEFAULT_TOL) -> np.ndarray:
    """Orthonormal columns spanning ``vectors`` (given as rows)."""
    rows = np.atleast_2d(np.asarray(vectors, dtype=np.complex128))
    if rows.size == 0:
        return np.zeros((rows.shape[-1], 0), dtype=np.complex128)
    u, s, _ = np.linalg.svd(rows.T, full_matrices=False)
    if s.size == 0 or s[0] == 0:
        return np.zeros((rows.shape[1], 0), dtype=np.complex128)
    keep = s > tol.rel * s[0] * max(rows.shape)
    return u[:, keep]


class Subspace:
    """Subspace given by an orthonormal basis (columns).

    Batches of vectors are stacked as rows, the same layout
    :class:`~branchcount.expansion.Expansion` uses for microstates.
    """

    def __init__(self, basis):
        b = np.array(basis, dtype=np.complex128)
        if b.ndim != 2:
            raise ValueError("basis must be a 2-D array with orthonormal columns")
        self._basis = _readonly(b)

    @property
    def basis(self) -> np.ndarray:
        return self._basis

    @property
    def dim(self) -> int:
        return self._basis.shape[0]

    @property
    def rank(self) -> int:
        return self._basis.shape[1]

    def to_coords(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=np.complex128)
        return v @ self._basis.conj()

    def from_coords(self, c) -> np.ndarray:
        c = np.asarray(c, dtype=np.complex128)
        return c @ self._basis.T

    def project(self, v) -> np.ndarray:
        return self.from_coords(self.to_coords(v))


class FullSpace(Subspace):
    """The whole of C^dim, without materialising an identity basis."""

    def __init__(self, dim: int):
        self._dim = dim

    @property
    def basis(self) -> np.ndarray:
        return np.eye(self._dim, dtype=np.complex128)

    @property
    def dim(self) -> int:
        return self._dim

    @property
    def rank(self) -> int:
        return self._dim

    def to_coords(self, v) -> np.ndarray:
        return np.asarray(v, dtype=np.complex128)

    def from_coords(self, c) -> np.ndarray:
        return np.asarray(c, dtype=np.complex128)


class KronSubspace(Subspace):
    """Tensor product of two subspaces, kept in factored form.

    The ambient index is ``i * right.dim + j`` as in :func:`tensor`; the
    coordinate index is ``p * right.rank + q``.
    """

    def __init__(self, left: Subspace, right: Subspace):
        self.left = left
        self.right = right

    @property
    def basis(self) -> np.ndarray:
        return np.kron(self.left.basis, self.right.basis)

    @property
    def dim(self) -> int:
        return self.left.dim * self.right.dim

    @property
    def rank(self) -> int:
        return self.left.rank * self.right.rank

    @staticmethod
    def _sandwich(x: np.ndarray, left, right) -> np.ndarray:
        """left @ x[k] @ right for a batch x of shape (B, p, q), as two flat GEMMs."""
        bsz, p, q = x.shape
        if right is not None:
            x = (x.reshape(bsz * p, q) @ right).reshape(bsz, p, -1)
        if left is not None:
            q2 = x.shape[2]
            x = (left @ x.transpose(1, 0, 2).reshape(p, bsz * q2)).reshape(-1, bsz, q2).transpose(1, 0, 2)
        return x

    def to_coords(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=np.complex128)
        lead = v.shape[:-1]
        x = v.reshape((-1, self.left.dim, self.right.dim))
        left = None if isinstance(self.left, FullSpace) else self.left.basis.conj().T
        right = None if isinstance(self.right, FullSpace) else self.right.basis.conj()
        return self._sandwich(x, left, right).reshape(lead + (self.rank,))

    def from_coords(self, c) -> np.ndarray:
        c = np.asarray(c, dtype=np.complex128)
        lead = c.shape[:-1]
        x = c.reshape((-1, self.left.rank, self.right.rank))
        left = None if isinstance(self.left, FullSpace) else self.left.basis
        right = None if isinstance(self.right, FullSpace) else self.right.basis.T
        return self._sandwich(x, left, right).reshape(lead + (self.dim,))


class DirectionPool:
    """Seeded supply of fresh orthonormal directions inside ``space``.

    Directions are orthogonal to the given exclusions and to every direction
    handed out before.  Sampling is Gaussian in subspace coordinates followed
    by two rounds of block Gram-Schmidt and a QR.
    """

    def __init__(self, space: Subspace, exclusions=(), seed: SeedLike = None, tol: Tolerance = DEFAULT_TOL):
        self.space = space
        self.tol = tol
        self._rng = make_rng(seed)
        self._used = np.zeros((space.rank, 0), dtype=np.complex128)
        self.exclude(exclusions)

    @property
    def remaining(self) -> int:
        return self.space.rank - self._used.shape[1]

    def exclude(self, vectors) -> None:
        vecs = [np.asarray(v, dtype=np.complex128) for v in _iter_vectors(vectors)]
        if not vecs:
            return
        c = self.space.to_coords(np.stack(vecs))
        if self._used.shape[1]:
            c = c - (c @ self._used.conj()) @ self._used.T
        q = orthonormal_basis(c, self.tol)
        if q.shape[1]:
            self._used = np.hstack([self._used, q])

    def take(self, k: int) -> np.ndarray:
        """Return ``k`` new orthonormal directions as rows of an array."""
        if k == 0:
            return np.zeros((0, self.space.dim), dtype=np.complex128)
        if k > self.remaining:
            raise NoFreeDirection(
                f"requested {k} fresh directions but only {self.remaining} remain "
                f"in a subspace of rank {self.space.rank}"
            )
        r = self.space.rank
        for _ in range(8):
            g = self._rng.standard_normal((r, k)) + 1j * self._rng.standard_normal((r, k))
            for _ in range(2):
                if self._used.shape[1]:
                    g -= self._used @ (self._used.conj().T @ g)
            q, rr = np.linalg.qr(g)
            if np.abs(np.diagonal(rr)).min() > 1e-8 * np.sqrt(r):
                break
        else:  # pragma: no cover - probability zero
            raise NoFreeDirection("failed to draw linearly independent directions")
        self._used = np.hstack([self._used, q])
        return self.space.from_coords(q.T)

    def take_one(self) -> np.ndarray:
        return self.take(1)[0]


def _iter_vectors(vectors) -> Iterable[np.ndarray]:
    if isinstance(vectors, StateVector):
        yield vectors.components
        return
    if isinstance(vectors, np.ndarray) and vectors.ndim == 2:
        yield from vectors
        return
    for v in vectors:
        yield np.asarray(v.components if isinstance(v, StateVector) else v)


def orthonormal_complement_vector(
    exclusions: Sequence, dim: int, seed: SeedLike = None, tol: Tolerance = DEFAULT_TOL
) -> StateVector:
    """Unit vector orthogonal to every exclusion, deterministic for a fixed seed."""
    for e in _iter_vectors(exclusions):
        _check_dims(len(e), dim, "exclusion and ambient space")
    pool = DirectionPool(FullSpace(dim), exclusions, seed=seed, tol=tol)
    if pool.remaining == 0:
        raise NoFreeDirection(f"exclusions span all of C^{dim}")
    return StateVector(pool.take_one())


def unitary_fixing(fixed, dim: int, seed: SeedLike = None) -> UnitaryOp:
    """Haar-random unitary on the orthogonal complement of ``fixed``, identity on its span."""
    fixed = [np.asarray(as_state(f).components) for f in fixed] if fixed else []
    q = orthonormal_basis(np.stack(fixed)) if fixed else np.zeros((dim, 0), dtype=np.complex128)
    comp = DirectionPool(FullSpace(dim), q.T, seed=seed)
    k = comp.remaining
    if k == 0:
        return UnitaryOp.identity(dim)
    rng = comp._rng
    b = comp.take(k).T
    w = random_unitary(k, rng).matrix
    m = q @ q.conj().T + b @ w @ b.conj().T
    return UnitaryOp(m, check=False)
