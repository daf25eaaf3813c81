"""Reflection-transform algebra on column-major point sets.

Points are stored as the columns of a ``d x n`` array.  A reflection is
parameterised by ``d - 1`` rotation factors ``R_1 .. R_{d-1}`` whose product
``T`` maps the last coordinate axis onto the mirror normal, and a translation
``t`` lying on the mirror.  The reflection itself is ``x -> M (x - t) + t``
with ``M = T E T^T`` and ``E = diag(1, .., 1, -1)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

ORTHO_TOL = 1e-10
DET_TOL = 1e-8


class ContractError(ValueError):
    """Input violates a documented precondition (shape, finiteness, ...)."""


class DegenerateTransformError(ArithmeticError):
    pass


def flip_matrix(d: int) -> np.ndarray:
    E = np.eye(d)
    E[-1, -1] = -1.0
    return E


@dataclass(frozen=True)
class PointCloud:
    points: np.ndarray

    def __post_init__(self):
        X = np.array(self.points, dtype=float, copy=True)
        if X.ndim != 2:
            raise ContractError(f"points must be a d x n matrix, got shape {X.shape}")
        if X.shape[0] < 2 or X.shape[1] < 2:
            raise ContractError(f"need dim >= 2 and count >= 2, got {X.shape}")
        if not np.all(np.isfinite(X)):
            raise ContractError("point coordinates must be finite")
        X.setflags(write=False)
        object.__setattr__(self, "points", X)

    @classmethod
    def from_rows(cls, rows) -> "PointCloud":
        """Build from an ``n x d`` array (one point per row)."""
        return cls(np.asarray(rows, dtype=float).T)

    @property
    def dim(self) -> int:
        return self.points.shape[0]

    @property
    def count(self) -> int:
        return self.points.shape[1]

    def subset(self, idx) -> "PointCloud":
        return PointCloud(self.points[:, idx])


@dataclass(frozen=True, eq=False)
class ReflectionTransform:
    """Rotation factors plus translation; see module docstring."""

    rotations: np.ndarray  # (d-1, d, d)
    translation: np.ndarray  # (d,)
    check: bool = field(default=True, repr=False)

    def __post_init__(self):
        Rs = np.array(self.rotations, dtype=float, copy=True)
        t = np.array(self.translation, dtype=float, copy=True).reshape(-1)
        d = t.shape[0]
        if Rs.ndim == 2:
            Rs = Rs[None]
        if d < 2 or Rs.shape != (d - 1, d, d):
            raise ContractError(f"expected {d - 1} rotation factors of size {d}x{d}, got {Rs.shape}")
        if self.check:
            eye = np.eye(d)
            for u, R in enumerate(Rs):
                if np.linalg.norm(R.T @ R - eye) > ORTHO_TOL:
                    raise ContractError(f"rotation factor {u} is not orthogonal")
                if abs(np.linalg.det(R) - 1.0) > DET_TOL:
                    raise ContractError(f"rotation factor {u} has det != +1")
        Rs.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotations", Rs)
        object.__setattr__(self, "translation", t)

    @property
    def dim(self) -> int:
        return self.translation.shape[0]

    @property
    def flip(self) -> np.ndarray:
        return flip_matrix(self.dim)

    @cached_property
    def product(self) -> np.ndarray:
        T = np.eye(self.dim)
        for R in self.rotations:
            T = T @ R
        return T

    @cached_property
    def mirror(self) -> np.ndarray:
        """The linear part ``T E T^T`` (symmetric involution)."""
        T = self.product
        M = (T * np.diag(self.flip)) @ T.T
        return 0.5 * (M + M.T)

    @classmethod
    def identity(cls, d: int, translation=None) -> "ReflectionTransform":
        t = np.zeros(d) if translation is None else translation
        return cls(np.broadcast_to(np.eye(d), (d - 1, d, d)), t)

    @classmethod
    def from_product(cls, T, translation) -> "ReflectionTransform":
        """Put the whole product into the first factor, the rest identity."""
        T = np.asarray(T, dtype=float)
        d = T.shape[0]
        Rs = np.broadcast_to(np.eye(d), (d - 1, d, d)).copy()
        Rs[0] = T
        return cls(Rs, translation)

    def with_translation(self, t) -> "ReflectionTransform":
        return ReflectionTransform(self.rotations, t, check=False)


@dataclass(frozen=True, eq=False)
class Hyperplane:
    """Points ``x`` with ``normal . x + offset = 0``."""

    normal: np.ndarray
    offset: float

    def __post_init__(self):
        n = np.array(self.normal, dtype=float, copy=True).reshape(-1)
        norm = np.linalg.norm(n)
        if not np.isfinite(norm) or norm == 0.0:
            raise ContractError("hyperplane normal must be a finite nonzero vector")
        scale = 1.0 / norm
        n = n * scale
        offset = float(self.offset) * scale
        n.setflags(write=False)
        object.__setattr__(self, "normal", n)
        object.__setattr__(self, "offset", offset)

    @property
    def dim(self) -> int:
        return self.normal.shape[0]

    @property
    def foot(self) -> np.ndarray:
        """Closest point of the plane to the origin."""
        return -self.offset * self.normal

    def signed_distance(self, X) -> np.ndarray:
        return self.normal @ np.asarray(X, dtype=float) + self.offset

    def canonical(self) -> "Hyperplane":
        """Same plane with the first nonzero normal component positive."""
        nz = np.flatnonzero(np.abs(self.normal) > 1e-12)
        if nz.size and self.normal[nz[0]] < 0:
            return Hyperplane(-self.normal, -self.offset)
        return self

    def __eq__(self, other):
        if not isinstance(other, Hyperplane):
            return NotImplemented
        return bool(np.array_equal(self.normal, other.normal) and self.offset == other.offset)

    def __hash__(self):
        return hash((self.normal.tobytes(), self.offset))

    def angle_to(self, other: "Hyperplane") -> float:
        """Unsigned angle between normals, in radians, in [0, pi/2]."""
        c = abs(float(self.normal @ other.normal))
        return float(np.arccos(min(c, 1.0)))


class Correspondence:
    """Partial involutive matching over ``n`` points.

    ``mirror[i]`` is the index of the point that the reflection of ``x_i``
    should land on, or ``-1`` when ``x_i`` is unmatched.  ``mirror[i] == i``
    is allowed (a point lying on the mirror).
    """

    __slots__ = ("mirror",)

    def __init__(self, mirror):
        m = np.array(mirror, dtype=np.int64, copy=True).reshape(-1)
        n = m.shape[0]
        if np.any((m < -1) | (m >= n)):
            raise ContractError("correspondence indices out of range")
        used = m[m >= 0]
        if np.unique(used).size != used.size:
            raise ContractError("correspondence is not injective")
        m.setflags(write=False)
        self.mirror = m

    @classmethod
    def identity(cls, n: int) -> "Correspondence":
        return cls(np.arange(n))

    @classmethod
    def from_pairs(cls, n: int, pairs) -> "Correspondence":
        """Build a mutual matching from unordered pairs ``(i, j)``."""
        m = np.full(n, -1, dtype=np.int64)
        for i, j in pairs:
            m[i] = j
            m[j] = i
        return cls(m)

    @property
    def size(self) -> int:
        return self.mirror.shape[0]

    @property
    def matched(self) -> np.ndarray:
        return np.flatnonzero(self.mirror >= 0)

    @property
    def is_full(self) -> bool:
        return bool(np.all(self.mirror >= 0))

    @property
    def n_matched(self) -> int:
        return int(np.count_nonzero(self.mirror >= 0))

    def is_mutual(self) -> bool:
        idx = self.matched
        return bool(np.all(self.mirror[self.mirror[idx]] == idx))

    def matrix(self) -> np.ndarray:
        """0/1 matrix ``P`` with ``X @ P`` having column ``i`` equal to ``x_mirror[i]``."""
        P = np.zeros((self.size, self.size))
        idx = self.matched
        P[self.mirror[idx], idx] = 1.0
        return P

    def pairs(self) -> list[tuple[int, int]]:
        return [(int(i), int(self.mirror[i])) for i in self.matched]

    def __eq__(self, other):
        if not isinstance(other, Correspondence):
            return NotImplemented
        return np.array_equal(self.mirror, other.mirror)

    def __hash__(self):
        return hash(self.mirror.tobytes())

    def __repr__(self):
        return f"Correspondence(n={self.size}, matched={self.n_matched})"


def _check_dims(cloud: PointCloud, xf: ReflectionTransform):
    if cloud.dim != xf.dim:
        raise ContractError(f"cloud has dim {cloud.dim} but transform has dim {xf.dim}")


def reflect_array(X: np.ndarray, xf: ReflectionTransform) -> np.ndarray:
    t = xf.translation[:, None]
    return xf.mirror @ (X - t) + t


def reflect_points(cloud: PointCloud, xf: ReflectionTransform) -> PointCloud:
    _check_dims(cloud, xf)
    return PointCloud(reflect_array(cloud.points, xf))


def compose_product(xf: ReflectionTransform) -> np.ndarray:
    return xf.product


def hyperplane_from_transform(xf: ReflectionTransform, degenerate_tol: float = 1e-6) -> Hyperplane:
    """Mirror plane of ``xf``: normal spans the null space of ``I + T E T^T``."""
    d = xf.dim
    _, s, Vt = np.linalg.svd(np.eye(d) + xf.mirror)
    if d > 1 and s[-2] < degenerate_tol:
        raise DegenerateTransformError(
            f"null space of I + TET^T is not one-dimensional (singular values {s})"
        )
    normal = Vt[-1]
    return Hyperplane(normal, -float(normal @ xf.translation)).canonical()


def symmetry_residuals(cloud: PointCloud, xf: ReflectionTransform, corr: Correspondence) -> np.ndarray:
    """Columns ``reflect(x_i) - x_mirror[i]`` over matched ``i``."""
    _check_dims(cloud, xf)
    if corr.size != cloud.count:
        raise ContractError("correspondence size does not match the cloud")
    idx = corr.matched
    X = cloud.points
    return reflect_array(X[:, idx], xf) - X[:, corr.mirror[idx]]


def symmetry_error(cloud: PointCloud, xf: ReflectionTransform, corr: Correspondence) -> float:
    """Squared Frobenius mismatch between reflected points and their partners."""
    R = symmetry_residuals(cloud, xf, corr)
    return float(np.sum(R * R))


def symmetry_error_change(cloud, before: ReflectionTransform, after: ReflectionTransform,
                          corr: Correspondence) -> float:
    """``symmetry_error(after) - symmetry_error(before)`` without cancellation.

    Summing ``(r' - r) * (r' + r)`` keeps the rounding error proportional to
    the change itself, so decreases far below ``eps * cost`` stay visible.
    """
    r0 = symmetry_residuals(cloud, before, corr)
    r1 = symmetry_residuals(cloud, after, corr)
    return float(np.sum((r1 - r0) * (r1 + r0)))


def householder_reflect(cloud: PointCloud, plane: Hyperplane) -> PointCloud:
    if cloud.dim != plane.dim:
        raise ContractError("plane and cloud dimensions differ")
    eta = plane.normal
    p = plane.foot[:, None]
    Y = cloud.points - p
    return PointCloud(Y - 2.0 * np.outer(eta, eta @ Y) + p)


def rotation_between(a, b) -> np.ndarray:
    """Rotation in span{a, b} taking unit vector ``a`` to unit vector ``b``.

    Antipodal inputs get a half-turn in the plane of ``a`` and the first
    coordinate axis not parallel to it.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    a = a / np.linalg.norm(a)
    b = b / np.linalg.norm(b)
    d = a.shape[0]
    c = float(np.clip(a @ b, -1.0, 1.0))
    w = b - c * a
    s = np.linalg.norm(w)
    if s < 1e-12:
        if c > 0:
            return np.eye(d)
        k = int(np.argmin(np.abs(a)))
        w = np.zeros(d)
        w[k] = 1.0
        w -= (w @ a) * a
        w /= np.linalg.norm(w)
        s, c = 0.0, -1.0
    else:
        w = w / s
    # rotation acting as [[c, -s], [s, c]] on the (a, w) plane
    return (np.eye(d) + (c - 1.0) * (np.outer(a, a) + np.outer(w, w))
            + s * (np.outer(w, a) - np.outer(a, w)))


def transform_from_plane(plane: Hyperplane, translation=None) -> ReflectionTransform:
    """A reflection transform whose mirror is ``plane``.

    The product ``T`` rotates the last coordinate axis onto the normal and is
    stored entirely in the first factor.  ``translation`` is projected onto
    the plane; by default the plane's foot point is used.
    """
    d = plane.dim
    eta = plane.normal.copy()
    e_last = np.zeros(d)
    e_last[-1] = 1.0
    if eta[-1] < 0:
        eta = -eta
    T = rotation_between(e_last, eta)
    if translation is None:
        t = plane.foot
    else:
        t = np.asarray(translation, dtype=float)
        t = t - plane.signed_distance(t) * plane.normal
    return ReflectionTransform.from_product(T, t)


def givens(d: int, i: int, j: int, angle: float) -> np.ndarray:
    G = np.eye(d)
    c, s = np.cos(angle), np.sin(angle)
    G[i, i] = c
    G[j, j] = c
    G[i, j] = -s
    G[j, i] = s
    return G


def transform_from_angles(angles, translation) -> ReflectionTransform:
    """Factor ``u`` is a Givens rotation of axis ``u`` towards the last axis.

    In 2-D the single angle is the orientation of the mirror axis.
    """
    angles = np.atleast_1d(np.asarray(angles, dtype=float))
    d = angles.shape[0] + 1
    Rs = np.stack([givens(d, u, d - 1, a) for u, a in enumerate(angles)])
    return ReflectionTransform(Rs, translation)


def random_rotation(rng: np.random.Generator, d: int) -> np.ndarray:
    """Haar-distributed element of SO(d)."""
    Q, R = np.linalg.qr(rng.standard_normal((d, d)))
    Q = Q * np.sign(np.diag(R))
    if np.linalg.det(Q) < 0:
        Q[:, 0] = -Q[:, 0]
    return Q


def random_transform(rng: np.random.Generator, d: int, scale: float = 1.0) -> ReflectionTransform:
    Rs = np.stack([random_rotation(rng, d) for _ in range(d - 1)])
    return ReflectionTransform(Rs, scale * rng.standard_normal(d))
