"""Riemannian geometry of SO(d)^(d-1) x R^d for the symmetry error.

Tangent vectors at ``(R_1..R_{d-1}, t)`` are stored in body coordinates: the
skew matrices ``Omega_u`` of ``R_u Omega_u`` plus a translation direction.
The metric is the embedded Frobenius one, so the flattened ``(omegas, eta_t)``
array carries the metric as its plain dot product.

With ``Y = X - t e^T`` and ``Z = XP - t e^T`` (matched columns only) the cost
is ``|Y|^2 + |Z|^2 - trace(T E T^T A)`` where ``A = Z Y^T + Y Z^T``; every
formula below works from that identity.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .geometry import Correspondence, PointCloud, ReflectionTransform, flip_matrix


def skew(A: np.ndarray) -> np.ndarray:
    return 0.5 * (A - np.swapaxes(A, -1, -2))


def bracket(U: np.ndarray, V: np.ndarray) -> np.ndarray:
    return U @ V - V @ U


@dataclass(frozen=True, eq=False)
class TangentVector:
    omegas: np.ndarray  # (d-1, d, d), skew
    eta_t: np.ndarray  # (d,)

    @property
    def dim(self) -> int:
        return self.eta_t.shape[0]

    @classmethod
    def zeros(cls, d: int) -> "TangentVector":
        return cls(np.zeros((d - 1, d, d)), np.zeros(d))

    @classmethod
    def random(cls, rng: np.random.Generator, d: int) -> "TangentVector":
        return cls(skew(rng.standard_normal((d - 1, d, d))), rng.standard_normal(d))

    def flat(self) -> np.ndarray:
        return np.concatenate([self.omegas.ravel(), self.eta_t])

    @classmethod
    def from_flat(cls, d: int, v: np.ndarray) -> "TangentVector":
        k = (d - 1) * d * d
        return cls(v[:k].reshape(d - 1, d, d), v[k:])

    def __add__(self, other: "TangentVector") -> "TangentVector":
        return TangentVector(self.omegas + other.omegas, self.eta_t + other.eta_t)

    def __sub__(self, other: "TangentVector") -> "TangentVector":
        return TangentVector(self.omegas - other.omegas, self.eta_t - other.eta_t)

    def __mul__(self, a: float) -> "TangentVector":
        return TangentVector(a * self.omegas, a * self.eta_t)

    __rmul__ = __mul__

    def __neg__(self) -> "TangentVector":
        return TangentVector(-self.omegas, -self.eta_t)

    def norm(self) -> float:
        return float(np.sqrt(metric(None, self, self)))


def metric(at, u: TangentVector, v: TangentVector) -> float:
    """``eta^T eta' + sum_u trace(Omega_u^T Omega'_u)``; independent of the base point."""
    return float(np.sum(u.omegas * v.omegas) + u.eta_t @ v.eta_t)


def project(xf: ReflectionTransform, omegas, eta_t) -> TangentVector:
    """Project body-coordinate ambient directions onto the tangent space."""
    return TangentVector(skew(np.asarray(omegas, dtype=float)), np.asarray(eta_t, dtype=float))


@dataclass(frozen=True, eq=False)
class GradientWorkspace:
    """Quantities fixed at one base point ``(R, t)`` for one correspondence.

    ``prefix[j] = R_1 .. R_{j-1}`` and ``suffix[j] = R_{j+1} .. R_{d-1}``
    (0-based factor index ``j``), ``B1[j] = suffix E suffix^T`` and
    ``B2[j] = prefix^T A prefix``.
    """

    A: np.ndarray
    B1: np.ndarray
    B2: np.ndarray
    prefix: np.ndarray
    suffix: np.ndarray
    T: np.ndarray
    mirror: np.ndarray
    moment: np.ndarray  # Xe + XPe - 2 n t over matched columns
    n: int


def matched_columns(cloud: PointCloud, corr: Correspondence):
    idx = corr.matched
    return cloud.points[:, idx], cloud.points[:, corr.mirror[idx]]


def symmetric_moment(Y: np.ndarray, Z: np.ndarray) -> np.ndarray:
    A = Z @ Y.T
    return A + A.T


def workspace(cloud: PointCloud, xf: ReflectionTransform, corr: Correspondence) -> GradientWorkspace:
    Xs, Xp = matched_columns(cloud, corr)
    t = xf.translation
    Y = Xs - t[:, None]
    Z = Xp - t[:, None]
    A = symmetric_moment(Y, Z)
    return workspace_from_moment(xf, A, Y.sum(axis=1) + Z.sum(axis=1), Xs.shape[1])


def workspace_from_moment(xf: ReflectionTransform, A, moment, n: int) -> GradientWorkspace:
    Rs = xf.rotations
    m, d = Rs.shape[0], xf.dim
    E = flip_matrix(d)
    prefix = np.empty_like(Rs)
    suffix = np.empty_like(Rs)
    acc = np.eye(d)
    for j in range(m):
        prefix[j] = acc
        acc = acc @ Rs[j]
    T = acc
    acc = np.eye(d)
    for j in range(m - 1, -1, -1):
        suffix[j] = acc
        acc = Rs[j] @ acc
    diagE = np.diag(E)
    B1 = (suffix * diagE[None, None, :]) @ np.swapaxes(suffix, 1, 2)
    B2 = np.swapaxes(prefix, 1, 2) @ A @ prefix
    return GradientWorkspace(A=A, B1=B1, B2=B2, prefix=prefix, suffix=suffix, T=T,
                             mirror=xf.mirror, moment=np.asarray(moment, dtype=float), n=int(n))


def egrad_t(cloud, xf, corr, ws: GradientWorkspace | None = None) -> np.ndarray:
    """Euclidean gradient in ``t``: ``2 (I - TET^T)(2 n t - Xe - XPe)``."""
    ws = ws or workspace(cloud, xf, corr)
    d = xf.dim
    return -2.0 * (np.eye(d) - ws.mirror) @ ws.moment


def egrad_R(cloud, xf, corr, j: int, ws: GradientWorkspace | None = None) -> np.ndarray:
    """Euclidean gradient in factor ``j`` (0-based): ``-2 L_j^T A T E S_j^T``."""
    ws = ws or workspace(cloud, xf, corr)
    E = flip_matrix(xf.dim)
    return -2.0 * ws.prefix[j].T @ ws.A @ ws.T @ E @ ws.suffix[j].T


def rgrad(cloud, xf, corr, ws: GradientWorkspace | None = None) -> TangentVector:
    ws = ws or workspace(cloud, xf, corr)
    Rs = xf.rotations
    # R_j^T (-2 B2 R_j B1) = -2 S_j B1 with S_j = R_j^T B2 R_j
    S = np.swapaxes(Rs, 1, 2) @ ws.B2 @ Rs
    omegas = skew(-2.0 * S @ ws.B1)
    return TangentVector(omegas, egrad_t(cloud, xf, corr, ws))


def rgrad_factor_expanded(cloud, xf, corr, j: int, ws: GradientWorkspace | None = None) -> np.ndarray:
    """Ambient Riemannian gradient of factor ``j`` written as two explicit terms.

    ``-R_j (L_j R_j)^T A T E S_j^T + R_j S_j E T^T A (L_j R_j)``.
    """
    ws = ws or workspace(cloud, xf, corr)
    E = flip_matrix(xf.dim)
    Rj = xf.rotations[j]
    upto = ws.prefix[j] @ Rj
    S = ws.suffix[j]
    return -Rj @ upto.T @ ws.A @ ws.T @ E @ S.T + Rj @ S @ E @ ws.T.T @ ws.A @ upto


def rhess_block(xf: ReflectionTransform, ws: GradientWorkspace, j: int, omega: np.ndarray) -> np.ndarray:
    """Diagonal Hessian block of factor ``j`` in body coordinates.

    Returns ``1/2 ([B1, [R^T B2 R, Omega]] + [[Omega, B1], R^T B2 R])``; the
    ambient Hessian component is ``R_j`` times this.
    """
    Rj = xf.rotations[j]
    S = Rj.T @ ws.B2[j] @ Rj
    B1 = ws.B1[j]
    return 0.5 * (bracket(B1, bracket(S, omega)) + bracket(bracket(omega, B1), S))


def rhess_t_block(xf: ReflectionTransform, ws: GradientWorkspace, eta_t: np.ndarray) -> np.ndarray:
    """``4 n (I - TET^T) eta_t``."""
    return 4.0 * ws.n * (eta_t - ws.mirror @ eta_t)


def rhess_apply(cloud, xf, corr, direction: TangentVector,
                ws: GradientWorkspace | None = None) -> TangentVector:
    """Riemannian Hessian applied to ``direction``.

    Diagonal blocks come from :func:`rhess_block` and :func:`rhess_t_block`;
    the coupling between factors and with the translation is added on top, so
    the result is the full Hessian of the product manifold.
    """
    ws = ws or workspace(cloud, xf, corr)
    Rs = xf.rotations
    m, d = Rs.shape[0], xf.dim
    E = flip_matrix(d)
    Om = direction.omegas
    eta = direction.eta_t

    # derivatives of prefix/suffix products along the direction
    dL = np.zeros_like(Rs)
    for j in range(m - 1):
        dL[j + 1] = dL[j] @ Rs[j] + ws.prefix[j] @ Rs[j] @ Om[j]
    dT = dL[m - 1] @ Rs[m - 1] + ws.prefix[m - 1] @ Rs[m - 1] @ Om[m - 1]
    dS = np.zeros_like(Rs)
    for j in range(m - 1, 0, -1):
        dS[j - 1] = Rs[j] @ dS[j] + Rs[j] @ Om[j] @ ws.suffix[j]
    dA = -(np.outer(eta, ws.moment) + np.outer(ws.moment, eta))

    out = np.empty_like(Om)
    for j in range(m):
        L, S = ws.prefix[j], ws.suffix[j]
        Rj = Rs[j]
        dB2 = dL[j].T @ ws.A @ L
        dB2 = dB2 + dB2.T + L.T @ dA @ L
        dB1 = dS[j] @ E @ S.T
        dB1 = dB1 + dB1.T
        dG = -2.0 * (dB2 @ Rj @ ws.B1[j] + ws.B2[j] @ Rj @ dB1)
        out[j] = rhess_block(xf, ws, j, Om[j]) + skew(Rj.T @ dG)

    dM = dT @ E @ ws.T.T
    dM = dM + dM.T
    h_t = rhess_t_block(xf, ws, eta) + 2.0 * dM @ ws.moment
    return TangentVector(out, h_t)


def qf(B: np.ndarray) -> np.ndarray:
    """Orthogonal QR factor with nonnegative R diagonal and det forced to +1."""
    Q, R = np.linalg.qr(B)
    sgn = np.sign(np.diag(R))
    sgn[sgn == 0] = 1.0
    Q = Q * sgn
    if np.linalg.det(Q) < 0:
        Q[:, -1] = -Q[:, -1]
    return Q


def retract(xf: ReflectionTransform, direction: TangentVector, step: float = 1.0) -> ReflectionTransform:
    if step == 0.0:
        return xf
    Rs = xf.rotations
    new = np.stack([qf(R + step * R @ Om) for R, Om in zip(Rs, direction.omegas)])
    return ReflectionTransform(new, xf.translation + step * direction.eta_t, check=False)


class CriticalRotation(NamedTuple):
    rotation: np.ndarray
    eigenvalues: np.ndarray
    ambiguous: bool


def critical_rotation(ws_or_A) -> CriticalRotation:
    """Eigenvectors of ``A`` as columns, eigenvalues descending, det +1.

    The last column (smallest eigenvalue) is the mirror normal of the
    rotation-optimal reflection for the fixed ``t`` and correspondence.
    ``ambiguous`` flags a (near-)repeated smallest eigenvalue, where that
    normal is not unique.
    """
    A = ws_or_A.A if isinstance(ws_or_A, GradientWorkspace) else np.asarray(ws_or_A, dtype=float)
    A = 0.5 * (A + A.T)
    w, V = np.linalg.eigh(A)
    order = np.argsort(-w, kind="stable")
    w, V = w[order], V[:, order]
    if np.linalg.det(V) < 0:
        V[:, -1] = -V[:, -1]
    gap = w[-2] - w[-1] if w.shape[0] > 1 else np.inf
    scale = max(1.0, float(np.abs(w).max()))
    return CriticalRotation(V, w, bool(gap < 1e-10 * scale))
