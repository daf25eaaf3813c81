"""Riemannian trust-region minimisation of the symmetry error at fixed correspondences."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import (
    Correspondence,
    PointCloud,
    ReflectionTransform,
    symmetry_error,
    symmetry_error_change,
)
from .manifold import (
    TangentVector,
    critical_rotation,
    retract,
    rgrad,
    rhess_apply,
    workspace,
)

log = logging.getLogger(__name__)

EPS = np.finfo(float).eps
FLAT_CURVATURE = 1e-6


class NumericalFailure(ArithmeticError):
    def __init__(self, msg, last_transform: ReflectionTransform, last_cost: float):
        super().__init__(msg)
        self.last_transform = last_transform
        self.last_cost = last_cost


@dataclass(frozen=True)
class TrustRegionConfig:
    """Trust-region parameters.

    ``None`` for ``initial_radius``/``max_radius``/``grad_tol`` selects the
    dimension- and cost-dependent defaults, see :meth:`resolved`.
    """

    initial_radius: float | None = None
    max_radius: float | None = None
    accept_ratio: float = 0.1
    max_outer_iters: int = 200
    grad_tol: float | None = None
    tcg_max_iters: int | None = None
    tcg_kappa: float = 0.1
    tcg_theta: float = 1.0
    canonicalize: bool = True

    def __post_init__(self):
        if not 0.0 < self.accept_ratio < 0.25:
            raise ValueError("accept_ratio must lie in (0, 1/4)")
        if self.initial_radius is not None and self.initial_radius <= 0:
            raise ValueError("initial_radius must be positive")
        if (self.initial_radius is not None and self.max_radius is not None
                and self.max_radius < self.initial_radius):
            raise ValueError("max_radius must be >= initial_radius")
        if self.grad_tol is not None and self.grad_tol <= 0:
            raise ValueError("grad_tol must be positive")

    def resolved(self, d: int, initial_cost: float) -> "TrustRegionConfig":
        r0 = self.initial_radius if self.initial_radius is not None else 0.1 * np.sqrt(d - 1)
        rmax = self.max_radius if self.max_radius is not None else 10.0 * r0
        tol = self.grad_tol if self.grad_tol is not None else 1e-8 * (1.0 + initial_cost)
        ndof = (d - 1) * d * (d - 1) // 2 + d
        tcg = self.tcg_max_iters if self.tcg_max_iters is not None else ndof
        return replace(self, initial_radius=r0, max_radius=rmax, grad_tol=tol, tcg_max_iters=tcg)


@dataclass
class SolveReport:
    final_transform: ReflectionTransform
    final_cost: float
    grad_norm: float
    outer_iters: int
    converged: bool
    cost_history: list = field(default_factory=list)
    canonicalized: bool = False


def cost_slack(cloud: PointCloud, cost: float = 0.0) -> float:
    """Rounding floor of the symmetry error near ``cost`` for this cloud.

    Residuals carry an absolute error of a few ulps of the coordinates, so
    two costs closer than this cannot be told apart in double precision.
    """
    X = cloud.points
    scale = float(np.sqrt(np.sum(X * X)))
    return 16.0 * EPS * scale * (np.sqrt(abs(cost)) + EPS * scale * cloud.dim)


def truncated_cg(grad: TangentVector, hess, radius: float, max_iters: int,
                 kappa: float, theta: float):
    """Steihaug-Toint truncated CG for ``min <g,e> + 1/2 <e, H e>`` with ``|e| <= radius``.

    Works on flat coordinates, where the manifold metric is the dot product.
    Returns ``(eta, H eta, reason)``.
    """
    g = grad.flat()
    d = grad.dim
    eta = np.zeros_like(g)
    Heta = np.zeros_like(g)
    r = g.copy()
    rr = r @ r
    r0 = np.sqrt(rr)
    delta = -r
    e_Pe = 0.0
    e_Pd = 0.0
    d_Pd = rr
    target = r0 * min(r0**theta, kappa)
    h_scale = None

    for j in range(max_iters):
        Hd = hess(TangentVector.from_flat(d, delta)).flat()
        curv = delta @ Hd
        if h_scale is None:
            h_scale = abs(curv) / d_Pd
        # curvature at rounding level relative to the Hessian scale is
        # treated as flat: the parameterisation has exact null directions
        flat = abs(curv) <= FLAT_CURVATURE * h_scale * d_Pd
        if flat and j > 0:
            return eta, Heta, "flat curvature"
        alpha = rr / curv if curv > 0.0 and not flat else np.inf
        e_Pe_new = e_Pe + 2.0 * alpha * e_Pd + alpha**2 * d_Pd
        if curv <= 0.0 or flat or e_Pe_new >= radius**2:
            tau = (-e_Pd + np.sqrt(max(e_Pd**2 + d_Pd * (radius**2 - e_Pe), 0.0))) / d_Pd
            eta = eta + tau * delta
            Heta = Heta + tau * Hd
            return eta, Heta, "negative curvature" if curv <= 0.0 else "boundary"
        eta = eta + alpha * delta
        Heta = Heta + alpha * Hd
        e_Pe = e_Pe_new
        r = r + alpha * Hd
        rr_new = r @ r
        if np.sqrt(rr_new) <= target:
            return eta, Heta, "converged"
        beta = rr_new / rr
        rr = rr_new
        delta = -r + beta * delta
        e_Pd = beta * (e_Pd + alpha * d_Pd)
        d_Pd = rr + beta**2 * d_Pd
    return eta, Heta, "max iters"


def canonical_factorization(cloud, corr, xf: ReflectionTransform) -> ReflectionTransform:
    """Equivalent transform whose product diagonalises ``A`` with descending eigenvalues."""
    ws = workspace(cloud, xf, corr)
    crit = critical_rotation(ws)
    return ReflectionTransform.from_product(crit.rotation, xf.translation)


def solve_transform(cloud: PointCloud, corr: Correspondence, init: ReflectionTransform,
                    cfg: TrustRegionConfig | None = None) -> SolveReport:
    """Minimise the symmetry error over rotations and translation with ``corr`` held fixed.

    Accepted iterates never increase the cost.  When ``cfg.canonicalize`` is
    set, a converged result is re-factored so that ``T^T A T`` is diagonal
    with descending entries, as long as that does not raise the cost beyond
    the rounding floor.
    """
    cfg = cfg or TrustRegionConfig()
    d = init.dim
    xf = init
    fx = symmetry_error(cloud, xf, corr)
    if not np.isfinite(fx):
        raise NumericalFailure("initial cost is not finite", xf, fx)
    cfg = cfg.resolved(d, fx)
    radius = cfg.initial_radius
    history = [fx]
    rho_reg = 1e3 * EPS**2 * max(1.0, abs(fx))
    noise = cost_slack(cloud, fx)

    ws = workspace(cloud, xf, corr)
    grad = rgrad(cloud, xf, corr, ws)
    gnorm = grad.norm()
    it = 0
    while gnorm > cfg.grad_tol and it < cfg.max_outer_iters:
        it += 1

        def hess(v, _xf=xf, _ws=ws):
            return rhess_apply(cloud, _xf, corr, v, _ws)

        eta, Heta, reason = truncated_cg(grad, hess, radius, cfg.tcg_max_iters,
                                         cfg.tcg_kappa, cfg.tcg_theta)
        step = TangentVector.from_flat(d, eta)
        model_decrease = -(grad.flat() @ eta + 0.5 * eta @ Heta)
        cand = retract(xf, step)
        f_cand = symmetry_error(cloud, cand, corr)
        if not np.isfinite(f_cand):
            raise NumericalFailure("non-finite cost during trust-region step", xf, fx)
        change = symmetry_error_change(cloud, xf, cand, corr)
        rho = (-change + rho_reg) / (model_decrease + rho_reg) if model_decrease > -rho_reg else -np.inf
        step_norm = np.sqrt(eta @ eta)

        if model_decrease <= noise and abs(change) <= noise:
            # the cost cannot resolve the step; let the gradient decide
            g_cand = rgrad(cloud, cand, corr)
            if g_cand.norm() < gnorm:
                xf, fx = cand, min(f_cand, fx)
                ws = workspace(cloud, xf, corr)
                grad = g_cand
                gnorm = grad.norm()
                history.append(fx)
                noise = cost_slack(cloud, fx)
            else:
                radius *= 0.25
        else:
            if rho < 0.25:
                radius *= 0.25
            elif rho > 0.75 and reason in ("boundary", "negative curvature"):
                radius = min(2.0 * radius, cfg.max_radius)
            if rho > cfg.accept_ratio and change <= 0.0:
                # the recomputed cost can sit an ulp above the old one
                xf, fx = cand, min(f_cand, fx)
                ws = workspace(cloud, xf, corr)
                grad = rgrad(cloud, xf, corr, ws)
                gnorm = grad.norm()
                history.append(fx)
                noise = cost_slack(cloud, fx)
        log.debug("tr it=%d f=%.3e |g|=%.3e rho=%.3g r=%.3g tcg=%s", it, fx, gnorm, rho, radius, reason)
        if radius < 1e-14 or step_norm == 0.0:
            break

    converged = gnorm <= cfg.grad_tol
    report = SolveReport(xf, fx, gnorm, it, converged, history)
    if cfg.canonicalize and converged:
        canon = canonical_factorization(cloud, corr, xf)
        f_canon = symmetry_error(cloud, canon, corr)
        if symmetry_error_change(cloud, xf, canon, corr) <= cost_slack(cloud, fx):
            g_canon = rgrad(cloud, canon, corr).norm()
            if g_canon <= cfg.grad_tol:
                # a swap within the rounding floor keeps the reported cost
                f_rep = min(f_canon, fx)
                report = SolveReport(canon, f_rep, g_canon, it, True, history + [f_rep], True)
    return report
