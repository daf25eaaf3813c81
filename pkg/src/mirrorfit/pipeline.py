"""End-to-end detection: randomized initialisation then alternating minimisation.

Each alternation solves for the transform at fixed correspondences and then
for the correspondences at the fixed transform.  Both half-steps can only
lower the symmetry error, so the recorded cost sequence is non-increasing.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .assignment import (
    AssignmentProblem,
    residual_scores,
    score_matrix,
    solve_assignment,
    solve_assignment_capped,
)
from .geometry import (
    ContractError,
    Correspondence,
    Hyperplane,
    PointCloud,
    ReflectionTransform,
    householder_reflect,
    hyperplane_from_transform,
    reflect_array,
    symmetry_error,
    transform_from_plane,
)
from .solver import TrustRegionConfig, solve_transform

log = logging.getLogger(__name__)


class InitializationFailure(RuntimeError):
    pass


@dataclass(frozen=True)
class DetectConfig:
    """Detection parameters.

    ``eps_theta`` is in radians.  Clouds larger than ``subsample_threshold``
    are reduced to that many points (seeded) before detection.
    """

    eps_theta: float = float(np.deg2rad(5.0))
    eps_d: float = 0.05
    init_trials: int = 10
    max_alternations: int = 50
    cost_rel_tol: float = 1e-10
    pair_cap: int | None = None
    rng_seed: int = 0
    tr: TrustRegionConfig = field(default_factory=TrustRegionConfig)
    subsample_threshold: int = 2000
    init_candidates_per_trial: int = 64

    def __post_init__(self):
        if not 0.0 < self.eps_theta < np.pi / 2:
            raise ValueError("eps_theta must lie in (0, pi/2)")
        if not 0.0 < self.eps_d < 1.0:
            raise ValueError("eps_d must lie in (0, 1)")
        if self.init_trials < 1:
            raise ValueError("init_trials must be >= 1")
        if self.max_alternations < 1:
            raise ValueError("max_alternations must be >= 1")
        if self.pair_cap is not None and self.pair_cap < 1:
            raise ValueError("pair_cap must be >= 1")
        if self.subsample_threshold < 4:
            raise ValueError("subsample_threshold must be >= 4")


@dataclass
class SymmetryResult:
    """Detected mirror.

    ``correspondence`` indexes the input cloud; points left out by
    subsampling or by the pair cap are unmatched (``-1``).  ``sample`` holds
    the indices that took part when the cloud was subsampled.
    """

    transform: ReflectionTransform
    plane: Hyperplane
    correspondence: Correspondence
    final_cost: float
    alternations: int
    init_plane: Hyperplane
    cost_history: list = field(default_factory=list)
    stop_reason: str = ""
    sample: np.ndarray | None = None


def pair_planes(x, Y):
    """Bisector planes of ``x`` with each column of ``Y``: unit normals and offsets ``c``.

    The plane of pair ``(x, y)`` is ``eta . z = c`` with ``eta = (x - y)/|x - y|``
    and ``c = eta . (x + y)/2``.  Coincident pairs get a zero normal.
    """
    diff = x[:, None] - Y
    norm = np.linalg.norm(diff, axis=0)
    safe = np.where(norm > 0, norm, 1.0)
    eta = np.where(norm > 0, diff / safe, 0.0)
    c = np.sum(eta * (x[:, None] + Y), axis=0) / 2.0
    return eta, c, norm > 0


def _agreement(X, p, q, cfg):
    """Boolean matrix ``ok[i, j]``: plane of ``(p, i)`` agrees with plane of ``(q, j)``."""
    eta_p, c_p, valid_p = pair_planes(X[:, p], X)
    eta_q, _, valid_q = pair_planes(X[:, q], X)
    # normals are only defined up to sign, so the angle test uses |cos|
    cos = np.abs(eta_p.T @ eta_q)
    angle_ok = cos >= np.cos(cfg.eps_theta)
    d_q = np.abs(eta_p.T @ X[:, q] - c_p)  # (n,)
    d_j = np.abs(eta_p.T @ X - c_p[:, None])  # (n, n)
    hi = np.maximum(d_q[:, None], d_j)
    lo = np.minimum(d_q[:, None], d_j)
    # both distances zero means the same plane offset
    ratio = np.where(hi > 0, lo / np.where(hi > 0, hi, 1.0), 1.0)
    ok = angle_ok & (ratio >= 1.0 - cfg.eps_d)
    ok &= valid_p[:, None] & valid_q[None, :]
    n = X.shape[1]
    mask = np.ones(n, dtype=bool)
    mask[[p, q]] = False
    return ok & mask[:, None] & mask[None, :]


def reflection_score(tree: cKDTree, X: np.ndarray, normal, offset: float, cap: float) -> float:
    """Mean capped squared distance from reflected points to their nearest neighbours."""
    Xm = X - 2.0 * np.outer(normal, normal @ X + offset)
    dist, _ = tree.query(Xm.T)
    return float(np.mean(np.minimum(dist, cap) ** 2))


def init_candidates(cloud: PointCloud, cfg: DetectConfig, rng: np.random.Generator):
    """Median plane and translation from randomly voted candidate pairs.

    Each trial draws points ``p`` and ``q``.  For each pair ``(p, i)``, in
    random order, one ``(q, j)`` whose bisector plane agrees with it is drawn
    uniformly, which is the same as sampling ``Q`` without replacement until
    agreement.  Of the first ``cfg.init_candidates_per_trial`` agreeing
    combinations the one whose averaged plane best maps the cloud onto
    itself is the trial's vote.  Returns the plane through ``t0`` with the
    componentwise-median normal, and ``t0``.
    """
    n = cloud.count
    if n < 4:
        raise InitializationFailure(f"initialisation needs at least 4 points, got {n}")
    X = cloud.points
    tree = cKDTree(X.T)
    nn, _ = tree.query(X.T, k=2)
    cap = 4.0 * float(np.median(nn[:, 1])) if n > 1 else 1.0
    normals, mids = [], []
    for _ in range(cfg.init_trials):
        p, q = rng.choice(n, size=2, replace=False)
        ok = _agreement(X, p, q, cfg)
        rows = [i for i in rng.permutation(n) if ok[i].any()][: cfg.init_candidates_per_trial]
        best = None
        for i in rows:
            js = np.flatnonzero(ok[i])
            j = js[rng.integers(js.size)]
            e1 = X[:, p] - X[:, i]
            e2 = X[:, q] - X[:, j]
            e1 = e1 / np.linalg.norm(e1)
            e2 = e2 / np.linalg.norm(e2)
            if e1 @ e2 < 0:
                e2 = -e2
            eta = e1 + e2
            eta = eta / np.linalg.norm(eta)
            mid = 0.25 * (X[:, p] + X[:, i] + X[:, q] + X[:, j])
            score = reflection_score(tree, X, eta, -float(eta @ mid), cap)
            if best is None or score < best[0]:
                best = (score, (p, i), (q, j))
        if best is None:
            continue
        for a, b in best[1:]:
            diff = X[:, a] - X[:, b]
            normals.append(diff / np.linalg.norm(diff))
            mids.append(0.5 * (X[:, a] + X[:, b]))
    if not normals:
        raise InitializationFailure(
            f"no agreeing pair planes in {cfg.init_trials} trials; "
            "try larger eps_theta / eps_d or more trials"
        )
    N = np.array(normals)
    N = N * np.where(N @ N[0] < 0, -1.0, 1.0)[:, None]
    eta = np.median(N, axis=0)
    if np.linalg.norm(eta) == 0.0:
        eta = N[0]
    t0 = np.median(np.array(mids), axis=0)
    eta = eta / np.linalg.norm(eta)
    return Hyperplane(eta, -float(eta @ t0)), t0


def assign(cloud: PointCloud, xf: ReflectionTransform, cap: int | None = None) -> Correspondence:
    """Optimal correspondences at a fixed transform.

    Coordinates are centred at the translation, where the score matrix is
    symmetric.  With a cap the residual form of the score is used so that
    entries compare across pairs.
    """
    t = xf.translation[:, None]
    X = cloud.points - t
    Xm = reflect_array(cloud.points, xf) - t
    return _solve(X, Xm, cap)


def _solve(X, Xm, cap):
    if cap is None:
        return solve_assignment(AssignmentProblem(score_matrix(X, Xm)))
    k = min(cap, X.shape[1] // 2)
    return solve_assignment_capped(AssignmentProblem(residual_scores(X, Xm), k), k)


def initial_correspondence(cloud: PointCloud, plane: Hyperplane, cap: int | None = None) -> Correspondence:
    """Assignment between the cloud and its Householder reflection in ``plane``."""
    foot = plane.foot[:, None]
    X = cloud.points - foot
    Xm = householder_reflect(cloud, plane).points - foot
    return _solve(X, Xm, cap)


def subsample_indices(n: int, cfg: DetectConfig) -> np.ndarray | None:
    if n <= cfg.subsample_threshold:
        return None
    rng = np.random.default_rng([cfg.rng_seed, 1])
    return np.sort(rng.choice(n, size=cfg.subsample_threshold, replace=False))


def detect(cloud: PointCloud, cfg: DetectConfig | None = None, init: Hyperplane | None = None,
           init_translation=None) -> SymmetryResult:
    """Find the mirror plane and correspondences of ``cloud``.

    ``init`` skips the randomized initialisation and starts from the given
    plane (with ``init_translation`` projected onto it, default its foot).
    """
    cfg = cfg or DetectConfig()
    if cloud.count < 4:
        raise ContractError(f"detection needs at least 4 points, got {cloud.count}")
    sample = subsample_indices(cloud.count, cfg)
    work = cloud if sample is None else cloud.subset(sample)

    rng = np.random.default_rng(cfg.rng_seed)
    if init is None:
        init_plane, t0 = init_candidates(work, cfg, rng)
    else:
        init_plane = init
        t0 = init.foot if init_translation is None else np.asarray(init_translation, dtype=float)
    corr = initial_correspondence(work, init_plane, cfg.pair_cap)
    xf = transform_from_plane(init_plane, t0)
    cost = symmetry_error(work, xf, corr)
    history = [cost]
    seen = {corr}
    reason = "max alternations"
    alternations = 0
    for alternations in range(1, cfg.max_alternations + 1):
        start = cost
        report = solve_transform(work, corr, xf, cfg.tr)
        xf, cost = report.final_transform, min(report.final_cost, cost)
        history.append(cost)

        new = assign(work, xf, cfg.pair_cap)
        new_cost = symmetry_error(work, xf, new)
        if new == corr:
            history.append(cost)
            reason = "fixed point"
            break
        if new_cost > cost:
            # capped filtering is not exact; keep the better matching
            history.append(cost)
            reason = "no improving assignment"
            break
        corr, cost = new, new_cost
        history.append(cost)
        if corr in seen:
            reason = "repeated assignment"
            break
        seen.add(corr)
        log.debug("alternation %d cost %.6e", alternations, cost)
        if start - cost <= cfg.cost_rel_tol * max(start, np.finfo(float).tiny):
            reason = "relative decrease below tolerance"
            break

    if sample is not None:
        mirror = np.full(cloud.count, -1, dtype=np.int64)
        m = corr.mirror
        mirror[sample[m >= 0]] = sample[m[m >= 0]]
        full = Correspondence(mirror)
    else:
        full = corr
    return SymmetryResult(
        transform=xf,
        plane=hyperplane_from_transform(xf),
        correspondence=full,
        final_cost=cost,
        alternations=alternations,
        init_plane=init_plane,
        cost_history=history,
        stop_reason=reason,
        sample=sample,
    )
