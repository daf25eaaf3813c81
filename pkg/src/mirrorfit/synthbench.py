"""Synthetic mirror-symmetric point sets and the metrics used to score detections.

Base points are uniform in ``[0, 1]^d`` and reflected in a plane through the
origin, so the two halves sit on either side of the mirror; Gaussian noise
with variance ``sigma2`` per coordinate is then added to every point.
"""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import (
    ContractError,
    Correspondence,
    Hyperplane,
    PointCloud,
    ReflectionTransform,
    hyperplane_from_transform,
    random_transform,
    reflect_array,
    transform_from_angles,
)
from .pipeline import DetectConfig, InitializationFailure, assign, detect
from .solver import NumericalFailure

DISTANCE_THRESHOLDS = np.round(np.arange(0, 35) * 0.01, 2)
ANGLE_THRESHOLDS_DEG = np.round(np.arange(0, 501) * 0.01, 2)
GRID_COUNTS = (50, 100, 150, 200, 250, 300)
GRID_ORIENTATIONS_2D = tuple(range(-90, 91, 10))
GRID_ANGLES_3D = (-30, 0, 35, 80)
GRID_SIGMA2_LOW_D = tuple(np.round(np.arange(11) * 0.01, 2))
GRID_SIGMA2_HIGH_D = tuple(np.round(np.arange(6) * 0.02, 2))


@dataclass(frozen=True)
class SynthSpec:
    """One synthetic instance.  ``self_count`` points are placed on the mirror."""

    dim: int
    half_count: int
    transform: ReflectionTransform
    sigma2: float = 0.0
    seed: int = 0
    self_count: int = 0

    def __post_init__(self):
        if self.dim < 2 or self.transform.dim != self.dim:
            raise ContractError("transform dimension must equal dim >= 2")
        if self.half_count < 1 or self.self_count < 0:
            raise ContractError("half_count must be >= 1 and self_count >= 0")
        if not self.sigma2 >= 0:
            raise ContractError("sigma2 must be non-negative")

    @property
    def count(self) -> int:
        return 2 * self.half_count + self.self_count


@dataclass(frozen=True)
class GroundTruth:
    """True pairing and plane; the box is that of the noise-free points."""

    pairs: Correspondence
    plane: Hyperplane
    transform: ReflectionTransform
    bbox_lo: np.ndarray
    bbox_hi: np.ndarray

    @property
    def bbox_center(self) -> np.ndarray:
        return 0.5 * (self.bbox_lo + self.bbox_hi)

    @property
    def bbox_scale(self) -> float:
        """Shortest side of the box."""
        return float(np.min(self.bbox_hi - self.bbox_lo))


@dataclass(frozen=True)
class EvalCurves:
    metric: str
    sigma2: float
    thresholds: np.ndarray
    rates: np.ndarray
    instances: int = 0
    failures: int = 0


def generate(spec: SynthSpec) -> tuple[PointCloud, GroundTruth]:
    """Draw the cloud: ``x_1..x_h``, their reflections, optional on-plane points, then noise."""
    rng = np.random.default_rng(spec.seed)
    d, h = spec.dim, spec.half_count
    xf = spec.transform
    plane = hyperplane_from_transform(xf)
    base = rng.random((d, h))
    parts = [base, reflect_array(base, xf)]
    if spec.self_count:
        on = rng.random((d, spec.self_count))
        on = on - np.outer(plane.normal, plane.signed_distance(on))
        parts.append(on)
    clean = np.hstack(parts)
    noisy = clean + np.sqrt(spec.sigma2) * rng.standard_normal(clean.shape)
    mirror = np.concatenate([np.arange(h, 2 * h), np.arange(h), 2 * h + np.arange(spec.self_count)])
    truth = GroundTruth(Correspondence(mirror), plane, xf, clean.min(axis=1), clean.max(axis=1))
    return PointCloud(noisy), truth


@dataclass(frozen=True)
class PairMetrics:
    ed: float
    em: float
    pairs: int
    excluded: int


def pair_metrics(cloud: PointCloud, corr: Correspondence, plane: Hyperplane) -> PairMetrics:
    """Alignment ``e_d`` and midpoint offset ``e_m`` of matched segments.

    Averages run over matched entries ``i`` with ``mirror[i] != i``; a mutual
    pair therefore counts twice with equal terms.  Coincident pairs have no
    direction and are left out of both means, counted in ``excluded``.
    """
    idx = corr.matched
    idx = idx[corr.mirror[idx] != idx]
    X = cloud.points
    a = X[:, idx]
    b = X[:, corr.mirror[idx]]
    seg = a - b
    length = np.linalg.norm(seg, axis=0)
    keep = length > 0
    excluded = int(np.count_nonzero(~keep))
    if not np.any(keep):
        raise ContractError("no non-degenerate matched pairs to evaluate")
    z = seg[:, keep] / length[keep]
    ed = float(np.mean(np.abs(plane.normal @ z)))
    mid = 0.5 * (a[:, keep] + b[:, keep])
    em = float(np.mean(np.abs(plane.signed_distance(mid))))
    return PairMetrics(ed, em, int(np.count_nonzero(keep)), excluded)


def error_ed(cloud: PointCloud, corr: Correspondence, plane: Hyperplane) -> float:
    return pair_metrics(cloud, corr, plane).ed


def error_em(cloud: PointCloud, corr: Correspondence, plane: Hyperplane) -> float:
    return pair_metrics(cloud, corr, plane).em


def correspondence_rate(est: Correspondence, truth: GroundTruth, cloud: PointCloud, tau_d: float) -> float:
    """Share of estimated matches landing within ``tau_d`` (strictly) of the true partner."""
    if tau_d < 0:
        raise ContractError("tau_d must be non-negative")
    idx = est.matched
    if idx.size == 0:
        return 0.0
    X = cloud.points
    gap = np.linalg.norm(X[:, est.mirror[idx]] - X[:, truth.pairs.mirror[idx]], axis=0)
    return float(np.mean(gap < tau_d))


def _partner_gaps(est: Correspondence, truth: GroundTruth, cloud: PointCloud) -> np.ndarray:
    idx = est.matched
    X = cloud.points
    return np.linalg.norm(X[:, est.mirror[idx]] - X[:, truth.pairs.mirror[idx]], axis=0)


def plane_correct(est: Hyperplane, gt: Hyperplane, t_theta: float, t_d: float, bbox_scale: float,
                  center=None) -> bool:
    """Angle and offset test of an estimated plane.

    ``t_theta`` is in radians and ``t_d`` in units of ``bbox_scale``.  The
    offset test measures how far from ``gt`` the projection of ``center``
    (default: the foot of ``gt``) onto ``est`` lies.
    """
    if t_theta < 0 or t_d < 0 or bbox_scale <= 0:
        raise ContractError("thresholds must be non-negative and bbox_scale positive")
    c = gt.foot if center is None else np.asarray(center, dtype=float)
    on_est = c - est.signed_distance(c) * est.normal
    dist = abs(float(gt.signed_distance(on_est)))
    return est.angle_to(gt) < t_theta and dist < t_d * bbox_scale


# ---------------------------------------------------------------- corpora


def benchmark_grid_2d(sigma2_levels=GRID_SIGMA2_LOW_D, counts=GRID_COUNTS,
                  orientations_deg=GRID_ORIENTATIONS_2D, seed: int = 0) -> list[SynthSpec]:
    """Axis orientation x count x noise grid; 1254 instances by default."""
    specs = []
    for s2 in sigma2_levels:
        for n in counts:
            for theta in orientations_deg:
                xf = transform_from_angles([np.deg2rad(theta)], np.zeros(2))
                specs.append(SynthSpec(2, n // 2, xf, float(s2), seed + len(specs)))
    return specs


def benchmark_grid_3d(sigma2_levels=GRID_SIGMA2_LOW_D, counts=GRID_COUNTS, angles_deg=GRID_ANGLES_3D,
                  seed: int = 0) -> list[SynthSpec]:
    """Two-angle plane orientation x count x noise grid; 1056 instances by default."""
    specs = []
    for s2 in sigma2_levels:
        for n in counts:
            for a1 in angles_deg:
                for a2 in angles_deg:
                    xf = transform_from_angles(np.deg2rad([a1, a2]), np.zeros(3))
                    specs.append(SynthSpec(3, n // 2, xf, float(s2), seed + len(specs)))
    return specs


def random_grid(dim: int, sigma2_levels=GRID_SIGMA2_HIGH_D, counts=GRID_COUNTS, normals: int = 20,
                seed: int = 0) -> list[SynthSpec]:
    """Random plane normals through the origin; 720 instances per dimension by default."""
    rng = np.random.default_rng(seed)
    planes = [random_transform(rng, dim).with_translation(np.zeros(dim)) for _ in range(normals)]
    specs = []
    for s2 in sigma2_levels:
        for n in counts:
            for xf in planes:
                specs.append(SynthSpec(dim, n // 2, xf, float(s2), seed + len(specs)))
    return specs


# ---------------------------------------------------------------- sweeps


@dataclass(frozen=True)
class InstanceOutcome:
    """Detection on one instance, with its metrics or the failure message."""

    index: int
    sigma2: float
    error: str | None = None
    angle: float = np.nan
    cost: float = np.nan
    gaps: np.ndarray = field(default_factory=lambda: np.zeros(0))
    ed: float = np.nan
    em: float = np.nan
    ed_truth: float = np.nan
    em_truth: float = np.nan
    plane_ok_5deg: bool = False


def evaluate_instance(index: int, spec: SynthSpec, cfg: DetectConfig) -> InstanceOutcome:
    cloud, truth = generate(spec)
    try:
        res = detect(cloud, replace(cfg, rng_seed=spec.seed))
    except (InitializationFailure, NumericalFailure) as exc:
        return InstanceOutcome(index, spec.sigma2, error=f"{type(exc).__name__}: {exc}")
    det = pair_metrics(cloud, res.correspondence, res.plane)
    # reference: the true transform with the correspondences it induces
    ref = pair_metrics(cloud, assign(cloud, truth.transform, cfg.pair_cap), truth.plane)
    return InstanceOutcome(
        index,
        spec.sigma2,
        angle=res.plane.angle_to(truth.plane),
        cost=res.final_cost,
        gaps=_partner_gaps(res.correspondence, truth, cloud),
        ed=det.ed,
        em=det.em,
        ed_truth=ref.ed,
        em_truth=ref.em,
        plane_ok_5deg=plane_correct(res.plane, truth.plane, np.deg2rad(5.0), 0.1, truth.bbox_scale,
                                    truth.bbox_center),
    )


def worker_count() -> int:
    raw = os.environ.get("MIRRORFIT_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            raise ContractError(f"MIRRORFIT_THREADS must be an integer, got {raw!r}") from None
    return os.cpu_count() or 1


def _run(args):
    return evaluate_instance(*args)


def run_batch(batch, cfg: DetectConfig | None = None, workers: int | None = None) -> list[InstanceOutcome]:
    """Detect on every ``SynthSpec``; outcomes are returned in batch order."""
    cfg = cfg or DetectConfig()
    jobs = [(i, spec, cfg) for i, spec in enumerate(batch)]
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(jobs) <= 1:
        return [_run(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
        return list(pool.map(_run, jobs, chunksize=max(1, len(jobs) // (4 * workers))))


def curves_from_outcomes(outcomes) -> list[EvalCurves]:
    """Correspondence-rate and precision curves per noise level.

    The correspondence rate at a threshold is the mean of the per-instance
    rates; precision is the share of instances whose plane normal is within
    the angle threshold.  Failed instances are excluded and counted.
    """
    curves = []
    for s2 in sorted({o.sigma2 for o in outcomes}):
        group = [o for o in outcomes if o.sigma2 == s2]
        ok = [o for o in group if o.error is None]
        failures = len(group) - len(ok)
        if ok:
            rate = np.mean([
                np.mean(o.gaps[None, :] < DISTANCE_THRESHOLDS[:, None], axis=1) if o.gaps.size
                else np.zeros(DISTANCE_THRESHOLDS.size)
                for o in ok
            ], axis=0)
            angles = np.array([o.angle for o in ok])
            prec = np.mean(angles[None, :] < np.deg2rad(ANGLE_THRESHOLDS_DEG)[:, None], axis=1)
        else:
            rate = np.zeros(DISTANCE_THRESHOLDS.size)
            prec = np.zeros(ANGLE_THRESHOLDS_DEG.size)
        curves.append(EvalCurves("correspondence_rate", s2, DISTANCE_THRESHOLDS.copy(), rate, len(ok), failures))
        curves.append(EvalCurves("precision", s2, ANGLE_THRESHOLDS_DEG.copy(), prec, len(ok), failures))
    return curves


def sweep(batch, cfg: DetectConfig | None = None, workers: int | None = None) -> list[EvalCurves]:
    """Run detection over ``batch`` and return both curve families per noise level."""
    if not batch:
        raise ContractError("sweep needs a non-empty batch")
    return curves_from_outcomes(run_batch(batch, cfg, workers))
