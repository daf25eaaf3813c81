"""Detected versus ground-truth e_d/e_m and plane angle across noise levels.

    python scripts/robustness.py --dim 3 --per-level 20

Each instance keeps its seed across noise levels so only the noise scale
changes.  Uses the wide plane-agreement tolerances of the acceptance sweep.
"""
import argparse

import numpy as np

from mirrorfit.geometry import random_transform
from mirrorfit.pipeline import DetectConfig
from mirrorfit.synthbench import SynthSpec, run_batch


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--dim", type=int, default=3)
    ap.add_argument("--per-level", type=int, default=20)
    ap.add_argument("--half", type=int, default=50, help="points per side")
    ap.add_argument("--sigma2", type=float, nargs="+", default=[0.0, 0.02, 0.04, 0.06, 0.08, 0.1])
    ap.add_argument("--eps-theta", type=float, default=20.0, help="degrees")
    ap.add_argument("--eps-d", type=float, default=0.3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    d = args.dim
    rng = np.random.default_rng(args.seed)
    planes = [random_transform(rng, d).with_translation(np.zeros(d)) for _ in range(args.per_level)]
    batch = [SynthSpec(d, args.half, xf, s2, seed=args.seed * 10_000 + j)
             for s2 in args.sigma2 for j, xf in enumerate(planes)]
    cfg = DetectConfig(eps_theta=float(np.deg2rad(args.eps_theta)), eps_d=args.eps_d)
    outcomes = run_batch(batch, cfg)
    print("sigma2,ok,e_d,e_d_ref,e_m,e_m_ref,median_angle_deg,within_5deg")
    for s2 in args.sigma2:
        ok = [o for o in outcomes if o.sigma2 == s2 and o.error is None]
        if not ok:
            print(f"{s2:g},0,,,,,,")
            continue
        ang = np.rad2deg([o.angle for o in ok])
        cols = [np.mean([getattr(o, k) for o in ok]) for k in ("ed", "ed_truth", "em", "em_truth")]
        print(f"{s2:g},{len(ok)}," + ",".join(f"{c:.4f}" for c in cols)
              + f",{np.median(ang):.2f},{np.mean(ang < 5):.2f}")


if __name__ == "__main__":
    main()
