"""Final cost as a function of the forced initial axis angle (2-D, no noise).

    python scripts/basin.py --seeds 20 --step 1

Prints one row per start angle: the angle, the share of seeds that reach
cost < 1e-16, and the median final cost.  The optimum axis is at 90 degrees.
"""
import argparse

import numpy as np

from mirrorfit.geometry import PointCloud, hyperplane_from_transform, reflect_array, transform_from_angles
from mirrorfit.pipeline import DetectConfig, detect


def run(start_deg: float, seed: int, half: int = 50) -> float:
    rng = np.random.default_rng(seed)
    xf = transform_from_angles([np.deg2rad(90.0)], np.zeros(2))
    base = rng.random((2, half))
    X = np.hstack([base, reflect_array(base, xf)])
    centre = X.mean(axis=1)
    init = hyperplane_from_transform(transform_from_angles([np.deg2rad(start_deg)], centre))
    return detect(PointCloud(X), DetectConfig(rng_seed=seed), init=init, init_translation=centre).final_cost


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--step", type=float, default=1.0, help="angle step in degrees")
    ap.add_argument("--span", type=float, default=30.0, help="half-width around 90 degrees")
    args = ap.parse_args()
    print("start_deg,converged_share,median_cost")
    for a in np.arange(90.0 - args.span, 90.0 + args.span + 1e-9, args.step):
        costs = np.array([run(a, s) for s in range(args.seeds)])
        print(f"{a:.2f},{np.mean(costs < 1e-16):.3f},{np.median(costs):.3e}", flush=True)


if __name__ == "__main__":
    main()
