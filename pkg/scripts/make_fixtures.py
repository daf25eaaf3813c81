"""Regenerate the regression fixtures under tests/fixtures.

Run after an intentional behaviour change, inspect the diff, then commit:

    python scripts/make_fixtures.py
"""
import contextlib
import io
import json
import sys
import tempfile
from pathlib import Path

import numpy as np

from mirrorfit.cli import main
from mirrorfit.pipeline import DetectConfig
from mirrorfit.synthbench import curves_from_outcomes, random_grid, run_batch

ROOT = Path(__file__).resolve().parents[1] / "tests" / "fixtures"
SWEEP_CONFIG = DetectConfig(eps_theta=float(np.deg2rad(20.0)), eps_d=0.3)
MINI_BATCH = [(2, 20, 0.0, 1), (2, 20, 0.01, 2), (3, 30, 0.005, 3)]


def sweep_fixture() -> dict:
    batch = random_grid(6, counts=(100,), normals=3, seed=0)
    curves = curves_from_outcomes(run_batch(batch, SWEEP_CONFIG, workers=1))
    return {
        "dim": 6, "count": 100, "normals": 3, "seed": 0,
        "curves": [{"metric": c.metric, "sigma2": c.sigma2, "failures": c.failures,
                    "rates": c.rates.tolist()} for c in curves],
    }


def run_cli(args) -> str:
    out = io.StringIO()
    with contextlib.redirect_stdout(out):
        code = main(args)
    if code != 0:
        raise SystemExit(f"mirrorfit {' '.join(args)} exited {code}")
    return out.getvalue()


def eval_fixture() -> str:
    """Synthesise, detect and evaluate the mini-batch; returns the CSV text."""
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        flags = []
        for k, (d, n, s2, seed) in enumerate(MINI_BATCH):
            pts = tmp / f"inst{k}.txt"
            run_cli(["synth", "--dim", str(d), "--n", str(n), "--sigma2", str(s2),
                     "--seed", str(seed), "--out", str(pts)])
            res = tmp / f"inst{k}.json"
            run_cli(["detect", "--input", str(pts), "--seed", str(seed), "--eps-theta", "20",
                     "--eps-d", "0.3", "--out", str(res)])
            flags += ["--result", str(res), "--truth", f"{pts}.truth.json"]
        return run_cli(["eval", *flags])


if __name__ == "__main__":
    ROOT.mkdir(parents=True, exist_ok=True)
    (ROOT / "sweep_d6_n100.json").write_text(json.dumps(sweep_fixture(), indent=1) + "\n")
    (ROOT / "eval_mini_batch.csv").write_text(eval_fixture())
    print(f"wrote fixtures to {ROOT}", file=sys.stderr)
