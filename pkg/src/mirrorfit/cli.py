"""``mirrorfit`` command line: detect, synth, eval and sweep.

Exit codes: 0 success, 1 numerical failure, 2 bad input or flags,
3 initialisation failure.  Randomness comes from numpy's PCG64 generator
seeded with ``--seed``.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import formats
from .geometry import ContractError, random_transform, transform_from_angles
from .pipeline import DetectConfig, InitializationFailure, assign, detect
from .solver import NumericalFailure
from .synthbench import (
    DISTANCE_THRESHOLDS,
    GRID_COUNTS,
    SynthSpec,
    benchmark_grid_2d,
    benchmark_grid_3d,
    curves_from_outcomes,
    generate,
    pair_metrics,
    random_grid,
    run_batch,
)

log = logging.getLogger("mirrorfit")

EXIT_OK, EXIT_NUMERIC, EXIT_INPUT, EXIT_INIT = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _detect_flags(p):
    p.add_argument("--max-pairs", type=int, default=None, metavar="K", help="match at most K pairs")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--eps-theta", type=float, default=5.0, help="plane agreement angle, degrees")
    p.add_argument("--eps-d", type=float, default=0.05, help="plane agreement distance ratio")
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--tol", type=float, default=1e-10, help="relative cost decrease to stop")
    p.add_argument("--subsample", type=int, default=2000, metavar="N",
                   help="detect on N random points when the cloud is larger")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mirrorfit", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("detect", help="find the mirror plane of a point file")
    p.add_argument("--input", required=True, help="point file (.txt/.csv/.xyz or ASCII .ply)")
    p.add_argument("--out", help="write the JSON document here instead of stdout")
    _detect_flags(p)

    p = sub.add_parser("synth", help="write synthetic symmetric point files")
    p.add_argument("--dim", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--sigma2", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--angles", type=float, nargs="+", metavar="DEG",
                   help="d-1 plane angles in degrees (default: random plane)")
    p.add_argument("--allow-self", action="store_true", help="odd n: put one point on the mirror")
    p.add_argument("--out", help="point file path (sidecar gets .truth.json)")
    p.add_argument("--paper-grid-2d", dest="benchmark_grid_2d", action="store_true",
                   help="emit the full 2-D grid (1254 instances) into --out-dir")
    p.add_argument("--out-dir", help="directory for --paper-grid-2d")

    p = sub.add_parser("eval", help="score detection documents against sidecars (CSV on stdout)")
    p.add_argument("--result", action="append", required=True, help="detection document")
    p.add_argument("--truth", action="append", required=True, help="matching ground-truth sidecar")

    p = sub.add_parser("sweep", help="detect over a synthetic grid and print curves (CSV)")
    p.add_argument("--grid", choices=["2d", "3d", "random"], required=True)
    p.add_argument("--dim", type=int, default=6, help="dimension for --grid random")
    p.add_argument("--sigma2", type=float, nargs="+", default=None)
    p.add_argument("--counts", type=int, nargs="+", default=list(GRID_COUNTS))
    p.add_argument("--normals", type=int, default=20, help="planes per count for --grid random")
    p.add_argument("--instances", action="store_true", help="also print per-instance rows")
    _detect_flags(p)
    return parser


def _config(args) -> DetectConfig:
    try:
        return DetectConfig(
            eps_theta=float(np.deg2rad(args.eps_theta)),
            eps_d=args.eps_d,
            init_trials=args.trials,
            cost_rel_tol=args.tol,
            pair_cap=args.max_pairs,
            rng_seed=args.seed,
            subsample_threshold=args.subsample,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _write(text: str, out):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_detect(args) -> int:
    cfg = _config(args)
    try:
        cloud = formats.read_points(args.input)
    except OSError as exc:
        raise UsageError(f"cannot read {args.input}: {exc.strerror}") from None
    res = detect(cloud, cfg)
    _write(formats.dumps(formats.result_document(res, args.seed)), args.out)
    return EXIT_OK


def _synth_one(spec: SynthSpec, out: Path):
    cloud, truth = generate(spec)
    sidecar = out.with_name(out.name + ".truth.json")
    header = f"dim={spec.dim} n={spec.count} sigma2={spec.sigma2} seed={spec.seed}"
    out.write_text(formats.format_points(cloud, header))
    sidecar.write_text(formats.dumps(formats.truth_document(spec, truth, out.name)))


def cmd_synth(args) -> int:
    if args.benchmark_grid_2d:
        if not args.out_dir:
            raise UsageError("--paper-grid-2d needs --out-dir")
        root = Path(args.out_dir)
        root.mkdir(parents=True, exist_ok=True)
        specs = benchmark_grid_2d(seed=args.seed)
        for k, spec in enumerate(specs):
            _synth_one(spec, root / f"grid2d_{k:04d}.txt")
        log.info("wrote %d instances to %s", len(specs), root)
        return EXIT_OK
    if args.dim is None or args.n is None or args.out is None:
        raise UsageError("synth needs --dim, --n and --out (or --paper-grid-2d)")
    d, n = args.dim, args.n
    if d < 2 or n < 2:
        raise UsageError("--dim and --n must be at least 2")
    if args.sigma2 < 0:
        raise UsageError("--sigma2 must be non-negative")
    if n % 2 and not args.allow_self:
        raise UsageError(f"--n {n} is odd; points come in mirror pairs (use --allow-self)")
    if args.angles is not None:
        if len(args.angles) != d - 1:
            raise UsageError(f"--angles needs {d - 1} values for --dim {d}")
        xf = transform_from_angles(np.deg2rad(args.angles), np.zeros(d))
    else:
        rng = np.random.default_rng([args.seed, 2])
        xf = random_transform(rng, d).with_translation(np.zeros(d))
    spec = SynthSpec(d, n // 2, xf, args.sigma2, args.seed, self_count=n % 2)
    _synth_one(spec, Path(args.out))
    return EXIT_OK


def _fmt(x) -> str:
    return "" if x is None else repr(float(x))


def cmd_eval(args) -> int:
    if len(args.result) != len(args.truth):
        raise UsageError("give one --truth per --result")
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(formats.CSV_HEADER)
    for k, (rpath, tpath) in enumerate(zip(args.result, args.truth)):
        try:
            tdoc = json.loads(Path(tpath).read_text())
            rdoc = json.loads(Path(rpath).read_text())
            truth, s2 = formats.load_truth(tdoc)
            cloud = formats.read_points(Path(tpath).parent / tdoc["points_file"])
            if cloud.count != tdoc["count"]:
                raise formats.ParseError(f"{tpath}: point file has {cloud.count} points")
            plane, corr = formats.load_result(rdoc, cloud.count)
        except (OSError, KeyError, json.JSONDecodeError, formats.ParseError, ContractError) as exc:
            raise UsageError(f"instance {k} ({rpath}, {tpath}): {exc}") from None
        name = Path(rpath).stem
        X = cloud.points
        idx = corr.matched
        gaps = np.linalg.norm(X[:, corr.mirror[idx]] - X[:, truth.pairs.mirror[idx]], axis=0)
        for tau in DISTANCE_THRESHOLDS:
            rate = float(np.mean(gaps < tau)) if gaps.size else 0.0
            writer.writerow([name, _fmt(s2), _fmt(tau), "correspondence_rate", _fmt(rate)])
        det = pair_metrics(cloud, corr, plane)
        ref = pair_metrics(cloud, assign(cloud, truth.transform), truth.plane)
        angle = np.rad2deg(plane.angle_to(truth.plane))
        for metric, value in (("e_d", det.ed), ("e_m", det.em), ("e_d_reference", ref.ed),
                              ("e_m_reference", ref.em), ("plane_angle_deg", angle)):
            writer.writerow([name, _fmt(s2), "", metric, _fmt(value)])
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _config(args)
    if args.grid == "2d":
        batch = benchmark_grid_2d(counts=args.counts, seed=args.seed,
                              **({"sigma2_levels": args.sigma2} if args.sigma2 else {}))
    elif args.grid == "3d":
        batch = benchmark_grid_3d(counts=args.counts, seed=args.seed,
                              **({"sigma2_levels": args.sigma2} if args.sigma2 else {}))
    else:
        batch = random_grid(args.dim, counts=args.counts, normals=args.normals, seed=args.seed,
                            **({"sigma2_levels": args.sigma2} if args.sigma2 else {}))
    outcomes = run_batch(batch, replace(cfg, rng_seed=args.seed))
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(formats.CSV_HEADER)
    if args.instances:
        for o in outcomes:
            if o.error is not None:
                writer.writerow([o.index, _fmt(o.sigma2), "", "failure", "1.0"])
                continue
            for metric, value in (("e_d", o.ed), ("e_m", o.em), ("e_d_reference", o.ed_truth),
                                  ("e_m_reference", o.em_truth),
                                  ("plane_angle_deg", np.rad2deg(o.angle))):
                writer.writerow([o.index, _fmt(o.sigma2), "", metric, _fmt(value)])
    for c in curves_from_outcomes(outcomes):
        for thr, rate in zip(c.thresholds, c.rates):
            writer.writerow([f"sigma2={c.sigma2:g}", _fmt(c.sigma2), _fmt(thr), c.metric, _fmt(rate)])
        writer.writerow([f"sigma2={c.sigma2:g}", _fmt(c.sigma2), "", "failures", _fmt(c.failures)])
    return EXIT_OK


COMMANDS = {"detect": cmd_detect, "synth": cmd_synth, "eval": cmd_eval, "sweep": cmd_sweep}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"mirrorfit: {exc}", file=sys.stderr)
        return EXIT_INPUT
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="mirrorfit: %(message)s", stream=sys.stderr)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"mirrorfit: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except formats.ParseError as exc:
        print(f"mirrorfit: {getattr(args, 'input', '')}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ContractError as exc:
        print(f"mirrorfit: invalid input: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except InitializationFailure as exc:
        print(f"mirrorfit: initialisation failed: {exc}", file=sys.stderr)
        return EXIT_INIT
    except NumericalFailure as exc:
        print(f"mirrorfit: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
