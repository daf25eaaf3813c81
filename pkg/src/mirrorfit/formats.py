"""Point files, detection documents and ground-truth sidecars.

Point files hold one point per line with comma- or whitespace-separated
fields; lines starting with ``#`` and blank lines are skipped.  Point ``i``
is the ``i``-th data line.  ASCII PLY vertex lists are read for 3-D input.
"""
from __future__ import annotations

import json
import re
from pathlib import Path

import numpy as np

from .geometry import Correspondence, Hyperplane, PointCloud, ReflectionTransform, transform_from_plane
from .pipeline import SymmetryResult
from .synthbench import GroundTruth, SynthSpec

SCHEMA_VERSION = 1
CSV_HEADER = ("instance", "sigma2", "threshold", "metric_name", "value")
_SPLIT = re.compile(r"[,\s]+")


class ParseError(ValueError):
    def __init__(self, msg, line: int | None = None):
        super().__init__(f"line {line}: {msg}" if line is not None else msg)
        self.line = line


def parse_points(text: str) -> PointCloud:
    rows = []
    width = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = [f for f in _SPLIT.split(line) if f]
        if width is None:
            width = len(fields)
        elif len(fields) != width:
            raise ParseError(f"expected {width} fields, found {len(fields)}", lineno)
        try:
            vals = [float(f) for f in fields]
        except ValueError:
            raise ParseError(f"non-numeric field in {line!r}", lineno) from None
        if not all(np.isfinite(vals)):
            raise ParseError("non-finite value", lineno)
        rows.append(vals)
    if width is None:
        raise ParseError("no data lines")
    if width < 2 or len(rows) < 2:
        raise ParseError(f"need at least 2 points of dimension >= 2, got {len(rows)} x {width}")
    return PointCloud.from_rows(rows)


def parse_ply(text: str) -> PointCloud:
    """Vertex positions (first three properties) from an ASCII PLY file."""
    lines = text.splitlines()
    if not lines or lines[0].strip() != "ply":
        raise ParseError("missing 'ply' magic", 1)
    count = None
    fmt_ok = False
    body = None
    in_vertex = False
    props = []
    for lineno, raw in enumerate(lines[1:], start=2):
        tok = raw.split()
        if not tok:
            continue
        if tok[0] == "format":
            fmt_ok = len(tok) >= 2 and tok[1] == "ascii"
        elif tok[0] == "element":
            in_vertex = len(tok) == 3 and tok[1] == "vertex"
            if in_vertex:
                count = int(tok[2])
        elif tok[0] == "property" and in_vertex:
            props.append(tok[-1])
        elif tok[0] == "end_header":
            body = lineno
            break
    if not fmt_ok:
        raise ParseError("only ASCII PLY is supported")
    if count is None or body is None or props[:3] != ["x", "y", "z"]:
        raise ParseError("PLY header needs a vertex element starting with x, y, z")
    rows = []
    for k in range(count):
        lineno = body + 1 + k
        if lineno - 1 >= len(lines):
            raise ParseError(f"expected {count} vertices, file ends early", lineno)
        tok = lines[lineno - 1].split()
        try:
            vals = [float(v) for v in tok[:3]]
        except ValueError:
            raise ParseError("non-numeric vertex", lineno) from None
        if len(vals) != 3 or not all(np.isfinite(vals)):
            raise ParseError("bad vertex", lineno)
        rows.append(vals)
    if len(rows) < 2:
        raise ParseError("need at least 2 vertices")
    return PointCloud.from_rows(rows)


def read_points(path) -> PointCloud:
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() == ".ply":
        return parse_ply(text)
    return parse_points(text)


def format_points(cloud: PointCloud, header: str | None = None) -> str:
    lines = [f"# {h}" for h in header.splitlines()] if header else []
    lines += [" ".join(repr(float(v)) for v in col) for col in cloud.points.T]
    return "\n".join(lines) + "\n"


def _transform_fields(xf: ReflectionTransform) -> dict:
    return {
        "rotations": [R.tolist() for R in xf.rotations],
        "translation": xf.translation.tolist(),
    }


def _plane_fields(plane: Hyperplane) -> dict:
    return {"normal": plane.normal.tolist(), "offset": float(plane.offset)}


def result_document(res: SymmetryResult, seed: int) -> dict:
    """JSON-ready summary of a detection; correspondences are ``[i, mirror[i]]`` entries."""
    corr = res.correspondence
    return {
        "schema_version": SCHEMA_VERSION,
        "plane": _plane_fields(res.plane),
        **_transform_fields(res.transform),
        "correspondences": [[i, j] for i, j in corr.pairs()],
        "cost": float(res.final_cost),
        "alternations": int(res.alternations),
        "seed": int(seed),
        "count": int(corr.size),
        "stop_reason": res.stop_reason,
        "sample": None if res.sample is None else res.sample.tolist(),
    }


def truth_document(spec: SynthSpec, truth: GroundTruth, points_file: str) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "points_file": points_file,
        "dim": spec.dim,
        "count": spec.count,
        "sigma2": spec.sigma2,
        "seed": spec.seed,
        "plane": _plane_fields(truth.plane),
        "transform": _transform_fields(truth.transform),
        "pairs": [[i, j] for i, j in truth.pairs.pairs()],
        "bbox": {"lo": truth.bbox_lo.tolist(), "hi": truth.bbox_hi.tolist()},
    }


def dumps(doc: dict) -> str:
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"


def _check_schema(doc: dict, kind: str):
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise ParseError(f"{kind}: unsupported schema_version {doc.get('schema_version')!r}")


def _corr_from_entries(n: int, entries) -> Correspondence:
    mirror = np.full(n, -1, dtype=np.int64)
    for i, j in entries:
        if not (0 <= i < n and 0 <= j < n):
            raise ParseError(f"index pair {[i, j]} outside [0, {n})")
        mirror[i] = j
    return Correspondence(mirror)


def load_result(doc: dict, n: int):
    """Plane and correspondence from a detection document for an ``n``-point cloud."""
    _check_schema(doc, "result")
    if doc.get("count", n) != n:
        raise ParseError(f"result describes {doc['count']} points, cloud has {n}")
    plane = Hyperplane(doc["plane"]["normal"], doc["plane"]["offset"])
    return plane, _corr_from_entries(n, doc["correspondences"])


def load_truth(doc: dict) -> tuple[GroundTruth, float]:
    """Ground truth and its noise level from a sidecar.

    ``transform`` may be omitted for annotated data; it is then built from
    the plane, which is all the metrics need.  ``sigma2`` defaults to 0.
    """
    _check_schema(doc, "truth")
    n = int(doc["count"])
    plane = Hyperplane(doc["plane"]["normal"], doc["plane"]["offset"])
    tf = doc.get("transform")
    if tf is None:
        xf = transform_from_plane(plane)
    else:
        xf = ReflectionTransform(np.array(tf["rotations"]), np.array(tf["translation"]))
    truth = GroundTruth(
        _corr_from_entries(n, doc["pairs"]),
        plane,
        xf,
        np.array(doc["bbox"]["lo"]),
        np.array(doc["bbox"]["hi"]),
    )
    return truth, float(doc.get("sigma2", 0.0))
