"""Readers and writers for point sets, graphs, grids, SBP runs and experiment records.

Text formats are UTF-8 CSV/JSON written with full float precision
(``repr``). Experiment outputs start with a ``#`` comment line carrying a
JSON header (code version plus the full parameter record).
"""

from __future__ import annotations

import csv
import json
import struct

import numpy as np

from . import __version__
from .geometry import METRICS, BoxRegion, PointSet

MAGIC = b"GNPS"
FORMAT_VERSION = 1
# magic, format version, dim, metric, has_seed, count, density, seed
_HEADER = struct.Struct("<4sIIBBQdQ")


def write_points(path, points):
    """Binary point file: fixed header, box corners, then little-endian f64 coordinates."""
    seed = points.seed
    head = _HEADER.pack(MAGIC, FORMAT_VERSION, points.dim, METRICS.index(points.metric),
                        seed is not None, points.n, float(points.density),
                        0 if seed is None else int(seed) & (2**64 - 1))
    box = np.concatenate([points.box.lower, points.box.upper]).astype("<f8")
    with open(path, "wb") as fh:
        fh.write(head)
        fh.write(box.tobytes())
        fh.write(np.ascontiguousarray(points.coords, dtype="<f8").tobytes())


def read_points(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size or raw[:4] != MAGIC:
        raise ValueError(f"{path}: not a point file")
    magic, ver, dim, metric, has_seed, count, density, seed = _HEADER.unpack_from(raw)
    if ver != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported format version {ver}")
    off = _HEADER.size
    box = np.frombuffer(raw, "<f8", 2 * dim, off)
    off += 16 * dim
    if len(raw) != off + 8 * dim * count:
        raise ValueError(f"{path}: truncated or oversized body")
    coords = np.frombuffer(raw, "<f8", dim * count, off).reshape(count, dim)
    return PointSet(coords.astype(float), BoxRegion(box[:dim], box[dim:]), density,
                    METRICS[metric], int(seed) if has_seed else None)


def header_line(record):
    return "# " + json.dumps({"version": __version__, **record}, sort_keys=True) + "\n"


def read_header(path):
    with open(path, encoding="utf-8") as fh:
        first = fh.readline()
    if not first.startswith("# "):
        return None
    return json.loads(first[2:])


def _write_csv(path, columns, rows, record=None):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        if record is not None:
            fh.write(header_line(record))
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def read_csv(path):
    """``(header record or None, column names, rows as strings)``."""
    with open(path, encoding="utf-8", newline="") as fh:
        lines = fh.read().splitlines()
    record = None
    if lines and lines[0].startswith("# "):
        record = json.loads(lines[0][2:])
        lines = lines[1:]
    rows = list(csv.reader(lines))
    return record, rows[0], rows[1:]


def points_record(points):
    return {"dim": points.dim, "count": points.n, "density": points.density,
            "metric": points.metric, "seed": points.seed,
            "box": [points.box.lower.tolist(), points.box.upper.tolist()]}


def write_points_csv(path, points):
    cols = [f"x{i}" for i in range(points.dim)]
    _write_csv(path, cols, points.coords.tolist(), points_record(points))


def read_points_csv(path):
    rec, _, rows = read_csv(path)
    coords = np.array(rows, dtype=float).reshape(-1, rec["dim"])
    lo, hi = rec["box"]
    return PointSet(coords, BoxRegion(lo, hi), rec["density"], rec["metric"], rec["seed"])


def write_edges_csv(path, graph, record=None):
    _write_csv(path, ["u", "v"], graph.undirected_edges.tolist(), record)


def read_edges_csv(path):
    _, _, rows = read_csv(path)
    return np.array(rows, dtype=np.int64).reshape(-1, 2)


def write_adjacency_json(path, graph, alpha, points):
    """Adjacency lists of the undirected graph with the parameters needed to rebuild it."""
    adj = [[] for _ in range(graph.n)]
    for u, v in graph.undirected_edges.tolist():
        adj[u].append(v)
        adj[v].append(u)
    doc = {"version": __version__, "variant": graph.variant, "alpha": alpha.to_dict(),
           "density": points.density, "seed": points.seed, "n": graph.n,
           "adjacency": [sorted(a) for a in adj]}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)


def write_components_csv(path, labeling, record=None):
    _write_csv(path, ["component", "size"], sorted(labeling.sizes.items()), record)


def write_grid_pbm(path, good):
    """Plain PBM raster, one row of 0/1 per grid row (1 = good)."""
    good = np.asarray(good, dtype=bool)
    if good.ndim != 2:
        raise ValueError("raster export needs a 2-d grid")
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"P1\n{good.shape[1]} {good.shape[0]}\n")
        for row in good.astype(np.uint8):
            fh.write(" ".join(map(str, row)) + "\n")


def read_grid_pbm(path):
    with open(path, encoding="ascii") as fh:
        tokens = fh.read().split()
    if not tokens or tokens[0] != "P1":
        raise ValueError(f"{path}: not a plain PBM file")
    w, h = int(tokens[1]), int(tokens[2])
    return np.array(tokens[3:3 + w * h], dtype=np.uint8).reshape(h, w).astype(bool)


def write_grid_csv(path, grid, record=None):
    good = grid.good
    rows = [(*ix, int(v)) for ix, v in np.ndenumerate(good.astype(np.uint8))]
    cols = [f"i{a}" for a in range(good.ndim)] + ["good"]
    _write_csv(path, cols, rows, record)


def write_sbp_csv(path, realization):
    """One row per individual: generation, index, parent, coordinates, projection."""
    d = realization.config.dim
    cols = ["generation", "index", "parent"] + [f"x{i}" for i in range(d)]
    cols += ["L1", "L2"] if d >= 2 else []
    rows = []
    for g, (z, par) in enumerate(zip(realization.generations, realization.parents)):
        proj = realization.projected(g) if d >= 2 else np.empty((len(z), 0))
        for i in range(len(z)):
            rows.append([g, i, int(par[i]), *map(float, z[i]), *map(float, proj[i])])
    cfg = realization.config
    _write_csv(path, cols, rows, {"dim": d, "delta1": cfg.delta1, "c2": cfg.c2,
                                  "generations": cfg.generations, "seed": cfg.seed,
                                  "extinct": realization.extinct})


PM_COLUMNS = ["alpha", "k", "m", "trials", "p_hat", "ci_low", "ci_high", "discard_rate"]


def pm_row(alpha, k, m, est):
    total = est.trials + est.discarded
    return [json.dumps(alpha.to_dict(), sort_keys=True), k, float(m), est.trials,
            float(est.p_hat), float(est.lower), float(est.upper),
            float(est.discarded / total) if total else float("nan")]


def write_pm_csv(path, rows, record=None):
    _write_csv(path, PM_COLUMNS, rows, record)


CURVE_COLUMNS = ["alpha", "p_hat", "ci_low", "ci_high", "trials"]


def write_curve_csv(path, curve, spec):
    rows = [(a, e.p_hat, e.lower, e.upper, e.trials) for a, e in curve]
    _write_csv(path, CURVE_COLUMNS, rows, {"spec": spec.to_dict()})


def write_probes_csv(path, result, spec):
    rec = {"spec": spec.to_dict() if spec is not None else None, "alpha_hat": result.alpha_hat,
           "lower": result.lower, "upper": result.upper, "target": result.target}
    _write_csv(path, CURVE_COLUMNS, result.probe_rows(), rec)


class TrialWriter:
    """JSONL stream: a header record with the spec, then one line per trial."""

    def __init__(self, path, spec):
        self._fh = open(path, "w", encoding="utf-8")
        self._fh.write(json.dumps({"type": "header", "version": __version__,
                                   "spec": spec.to_dict()}, sort_keys=True) + "\n")

    def write(self, result):
        self._fh.write(json.dumps({"type": "trial", **result.to_dict()}, sort_keys=True) + "\n")

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_trials(path):
    """``(header, list of trial dicts)`` from a JSONL stream."""
    with open(path, encoding="utf-8") as fh:
        recs = [json.loads(line) for line in fh if line.strip()]
    if not recs or recs[0].get("type") != "header":
        raise ValueError(f"{path}: missing header record")
    return recs[0], [r for r in recs[1:] if r.get("type") == "trial"]
