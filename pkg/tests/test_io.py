import json

import numpy as np
import pytest

from gnperc import io
from gnperc.clusters import label_clusters
from gnperc.geometry import BoxRegion, sample_poisson
from gnperc.gnmodel import AlphaSpec, gn_graph
from gnperc.mc import ExperimentSpec, TrialResult, bisect_critical, wilson_ci
from gnperc.renorm import banana_scan
from gnperc.sbp import SBPConfig, run_sbp


@pytest.fixture
def pts():
    return sample_poisson(2, 1.5, BoxRegion([-1, 0], [9, 6]), 17, "torus")


def test_binary_points_roundtrip(tmp_path, pts):
    p = tmp_path / "a.gnp"
    io.write_points(p, pts)
    back = io.read_points(p)
    assert np.array_equal(back.coords, pts.coords)
    assert back.density == pts.density and back.metric == "torus" and back.seed == 17
    assert np.array_equal(back.box.lower, pts.box.lower)


def test_binary_points_rejects_bad_files(tmp_path, pts):
    p = tmp_path / "a.gnp"
    io.write_points(p, pts)
    raw = p.read_bytes()
    (tmp_path / "short").write_bytes(raw[:-8])
    (tmp_path / "junk").write_bytes(b"nope" + raw[4:])
    with pytest.raises(ValueError):
        io.read_points(tmp_path / "short")
    with pytest.raises(ValueError):
        io.read_points(tmp_path / "junk")


def test_points_csv_roundtrip(tmp_path, pts):
    p = tmp_path / "a.csv"
    io.write_points_csv(p, pts)
    back = io.read_points_csv(p)
    assert np.array_equal(back.coords, pts.coords)
    rec = io.read_header(p)
    assert rec["count"] == pts.n and "version" in rec


def test_graph_outputs(tmp_path, pts):
    g, _ = gn_graph(pts, AlphaSpec.gn_k(1, 1.5))
    io.write_edges_csv(tmp_path / "e.csv", g)
    assert np.array_equal(io.read_edges_csv(tmp_path / "e.csv"), g.undirected_edges)
    io.write_adjacency_json(tmp_path / "g.json", g, AlphaSpec.gn_k(1, 1.5), pts)
    doc = json.loads((tmp_path / "g.json").read_text())
    assert doc["n"] == pts.n and AlphaSpec.from_dict(doc["alpha"]) == AlphaSpec.gn_k(1, 1.5)
    assert sum(map(len, doc["adjacency"])) == 2 * len(g.undirected_edges)
    lab = label_clusters(g)
    io.write_components_csv(tmp_path / "c.csv", lab)
    _, cols, rows = io.read_csv(tmp_path / "c.csv")
    assert cols == ["component", "size"] and sum(int(r[1]) for r in rows) == pts.n


def test_grid_outputs(tmp_path):
    good = np.array([[1, 0, 1], [0, 0, 1]], dtype=bool)
    io.write_grid_pbm(tmp_path / "g.pbm", good)
    assert np.array_equal(io.read_grid_pbm(tmp_path / "g.pbm"), good)
    with pytest.raises(ValueError):
        io.write_grid_pbm(tmp_path / "x.pbm", np.ones((2, 2, 2)))
    pts = sample_poisson(2, 1.0, BoxRegion.cube(8, 2), 1)
    grid = banana_scan(pts, 1 / 3, 2)
    io.write_grid_csv(tmp_path / "g.csv", grid)
    _, cols, rows = io.read_csv(tmp_path / "g.csv")
    assert cols == ["i0", "i1", "good"] and len(rows) == grid.good.size


def test_sbp_csv(tmp_path):
    rz = run_sbp(SBPConfig.from_c1(6, 2.0, 4, generations=3, seed=1))
    io.write_sbp_csv(tmp_path / "s.csv", rz)
    rec, cols, rows = io.read_csv(tmp_path / "s.csv")
    assert cols[:3] == ["generation", "index", "parent"] and cols[-2:] == ["L1", "L2"]
    assert len(rows) == sum(rz.sizes) and rec["dim"] == 6
    last = rows[-1]
    assert float(last[-2]) == pytest.approx(np.sqrt(6) * float(last[3]))


def test_pm_and_curve_rows(tmp_path):
    est = wilson_ci(3, 10).with_discarded(2)
    row = io.pm_row(AlphaSpec.gn_k(1, 2.0), 1, 6.25, est)
    assert row[-1] == pytest.approx(2 / 12)
    io.write_pm_csv(tmp_path / "p.csv", [row])
    _, cols, rows = io.read_csv(tmp_path / "p.csv")
    assert cols == io.PM_COLUMNS and float(rows[0][4]) == 0.3
    spec = ExperimentSpec(AlphaSpec.gn_k(1, 1.0), L=5)
    io.write_curve_csv(tmp_path / "c.csv", [(1.0, est)], spec)
    rec, cols, _ = io.read_csv(tmp_path / "c.csv")
    assert ExperimentSpec.from_dict(rec["spec"]) == spec and cols == io.CURVE_COLUMNS
    res = bisect_critical(estimator=lambda a: float(a >= 3), bracket=(1, 5), tol=1)
    io.write_probes_csv(tmp_path / "b.csv", res, None)
    rec, _, rows = io.read_csv(tmp_path / "b.csv")
    assert rec["alpha_hat"] == res.alpha_hat and len(rows) == len(res.probes)


def test_trial_stream(tmp_path):
    spec = ExperimentSpec(AlphaSpec.gn_k(1, 1.0), L=5)
    with io.TrialWriter(tmp_path / "t.jsonl", spec) as w:
        w.write(TrialResult(0, 11, 40, True, 0.5))
        w.write(TrialResult(1, 12, 41, False, 0.25))
    head, trials = io.read_trials(tmp_path / "t.jsonl")
    assert ExperimentSpec.from_dict(head["spec"]) == spec
    assert [t["crossing"] for t in trials] == [True, False]
    (tmp_path / "bad.jsonl").write_text('{"type": "trial"}\n')
    with pytest.raises(ValueError):
        io.read_trials(tmp_path / "bad.jsonl")


def test_float_precision_preserved(tmp_path):
    x = 0.1 + 0.2
    io._write_csv(tmp_path / "f.csv", ["x"], [[x]])
    _, _, rows = io.read_csv(tmp_path / "f.csv")
    assert float(rows[0][0]) == x
