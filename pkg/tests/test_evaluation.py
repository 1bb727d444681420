import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from periscope.errors import MetricError
from periscope.evaluation import (
    GridResult,
    ScoreSet,
    SweepPoint,
    SweepResult,
    compute_eer,
    det_points,
    fusion_grid,
    heatmap_bytes,
    select_operating_points,
    sweep_from_tables,
    write_det_csv,
    write_grid_csv,
    write_heatmap_pgm,
    write_summary_json,
    write_sweep_csv,
)
from periscope.protocol import ScoredTrial, ScoreTable


def table_from_arrays(genuine, impostor):
    rows = [ScoredTrial(f"g{i}", f"h{i}", "genuine", float(s)) for i, s in enumerate(genuine)]
    rows += [ScoredTrial(f"a{i}", f"b{i}", "impostor", float(s)) for i, s in enumerate(impostor)]
    return ScoreTable(rows)


# ----------------------------------------------------------------- EER


def test_perfect_separation_zero_eer():
    s = ScoreSet(genuine=[1.0, 2.0, 3.0], impostor=[-3.0, -2.0, -1.0])
    assert compute_eer(s) == 0.0


def test_identical_populations_fifty_percent():
    scores = np.linspace(0, 1, 50)
    s = ScoreSet(genuine=scores, impostor=scores.copy())
    assert compute_eer(s) == pytest.approx(50.0, abs=1e-9)


def test_single_score_edge_cases():
    assert compute_eer(ScoreSet(genuine=[1.0], impostor=[0.0])) == 0.0
    # equal single scores cross midway between the sentinels
    assert compute_eer(ScoreSet(genuine=[0.5], impostor=[0.5])) == pytest.approx(50.0)
    # a fully reversed comparator crosses at FAR = FRR = 1
    assert compute_eer(ScoreSet(genuine=[0.0], impostor=[1.0])) == pytest.approx(100.0)


@settings(max_examples=100, deadline=None)
@given(
    genuine=st.lists(st.floats(-5, 5, allow_nan=False), min_size=1, max_size=40),
    impostor=st.lists(st.floats(-5, 5, allow_nan=False), min_size=1, max_size=40),
)
def test_eer_matches_counting_oracle(genuine, impostor):
    got = compute_eer(ScoreSet(genuine=genuine, impostor=impostor))
    want = oracles.eer_percent(genuine, impostor)
    assert got == pytest.approx(want, abs=1e-9)
    assert 0.0 <= got <= 100.0 + 1e-9


# scores on a 1/64 grid: exp stays injective on them, which float inputs
# with denormal-scale gaps cannot guarantee
grid_scores = st.lists(st.integers(-256, 256), min_size=2, max_size=30, unique=True).map(
    lambda v: [x / 64.0 for x in v]
)


@settings(max_examples=60, deadline=None)
@given(genuine=grid_scores, impostor=grid_scores)
def test_eer_invariant_under_monotone_transform(genuine, impostor):
    base = compute_eer(ScoreSet(genuine=genuine, impostor=impostor))
    warped = compute_eer(
        ScoreSet(genuine=np.exp(np.array(genuine) / 4.0), impostor=np.exp(np.array(impostor) / 4.0))
    )
    assert warped == pytest.approx(base, abs=1e-9)


def test_eer_on_overlapping_gaussians():
    rng = np.random.default_rng(11)
    s = ScoreSet(genuine=rng.normal(1.0, 1.0, 4000), impostor=rng.normal(-1.0, 1.0, 4000))
    eer = compute_eer(s)
    # both distributions sit one sigma from the crossing: Phi(-1) = 15.87%
    assert eer == pytest.approx(15.87, abs=1.5)


def test_scoreset_validation():
    with pytest.raises(MetricError):
        ScoreSet(genuine=[], impostor=[1.0])
    with pytest.raises(MetricError):
        ScoreSet(genuine=[np.nan], impostor=[1.0])


def test_scoreset_from_table_skips_missing():
    table = ScoreTable(
        (
            ScoredTrial("a", "b", "genuine", 0.5),
            ScoredTrial("a", "c", "genuine", None),
            ScoredTrial("b", "c", "impostor", -0.5),
        )
    )
    s = ScoreSet.from_table(table)
    assert s.genuine.tolist() == [0.5]
    assert s.impostor.tolist() == [-0.5]


def test_det_points_shape_and_endpoints():
    s = ScoreSet(genuine=[0.1, 0.4, 0.9], impostor=[0.0, 0.2, 0.3])
    pts = det_points(s)
    assert pts.shape[1] == 2
    assert pts[0].tolist() == [1.0, 0.0]
    assert pts[-1].tolist() == [0.0, 1.0]
    assert np.all(np.diff(pts[:, 0]) <= 0)
    assert np.all(np.diff(pts[:, 1]) >= 0)
    assert np.all((pts >= 0.0) & (pts <= 1.0))


# --------------------------------------------------------------- sweep


def test_sweep_best_prefers_low_eer_then_low_depth():
    sweep = SweepResult(
        "net",
        "per-patch",
        (
            SweepPoint("l1", 12.0, 500),
            SweepPoint("l2", 8.0, 900),
            SweepPoint("l3", 8.0, 400),
            SweepPoint("l4", None, 100),
        ),
    )
    assert sweep.best().layer == "l3"


def test_sweep_rejects_out_of_range_eer():
    with pytest.raises(MetricError):
        SweepResult("net", "whole", (SweepPoint("l1", 70.0, 10),))


def test_sweep_all_gaps_has_no_best():
    sweep = SweepResult("net", "whole", (SweepPoint("l1", None, 10),))
    with pytest.raises(MetricError):
        sweep.best()


def test_sweep_from_tables_records_gaps():
    table = table_from_arrays([1.0, 2.0], [-1.0, -2.0])
    sweep = sweep_from_tables("net", "whole", [("l1", table, 10), ("l2", None, 20)])
    assert sweep.points[0].eer == 0.0
    assert sweep.points[1].eer is None


# ---------------------------------------------------------------- grid


def grid_tables(rng, quality):
    """One ScoreTable per layer; higher quality separates the classes more."""
    tables = []
    for q in quality:
        genuine = rng.normal(q, 1.0, 300)
        impostor = rng.normal(-q, 1.0, 300)
        tables.append(table_from_arrays(genuine, impostor))
    return tables


def test_fusion_grid_shape_and_diagonal():
    rng = np.random.default_rng(21)
    row_tables = grid_tables(rng, [0.5, 1.5])
    col_tables = grid_tables(rng, [1.0])
    grid = fusion_grid(
        "cnn",
        "vit",
        [("r1", row_tables[0], 100), ("r2", row_tables[1], 200)],
        [("c1", col_tables[0], 50)],
    )
    assert grid.row_layers == ("r1", "r2")
    assert grid.col_layers == ("c1",)
    assert len(grid.eer) == 2 and len(grid.eer[0]) == 1
    for _, _, value in grid.cells():
        assert value is not None and 0.0 <= value <= 50.0


def test_fusion_grid_gap_cells_are_none():
    rng = np.random.default_rng(22)
    t = grid_tables(rng, [1.0])[0]
    grid = fusion_grid("cnn", "vit", [("r1", t, 10), ("r2", None, 20)], [("c1", t, 30)])
    assert grid.eer[0][0] is not None
    assert grid.eer[1][0] is None


def test_fusion_grid_failed_training_is_a_gap():
    # all genuine scores missing leaves one class: training fails, cell is None
    rows = [ScoredTrial("g0", "g1", "genuine", None), ScoredTrial("a", "b", "impostor", -1.0)]
    bad = ScoreTable(rows)
    good = table_from_arrays([1.0, 0.5], [-1.0, -0.5])
    grid = fusion_grid("cnn", "vit", [("r1", bad, 10)], [("c1", bad, 30)])
    assert grid.eer[0][0] is None
    grid2 = fusion_grid("cnn", "vit", [("r1", good, 10)], [("c1", good, 30)])
    assert grid2.eer[0][0] is not None


def make_grid(values, row_learn=(100, 200), col_learn=(50, 60)):
    return GridResult(
        row_network="cnn",
        col_network="vit",
        row_layers=tuple(f"r{i}" for i in range(len(values))),
        col_layers=tuple(f"c{j}" for j in range(len(values[0]))),
        row_learnables=tuple(row_learn[: len(values)]),
        col_learnables=tuple(col_learn[: len(values[0])]),
        eer=tuple(tuple(row) for row in values),
    )


def test_heatmap_endpoints_and_gaps():
    grid = make_grid([(0.0, 25.0), (30.0, None)])
    raw = heatmap_bytes(grid)
    assert raw.startswith(b"P5\n2 2\n255\n")
    pixels = raw[len(b"P5\n2 2\n255\n") :]
    assert list(pixels) == [0, 255, 255, 255]


def test_heatmap_linear_midpoint():
    grid = make_grid([(12.5,)], row_learn=(10,), col_learn=(5,))
    raw = heatmap_bytes(grid)
    assert raw[-1] == round(12.5 / 25.0 * 255.0)


def test_select_operating_points_budget():
    grid = make_grid([(5.0, 9.0), (4.0, 8.0)])
    # combined learnables: r0c0=150, r0c1=160, r1c0=250, r1c1=260
    picks = select_operating_points(grid, budget=200)
    assert picks["best"].row_layer == "r1" and picks["best"].col_layer == "c0"
    assert picks["best"].eer == 4.0
    assert picks["low_depth"].row_layer == "r0" and picks["low_depth"].col_layer == "c0"
    assert picks["low_depth"].combined_learnables == 150


def test_select_ties_break_toward_fewer_learnables():
    grid = make_grid([(5.0, 5.0), (5.0, 5.0)])
    picks = select_operating_points(grid, budget=10**9)
    assert picks["best"].combined_learnables == 150


def test_select_with_no_eligible_cells():
    grid = make_grid([(None, None)], row_learn=(10,), col_learn=(5, 6))
    with pytest.raises(MetricError):
        select_operating_points(grid)


# ------------------------------------------------------------- writers


def test_write_sweep_csv(tmp_path):
    sweep = SweepResult("net", "whole", (SweepPoint("l1", 10.5, 100), SweepPoint("l2", None, 200)))
    path = tmp_path / "sweep.csv"
    write_sweep_csv(sweep, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "layer,eer,learnables"
    assert lines[1] == "l1,10.5,100"
    assert lines[2] == "l2,,200"


def test_write_det_csv(tmp_path):
    path = tmp_path / "det.csv"
    write_det_csv(ScoreSet(genuine=[1.0], impostor=[0.0]), path)
    lines = path.read_text().splitlines()
    assert lines[0] == "far,frr"
    assert all(len(line.split(",")) == 2 for line in lines[1:])


def test_write_heatmap_and_grid_csv(tmp_path):
    grid = make_grid([(5.0, None)], row_learn=(10,), col_learn=(5, 6))
    pgm = tmp_path / "grid.pgm"
    write_heatmap_pgm(grid, pgm)
    assert pgm.read_bytes() == heatmap_bytes(grid)
    csv = tmp_path / "grid.csv"
    write_grid_csv(grid, csv)
    lines = csv.read_text().splitlines()
    assert lines[0].startswith(",") or lines[0].startswith("layer")
    assert "5.0" in lines[1]


def test_write_summary_json_stable(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    write_summary_json({"b": 1, "a": [1, 2]}, a)
    write_summary_json({"a": [1, 2], "b": 1}, b)
    assert a.read_bytes() == b.read_bytes()
    assert json.loads(a.read_text()) == {"a": [1, 2], "b": 1}
