"""Verification metrics and result artifacts.

EER is computed from the empirical FAR/FRR curves with linear
interpolation at the crossing, so it is exact under any monotone
rescaling of the scores.  Sweeps, fusion grids, operating-point
selection, and the report emitters all live here; everything is pure and
byte-stable given identical inputs.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FusionTrainingError, MetricError
from .fusion import fuse_tables, train_fusion
from .protocol import ScoreTable

log = logging.getLogger(__name__)

HEATMAP_EER_CEILING = 25.0  # percent mapped to full white
DEFAULT_BUDGET = 2_000_000


@dataclass(frozen=True)
class ScoreSet:
    """Genuine and impostor score populations of one comparator."""

    genuine: np.ndarray
    impostor: np.ndarray

    def __post_init__(self):
        genuine = np.asarray(self.genuine, dtype=np.float64).reshape(-1)
        impostor = np.asarray(self.impostor, dtype=np.float64).reshape(-1)
        if genuine.size == 0 or impostor.size == 0:
            raise MetricError("both score classes must be non-empty")
        if not (np.all(np.isfinite(genuine)) and np.all(np.isfinite(impostor))):
            raise MetricError("scores must be finite")
        object.__setattr__(self, "genuine", genuine)
        object.__setattr__(self, "impostor", impostor)

    @classmethod
    def from_table(cls, table: ScoreTable) -> "ScoreSet":
        """Collect populations from a scored-trial table, skipping missing rows."""
        return cls(np.array(table.genuine_scores()), np.array(table.impostor_scores()))


def _operating_points(scores: ScoreSet) -> tuple:
    """FAR/FRR at every distinct threshold, with sentinel endpoints.

    FAR(t) is the impostor fraction >= t and FRR(t) the genuine fraction
    < t; the sentinels (1, 0) and (0, 1) bracket the crossing.
    """
    thresholds = np.unique(np.concatenate([scores.genuine, scores.impostor]))
    genuine = np.sort(scores.genuine)
    impostor = np.sort(scores.impostor)
    far = 1.0 - np.searchsorted(impostor, thresholds, side="left") / impostor.size
    frr = np.searchsorted(genuine, thresholds, side="left") / genuine.size
    far = np.concatenate([[1.0], far, [0.0]])
    frr = np.concatenate([[0.0], frr, [1.0]])
    return far, frr


def compute_eer(scores: ScoreSet) -> float:
    """Equal error rate in percent, interpolated at the FAR/FRR crossing."""
    far, frr = _operating_points(scores)
    diff = frr - far
    k = int(np.argmax(diff >= 0.0))  # diff is non-decreasing from -1 to +1
    alpha = -diff[k - 1] / (diff[k] - diff[k - 1])
    return float(100.0 * (far[k - 1] + alpha * (far[k] - far[k - 1])))


def det_points(scores: ScoreSet) -> np.ndarray:
    """(FAR, FRR) pairs as fractions, one row per operating point."""
    far, frr = _operating_points(scores)
    return np.column_stack([far, frr])


@dataclass(frozen=True)
class SweepPoint:
    layer: str
    eer: float | None  # None marks a layer whose features were unavailable
    learnables: int


@dataclass(frozen=True)
class SweepResult:
    network: str
    strategy: str
    points: tuple

    def __post_init__(self):
        object.__setattr__(self, "points", tuple(self.points))
        for p in self.points:
            if p.eer is not None and not 0.0 <= p.eer <= 50.0:
                raise MetricError(f"{self.network}/{p.layer}: EER {p.eer} outside [0, 50]")

    def best(self) -> SweepPoint:
        scored = [p for p in self.points if p.eer is not None]
        if not scored:
            raise MetricError(f"{self.network}: sweep has no scored layers")
        return min(scored, key=lambda p: (p.eer, p.learnables))


def sweep_from_tables(network: str, strategy: str, entries) -> SweepResult:
    """Build a sweep from (layer, ScoreTable-or-None, learnables) entries."""
    points = []
    for layer, table, learnables in entries:
        if table is None:
            log.warning("%s/%s: no scores; recorded as a gap", network, layer)
            points.append(SweepPoint(layer, None, int(learnables)))
            continue
        points.append(SweepPoint(layer, compute_eer(ScoreSet.from_table(table)), int(learnables)))
    return SweepResult(network, strategy, points)


@dataclass(frozen=True)
class GridResult:
    """Fused EER for every (row layer, column layer) pair."""

    row_network: str
    col_network: str
    row_layers: tuple
    col_layers: tuple
    row_learnables: tuple
    col_learnables: tuple
    eer: tuple  # row-major tuple of tuples, None for failed cells

    def __post_init__(self):
        if len(self.eer) != len(self.row_layers):
            raise MetricError("grid row count does not match row layers")
        for row in self.eer:
            if len(row) != len(self.col_layers):
                raise MetricError("grid column count does not match column layers")

    def cells(self):
        for i, row in enumerate(self.eer):
            for j, value in enumerate(row):
                yield i, j, value


def fusion_grid(row_network: str, col_network: str, row_entries, col_entries) -> GridResult:
    """Train a 2-input fusion per layer pair and record its training-set EER.

    Entries are (layer, ScoreTable-or-None, learnables).  Cells whose
    training fails are recorded as None and the grid still completes.
    """
    row_entries = list(row_entries)
    col_entries = list(col_entries)
    matrix = []
    for row_layer, row_table, _ in row_entries:
        row = []
        for col_layer, col_table, _ in col_entries:
            if row_table is None or col_table is None:
                row.append(None)
                continue
            ids = [f"{row_network}:{row_layer}", f"{col_network}:{col_layer}"]
            try:
                model = train_fusion([row_table, col_table], ids)
                fused = fuse_tables(model, [row_table, col_table])
                row.append(compute_eer(ScoreSet.from_table(fused)))
            except (FusionTrainingError, MetricError) as exc:
                log.warning("grid cell %s x %s failed: %s", ids[0], ids[1], exc)
                row.append(None)
        matrix.append(tuple(row))
    return GridResult(
        row_network=row_network,
        col_network=col_network,
        row_layers=tuple(e[0] for e in row_entries),
        col_layers=tuple(e[0] for e in col_entries),
        row_learnables=tuple(int(e[2]) for e in row_entries),
        col_learnables=tuple(int(e[2]) for e in col_entries),
        eer=tuple(matrix),
    )


def heatmap_bytes(grid: GridResult) -> bytes:
    """Render the grid as a binary PGM (P5) image.

    EER is clamped to [0, 25] percent and mapped linearly to [0, 255],
    so 0% is black and 25%+ is white; failed cells render white.
    """
    height, width = len(grid.row_layers), len(grid.col_layers)
    pixels = bytearray()
    for row in grid.eer:
        for value in row:
            if value is None:
                pixels.append(255)
            else:
                clamped = min(max(value, 0.0), HEATMAP_EER_CEILING)
                pixels.append(int(round(clamped / HEATMAP_EER_CEILING * 255.0)))
    return f"P5\n{width} {height}\n255\n".encode() + bytes(pixels)


@dataclass(frozen=True)
class OperatingPoint:
    row_layer: str
    col_layer: str
    eer: float
    combined_learnables: int


def _argmin_cell(grid: GridResult, keep) -> OperatingPoint:
    best = None
    for i, j, value in grid.cells():
        if value is None:
            continue
        combined = grid.row_learnables[i] + grid.col_learnables[j]
        if not keep(combined):
            continue
        key = (value, combined, i, j)
        if best is None or key < best[0]:
            best = (key, OperatingPoint(grid.row_layers[i], grid.col_layers[j], value, combined))
    if best is None:
        raise MetricError("no eligible grid cell for operating-point selection")
    return best[1]


def select_operating_points(grid: GridResult, budget: int = DEFAULT_BUDGET) -> dict:
    """Two picks: global best EER, and best EER under a combined
    learnables budget.  Ties break toward fewer learnables."""
    best = _argmin_cell(grid, lambda combined: True)
    low_depth = _argmin_cell(grid, lambda combined: combined <= budget)
    return {"best": best, "low_depth": low_depth}


def _cell(value) -> str:
    return "" if value is None else repr(float(value))


def write_sweep_csv(sweep: SweepResult, path) -> None:
    lines = ["layer,eer,learnables"]
    lines += [f"{p.layer},{_cell(p.eer)},{p.learnables}" for p in sweep.points]
    Path(path).write_text("\n".join(lines) + "\n")


def write_det_csv(scores: ScoreSet, path) -> None:
    lines = ["far,frr"]
    lines += [f"{repr(float(far))},{repr(float(frr))}" for far, frr in det_points(scores)]
    Path(path).write_text("\n".join(lines) + "\n")


def write_heatmap_pgm(grid: GridResult, path) -> None:
    Path(path).write_bytes(heatmap_bytes(grid))


def write_grid_csv(grid: GridResult, path) -> None:
    lines = ["," + ",".join(grid.col_layers)]
    for layer, row in zip(grid.row_layers, grid.eer):
        lines.append(layer + "," + ",".join(_cell(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def sweep_summary(sweep: SweepResult) -> dict:
    best = sweep.best()
    return {
        "network": sweep.network,
        "strategy": sweep.strategy,
        "best_layer": best.layer,
        "eer": best.eer,
        "learnables": best.learnables,
    }


def selection_summary(grid: GridResult, selection: dict) -> dict:
    def as_dict(point: OperatingPoint) -> dict:
        return {
            "row_layer": point.row_layer,
            "col_layer": point.col_layer,
            "eer": point.eer,
            "combined_learnables": point.combined_learnables,
        }

    return {
        "row_network": grid.row_network,
        "col_network": grid.col_network,
        "best": as_dict(selection["best"]),
        "low_depth": as_dict(selection["low_depth"]),
    }


def write_summary_json(summary: dict, path) -> None:
    Path(path).write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
