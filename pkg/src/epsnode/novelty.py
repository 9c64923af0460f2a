"""Reconstruction-error scoring and aggregation into per-cell error maps.

The per-anchor error is the absolute difference between an anchor's range
feature and its reconstruction, in scaled feature units; the total error is
the Euclidean norm across anchors. Cell values are the mean (configurable)
over that cell's samples.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autoencoder as ae
from . import features as feat
from .dataset import GridMap, MeasurementSet


def anchor_error(y_hat: float, y: float) -> float:
    """Single-anchor error |y_hat - y|."""
    return abs(y_hat - y)


def total_error(e) -> float:
    """Euclidean norm of the per-anchor errors."""
    e = np.asarray(e, dtype=float)
    if np.any(e < 0):
        raise ValueError("per-anchor errors must be non-negative")
    return float(np.sqrt(np.sum(e * e)))


@dataclass(frozen=True)
class SampleError:
    cell: tuple[int, int]
    per_anchor: np.ndarray  # indexed by anchor position in the measurement
    total: float


@dataclass
class ErrorMap:
    """Per-cell aggregated error; cells with no samples hold NaN, count 0."""

    grid: GridMap
    values: np.ndarray  # shape (ny, nx), NaN where missing
    counts: np.ndarray  # shape (ny, nx), int

    def __post_init__(self):
        shape = (self.grid.ny, self.grid.nx)
        if self.values.shape != shape or self.counts.shape != shape:
            raise ValueError(f"map arrays must have shape {shape}")


@dataclass
class AnchorErrorMap(ErrorMap):
    anchor_id: int = 0


_AGGREGATORS = {
    "mean": np.mean,
    "median": np.median,
    "max": np.max,
}


def score(
    model: ae.AutoencoderModel,
    scaler: feat.Scaler,
    pipeline: feat.Pipeline,
    pca: feat.PcaModel | None,
    mset: MeasurementSet,
    aggregate: str = "mean",
) -> tuple[ErrorMap, list[AnchorErrorMap], list[SampleError]]:
    """Score every measurement: extract -> scale -> reconstruct -> errors."""
    if aggregate not in _AGGREGATORS:
        raise ValueError(f"unknown aggregate {aggregate!r}")
    agg = _AGGREGATORS[aggregate]
    pipeline = feat.Pipeline(pipeline)
    n_anchors = len(mset.measurements[0].per_anchor)
    expected = feat.feature_length(pipeline, n_anchors, pca)
    if model.n != expected:
        raise ValueError(
            f"model input dim {model.n} does not match {pipeline.value} "
            f"feature length {expected}"
        )

    grid = mset.grid
    totals: dict[tuple[int, int], list[float]] = {}
    per_anchor_acc: dict[tuple[int, int], list[np.ndarray]] = {}
    sample_errors: list[SampleError] = []
    for meas in mset.measurements:
        fv = feat.extract(meas, pipeline, pca)
        x = feat.scale(scaler, fv.values)
        recon = ae.forward(model, x)
        errs = np.array(
            [anchor_error(recon[slot], x[slot]) for _, slot in sorted(fv.anchor_slots.items())]
        )
        tot = total_error(errs)
        sample_errors.append(SampleError(meas.cell, errs, tot))
        totals.setdefault(meas.cell, []).append(tot)
        per_anchor_acc.setdefault(meas.cell, []).append(errs)

    values = np.full((grid.ny, grid.nx), np.nan)
    counts = np.zeros((grid.ny, grid.nx), dtype=int)
    anchor_values = np.full((n_anchors, grid.ny, grid.nx), np.nan)
    for (i, j), cell_totals in totals.items():
        values[j, i] = agg(cell_totals)
        counts[j, i] = len(cell_totals)
        stacked = np.vstack(per_anchor_acc[(i, j)])
        anchor_values[:, j, i] = agg(stacked, axis=0)

    anchor_ids = [r.anchor_id for r in mset.measurements[0].per_anchor]
    error_map = ErrorMap(grid=grid, values=values, counts=counts)
    anchor_maps = [
        AnchorErrorMap(grid=grid, values=anchor_values[k], counts=counts.copy(), anchor_id=aid)
        for k, aid in enumerate(anchor_ids)
    ]
    return error_map, anchor_maps, sample_errors


# ---------------------------------------------------------------------------
# CSV persistence
# ---------------------------------------------------------------------------

def write_error_map_csv(emap: ErrorMap, path: str | Path) -> None:
    """One row per cell: i, j, value, count. A leading comment line records
    the grid so the map is self-describing."""
    grid = emap.grid
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as f:
        f.write(
            f"# grid={grid.origin[0]},{grid.origin[1]},{grid.nx},{grid.ny},{grid.cell_size}\n"
        )
        w = csv.writer(f)
        w.writerow(["i", "j", "value", "count"])
        for i, j in grid.cells():
            v = emap.values[j, i]
            w.writerow([i, j, "nan" if math.isnan(v) else repr(float(v)), int(emap.counts[j, i])])


def read_error_map_csv(path: str | Path) -> ErrorMap:
    path = Path(path)
    with path.open("r", encoding="utf-8") as f:
        first = f.readline().strip()
        if not first.startswith("# grid="):
            raise ValueError(f"{path}: missing grid comment line")
        ox, oy, nx, ny, cs = first[len("# grid=") :].split(",")
        grid = GridMap(origin=(float(ox), float(oy)), nx=int(nx), ny=int(ny), cell_size=float(cs))
        reader = csv.reader(f)
        header = next(reader)
        if header != ["i", "j", "value", "count"]:
            raise ValueError(f"{path}: unexpected header {header}")
        values = np.full((grid.ny, grid.nx), np.nan)
        counts = np.zeros((grid.ny, grid.nx), dtype=int)
        for row in reader:
            i, j = int(row[0]), int(row[1])
            values[j, i] = float(row[2])
            counts[j, i] = int(row[3])
    return ErrorMap(grid=grid, values=values, counts=counts)
