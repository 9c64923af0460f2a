"""Fingerprint measurement sets: grid-map arithmetic, JSONL persistence, splitting.

File format (JSON Lines):
    line 1: {"scenario": str, "grid": {"origin": [x, y], "nx": int, "ny": int,
             "cell_size": m}, "seed": int}
    line 2+: {"cell": [i, j], "pass": int,
              "anchors": [{"id": int, "range": m, "cir": [152 floats]}, ...]}

Floats are serialized as shortest round-trip decimals, so save/load is
bit-exact.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

CIR_LENGTH = 152


class DatasetFormatError(ValueError):
    """A dataset file could not be parsed or violates the record schema."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


@dataclass(frozen=True)
class GridMap:
    """Regular cell grid anchored at ``origin`` (lower-left corner, meters)."""

    origin: tuple[float, float]
    nx: int
    ny: int
    cell_size: float = 0.5

    def __post_init__(self):
        if self.nx < 2 or self.ny < 2:
            raise ValueError("grid needs at least 2x2 cells")
        if self.cell_size <= 0:
            raise ValueError("cell_size must be positive")

    @property
    def extent(self) -> tuple[float, float, float, float]:
        """(xmin, ymin, xmax, ymax) of the covered area."""
        ox, oy = self.origin
        return (ox, oy, ox + self.nx * self.cell_size, oy + self.ny * self.cell_size)

    @property
    def n_cells(self) -> int:
        return self.nx * self.ny

    def cell_center(self, i: int, j: int) -> tuple[float, float]:
        ox, oy = self.origin
        return (ox + (i + 0.5) * self.cell_size, oy + (j + 0.5) * self.cell_size)

    def contains_cell(self, i: int, j: int) -> bool:
        return 0 <= i < self.nx and 0 <= j < self.ny

    def cells(self):
        """Iterate (i, j) row-major: j outer, i inner."""
        for j in range(self.ny):
            for i in range(self.nx):
                yield i, j


def cell_index(grid: GridMap, p: tuple[float, float]) -> tuple[int, int]:
    """Map a point to its (i, j) cell; points on an upper boundary clamp
    to the last cell."""
    xmin, ymin, xmax, ymax = grid.extent
    x, y = p
    if not (xmin <= x <= xmax and ymin <= y <= ymax):
        raise ValueError(f"point {p} outside grid extent {grid.extent}")
    i = min(int(math.floor((x - xmin) / grid.cell_size)), grid.nx - 1)
    j = min(int(math.floor((y - ymin) / grid.cell_size)), grid.ny - 1)
    return i, j


@dataclass(frozen=True)
class AnchorReading:
    anchor_id: int
    range_m: float
    cir: np.ndarray  # shape (152,)

    def __post_init__(self):
        cir = np.asarray(self.cir, dtype=float)
        object.__setattr__(self, "cir", cir)
        if cir.shape != (CIR_LENGTH,):
            raise ValueError(f"CIR must have {CIR_LENGTH} samples, got {cir.shape}")
        if not np.all(np.isfinite(cir)):
            raise ValueError("CIR contains non-finite samples")


@dataclass(frozen=True)
class Measurement:
    """One grid-cell sample: per-anchor estimated range plus raw CIR."""

    cell: tuple[int, int]
    pass_id: int
    per_anchor: tuple[AnchorReading, ...]

    def __post_init__(self):
        object.__setattr__(self, "per_anchor", tuple(self.per_anchor))
        ids = [r.anchor_id for r in self.per_anchor]
        if ids != sorted(ids) or len(set(ids)) != len(ids):
            raise ValueError("per-anchor readings must be unique and ordered by anchor_id")

    @property
    def ranges(self) -> np.ndarray:
        return np.array([r.range_m for r in self.per_anchor], dtype=float)


@dataclass
class MeasurementSet:
    scenario_name: str
    grid: GridMap
    measurements: list[Measurement]
    seed: int

    def __post_init__(self):
        if not self.measurements:
            raise ValueError("measurement set must be nonempty")
        for m in self.measurements:
            if not self.grid.contains_cell(*m.cell):
                raise ValueError(f"measurement cell {m.cell} outside grid")

    def __len__(self) -> int:
        return len(self.measurements)


def _grid_to_json(grid: GridMap) -> dict:
    return {
        "origin": [grid.origin[0], grid.origin[1]],
        "nx": grid.nx,
        "ny": grid.ny,
        "cell_size": grid.cell_size,
    }


def _grid_from_json(obj: dict) -> GridMap:
    return GridMap(
        origin=(float(obj["origin"][0]), float(obj["origin"][1])),
        nx=int(obj["nx"]),
        ny=int(obj["ny"]),
        cell_size=float(obj["cell_size"]),
    )


def save(mset: MeasurementSet, path: str | Path) -> None:
    """Write a measurement set as JSON Lines (header + one record per line)."""
    path = Path(path)
    header = {
        "scenario": mset.scenario_name,
        "grid": _grid_to_json(mset.grid),
        "seed": mset.seed,
    }
    with path.open("w", encoding="utf-8") as f:
        f.write(json.dumps(header) + "\n")
        for m in mset.measurements:
            rec = {
                "cell": [m.cell[0], m.cell[1]],
                "pass": m.pass_id,
                "anchors": [
                    {"id": r.anchor_id, "range": r.range_m, "cir": r.cir.tolist()}
                    for r in m.per_anchor
                ],
            }
            f.write(json.dumps(rec) + "\n")


def load(path: str | Path) -> MeasurementSet:
    """Parse a dataset file; any malformed or schema-violating record aborts
    the load (no partial set is returned)."""
    path = Path(path)
    measurements: list[Measurement] = []
    header = None
    with path.open("r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetFormatError(f"invalid JSON: {exc.msg}", line=lineno) from exc
            if lineno == 1:
                try:
                    header = (str(obj["scenario"]), _grid_from_json(obj["grid"]), int(obj["seed"]))
                except (KeyError, TypeError, ValueError) as exc:
                    raise DatasetFormatError(f"invalid header: {exc}", line=lineno) from exc
                continue
            try:
                anchors = []
                for a in obj["anchors"]:
                    cir = np.asarray(a["cir"], dtype=float)
                    if cir.shape != (CIR_LENGTH,):
                        raise DatasetFormatError(
                            f"CIR must have {CIR_LENGTH} samples, got {cir.size}",
                            line=lineno,
                        )
                    anchors.append(AnchorReading(int(a["id"]), float(a["range"]), cir))
                measurements.append(
                    Measurement(
                        cell=(int(obj["cell"][0]), int(obj["cell"][1])),
                        pass_id=int(obj["pass"]),
                        per_anchor=tuple(anchors),
                    )
                )
            except DatasetFormatError:
                raise
            except (KeyError, TypeError, ValueError, IndexError) as exc:
                raise DatasetFormatError(f"invalid record: {exc}", line=lineno) from exc
    if header is None:
        raise DatasetFormatError("empty file: missing header", line=1)
    if not measurements:
        raise DatasetFormatError("dataset contains no measurements")
    scenario_name, grid, seed = header
    return MeasurementSet(scenario_name, grid, measurements, seed)


def split(
    mset: MeasurementSet, val_fraction: float, seed: int
) -> tuple[MeasurementSet, MeasurementSet]:
    """Stratified per-cell split: each cell contributes
    ``ceil(val_fraction * count)`` samples to validation."""
    if not (0.0 < val_fraction < 1.0):
        raise ValueError("val_fraction must be in (0, 1)")
    by_cell: dict[tuple[int, int], list[int]] = {}
    for idx, m in enumerate(mset.measurements):
        by_cell.setdefault(m.cell, []).append(idx)

    rng = np.random.default_rng(seed)
    val_indices: set[int] = set()
    for cell in sorted(by_cell):
        indices = by_cell[cell]
        if len(indices) < 2:
            raise ValueError(f"cell {cell} has fewer than 2 samples, cannot stratify")
        n_val = math.ceil(val_fraction * len(indices))
        picked = rng.permutation(len(indices))[:n_val]
        val_indices.update(indices[k] for k in picked)

    train = [m for i, m in enumerate(mset.measurements) if i not in val_indices]
    val = [m for i, m in enumerate(mset.measurements) if i in val_indices]
    train_set = MeasurementSet(mset.scenario_name, mset.grid, train, mset.seed)
    val_set = MeasurementSet(mset.scenario_name, mset.grid, val, mset.seed)
    return train_set, val_set
