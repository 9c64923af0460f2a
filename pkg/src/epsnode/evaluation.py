"""Quantitative heatmap scoring: KDE over the grid and KL divergence.

An error map is turned into a discrete probability density by placing an
isotropic Gaussian kernel at every cell center, weighted by the cell error,
and evaluating at all cell centers. Predicted densities are compared to a
proximity-based ground-truth density via KL divergence (natural log).
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import GridMap
from .novelty import ErrorMap
from .simulator import Environment

DEFAULT_BANDWIDTH = 0.5  # meters, one cell
DEFAULT_EPS = 1e-9
GROUND_TRUTH_RADIUS = 0.75  # meters


@dataclass
class DensityMap:
    grid: GridMap
    p: np.ndarray  # shape (ny, nx), non-negative, sums to 1

    def __post_init__(self):
        if self.p.shape != (self.grid.ny, self.grid.nx):
            raise ValueError("density shape must match grid")
        if np.any(self.p < 0):
            raise ValueError("density values must be non-negative")
        if abs(float(self.p.sum()) - 1.0) > 1e-9:
            raise ValueError("density must sum to 1")


@dataclass
class KlReport:
    scenario: str
    pipeline: str
    bandwidth: float
    eps: float
    kl_pred_vs_truth: float
    kl_uniform_vs_truth: float

    def to_json(self) -> dict:
        return {
            "scenario": self.scenario,
            "pipeline": self.pipeline,
            "bandwidth": self.bandwidth,
            "eps": self.eps,
            "kl_pred_vs_truth": self.kl_pred_vs_truth,
            "kl_uniform_vs_truth": self.kl_uniform_vs_truth,
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n", encoding="utf-8")


def _cell_centers(grid: GridMap) -> np.ndarray:
    """(n_cells, 2) centers, row-major (j outer, i inner)."""
    return np.array([grid.cell_center(i, j) for i, j in grid.cells()])


def kde(emap: ErrorMap, bandwidth: float = DEFAULT_BANDWIDTH) -> DensityMap:
    """Smooth cell errors into a probability density over the cell centers.

    Missing cells contribute zero weight. The output is normalized to sum 1,
    so the result is invariant to uniform scaling of the input map.
    """
    if bandwidth <= 0:
        raise ValueError("bandwidth must be positive")
    weights = np.nan_to_num(emap.values, nan=0.0).reshape(-1)
    if np.any(weights < 0):
        raise ValueError("error map values must be non-negative")
    if weights.sum() <= 0:
        raise ValueError("no density mass: error map is all zero")
    centers = _cell_centers(emap.grid)
    diff = centers[:, None, :] - centers[None, :, :]
    sq = np.sum(diff * diff, axis=2)
    density = np.exp(-sq / (2.0 * bandwidth**2)) @ weights
    density /= density.sum()
    return DensityMap(grid=emap.grid, p=density.reshape(emap.grid.ny, emap.grid.nx))


def uniform_density(grid: GridMap) -> DensityMap:
    p = np.full((grid.ny, grid.nx), 1.0 / grid.n_cells)
    return DensityMap(grid=grid, p=p)


def kl_divergence(p: DensityMap, q: DensityMap, eps: float = DEFAULT_EPS) -> float:
    """KL(P || Q) in nats after flooring both densities at eps and
    renormalizing (Q = 0 would otherwise be undefined)."""
    if p.grid != q.grid:
        raise ValueError("density maps must share the same grid")
    pf = np.maximum(p.p, eps)
    qf = np.maximum(q.p, eps)
    pf = pf / pf.sum()
    qf = qf / qf.sum()
    return float(np.sum(pf * np.log(pf / qf)))


def ground_truth_density(
    scenario_env: Environment,
    grid: GridMap,
    bandwidth: float = DEFAULT_BANDWIDTH,
    radius: float = GROUND_TRUTH_RADIUS,
) -> DensityMap:
    """Indicator density: weight 1 on cells whose center lies within
    ``radius`` of any novelty obstacle footprint, smoothed with the same KDE."""
    if not scenario_env.obstacles:
        raise ValueError("no novelty to locate: scenario has no obstacles")
    values = np.zeros((grid.ny, grid.nx))
    for i, j in grid.cells():
        center = grid.cell_center(i, j)
        if any(o.footprint.distance_to(center) <= radius for o in scenario_env.obstacles):
            values[j, i] = 1.0
    emap = ErrorMap(grid=grid, values=values, counts=np.ones((grid.ny, grid.nx), dtype=int))
    return kde(emap, bandwidth)


def density_to_error_map(d: DensityMap) -> ErrorMap:
    """View a density as an error map for CSV export."""
    return ErrorMap(
        grid=d.grid,
        values=d.p.copy(),
        counts=np.ones((d.grid.ny, d.grid.nx), dtype=int),
    )
