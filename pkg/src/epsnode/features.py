"""Input pipelines turning raw measurements into model feature vectors.

Three pipelines are supported:

* RNG  — the per-anchor range estimates only (n_anchors features).
* MA   — ranges followed by, per anchor, the amplitudes of the first six
         peaks of the two-period moving average of its CIR
         (n_anchors * 7 features).
* PCA  — ranges followed by a principal-component projection of the
         concatenated CIRs (n_anchors + k features).

The PCA model and the min-max scaler are fitted on nominal training data
only and frozen for inference.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .dataset import CIR_LENGTH, Measurement


class Pipeline(str, Enum):
    RNG = "RNG"
    MA = "MA"
    PCA = "PCA"


@dataclass(frozen=True)
class FeatureVector:
    pipeline: Pipeline
    values: np.ndarray
    anchor_slots: dict[int, int]  # anchor_id -> index of its range feature


@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray            # (d,)
    components: np.ndarray      # (d, k), orthonormal columns
    explained_ratio: np.ndarray  # (k,), sorted descending

    @property
    def k(self) -> int:
        return self.components.shape[1]


@dataclass(frozen=True)
class Scaler:
    """Per-feature min-max map to [0, 1], fitted on training data.

    Inference values are deliberately not clamped: out-of-range values carry
    novelty signal. Constant features map to 0.
    """

    mins: np.ndarray
    maxs: np.ndarray


def moving_average(cir) -> np.ndarray:
    """Two-period moving average, same length as the input;
    y[0] = x[0], y[i] = (x[i] + x[i-1]) / 2."""
    x = np.asarray(getattr(cir, "samples", cir), dtype=float)
    y = x.copy()
    y[1:] = 0.5 * (x[1:] + x[:-1])
    return y


def find_peaks(signal, k: int = 6) -> np.ndarray:
    """Amplitudes of the first ``k`` peaks in temporal order, zero-padded.

    An interior index i is a peak iff signal[i] > signal[i-1] and
    signal[i] >= signal[i+1] (the first sample of a plateau wins); endpoints
    are never peaks.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    x = np.asarray(signal, dtype=float)
    out = np.zeros(k)
    found = 0
    for i in range(1, len(x) - 1):
        if x[i] > x[i - 1] and x[i] >= x[i + 1]:
            out[found] = x[i]
            found += 1
            if found == k:
                break
    return out


# ---------------------------------------------------------------------------
# PCA (cyclic Jacobi eigendecomposition)
# ---------------------------------------------------------------------------

def jacobi_eigh(a: np.ndarray, tol: float = 1e-10, max_sweeps: int = 100):
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns (eigenvalues, eigenvectors) with eigenvectors in columns, in no
    particular order. Converged when the off-diagonal Frobenius norm drops
    below ``tol``.
    """
    a = np.array(a, dtype=float)
    n = a.shape[0]
    v = np.eye(n)
    idx = np.arange(n)
    for _ in range(max_sweeps):
        off = math.sqrt(max(float(np.sum(a * a) - np.sum(np.diag(a) ** 2)), 0.0))
        if off < tol:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                diff = a[q, q] - a[p, p]
                if abs(apq) < 1e-300:
                    continue
                tau = diff / (2.0 * apq)
                t = math.copysign(1.0, tau) / (abs(tau) + math.hypot(1.0, tau))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = t * c
                col_p = a[idx, p].copy()
                col_q = a[idx, q].copy()
                a[idx, p] = c * col_p - s * col_q
                a[idx, q] = s * col_p + c * col_q
                row_p = a[p, idx].copy()
                row_q = a[q, idx].copy()
                a[p, idx] = c * row_p - s * row_q
                a[q, idx] = s * row_p + c * row_q
                vp = v[idx, p].copy()
                vq = v[idx, q].copy()
                v[idx, p] = c * vp - s * vq
                v[idx, q] = s * vp + c * vq
    return np.diag(a).copy(), v


def fit_pca(rows: np.ndarray, variance_target: float = 0.90) -> PcaModel:
    """Fit a PCA keeping the smallest number of components whose cumulative
    explained variance reaches ``variance_target``."""
    rows = np.asarray(rows, dtype=float)
    if rows.ndim != 2 or rows.shape[0] < 2:
        raise ValueError("need a 2D matrix with at least 2 rows")
    mean = rows.mean(axis=0)
    centered = rows - mean
    cov = centered.T @ centered / (rows.shape[0] - 1)
    total = float(np.trace(cov))
    if total <= 1e-300:
        raise ValueError("degenerate data: zero total variance")
    eigvals, eigvecs = jacobi_eigh(cov)
    order = np.argsort(eigvals)[::-1]
    eigvals = np.clip(eigvals[order], 0.0, None)
    eigvecs = eigvecs[:, order]
    ratios = eigvals / total
    cum = np.cumsum(ratios)
    k = int(np.searchsorted(cum, variance_target - 1e-12) + 1)
    k = min(k, len(eigvals))
    return PcaModel(mean=mean, components=eigvecs[:, :k].copy(), explained_ratio=ratios[:k].copy())


def apply_pca(model: PcaModel, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != model.mean.shape:
        raise ValueError(f"expected vector of length {model.mean.shape[0]}, got {x.shape}")
    return model.components.T @ (x - model.mean)


def save_pca(model: PcaModel, path: str | Path) -> None:
    obj = {
        "mean": model.mean.tolist(),
        "components": model.components.tolist(),  # row-major (d rows of k)
        "explained_ratio": model.explained_ratio.tolist(),
    }
    Path(path).write_text(json.dumps(obj) + "\n", encoding="utf-8")


def load_pca(path: str | Path) -> PcaModel:
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    return pca_from_json(obj)


def pca_to_json(model: PcaModel) -> dict:
    return {
        "mean": model.mean.tolist(),
        "components": model.components.tolist(),
        "explained_ratio": model.explained_ratio.tolist(),
    }


def pca_from_json(obj: dict) -> PcaModel:
    return PcaModel(
        mean=np.asarray(obj["mean"], dtype=float),
        components=np.asarray(obj["components"], dtype=float),
        explained_ratio=np.asarray(obj["explained_ratio"], dtype=float),
    )


# ---------------------------------------------------------------------------
# scaling
# ---------------------------------------------------------------------------

def fit_scaler(train: np.ndarray) -> Scaler:
    train = np.asarray(train, dtype=float)
    if train.ndim != 2 or train.shape[0] < 1:
        raise ValueError("need a nonempty 2D training matrix")
    return Scaler(mins=train.min(axis=0), maxs=train.max(axis=0))


def scale(scaler: Scaler, v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    span = scaler.maxs - scaler.mins
    out = np.zeros_like(v)
    nz = span > 0
    if v.ndim == 1:
        out[nz] = (v[nz] - scaler.mins[nz]) / span[nz]
    else:
        out[:, nz] = (v[:, nz] - scaler.mins[nz]) / span[nz]
    return out


def scaler_to_json(scaler: Scaler) -> dict:
    return {"mins": scaler.mins.tolist(), "maxs": scaler.maxs.tolist()}


def scaler_from_json(obj: dict) -> Scaler:
    return Scaler(
        mins=np.asarray(obj["mins"], dtype=float),
        maxs=np.asarray(obj["maxs"], dtype=float),
    )


# ---------------------------------------------------------------------------
# extraction
# ---------------------------------------------------------------------------

def cir_concat(meas: Measurement) -> np.ndarray:
    """Concatenated per-anchor CIRs in anchor-id order (length 152 * n)."""
    return np.concatenate([r.cir for r in meas.per_anchor])


def feature_length(pipeline: Pipeline, n_anchors: int, pca: PcaModel | None = None) -> int:
    if pipeline is Pipeline.RNG:
        return n_anchors
    if pipeline is Pipeline.MA:
        return n_anchors * 7
    if pca is None:
        raise ValueError("PCA pipeline requires a fitted PcaModel")
    return n_anchors + pca.k


def extract(meas: Measurement, pipeline: Pipeline, pca: PcaModel | None = None) -> FeatureVector:
    """Build the pipeline-specific feature vector for one measurement."""
    pipeline = Pipeline(pipeline)
    ranges = meas.ranges
    slots = {r.anchor_id: i for i, r in enumerate(meas.per_anchor)}
    if pipeline is Pipeline.RNG:
        values = ranges
    elif pipeline is Pipeline.MA:
        parts = [ranges]
        for r in meas.per_anchor:
            parts.append(find_peaks(moving_average(r.cir), 6))
        values = np.concatenate(parts)
    else:
        if pca is None:
            raise ValueError("PCA pipeline requires a fitted PcaModel")
        values = np.concatenate([ranges, apply_pca(pca, cir_concat(meas))])
    return FeatureVector(pipeline=pipeline, values=values, anchor_slots=slots)


def extract_matrix(
    measurements, pipeline: Pipeline, pca: PcaModel | None = None
) -> np.ndarray:
    """Feature matrix (one row per measurement)."""
    return np.array([extract(m, pipeline, pca).values for m in measurements])
