"""Ground-truth checks for decision-boundary samples.

Nothing here shares code with the boundary search. The grid oracle brute-forces
the 0.5 level set on a regular lattice (2-D and 3-D only), the crossing
counter scans a straight segment, and linear models get closed-form answers.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .errors import InputShapeError, UnsupportedDimensionError, UnsupportedModelError
from .nn import TrainedModel, predict_proba

DEFAULT_GRID_RESOLUTION = {2: 512, 3: 96}


@dataclass(frozen=True)
class CrossingReport:
    count: int
    crossing_ts: tuple
    resolution: int


def count_crossings(model: TrainedModel, baseline, x, resolution: int = 1024,
                    epsilon: float = 1e-3) -> CrossingReport:
    """Count 0.5-crossings of the model output along ``baseline -> x``.

    The segment is sampled at ``t = i / resolution``. When the baseline lies
    on the boundary (within ``epsilon``) the leading samples that stay inside
    the epsilon band are skipped, so leaving the boundary is not counted.
    Crossing positions are linearly interpolated between samples.
    """
    if resolution < 2:
        raise ValueError("resolution must be at least 2")
    baseline = np.asarray(baseline, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if baseline.shape != x.shape or x.shape != (model.n_inputs,):
        raise InputShapeError(
            f"baseline {baseline.shape} and sample {x.shape} must both be ({model.n_inputs},)")
    t = np.arange(resolution + 1) / resolution
    v = predict_proba(model, baseline[None, :] + t[:, None] * (x - baseline)[None, :]) - 0.5

    start = 0
    if abs(v[0]) <= epsilon:
        outside = np.flatnonzero(np.abs(v) > epsilon)
        if outside.size == 0:
            return CrossingReport(0, (), resolution)
        start = int(outside[0])

    ts = []
    prev_i = None
    for i in range(start, resolution + 1):
        if v[i] == 0.0:
            continue
        if prev_i is not None and (v[i] > 0) != (v[prev_i] > 0):
            a, b = v[prev_i], v[i]
            ts.append(float(t[prev_i] + (t[i] - t[prev_i]) * a / (a - b)))
        prev_i = i
    return CrossingReport(len(ts), tuple(ts), resolution)


@dataclass(frozen=True, eq=False)
class GridOracle:
    bounds: tuple
    resolution: int
    boundary_points: np.ndarray

    @property
    def spacing(self) -> np.ndarray:
        b = np.asarray(self.bounds, dtype=float)
        return (b[:, 1] - b[:, 0]) / self.resolution

    @property
    def max_spacing(self) -> float:
        return float(self.spacing.max())

    def nearest_distance(self, points) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if len(self.boundary_points) == 0:
            return np.full(points.shape[0], np.inf)
        d, _ = cKDTree(self.boundary_points).query(points)
        return d


def default_bounds(X, pad: float = 0.1):
    """Bounding box of ``X`` widened by ``pad`` of its extent on every side."""
    X = np.asarray(X, dtype=float)
    lo, hi = X.min(axis=0), X.max(axis=0)
    ext = np.where(hi > lo, hi - lo, 1.0)
    return tuple((float(a), float(b)) for a, b in zip(lo - pad * ext, hi + pad * ext))


def grid_boundary(model: TrainedModel, bounds, resolution: int | None = None,
                  chunk: int = 65536) -> GridOracle:
    """Level-set points of ``f = 0.5`` on a regular lattice.

    ``resolution`` counts cells per axis, so each axis has ``resolution + 1``
    nodes. Every lattice edge whose endpoints fall on different sides of 0.5
    contributes the linear-interpolation root along that edge.
    """
    dim = model.n_inputs
    if dim not in (2, 3):
        raise UnsupportedDimensionError(f"grid oracle supports 2 or 3 inputs, model has {dim}")
    if len(bounds) != dim:
        raise InputShapeError(f"need {dim} (min, max) pairs, got {len(bounds)}")
    if resolution is None:
        resolution = DEFAULT_GRID_RESOLUTION[dim]
    if resolution < 8:
        raise ValueError("resolution must be at least 8")
    axes = [np.linspace(lo, hi, resolution + 1) for lo, hi in bounds]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, dim)
    vals = np.concatenate([predict_proba(model, mesh[i:i + chunk]) for i in range(0, len(mesh), chunk)])
    v = vals.reshape((resolution + 1,) * dim) - 0.5
    grid = mesh.reshape((resolution + 1,) * dim + (dim,))

    found = []
    for axis in range(dim):
        lo = [slice(None)] * dim
        hi = [slice(None)] * dim
        lo[axis] = slice(0, -1)
        hi[axis] = slice(1, None)
        a, b = v[tuple(lo)], v[tuple(hi)]
        cross = (a > 0) != (b > 0)
        if not cross.any():
            continue
        a, b = a[cross], b[cross]
        p0 = grid[tuple(lo)][cross]
        p1 = grid[tuple(hi)][cross]
        frac = a / (a - b)
        found.append(p0 + frac[:, None] * (p1 - p0))
    pts = np.concatenate(found) if found else np.empty((0, dim))
    return GridOracle(tuple((float(lo), float(hi)) for lo, hi in bounds), int(resolution), pts)


def analytic_hyperplane(model: TrainedModel):
    """``(w, b)`` of the boundary ``w . x + b = 0`` of a single-affine-layer model."""
    if not model.spec.is_linear:
        raise UnsupportedModelError(
            f"closed form needs one affine layer, model has {len(model.weights)}")
    return np.array(model.weights[0][:, 0]), float(model.biases[0][0])


def hyperplane_distance(w, b, x):
    x = np.asarray(x, dtype=float)
    return np.abs(x @ w + b) / np.linalg.norm(w)


def nearest_neighbor_distances(queries, reference, exclude_self=False, chunk=512) -> np.ndarray:
    """Euclidean distance from each query row to its nearest reference row.

    With ``exclude_self`` the queries must be the reference rows themselves
    and each row ignores its own zero distance.
    """
    Q = np.atleast_2d(np.asarray(queries, dtype=float))
    R = np.atleast_2d(np.asarray(reference, dtype=float))
    if R.shape[1] <= 3:
        k = 2 if exclude_self else 1
        d, _ = cKDTree(R).query(Q, k=k)
        return d[:, -1] if exclude_self else d
    r2 = np.einsum("ij,ij->i", R, R)
    out = np.empty(Q.shape[0])
    for s in range(0, Q.shape[0], chunk):
        q = Q[s:s + chunk]
        d2 = np.einsum("ij,ij->i", q, q)[:, None] + r2[None, :] - 2.0 * q @ R.T
        if exclude_self:
            rows = np.arange(q.shape[0])
            d2[rows, s + rows] = np.inf
        out[s:s + chunk] = np.sqrt(np.maximum(d2.min(axis=1), 0.0))
    return out


@dataclass(frozen=True)
class ManifoldCloseness:
    threshold: float
    fraction_within: float
    distances: np.ndarray
    percentile: float


def manifold_closeness(points, train_features, percentile: float = 99.0) -> ManifoldCloseness:
    """Share of ``points`` no farther from the training set than its own
    ``percentile``-th nearest-neighbour distance."""
    own = nearest_neighbor_distances(train_features, train_features, exclude_self=True)
    threshold = float(np.percentile(own, percentile))
    d = nearest_neighbor_distances(points, train_features)
    frac = float(np.mean(d <= threshold)) if d.size else 0.0
    return ManifoldCloseness(threshold, frac, d, percentile)


def write_oracle_csv(oracle: GridOracle, path) -> Path:
    path = Path(path)
    dim = oracle.boundary_points.shape[1]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"x{i}" for i in range(dim)])
        for p in oracle.boundary_points.tolist():
            w.writerow([repr(v) for v in p])
    return path
