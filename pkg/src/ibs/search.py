"""Informed Baseline Search: sampling the decision boundary from inside the data.

A candidate point starts at a training sample. At each step it moves toward a
random training sample of the class the model currently rates *lower*, by a
fraction ``|p - 0.5| * gamma**step`` of the way there. It stops once
``|p - 0.5| <= epsilon``. Every move is a convex step toward a training
point, so candidates never leave the convex hull of the training data.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import ConfigurationError, DataFormatError, InputShapeError
from .nn import TrainedModel, input_gradient, logit, predict_proba
from .oracle import count_crossings


@dataclass(frozen=True)
class SearchConfig:
    epsilon: float = 1e-3
    max_steps: int = 10_000
    gamma: float = 0.999
    pool_seed: int = 0
    # None draws targets from the full class pools; k draws them from a fixed
    # random subset of k samples per class.
    pool_subsample: int | None = None
    record_trace: bool = False

    def __post_init__(self):
        if not 0.0 < self.epsilon < 0.5:
            raise ConfigurationError("epsilon must lie in (0, 0.5)")
        if self.max_steps < 1:
            raise ConfigurationError("max_steps must be positive")
        if not 0.0 < self.gamma <= 1.0:
            raise ConfigurationError("gamma must lie in (0, 1]")
        if self.pool_subsample is not None and self.pool_subsample < 1:
            raise ConfigurationError("pool_subsample must be positive")

    @property
    def pool_mode(self) -> str:
        return "full-class" if self.pool_subsample is None else f"subsample({self.pool_subsample})"


class TraceStep(NamedTuple):
    point: np.ndarray
    prediction: float
    magnitude: float
    target_class: int
    target_index: int


@dataclass(frozen=True, eq=False)
class BoundarySample:
    point: np.ndarray
    prediction: float
    steps_taken: int
    start: np.ndarray
    converged: bool
    trace: list | None = None


@dataclass(frozen=True, eq=False)
class BoundarySet:
    """Converged samples of a :func:`sample_boundary` run plus the failures."""

    samples: list
    n_started: int
    failures: list = field(default_factory=list)

    @property
    def n_failed(self) -> int:
        return len(self.failures)

    @property
    def convergence_rate(self) -> float:
        return len(self.samples) / self.n_started if self.n_started else 0.0

    @property
    def points(self) -> np.ndarray:
        if not self.samples:
            return np.empty((0, 0))
        return np.stack([s.point for s in self.samples])


def search_rng(pool_seed: int, index: int) -> np.random.Generator:
    """Random stream of the ``index``-th search of a run seeded with ``pool_seed``."""
    return np.random.default_rng([pool_seed, 1, index])


def decay_table(gamma: float, max_steps: int) -> np.ndarray:
    """``gamma ** s`` for ``s = 0 .. max_steps`` (shared so every path rounds alike)."""
    return np.power(float(gamma), np.arange(max_steps + 1, dtype=np.float64))


def _prepare_pools(model, pool0, pool1, config):
    pools = []
    for c, pool in enumerate((pool0, pool1)):
        pool = np.atleast_2d(np.asarray(pool, dtype=np.float64))
        if pool.size == 0 or pool.shape[0] == 0:
            raise ConfigurationError(f"class {c} target pool is empty")
        if pool.shape[1] != model.n_inputs:
            raise InputShapeError(f"class {c} pool has {pool.shape[1]} features, "
                                  f"model expects {model.n_inputs}")
        if config.pool_subsample is not None and config.pool_subsample < pool.shape[0]:
            rng = np.random.default_rng([config.pool_seed, 2, c])
            pool = pool[np.sort(rng.choice(pool.shape[0], config.pool_subsample, replace=False))]
        pools.append(pool)
    return pools


def _pick(pool_len: int, u):
    return np.minimum((u * pool_len).astype(np.int64), pool_len - 1)


def ibs_search(model: TrainedModel, start, pool0, pool1, config: SearchConfig = SearchConfig(),
               rng: np.random.Generator | None = None) -> BoundarySample:
    """Walk from ``start`` to the 0.5 level set of ``model``.

    Targets are drawn uniformly (one uniform variate per step) from ``pool1``
    while the prediction is below 0.5 and from ``pool0`` while it is above.
    Running out of steps is not an error: the sample comes back with
    ``converged=False``.
    """
    pool0, pool1 = _prepare_pools(model, pool0, pool1, config)
    start = np.asarray(start, dtype=np.float64)
    if start.shape != (model.n_inputs,):
        raise InputShapeError(f"start must have shape ({model.n_inputs},), got {start.shape}")
    if rng is None:
        rng = np.random.default_rng(config.pool_seed)
    scale = decay_table(config.gamma, config.max_steps)
    trace = [] if config.record_trace else None

    bl = start.copy()
    p = predict_proba(model, bl)
    step = 0
    while abs(p - 0.5) > config.epsilon and step < config.max_steps:
        losing = 1 if p < 0.5 else 0
        pool = pool1 if losing else pool0
        j = int(_pick(pool.shape[0], np.float64(rng.random())))
        magnitude = abs(p - 0.5) * scale[step]
        if trace is not None:
            trace.append(TraceStep(bl.copy(), p, float(magnitude), losing, j))
        bl = bl + (pool[j] - bl) * magnitude
        p = predict_proba(model, bl)
        step += 1
    return BoundarySample(bl, float(p), step, start, abs(p - 0.5) <= config.epsilon, trace)


def ibs_search_batch(model: TrainedModel, starts, pool0, pool1, config: SearchConfig = SearchConfig(),
                     rngs=None, chunk: int = 256) -> list:
    """Run one search per row of ``starts`` in lockstep.

    All still-active candidates are evaluated with a single model call per
    step. Given the same streams, the result matches calling
    :func:`ibs_search` on each row separately, bit for bit.
    """
    pool0, pool1 = _prepare_pools(model, pool0, pool1, config)
    starts = np.atleast_2d(np.asarray(starts, dtype=np.float64))
    if starts.shape[1] != model.n_inputs:
        raise InputShapeError(f"starts must have {model.n_inputs} columns")
    n = starts.shape[0]
    if rngs is None:
        rngs = [search_rng(config.pool_seed, i) for i in range(n)]
    if len(rngs) != n:
        raise ConfigurationError("need one random stream per start")
    scale = decay_table(config.gamma, config.max_steps)
    traces = [[] for _ in range(n)] if config.record_trace else None

    X = starts.copy()
    p = predict_proba(model, X)
    steps = np.zeros(n, dtype=np.int64)
    active = np.abs(p - 0.5) > config.epsilon
    buf = np.empty((n, chunk))
    it = 0
    while active.any():
        idx = np.flatnonzero(active)
        if it % chunk == 0:
            for i in idx:
                buf[i] = rngs[i].random(chunk)
        u = buf[idx, it % chunk]
        pi = p[idx]
        losing = pi < 0.5
        j = np.where(losing, _pick(pool1.shape[0], u), _pick(pool0.shape[0], u))
        targets = np.where(losing[:, None], pool1[np.minimum(j, pool1.shape[0] - 1)],
                           pool0[np.minimum(j, pool0.shape[0] - 1)])
        mag = np.abs(pi - 0.5) * scale[steps[idx]]
        if traces is not None:
            for r, i in enumerate(idx):
                traces[i].append(TraceStep(X[i].copy(), float(pi[r]), float(mag[r]),
                                           int(losing[r]), int(j[r])))
        X[idx] = X[idx] + (targets - X[idx]) * mag[:, None]
        p[idx] = predict_proba(model, X[idx])
        steps[idx] += 1
        active[idx] = (np.abs(p[idx] - 0.5) > config.epsilon) & (steps[idx] < config.max_steps)
        it += 1

    return [
        BoundarySample(X[i].copy(), float(p[i]), int(steps[i]), starts[i].copy(),
                       bool(abs(p[i] - 0.5) <= config.epsilon),
                       traces[i] if traces is not None else None)
        for i in range(n)
    ]


def start_indices(labels, n_starts: int, seed: int) -> np.ndarray:
    """Row indices of ``n_starts`` training samples, alternating class 0 and 1.

    Each class is visited in a seeded random order, cycling if ``n_starts``
    exceeds its size.
    """
    labels = np.asarray(labels)
    rng = np.random.default_rng([seed, 0])
    orders = [rng.permutation(np.flatnonzero(labels == c)) for c in (0, 1)]
    out = np.empty(n_starts, dtype=np.int64)
    for k in range(n_starts):
        order = orders[k % 2]
        out[k] = order[(k // 2) % order.size]
    return out


def sample_boundary(model: TrainedModel, dataset, n_samples: int,
                    config: SearchConfig = SearchConfig()) -> BoundarySet:
    """Run IBS from ``n_samples`` training points with the class-split pools.

    ``dataset`` is the training split. The ``i``-th search uses
    ``search_rng(config.pool_seed, i)``.
    """
    pool0, pool1 = dataset.class_pools()
    idx = start_indices(dataset.labels, n_samples, config.pool_seed)
    results = ibs_search_batch(model, dataset.features[idx], pool0, pool1, config)
    ok = [r for r in results if r.converged]
    bad = [r for r in results if not r.converged]
    return BoundarySet(ok, n_samples, bad)


@dataclass(frozen=True, eq=False)
class BaselineSelection:
    baseline: np.ndarray
    distance: float
    crossings: int
    orthogonality: float
    rank_pool_size: int
    index: int
    crossing_ts: tuple = ()
    refined: bool = False


def project_to_boundary(model: TrainedModel, x, start, max_iter: int = 50, tol: float = 1e-10):
    """Foot of the perpendicular from ``x`` onto the logit-zero surface near ``start``.

    Each iteration linearises the logit at the current point ``z`` and
    projects ``x`` onto that hyperplane:
    ``z <- x - (h(z) + g(z).(x - z)) / |g(z)|^2 * g(z)``.
    Returns ``(point, converged)``.
    """
    x = np.asarray(x, dtype=float)
    z = np.asarray(start, dtype=float).copy()
    for _ in range(max_iter):
        h = logit(model, z)
        g = input_gradient(model, z, output="logit")
        gg = float(g @ g)
        if gg == 0.0 or not np.isfinite(h):
            return z, False
        z_new = x - ((h + g @ (x - z)) / gg) * g
        if np.linalg.norm(z_new - z) <= tol * (1.0 + np.linalg.norm(z)):
            return z_new, True
        z = z_new
    return z, False


def _refine(model, x, sel: BaselineSelection, epsilon):
    """Replace a pool baseline by its projection if that is a valid, closer boundary point.

    The pool point may sit up to ``|logit| / |grad logit|`` off the surface,
    so the projection is allowed to be farther from ``x`` by that much.
    """
    b = sel.baseline
    z, ok = project_to_boundary(model, x, b)
    if not ok:
        return None
    g = input_gradient(model, b, output="logit")
    gn = np.linalg.norm(g)
    offset = abs(logit(model, b)) / gn if gn > 0 else np.inf
    dist = float(np.linalg.norm(x - z))
    if abs(predict_proba(model, z) - 0.5) > epsilon or dist > sel.distance + offset + 1e-12:
        return None
    return z, dist


def _points_of(db_samples):
    if isinstance(db_samples, BoundarySet):
        db_samples = db_samples.samples
    if isinstance(db_samples, np.ndarray):
        return np.atleast_2d(db_samples).astype(float)
    if len(db_samples) == 0:
        raise ConfigurationError("no boundary samples to choose from")
    first = db_samples[0]
    if isinstance(first, BoundarySample):
        return np.stack([s.point for s in db_samples])
    return np.atleast_2d(np.asarray(db_samples, dtype=float))


def orthogonality(model: TrainedModel, baseline, x) -> float:
    """Cosine between the model gradient at ``baseline`` and ``x - baseline``."""
    g = input_gradient(model, baseline)
    d = np.asarray(x, dtype=float) - baseline
    denom = np.linalg.norm(g) * np.linalg.norm(d)
    if denom == 0.0:
        return 0.0
    return float(np.clip(g @ d / denom, -1.0, 1.0))


def select_baseline(x, db_samples, model: TrainedModel, rule: str = "closest",
                    crossing_resolution: int = 1024, epsilon: float = 1e-3,
                    refine: bool = False) -> BaselineSelection:
    """Pick the closest (or, for ``rule="farthest"``, the farthest) boundary sample.

    Ties go to the lowest index. The choice is annotated with the number of
    boundary crossings on the straight path to ``x`` and the orthogonality
    cosine. With ``refine`` the closest sample is replaced by the orthogonal
    projection of ``x`` onto the boundary next to it, unless the projection
    fails, leaves the boundary, introduces crossings or ends up farther away.
    """
    pts = _points_of(db_samples)
    if pts.shape[0] == 0:
        raise ConfigurationError("no boundary samples to choose from")
    x = np.asarray(x, dtype=float)
    if x.shape != (pts.shape[1],):
        raise InputShapeError(f"sample has shape {x.shape}, boundary points have {pts.shape[1]} features")
    d = np.sqrt(np.sum((pts - x) ** 2, axis=1))
    if rule == "closest":
        k = int(np.argmin(d))
    elif rule == "farthest":
        k = int(np.argmax(d))
    else:
        raise ConfigurationError(f"unknown selection rule {rule!r}")
    bl = pts[k].copy()
    rep = count_crossings(model, bl, x, crossing_resolution, epsilon)
    sel = BaselineSelection(bl, float(d[k]), rep.count, orthogonality(model, bl, x),
                            pts.shape[0], k, rep.crossing_ts)
    if refine and rule == "closest":
        found = _refine(model, x, sel, epsilon)
        if found is not None:
            z, dist = found
            zrep = count_crossings(model, z, x, crossing_resolution, epsilon)
            if zrep.count <= rep.count:
                sel = BaselineSelection(z, dist, zrep.count, orthogonality(model, z, x),
                                        pts.shape[0], k, zrep.crossing_ts, True)
    return sel


def select_optimal_baseline(x, db_samples, model: TrainedModel, crossing_resolution: int = 1024,
                            epsilon: float = 1e-3, refine: bool = False) -> BaselineSelection:
    """Closest boundary sample to ``x`` (optionally refined to the orthogonal foot)."""
    return select_baseline(x, db_samples, model, "closest", crossing_resolution, epsilon, refine)


def write_boundary_csv(samples, path) -> Path:
    """Columns ``x0..x{d-1},prediction,steps,converged``."""
    path = Path(path)
    samples = list(samples)
    dim = samples[0].point.shape[0] if samples else 0
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"x{i}" for i in range(dim)] + ["prediction", "steps", "converged"])
        for s in samples:
            w.writerow([repr(v) for v in s.point.tolist()]
                       + [repr(float(s.prediction)), s.steps_taken, int(s.converged)])
    return path


def read_boundary_csv(path) -> list:
    path = Path(path)
    out = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[-3:] != ["prediction", "steps", "converged"]:
            raise DataFormatError("expected columns x0..,prediction,steps,converged", path, 1)
        dim = len(header) - 3
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != dim + 3:
                raise DataFormatError(f"expected {dim + 3} fields, found {len(row)}", path, lineno)
            try:
                pt = np.array([float(v) for v in row[:dim]])
                out.append(BoundarySample(pt, float(row[dim]), int(row[dim + 1]), pt.copy(),
                                          bool(int(row[dim + 2]))))
            except ValueError as exc:
                raise DataFormatError(f"unparseable value ({exc})", path, lineno) from exc
    return out
