"""Integrated Gradients split into its displacement and gradient-integral factors.

For input ``x`` and baseline ``x'`` the attribution of feature ``i`` is
``(x_i - x'_i) * mean_k df/dx_i(x' + t_k (x - x'))`` with midpoint nodes
``t_k = (k + 0.5) / steps``. Both factors are kept: the displacement
("delta") and the averaged path gradient ("cumulated gradients"). The sign of
an attribution is only interpretable when the two are looked at together.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, InputShapeError
from .nn import TrainedModel, input_gradient, logit, predict_proba


@dataclass(frozen=True, eq=False)
class Attribution:
    input: np.ndarray
    baseline: np.ndarray
    values: np.ndarray
    delta: np.ndarray
    cumulated_gradients: np.ndarray
    steps: int
    completeness_residual: float
    target: int = 1
    output: str = "proba"

    @property
    def total(self) -> float:
        return float(np.sum(self.values))


@dataclass(frozen=True, eq=False)
class PathTrace:
    t_values: np.ndarray
    gradients: np.ndarray
    predictions: np.ndarray


def _check_pair(model, x, baseline):
    x = np.asarray(x, dtype=np.float64)
    baseline = np.asarray(baseline, dtype=np.float64)
    if x.shape != (model.n_inputs,) or baseline.shape != (model.n_inputs,):
        raise InputShapeError(
            f"input {x.shape} and baseline {baseline.shape} must both be ({model.n_inputs},)")
    return x, baseline


def _target_output(model, X, target, output):
    f = predict_proba(model, X) if output == "proba" else logit(model, X)
    if target == 1:
        return f
    return 1.0 - f if output == "proba" else -f


def integrated_gradients(model: TrainedModel, x, baseline, steps: int = 128, target: int = 1,
                         output: str = "proba", chunk: int = 4096) -> Attribution:
    """Midpoint-rule Integrated Gradients of ``model`` from ``baseline`` to ``x``.

    ``target=0`` explains the class-0 probability ``1 - f``. ``output="logit"``
    explains the pre-sigmoid value instead of the probability.
    """
    if steps < 1:
        raise ConfigurationError("steps must be at least 1")
    if target not in (0, 1):
        raise ConfigurationError("target must be 0 or 1")
    if output not in ("proba", "logit"):
        raise ConfigurationError("output must be 'proba' or 'logit'")
    x, baseline = _check_pair(model, x, baseline)
    delta = x - baseline
    total = np.zeros(model.n_inputs)
    for s in range(0, steps, chunk):
        t = (np.arange(s, min(steps, s + chunk)) + 0.5) / steps
        total += input_gradient(model, baseline + t[:, None] * delta, output=output).sum(axis=0)
    cg = total / steps
    if target == 0:
        cg = -cg
    values = delta * cg
    fx, fb = _target_output(model, np.stack([x, baseline]), target, output)
    residual = abs(float(values.sum()) - float(fx - fb))
    return Attribution(x, baseline, values, delta, cg, int(steps), residual, target, output)


def decompose(attribution: Attribution):
    """``(delta, cumulated_gradients)``; their product is ``attribution.values``."""
    return attribution.delta, attribution.cumulated_gradients


def gradient_along_path(model: TrainedModel, baseline, x, resolution: int = 101,
                        target: int = 1) -> PathTrace:
    """Gradients and predictions at ``resolution`` evenly spaced points, endpoints included.

    Predictions are always the class-1 probability; gradients follow
    ``target``.
    """
    if resolution < 2:
        raise ConfigurationError("resolution must be at least 2")
    x, baseline = _check_pair(model, x, baseline)
    t = np.linspace(0.0, 1.0, resolution)
    pts = baseline + t[:, None] * (x - baseline)
    g = input_gradient(model, pts)
    if target == 0:
        g = -g
    return PathTrace(t, g, predict_proba(model, pts))


def attribution_summary(attribution: Attribution, baseline_id=None) -> dict:
    return {
        "baseline_id": baseline_id,
        "steps": attribution.steps,
        "target": attribution.target,
        "output": attribution.output,
        "sum": attribution.total,
        "completeness_residual": attribution.completeness_residual,
        "n_negative": int(np.sum(attribution.values < 0)),
    }


def write_attribution_csv(attribution: Attribution, path, baseline_id=None):
    """Write per-feature rows and a ``.json`` summary next to them."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["feature", "delta", "cg", "value"])
        for i, (d, c, v) in enumerate(zip(attribution.delta.tolist(),
                                          attribution.cumulated_gradients.tolist(),
                                          attribution.values.tolist())):
            w.writerow([i, repr(d), repr(c), repr(v)])
    summary = path.with_suffix(".json")
    summary.write_text(json.dumps(attribution_summary(attribution, baseline_id), indent=1) + "\n")
    return path, summary


def read_attribution_csv(path):
    """Return ``(delta, cg, values)`` arrays from :func:`write_attribution_csv` output."""
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))[1:]
    arr = np.array([[float(v) for v in r[1:]] for r in rows])
    return arr[:, 0], arr[:, 1], arr[:, 2]
