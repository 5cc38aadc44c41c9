"""Small fully-connected binary classifiers written directly in numpy.

The network maps a feature vector to the probability of class 1 through
rectifier hidden layers and a single logistic output unit. Forward and
backward passes use ``einsum`` so that the value computed for a row never
depends on which other rows share the batch; batched boundary searches rely
on this to reproduce sequential ones exactly. Training uses plain BLAS
matmuls since only run-to-run determinism matters there.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit

from .errors import DataFormatError, DegenerateDataError, InputShapeError, ConfigurationError

MODEL_FORMAT = "ibs-model"
MODEL_VERSION = 1

HIDDEN_ACTIVATIONS = ("relu",)
OUTPUT_ACTIVATIONS = ("sigmoid",)


@dataclass(frozen=True)
class NetworkSpec:
    """Layer widths from input to output; the last width must be 1.

    A two-entry spec such as ``(2, 1)`` is a single affine layer followed by
    the logistic unit, i.e. logistic regression.
    """

    layer_sizes: tuple[int, ...]
    hidden_activation: str = "relu"
    output_activation: str = "sigmoid"

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        object.__setattr__(self, "layer_sizes", sizes)
        if len(sizes) < 2:
            raise ConfigurationError("a network needs at least an input and an output layer")
        if any(s < 1 for s in sizes):
            raise ConfigurationError(f"layer sizes must be positive, got {sizes}")
        if sizes[-1] != 1:
            raise ConfigurationError(f"output layer must have exactly one unit, got {sizes[-1]}")
        if self.hidden_activation not in HIDDEN_ACTIVATIONS:
            raise ConfigurationError(f"unknown hidden activation {self.hidden_activation!r}")
        if self.output_activation not in OUTPUT_ACTIVATIONS:
            raise ConfigurationError(f"unknown output activation {self.output_activation!r}")

    @classmethod
    def mlp(cls, n_inputs: int, hidden=(10, 10, 10, 10, 10)) -> "NetworkSpec":
        return cls((n_inputs, *hidden, 1))

    @classmethod
    def linear(cls, n_inputs: int) -> "NetworkSpec":
        return cls((n_inputs, 1))

    @property
    def n_inputs(self) -> int:
        return self.layer_sizes[0]

    @property
    def is_linear(self) -> bool:
        return len(self.layer_sizes) == 2


@dataclass(frozen=True, eq=False)
class TrainedModel:
    """Immutable weights of a :class:`NetworkSpec`.

    ``weights[l]`` has shape ``(fan_in, fan_out)`` so a layer computes
    ``h @ W + b``.
    """

    spec: NetworkSpec
    weights: tuple
    biases: tuple
    train_seed: int = 0
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        sizes = self.spec.layer_sizes
        if len(self.weights) != len(sizes) - 1 or len(self.biases) != len(sizes) - 1:
            raise ConfigurationError("number of weight/bias arrays does not match the spec")
        ws, bs = [], []
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            w = np.array(w, dtype=np.float64)
            b = np.array(b, dtype=np.float64).reshape(-1)
            if w.shape != (sizes[l], sizes[l + 1]) or b.shape != (sizes[l + 1],):
                raise ConfigurationError(
                    f"layer {l}: expected W{(sizes[l], sizes[l + 1])} and b({sizes[l + 1]},), "
                    f"got W{w.shape} and b{b.shape}"
                )
            w.setflags(write=False)
            b.setflags(write=False)
            ws.append(w)
            bs.append(b)
        object.__setattr__(self, "weights", tuple(ws))
        object.__setattr__(self, "biases", tuple(bs))

    @property
    def n_inputs(self) -> int:
        return self.spec.n_inputs


def build_model(weights, biases, train_seed=0, metadata=None) -> TrainedModel:
    """Wrap explicit weight arrays, inferring the layer widths."""
    ws = [np.atleast_2d(np.asarray(w, dtype=np.float64)) for w in weights]
    sizes = [ws[0].shape[0]] + [w.shape[1] for w in ws]
    return TrainedModel(NetworkSpec(tuple(sizes)), tuple(ws), tuple(biases), train_seed, dict(metadata or {}))


def init_model(spec: NetworkSpec, seed: int) -> TrainedModel:
    """He-uniform weights (fan-in scaling) and zero biases."""
    rng = np.random.default_rng(seed)
    ws, bs = [], []
    for fan_in, fan_out in zip(spec.layer_sizes[:-1], spec.layer_sizes[1:]):
        limit = np.sqrt(6.0 / fan_in)
        ws.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        bs.append(np.zeros(fan_out))
    return TrainedModel(spec, tuple(ws), tuple(bs), seed)


def sigmoid(z):
    return expit(z)


def _as_batch(model: TrainedModel, x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        if x.shape[0] != model.n_inputs:
            raise InputShapeError(f"expected {model.n_inputs} features, got {x.shape[0]}")
        return x[None, :], True
    if x.ndim == 2:
        if x.shape[1] != model.n_inputs:
            raise InputShapeError(f"expected {model.n_inputs} features, got {x.shape[1]}")
        return x, False
    raise InputShapeError(f"expected a vector or a matrix, got array of shape {x.shape}")


def _forward(model: TrainedModel, X):
    """Return the pre-activations of every layer; the last one is the logit."""
    pre = []
    h = X
    n_layers = len(model.weights)
    for l, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = np.einsum("ij,jk->ik", h, w) + b
        pre.append(z)
        if l < n_layers - 1:
            h = np.maximum(z, 0.0)
    return pre


def logit(model: TrainedModel, x):
    """Pre-sigmoid output. Vector in gives a scalar, matrix in gives a vector."""
    X, single = _as_batch(model, x)
    z = _forward(model, X)[-1][:, 0]
    return float(z[0]) if single else z


def predict_proba(model: TrainedModel, x):
    """Probability of class 1 for one feature vector or a batch of rows."""
    X, single = _as_batch(model, x)
    p = sigmoid(_forward(model, X)[-1][:, 0])
    return float(p[0]) if single else p


def predict_class(model: TrainedModel, x):
    return (np.asarray(predict_proba(model, x)) > 0.5).astype(int)


def input_gradient(model: TrainedModel, x, output: str = "proba"):
    """Gradient of the output with respect to the input features.

    ``output`` is ``"proba"`` (default) or ``"logit"``. The rectifier's
    derivative at exactly zero is taken to be 0.
    """
    if output not in ("proba", "logit"):
        raise ConfigurationError(f"output must be 'proba' or 'logit', got {output!r}")
    X, single = _as_batch(model, x)
    pre = _forward(model, X)
    if output == "proba":
        s = sigmoid(pre[-1])
        g = s * (1.0 - s)
    else:
        g = np.ones_like(pre[-1])
    for l in range(len(model.weights) - 1, -1, -1):
        g = np.einsum("ik,jk->ij", g, model.weights[l])
        if l > 0:
            g = g * (pre[l - 1] > 0.0)
    return g[0] if single else g


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    epochs: int = 15
    batch_size: int = 128
    weight_decay: float = 0.0
    split_fraction: float = 0.85
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ConfigurationError("learning_rate must be positive")
        if self.epochs < 0:
            raise ConfigurationError("epochs must be non-negative")
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be positive")
        if self.weight_decay < 0:
            raise ConfigurationError("weight_decay must be non-negative")
        if not 0.0 < self.split_fraction < 1.0:
            raise ConfigurationError("split_fraction must lie in (0, 1)")


def bce_loss(model: TrainedModel, X, y) -> float:
    z = _forward(model, np.asarray(X, dtype=np.float64))[-1][:, 0]
    # softplus(z) - y*z == -[y log s + (1-y) log(1-s)]
    return float(np.mean(np.logaddexp(0.0, z) - y * z))


def classification_metrics(y_true, y_pred) -> dict:
    y_true = np.asarray(y_true).astype(int)
    y_pred = np.asarray(y_pred).astype(int)
    tp = int(np.sum((y_true == 1) & (y_pred == 1)))
    fp = int(np.sum((y_true == 0) & (y_pred == 1)))
    fn = int(np.sum((y_true == 1) & (y_pred == 0)))
    accuracy = float(np.mean(y_true == y_pred)) if y_true.size else float("nan")
    denom = 2 * tp + fp + fn
    f1 = 2 * tp / denom if denom else 0.0
    return {"accuracy": accuracy, "f1": float(f1)}


class _Adam:
    def __init__(self, params, lr, weight_decay, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.wd = lr, weight_decay
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            if self.wd:
                g = g + self.wd * p
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def _loss_gradients(ws, bs, X, y):
    hs = [X]
    pre = []
    for l, (w, b) in enumerate(zip(ws, bs)):
        z = hs[-1] @ w + b
        pre.append(z)
        if l < len(ws) - 1:
            hs.append(np.maximum(z, 0.0))
    g = (sigmoid(pre[-1]) - y[:, None]) / X.shape[0]
    gw, gb = [None] * len(ws), [None] * len(ws)
    for l in range(len(ws) - 1, -1, -1):
        gw[l] = hs[l].T @ g
        gb[l] = g.sum(axis=0)
        if l > 0:
            g = (g @ ws[l].T) * (pre[l - 1] > 0.0)
    return gw, gb


def fit(spec: NetworkSpec, X, y, config: TrainConfig, init_seed=None, shuffle_seed=None):
    """Adam on binary cross-entropy over ``(X, y)``.

    Returns the trained model and the per-epoch mean training loss, with the
    loss of the initial weights in position 0.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != spec.n_inputs:
        raise InputShapeError(f"expected an (n, {spec.n_inputs}) feature matrix, got {X.shape}")
    init_seed = config.seed if init_seed is None else init_seed
    shuffle_seed = config.seed if shuffle_seed is None else shuffle_seed
    model = init_model(spec, init_seed)
    ws = [np.array(w) for w in model.weights]
    bs = [np.array(b) for b in model.biases]
    params = ws + bs
    opt = _Adam(params, config.learning_rate, config.weight_decay)
    rng = np.random.default_rng(shuffle_seed)
    history = [bce_loss(model, X, y)]
    n = X.shape[0]
    for _ in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            gw, gb = _loss_gradients(ws, bs, X[idx], y[idx])
            opt.step(params, gw + gb)
        history.append(bce_loss(TrainedModel(spec, tuple(ws), tuple(bs)), X, y))
    return TrainedModel(spec, tuple(ws), tuple(bs), init_seed), history


def train(spec: NetworkSpec, dataset, config: TrainConfig = TrainConfig()):
    """Split ``dataset``, fit on the training part and score the held-out part.

    Seeds for the split, the initial weights and the minibatch order are
    derived from ``config.seed``; see :func:`ibs.datagen.train_test_split`.
    """
    from .datagen import train_test_split

    labels = np.asarray(dataset.labels)
    if not np.all(np.isin(labels, (0, 1))):
        raise DegenerateDataError("labels must be 0 or 1")
    if np.unique(labels).size < 2:
        raise DegenerateDataError("training requires samples from both classes")
    train_ds, test_ds = train_test_split(dataset, config.split_fraction, config.seed)
    if np.unique(train_ds.labels).size < 2:
        raise DegenerateDataError("training split contains a single class")
    model, history = fit(
        spec, train_ds.features, train_ds.labels, config,
        init_seed=_stage_seed(config.seed, 1), shuffle_seed=_stage_seed(config.seed, 2),
    )
    meta = {
        "split_fraction": config.split_fraction,
        "split_seed": config.seed,
        "dataset": dataset.name,
        "n_features": int(dataset.features.shape[1]),
    }
    model = TrainedModel(model.spec, model.weights, model.biases, config.seed, meta)
    metrics = classification_metrics(test_ds.labels, predict_class(model, test_ds.features))
    metrics.update(
        train_loss_initial=history[0],
        train_loss_final=history[-1],
        loss_history=history,
        n_train=int(train_ds.labels.size),
        n_test=int(test_ds.labels.size),
    )
    return model, metrics


def _stage_seed(seed: int, stage: int) -> int:
    return int(np.random.SeedSequence([seed, stage]).generate_state(1)[0])


def model_to_dict(model: TrainedModel) -> dict:
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "spec": {
            "layer_sizes": list(model.spec.layer_sizes),
            "hidden_activation": model.spec.hidden_activation,
            "output_activation": model.spec.output_activation,
        },
        "weights": [w.tolist() for w in model.weights],
        "biases": [b.tolist() for b in model.biases],
        "train_seed": int(model.train_seed),
        "metadata": model.metadata,
    }


def model_from_dict(d: dict) -> TrainedModel:
    if d.get("format") != MODEL_FORMAT:
        raise DataFormatError(f"not a model file (format={d.get('format')!r})")
    if d.get("version") != MODEL_VERSION:
        raise DataFormatError(f"unsupported model version {d.get('version')!r}")
    try:
        spec = NetworkSpec(tuple(d["spec"]["layer_sizes"]), d["spec"]["hidden_activation"],
                           d["spec"]["output_activation"])
        return TrainedModel(
            spec,
            tuple(np.array(w, dtype=np.float64).reshape(a, b)
                  for w, a, b in zip(d["weights"], spec.layer_sizes[:-1], spec.layer_sizes[1:])),
            tuple(np.array(b, dtype=np.float64) for b in d["biases"]),
            int(d.get("train_seed", 0)),
            dict(d.get("metadata", {})),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DataFormatError(f"malformed model file: {exc}") from exc


def save_model(model: TrainedModel, path) -> Path:
    # json writes floats with repr(), the shortest string that round-trips.
    path = Path(path)
    path.write_text(json.dumps(model_to_dict(model), indent=1) + "\n")
    return path


def load_model(path) -> TrainedModel:
    path = Path(path)
    try:
        d = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DataFormatError(exc.msg, path, exc.lineno) from exc
    return model_from_dict(d)
