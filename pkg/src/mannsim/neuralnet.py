"""From-scratch multilayer perceptron regressor with Adamax training.

Fixed architecture 12-32-32-32-32-32-1: tanh on the five hidden layers,
sigmoid on the output. Inputs are the 10 RSRQ-bin counts plus the two
action components, all scaled to [0, 1]; the target is the cell metric
scaled by the training set's maximum.
"""

from __future__ import annotations

import copy
import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .rng import substream

LAYER_DIMS = (12, 32, 32, 32, 32, 32, 1)
BW_INPUT_LEVELS = {40: 0.0, 64: 0.5, 88: 1.0}
THR_LO, THR_HI = 25, 33


@dataclass
class MlpWeights:
    layer_dims: tuple
    weights: list  # per layer, shape (fan_in, fan_out)
    biases: list  # per layer, shape (fan_out,)
    activations: list  # per layer, "tanh" or "sigmoid"

    def copy(self) -> "MlpWeights":
        return MlpWeights(
            self.layer_dims,
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            list(self.activations),
        )


def init_weights(seed: int, layer_dims=LAYER_DIMS) -> MlpWeights:
    """Symmetric uniform init, +-sqrt(6/(fan_in+fan_out)) per layer."""
    rng = substream(seed, "init")
    ws, bs = [], []
    for fi, fo in zip(layer_dims[:-1], layer_dims[1:]):
        lim = np.sqrt(6.0 / (fi + fo))
        ws.append(rng.uniform(-lim, lim, (fi, fo)))
        bs.append(np.zeros(fo))
    acts = ["tanh"] * (len(layer_dims) - 2) + ["sigmoid"]
    return MlpWeights(tuple(layer_dims), ws, bs, acts)


def _activate(name: str, z: np.ndarray) -> np.ndarray:
    if name == "tanh":
        return np.tanh(z)
    if name == "sigmoid":
        return 1.0 / (1.0 + np.exp(-z))
    raise ValueError(f"unknown activation {name!r}")


def _activate_prime_from_output(name: str, a: np.ndarray) -> np.ndarray:
    if name == "tanh":
        return 1.0 - a * a
    if name == "sigmoid":
        return a * (1.0 - a)
    raise ValueError(f"unknown activation {name!r}")


def forward(weights: MlpWeights, x):
    """Network output for one input (shape (12,) -> float) or a batch
    (shape (n, 12) -> (n,))."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    a = x[None, :] if single else x
    if a.shape[1] != weights.layer_dims[0]:
        raise ValueError(
            f"input width {a.shape[1]} != expected {weights.layer_dims[0]}"
        )
    for w, b, act in zip(weights.weights, weights.biases, weights.activations):
        a = _activate(act, a @ w + b)
    out = a[:, 0]
    return float(out[0]) if single else out


def loss_and_gradient(weights: MlpWeights, inputs, targets):
    """Mean-squared-error loss over a batch and its gradient.

    Returns (loss, (grad_weights, grad_biases)) with gradients shaped
    like the corresponding parameter lists.
    """
    X = np.atleast_2d(np.asarray(inputs, dtype=float))
    y = np.atleast_1d(np.asarray(targets, dtype=float))
    if len(X) == 0:
        raise ValueError("empty batch")
    acts = [X]
    a = X
    for w, b, act in zip(weights.weights, weights.biases, weights.activations):
        a = _activate(act, a @ w + b)
        acts.append(a)
    pred = acts[-1][:, 0]
    err = pred - y
    loss = float(np.mean(err * err))

    n = len(X)
    delta = (2.0 * err / n)[:, None] * _activate_prime_from_output(
        weights.activations[-1], acts[-1]
    )
    grad_w = [None] * len(weights.weights)
    grad_b = [None] * len(weights.biases)
    for l in range(len(weights.weights) - 1, -1, -1):
        grad_w[l] = acts[l].T @ delta
        grad_b[l] = delta.sum(axis=0)
        if l > 0:
            delta = (delta @ weights.weights[l].T) * _activate_prime_from_output(
                weights.activations[l - 1], acts[l]
            )
    return loss, (grad_w, grad_b)


@dataclass
class TrainingConfig:
    batch_size: int = 50
    epochs: int = 30
    validation_fraction: float = 0.2
    alpha: float = 0.002
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must be in (0, 1)")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass
class AdamaxState:
    """First moment and infinity norm per parameter array, plus the step
    counter used for bias correction."""

    m: list
    u: list
    t: int = 0

    @classmethod
    def for_params(cls, params: list) -> "AdamaxState":
        return cls(
            m=[np.zeros_like(p) for p in params],
            u=[np.zeros_like(p) for p in params],
        )


def adamax_step(
    params: list, grads: list, state: AdamaxState, cfg: TrainingConfig
) -> None:
    """One in-place Adamax update over a list of parameter arrays.

    m <- b1 m + (1-b1) g;  u <- max(b2 u, |g|);
    w <- w - (alpha / (1 - b1^t)) * m / max(u, eps).
    """
    state.t += 1
    lr = cfg.alpha / (1.0 - cfg.beta1**state.t)
    for p, g, m, u in zip(params, grads, state.m, state.u):
        m *= cfg.beta1
        m += (1.0 - cfg.beta1) * g
        np.maximum(cfg.beta2 * u, np.abs(g), out=u)
        p -= lr * m / np.maximum(u, cfg.epsilon)


@dataclass(frozen=True)
class NormalizationSpec:
    """Input/output scaling constants learned from the training split."""

    bin_count_cap: float
    output_max: float

    def features(self, bins, center_rbs: int, rsrq_threshold: int) -> np.ndarray:
        x = np.empty(12)
        x[:10] = np.minimum(np.asarray(bins, dtype=float) / self.bin_count_cap, 1.0)
        x[10] = BW_INPUT_LEVELS[int(center_rbs)]
        x[11] = (int(rsrq_threshold) - THR_LO) / (THR_HI - THR_LO)
        return x

    def target(self, raw_metric: float) -> float:
        return min(raw_metric / self.output_max, 1.0)


@dataclass
class SampleRecord:
    """One supervised tuple: environment bins, the action taken and the
    raw cell metric it produced."""

    bins: np.ndarray
    center_rbs: int
    rsrq_threshold: int
    raw_metric: float
    cell_id: int = -1
    drop_id: str = ""
    epoch_id: int = 0


def normalize(sample: SampleRecord, spec: NormalizationSpec):
    """(12-feature vector, scaled target) for one sample."""
    x = spec.features(sample.bins, sample.center_rbs, sample.rsrq_threshold)
    return x, spec.target(sample.raw_metric)


def build_normalization(samples: list[SampleRecord]) -> NormalizationSpec:
    cap = max((int(np.max(s.bins)) for s in samples), default=0)
    out = max((s.raw_metric for s in samples), default=0.0)
    return NormalizationSpec(
        bin_count_cap=float(max(cap, 1)), output_max=float(out) if out > 0 else 1.0
    )


def train(samples: list[SampleRecord], config: TrainingConfig):
    """Train the regressor; returns (weights, normalization, history).

    The normalization constants come from the training split only; the
    returned weights are the epoch checkpoint with the lowest validation
    loss. History holds one (train_loss, val_loss) entry per epoch.
    """
    n = len(samples)
    if n < 100:
        raise ValueError(f"need at least 100 samples, got {n}")
    perm = substream(config.seed, "shuffle").permutation(n)
    n_val = min(max(int(round(config.validation_fraction * n)), 1), n - 1)
    val_ix = perm[:n_val]
    train_ix = perm[n_val:]

    spec = build_normalization([samples[i] for i in train_ix])
    X = np.array([spec.features(s.bins, s.center_rbs, s.rsrq_threshold) for s in samples])
    y = np.array([spec.target(s.raw_metric) for s in samples])
    Xt, yt = X[train_ix], y[train_ix]
    Xv, yv = X[val_ix], y[val_ix]

    weights = init_weights(config.seed)
    params = weights.weights + weights.biases
    state = AdamaxState.for_params(params)
    order_rng = substream(config.seed, "batches")

    best = weights.copy()
    best_val = np.inf
    history = []
    for epoch in range(config.epochs):
        order = order_rng.permutation(len(Xt))
        losses, counts = [], []
        for lo in range(0, len(Xt), config.batch_size):
            batch = order[lo : lo + config.batch_size]
            loss, (gw, gb) = loss_and_gradient(weights, Xt[batch], yt[batch])
            adamax_step(params, gw + gb, state, config)
            losses.append(loss)
            counts.append(len(batch))
        train_loss = float(np.average(losses, weights=counts))
        val_pred = forward(weights, Xv)
        val_loss = float(np.mean((val_pred - yv) ** 2))
        history.append({"epoch": epoch, "train_loss": train_loss, "val_loss": val_loss})
        if val_loss < best_val:
            best_val = val_loss
            best = weights.copy()
    return best, spec, history


@dataclass
class RegressionModel:
    """Trained weights bundled with their scaling and metric tag."""

    weights: MlpWeights
    norm: NormalizationSpec
    metric_kind: str = "maxmin"
    training_seed: int | None = None

    def predict(self, bins, center_rbs: int, rsrq_threshold: int) -> float:
        return forward(self.weights, self.norm.features(bins, center_rbs, rsrq_threshold))


def save_model(model: RegressionModel, path: str | Path) -> None:
    doc = {
        "layer_dims": list(model.weights.layer_dims),
        "weights": [w.tolist() for w in model.weights.weights],
        "biases": [b.tolist() for b in model.weights.biases],
        "activations": list(model.weights.activations),
        "normalization": {
            "bin_count_cap": model.norm.bin_count_cap,
            "output_max": model.norm.output_max,
        },
        "metric_kind": model.metric_kind,
        "training_seed": model.training_seed,
    }
    Path(path).write_text(json.dumps(doc) + "\n")


def load_model(path: str | Path) -> RegressionModel:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ValueError(
            f"{path}: malformed model file at line {e.lineno} column {e.colno}: {e.msg}"
        ) from e
    for key in ("layer_dims", "weights", "biases", "activations", "normalization"):
        if key not in doc:
            raise ValueError(f"{path}: model file missing key {key!r}")
    dims = tuple(doc["layer_dims"])
    if dims != LAYER_DIMS:
        raise ValueError(f"{path}: layer_dims {list(dims)} != expected {list(LAYER_DIMS)}")
    ws = [np.asarray(w, dtype=float) for w in doc["weights"]]
    bs = [np.asarray(b, dtype=float) for b in doc["biases"]]
    for i, (fi, fo) in enumerate(zip(dims[:-1], dims[1:])):
        if ws[i].shape != (fi, fo) or bs[i].shape != (fo,):
            raise ValueError(f"{path}: layer {i} parameter shapes inconsistent with dims")
    norm = NormalizationSpec(
        bin_count_cap=float(doc["normalization"]["bin_count_cap"]),
        output_max=float(doc["normalization"]["output_max"]),
    )
    return RegressionModel(
        weights=MlpWeights(dims, ws, bs, list(doc["activations"])),
        norm=norm,
        metric_kind=doc.get("metric_kind", "maxmin"),
        training_seed=doc.get("training_seed"),
    )


SAMPLES_HEADER = (
    ["drop_id", "cell_id", "epoch_id"]
    + [f"bin{i}" for i in range(10)]
    + ["center_rbs", "threshold", "raw_metric"]
)


def write_samples(samples: list[SampleRecord], path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SAMPLES_HEADER)
        for s in samples:
            w.writerow(
                [s.drop_id, s.cell_id, s.epoch_id]
                + [int(b) for b in s.bins]
                + [s.center_rbs, s.rsrq_threshold, repr(float(s.raw_metric))]
            )


def read_samples(path: str | Path) -> list[SampleRecord]:
    out = []
    with Path(path).open(newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        if header != SAMPLES_HEADER:
            raise ValueError(f"{path}: unexpected samples header {header}")
        for row in r:
            out.append(
                SampleRecord(
                    drop_id=row[0],
                    cell_id=int(row[1]),
                    epoch_id=int(row[2]),
                    bins=np.array([int(v) for v in row[3:13]]),
                    center_rbs=int(row[13]),
                    rsrq_threshold=int(row[14]),
                    raw_metric=float(row[15]),
                )
            )
    return out
