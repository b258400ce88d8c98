"""Parametric prediction models and the gradient-descent trainer.

Two model families are provided: linear with offset, and a one-hidden-layer
MLP. Both expose prediction and the chain-rule contraction of a per-row loss
gradient into a parameter gradient, which is all the trainer needs.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .dataset import ABDataset
from .gradient import GradConfig, effective_gradient
from .loss import EmptyArmInBinError, LossReport, global_lift, true_lift_loss

__all__ = [
    "ModelKind",
    "Activation",
    "ModelSpec",
    "TrainConfig",
    "TraceEntry",
    "TrainTrace",
    "TrainingDivergedError",
    "n_params",
    "random_params",
    "predict",
    "backprop",
    "train",
    "save_params",
    "load_params",
]


class ModelKind(enum.Enum):
    LINEAR = "linear"
    MLP = "mlp"


class Activation(enum.Enum):
    TANH = "tanh"
    RELU = "relu"


@dataclass(frozen=True)
class ModelSpec:
    """Model family and shape. `hidden`/`activation` apply to MLPs only."""

    kind: ModelKind
    d: int
    hidden: int | None = None
    activation: Activation | None = None

    def __post_init__(self) -> None:
        if self.d < 1:
            raise ValueError(f"input dimension must be >= 1, got {self.d}")
        if self.kind is ModelKind.MLP:
            if self.hidden is None or self.hidden < 1 or self.activation is None:
                raise ValueError("MLP models need a positive hidden size and an activation")
        elif self.hidden is not None or self.activation is not None:
            raise ValueError("hidden/activation only apply to MLP models")


def n_params(spec: ModelSpec) -> int:
    if spec.kind is ModelKind.LINEAR:
        return spec.d + 1
    return spec.hidden * spec.d + spec.hidden + spec.hidden + 1


def random_params(spec: ModelSpec, seed: int = 0) -> np.ndarray:
    """Small random initialization (breaks MLP symmetry)."""
    rng = np.random.default_rng(seed)
    return 0.1 * rng.standard_normal(n_params(spec))


def _check_params(spec: ModelSpec, params) -> np.ndarray:
    p = np.asarray(params, dtype=np.float64)
    if p.shape != (n_params(spec),):
        raise ValueError(f"expected {n_params(spec)} parameters, got shape {p.shape}")
    return p


def _features(data) -> np.ndarray:
    x = data.features if isinstance(data, ABDataset) else np.asarray(data, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("features must be a 2-d array")
    return x


def _unpack_mlp(spec: ModelSpec, params: np.ndarray):
    h, d = spec.hidden, spec.d
    w1 = params[: h * d].reshape(h, d)
    b1 = params[h * d : h * d + h]
    w2 = params[h * d + h : h * d + 2 * h]
    b2 = params[-1]
    return w1, b1, w2, b2


def predict(spec: ModelSpec, params, data) -> np.ndarray:
    """Model predictions for a dataset or a raw (n, d) feature array.

    Linear parameter layout is [coef_0, ..., coef_{d-1}, offset]; the MLP
    layout is [W1 row-major, b1, w2, b2].
    """
    p = _check_params(spec, params)
    x = _features(data)
    if x.shape[1] != spec.d:
        raise ValueError(f"model expects {spec.d} features, data has {x.shape[1]}")
    if spec.kind is ModelKind.LINEAR:
        return x @ p[:-1] + p[-1]
    w1, b1, w2, b2 = _unpack_mlp(spec, p)
    z = x @ w1.T + b1
    h = np.tanh(z) if spec.activation is Activation.TANH else np.maximum(z, 0.0)
    return h @ w2 + b2


def backprop(spec: ModelSpec, params, data, point_grad) -> np.ndarray:
    """Contract a per-row loss gradient into a parameter gradient.

    Returns sum_i g_i * d(prediction_i)/d(params). ReLU uses derivative 0 at
    exactly zero.
    """
    p = _check_params(spec, params)
    x = _features(data)
    g = np.asarray(point_grad, dtype=np.float64)
    if g.shape != (x.shape[0],):
        raise ValueError("point gradient must align with the rows")
    if spec.kind is ModelKind.LINEAR:
        return np.concatenate([x.T @ g, [g.sum()]])
    w1, b1, w2, _ = _unpack_mlp(spec, p)
    z = x @ w1.T + b1
    if spec.activation is Activation.TANH:
        h = np.tanh(z)
        dact = 1.0 - h**2
    else:
        h = np.maximum(z, 0.0)
        dact = (z > 0).astype(np.float64)
    dw2 = h.T @ g
    db2 = g.sum()
    u = (g[:, None] * w2[None, :]) * dact
    dw1 = u.T @ x
    db1 = u.sum(axis=0)
    return np.concatenate([dw1.ravel(), db1, dw2, [db2]])


@dataclass(frozen=True)
class TrainConfig:
    """Gradient-descent settings; `batch=None` means full batch."""

    step_size: float
    steps: int
    grad: GradConfig
    batch: int | None = None
    snapshot_steps: tuple[int, ...] = ()
    seed: int = 0

    def __post_init__(self) -> None:
        if not self.step_size >= 0:
            raise ValueError("step_size must be >= 0")
        if self.steps < 0:
            raise ValueError("steps must be >= 0")
        if self.batch is not None and self.batch < 1:
            raise ValueError("batch must be a positive integer")
        bad = [t for t in self.snapshot_steps if t < 0 or t > self.steps]
        if bad:
            raise ValueError(f"snapshot steps {bad} outside the range 0..{self.steps}")


@dataclass(frozen=True)
class TraceEntry:
    step: int
    loss: float
    bias_term: float
    separation_term: float
    params: np.ndarray


@dataclass
class TrainTrace:
    """Per-step loss/parameter history plus per-bin snapshots and events."""

    entries: list[TraceEntry] = field(default_factory=list)
    snapshots: dict[int, LossReport] = field(default_factory=dict)
    events: list[str] = field(default_factory=list)

    def losses(self) -> np.ndarray:
        return np.array([e.loss for e in self.entries])


class TrainingDivergedError(RuntimeError):
    """Loss or parameters became non-finite; carries the trace so far."""

    def __init__(self, message: str, trace: TrainTrace):
        super().__init__(message)
        self.trace = trace


def train(
    dataset: ABDataset,
    spec: ModelSpec,
    init_params,
    config: TrainConfig,
) -> tuple[np.ndarray, TrainTrace]:
    """Plain gradient descent on the binned lift loss.

    Records the loss and a parameter copy at every step t = 0..steps (the
    entry at step t describes the model before the t-th update, so steps=0
    yields one entry and unchanged parameters). Cuts are refreshed every
    `grad.rebin_every` steps. If a bin loses an arm mid-run the bin count is
    halved and training continues; at step 0 this is raised instead, with a
    hint to use fewer bins. Deterministic given the seed, which only drives
    minibatch sampling.
    """
    params = _check_params(spec, init_params).copy()
    grad_cfg = config.grad
    rng = np.random.default_rng(config.seed)
    cached_lift = global_lift(dataset)
    trace = TrainTrace()
    snapshot_set = set(config.snapshot_steps)
    cuts = None
    for t in range(config.steps + 1):
        if config.batch is None or config.batch >= len(dataset):
            data_t = dataset
        else:
            idx = rng.choice(len(dataset), size=config.batch, replace=False)
            data_t = dataset.take(idx)
        preds = predict(spec, params, data_t)
        if not np.isfinite(preds).all():
            raise TrainingDivergedError(f"non-finite predictions at step {t}", trace)
        reuse = cuts if (t % grad_cfg.rebin_every != 0 and cuts is not None) else None
        while True:
            try:
                eg = effective_gradient(
                    data_t, preds, grad_cfg, cached_global_lift=cached_lift, cuts=reuse
                )
                break
            except FloatingPointError as err:
                raise TrainingDivergedError(f"{err} at step {t}", trace) from err
            except EmptyArmInBinError as err:
                if t == 0:
                    raise  # infeasible at the initial predictions: caller should lower n_bins
                if reuse is not None:
                    # stale boundaries no longer cover the predictions; re-cut first
                    trace.events.append(f"step {t}: {err}; refreshing cuts")
                    reuse = None
                    continue
                if grad_cfg.n_bins <= 2:
                    raise
                new_bins = max(2, grad_cfg.n_bins // 2)
                trace.events.append(
                    f"step {t}: {err}; reducing bins {grad_cfg.n_bins} -> {new_bins}"
                )
                grad_cfg = replace(grad_cfg, n_bins=new_bins)
        cuts = eg.cuts
        report = true_lift_loss(eg.stats)
        if not (math.isfinite(report.loss) and np.isfinite(params).all()):
            raise TrainingDivergedError(
                f"non-finite loss or parameters at step {t}", trace
            )
        trace.entries.append(
            TraceEntry(t, report.loss, report.bias_term, report.separation_term, params.copy())
        )
        if t in snapshot_set:
            trace.snapshots[t] = report
        if t == config.steps:
            break
        params -= config.step_size * backprop(spec, params, data_t, eg.point_grad)
    return params, trace


def save_params(path: str | Path, spec: ModelSpec, params) -> None:
    p = _check_params(spec, params)
    doc: dict = {"kind": spec.kind.value, "d": spec.d}
    if spec.kind is ModelKind.MLP:
        doc["hidden"] = spec.hidden
        doc["activation"] = spec.activation.value
    doc["values"] = [float(v) for v in p]
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def load_params(path: str | Path) -> tuple[ModelSpec, np.ndarray]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    try:
        kind = ModelKind(doc["kind"])
        spec = ModelSpec(
            kind,
            int(doc["d"]),
            int(doc["hidden"]) if kind is ModelKind.MLP else None,
            Activation(doc["activation"]) if kind is ModelKind.MLP else None,
        )
        values = np.asarray(doc["values"], dtype=np.float64)
    except (KeyError, ValueError, TypeError) as err:
        raise ValueError(f"malformed parameter file {path}: {err}") from err
    return spec, _check_params(spec, values)
