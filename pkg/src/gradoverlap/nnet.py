"""Shared-encoder multi-task MLP with masked MSE losses and per-task encoder gradients."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import ConfigError, NoValidSamplesError, TrainingError
from .paneldata import TaskPanel

ACTIVATIONS = {"tanh": kernels.ACT_TANH, "identity": kernels.ACT_IDENTITY}


@dataclass(frozen=True)
class ArchSpec:
    """Encoder widths ``[d_in, h1, ..., d_repr]`` plus the number of scalar task heads."""

    dims: tuple
    n_tasks: int
    activation: str = "tanh"

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if len(dims) < 2:
            raise ConfigError("encoder needs at least an input and an output width")
        if any(d <= 0 for d in dims):
            raise ConfigError(f"layer widths must be positive, got {list(dims)}")
        if self.n_tasks < 1:
            raise ConfigError("need at least one task head")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"unknown activation {self.activation!r}")
        object.__setattr__(self, "dims", dims)

    @property
    def n_encoder_params(self) -> int:
        return sum(o * i + o for i, o in zip(self.dims[:-1], self.dims[1:]))


def default_arch(d_in: int, n_tasks: int) -> ArchSpec:
    return ArchSpec((d_in, 32, 16), n_tasks)


@dataclass(frozen=True, eq=False)
class Network:
    """Encoder parameters are one flat vector, layer by layer, row-major weight then bias."""

    spec: ArchSpec
    theta: np.ndarray
    head_w: np.ndarray
    head_b: np.ndarray
    rng_seed: int = 0

    def __post_init__(self):
        if self.theta.shape != (self.spec.n_encoder_params,):
            raise ConfigError("encoder parameter vector does not match the architecture")
        if self.head_w.shape != (self.spec.n_tasks, self.spec.dims[-1]) or self.head_b.shape != (self.spec.n_tasks,):
            raise ConfigError("head parameters do not match the architecture")
        for a in (self.theta, self.head_w, self.head_b):
            a.setflags(write=False)

    @property
    def dims_array(self) -> np.ndarray:
        return np.asarray(self.spec.dims, dtype=np.int64)

    @property
    def act_code(self) -> int:
        return ACTIVATIONS[self.spec.activation]

    def layers(self):
        """(weight, bias) views per encoder layer."""
        out, off = [], 0
        for i, o in zip(self.spec.dims[:-1], self.spec.dims[1:]):
            W = self.theta[off:off + o * i].reshape(o, i)
            off += o * i
            out.append((W, self.theta[off:off + o]))
            off += o
        return out

    def replace_theta(self, theta) -> Network:
        return Network(self.spec, np.array(theta, dtype=np.float64), self.head_w.copy(), self.head_b.copy(), self.rng_seed)

    def represent(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        acts = kernels.encoder_forward(self.theta.copy(), self.dims_array, self.act_code, X)
        return acts[-1]

    def predict(self, X) -> np.ndarray:
        return self.represent(X) @ self.head_w.T + self.head_b


def init_network(spec: ArchSpec, seed: int) -> Network:
    """Glorot-uniform encoder weights and heads, zero biases; a pure function of (spec, seed)."""
    rng = np.random.default_rng(seed)
    parts = []
    for i, o in zip(spec.dims[:-1], spec.dims[1:]):
        lim = np.sqrt(6.0 / (i + o))
        parts.append(rng.uniform(-lim, lim, size=o * i))
        parts.append(np.zeros(o))
    d = spec.dims[-1]
    lim = np.sqrt(6.0 / (d + 1))
    head_w = rng.uniform(-lim, lim, size=(spec.n_tasks, d))
    return Network(spec, np.concatenate(parts), head_w, np.zeros(spec.n_tasks), seed)


@dataclass(frozen=True)
class GradientVector:
    values: np.ndarray
    task_id: int
    n_samples: int


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    epochs: int = 100
    batch_size: int = 32
    log_interval_steps: int = 10
    averaging_window_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be > 0")
        if self.epochs < 1 or self.batch_size < 1 or self.log_interval_steps < 1:
            raise ConfigError("epochs, batch_size and log_interval_steps must be >= 1")
        if not 0 < self.averaging_window_fraction <= 1:
            raise ConfigError("averaging_window_fraction must lie in (0, 1]")


def _batch_arrays(panel: TaskPanel, sample_ids):
    idx = np.arange(panel.n_samples) if sample_ids is None else np.asarray(sample_ids, dtype=np.int64)
    X = np.ascontiguousarray(panel.features[idx])
    M = panel.mask[idx].astype(np.float64)
    Y = np.where(panel.mask[idx], panel.labels[idx], 0.0)
    return X, Y, M


def _forward_task(network, panel, k, sample_ids):
    X, Y, M = _batch_arrays(panel, sample_ids)
    if M[:, k].sum() == 0:
        raise NoValidSamplesError(f"no valid samples for task {k} ({panel.task_names[k]!r}) in the requested subset")
    theta = network.theta.copy()
    acts = kernels.encoder_forward(theta, network.dims_array, network.act_code, X)
    pred = acts[-1] @ network.head_w.T + network.head_b
    losses, counts, dpred = kernels.masked_residuals(np.ascontiguousarray(pred), Y, M)
    return theta, acts, losses, counts, dpred


def masked_task_loss(network: Network, panel: TaskPanel, k: int, sample_ids=None) -> float:
    """Mean squared error of task ``k`` over the measured rows among ``sample_ids``."""
    _, _, losses, _, _ = _forward_task(network, panel, k, sample_ids)
    return float(losses[k])


def task_gradient(network: Network, panel: TaskPanel, k: int, sample_ids=None) -> GradientVector:
    """Gradient of task ``k``'s masked loss with respect to the encoder parameters only."""
    theta, acts, _, counts, dpred = _forward_task(network, panel, k, sample_ids)
    grad = np.zeros_like(theta)
    d_repr = np.ascontiguousarray(np.outer(dpred[:, k], network.head_w[k]))
    kernels.encoder_backward(theta, network.dims_array, network.act_code, acts, d_repr, grad)
    return GradientVector(grad, int(k), int(counts[k]))


def total_loss(network: Network, panel: TaskPanel, sample_ids=None) -> float:
    """Sum over tasks of the masked MSE; tasks unmeasured in the subset contribute nothing."""
    X, Y, M = _batch_arrays(panel, sample_ids)
    pred = np.ascontiguousarray(network.predict(X))
    losses, _, _ = kernels.masked_residuals(pred, Y, M)
    return float(losses.sum())


@dataclass
class GradientCheckReport:
    max_rel_error: float
    tolerance: float
    passed: bool
    analytic: np.ndarray = field(repr=False)
    numeric: np.ndarray = field(repr=False)


def gradient_check(network: Network, panel: TaskPanel, k: int, tolerance: float = 1e-4,
                   sample_ids=None, h: float = 1e-5, floor: float = 1e-6) -> GradientCheckReport:
    """Compare the analytic encoder gradient to central differences on every coordinate.

    Relative error is ``|a - n| / max(|a|, |n|, floor)``; the floor keeps
    exactly-zero coordinates from dividing round-off by zero.
    """
    analytic = task_gradient(network, panel, k, sample_ids).values
    theta = network.theta.copy()
    numeric = np.empty_like(theta)
    for p in range(theta.size):
        orig = theta[p]
        theta[p] = orig + h
        up = masked_task_loss(network.replace_theta(theta), panel, k, sample_ids)
        theta[p] = orig - h
        down = masked_task_loss(network.replace_theta(theta), panel, k, sample_ids)
        theta[p] = orig
        numeric[p] = (up - down) / (2 * h)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    err = float(np.max(np.abs(analytic - numeric) / denom))
    return GradientCheckReport(err, tolerance, err <= tolerance, analytic, numeric)


def epoch_orders(n_rows: int, epochs: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return np.stack([rng.permutation(n_rows) for _ in range(epochs)]).astype(np.int64)


@dataclass
class TrainResult:
    network: Network
    epoch_loss: np.ndarray
    steps: int
    steps_per_epoch: int


def train(network: Network, panel: TaskPanel, cfg: TrainConfig, sink=None) -> TrainResult:
    """Mini-batch SGD on the summed masked losses.

    Rows with no measured label are skipped. Every ``cfg.log_interval_steps``
    steps the per-task encoder-gradient cosine matrix of the current batch
    (taken before the update) is recorded into ``sink`` when one is given.
    """
    if panel.n_tasks != network.spec.n_tasks or panel.n_features != network.spec.dims[0]:
        raise ConfigError("panel shape does not match the network architecture")
    active = np.flatnonzero(panel.mask.any(axis=1))
    if active.size == 0:
        raise NoValidSamplesError("panel has no measured labels")
    X, Y, M = _batch_arrays(panel, active)
    order = epoch_orders(active.size, cfg.epochs, cfg.seed)
    theta = network.theta.copy()
    head_w = network.head_w.copy()
    head_b = network.head_b.copy()
    status, step, epoch_loss, log_steps, log_G, log_V, n_logs = kernels.sgd_train(
        theta, head_w, head_b, network.dims_array, network.act_code, X, Y, M, order,
        int(cfg.batch_size), float(cfg.learning_rate), int(cfg.log_interval_steps))
    if status != kernels.STATUS_OK:
        raise TrainingError(f"training diverged: non-finite loss at step {step}", step=int(step))
    steps_per_epoch = -(-active.size // cfg.batch_size)
    if sink is not None:
        sink.total_steps_hint = int(step)
        sink.steps_per_epoch = steps_per_epoch
        for r in range(n_logs):
            sink.record_arrays(int(log_steps[r]), log_G[r], log_V[r], panel.task_names)
    trained = Network(network.spec, theta, head_w, head_b, network.rng_seed)
    return TrainResult(trained, epoch_loss, int(step), steps_per_epoch)
