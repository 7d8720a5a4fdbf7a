"""Task panels: synthetic generation, overlap degradation, overlap audit and CSV I/O."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, InsufficientSamplesError, ParseError, SchemaError
from .pairwise import PairwiseMatrix

MIN_TASK_SAMPLES = 20
ALPHA_TOLERANCE = 0.02
TASK_PREFIX = "task:"


@dataclass(frozen=True, eq=False)
class TaskPanel:
    """Features, per-task labels and the measured-label mask.

    ``labels`` holds NaN wherever ``mask`` is false.
    """

    features: np.ndarray
    labels: np.ndarray
    mask: np.ndarray
    task_names: tuple
    sample_ids: tuple

    def __post_init__(self):
        X = np.ascontiguousarray(self.features, dtype=np.float64)
        Y = np.array(self.labels, dtype=np.float64)
        M = np.array(self.mask, dtype=bool)
        if X.ndim != 2 or Y.ndim != 2 or M.shape != Y.shape or X.shape[0] != Y.shape[0]:
            raise SchemaError(f"inconsistent panel shapes: features {X.shape}, labels {Y.shape}, mask {M.shape}")
        if not np.all(np.isfinite(X)):
            raise SchemaError("features must be finite")
        if not np.all(np.isfinite(Y[M])):
            raise SchemaError("measured labels must be finite")
        Y[~M] = np.nan
        empty = np.flatnonzero(M.sum(axis=0) == 0)
        names = tuple(str(n) for n in self.task_names)
        if len(names) != Y.shape[1]:
            raise SchemaError("task_names length does not match label columns")
        if empty.size:
            raise SchemaError(f"task {names[empty[0]]!r} has no measured samples")
        ids = tuple(str(s) for s in self.sample_ids)
        if len(ids) != X.shape[0]:
            raise SchemaError("sample_ids length does not match rows")
        for arr in (X, Y, M):
            arr.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", Y)
        object.__setattr__(self, "mask", M)
        object.__setattr__(self, "task_names", names)
        object.__setattr__(self, "sample_ids", ids)

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def n_tasks(self) -> int:
        return self.labels.shape[1]

    def measured(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.mask[:, k])

    def rows(self, idx) -> TaskPanel:
        idx = np.asarray(idx)
        return TaskPanel(self.features[idx], self.labels[idx], self.mask[idx], self.task_names,
                         tuple(self.sample_ids[i] for i in idx))

    def tasks(self, idx) -> TaskPanel:
        idx = list(idx)
        return TaskPanel(self.features, self.labels[:, idx], self.mask[:, idx],
                         tuple(self.task_names[i] for i in idx), self.sample_ids)

    def with_mask(self, mask) -> TaskPanel:
        return TaskPanel(self.features, self.labels, np.asarray(mask, dtype=bool) & self.mask,
                         self.task_names, self.sample_ids)


@dataclass(frozen=True, eq=False)
class GroundTruth:
    weights: np.ndarray
    noise_sd: float
    similarity: PairwiseMatrix


def cosine_similarity_matrix(weights, names=None) -> PairwiseMatrix:
    W = np.asarray(weights, dtype=np.float64)
    norms = np.linalg.norm(W, axis=1)
    if np.any(norms == 0):
        raise ConfigError(f"weight row {int(np.flatnonzero(norms == 0)[0])} is zero; cosine ground truth undefined")
    U = W / norms[:, None]
    S = np.clip(U @ U.T, -1.0, 1.0)
    S = 0.5 * (S + S.T)
    np.fill_diagonal(S, 1.0)
    return PairwiseMatrix(S, np.ones(S.shape, dtype=bool), "ground_truth", names)


def _draw(rng, shape, dist):
    z = rng.standard_normal(shape)
    return np.abs(z) if dist == "halfnormal" else z


def design_weights(n_tasks, n_latent, scheme, rng, dist="normal"):
    """Task weight matrix (K x L) with unit-length rows."""
    if isinstance(scheme, str):
        if scheme == "random":
            W = _draw(rng, (n_tasks, n_latent), dist)
        elif scheme == "two_block":
            if n_latent < 2:
                raise ConfigError("two_block scheme needs at least 2 latent features")
            k_a = math.ceil(n_tasks / 2)
            l_a = math.ceil(n_latent / 2)
            W = np.zeros((n_tasks, n_latent))
            W[:k_a, :l_a] = _draw(rng, (k_a, l_a), dist)
            W[k_a:, l_a:] = _draw(rng, (n_tasks - k_a, n_latent - l_a), dist)
        else:
            raise ConfigError(f"unknown weight_scheme {scheme!r}")
    else:
        W = np.array(scheme, dtype=np.float64)
        if W.shape != (n_tasks, n_latent):
            raise ConfigError(f"custom weight matrix must be {(n_tasks, n_latent)}, got {W.shape}")
    norms = np.linalg.norm(W, axis=1)
    if np.any(norms == 0):
        raise ConfigError(f"weight row {int(np.flatnonzero(norms == 0)[0])} is zero; cosine ground truth undefined")
    return W / norms[:, None]


def generate_panel(n_samples=2000, n_latent=35, n_tasks=8, weight_scheme="random", noise_sd=2.0,
                   seed=0, n_distractors=0, weight_dist="halfnormal", noise_model="latent",
                   private_noise_sd=0.0):
    """Linear latent-factor tasks ``y_k = w_k . z + eps`` with a fully measured mask.

    Returns ``(panel, ground_truth)``. Observed features are the latents, plus
    ``n_distractors`` independent standard-normal columns when requested.
    With ``noise_model="latent"`` the noise is an unobserved perturbation of the
    latents, so its correlation across tasks follows their weight similarity.
    ``private_noise_sd`` adds task-specific independent noise on top.
    """
    if n_latent < 1 or n_tasks < 2 or n_samples < 10:
        raise ConfigError("need n_latent >= 1, n_tasks >= 2, n_samples >= 10")
    if noise_sd < 0 or private_noise_sd < 0:
        raise ConfigError("noise levels must be nonnegative")
    if weight_dist not in ("normal", "halfnormal"):
        raise ConfigError(f"unknown weight_dist {weight_dist!r}")
    rng = np.random.default_rng(seed)
    W = design_weights(n_tasks, n_latent, weight_scheme, rng, weight_dist)
    Z = rng.standard_normal((n_samples, n_latent))
    if noise_model == "independent":
        eps = rng.standard_normal((n_samples, n_tasks)) * noise_sd
    elif noise_model == "latent":
        # unobserved perturbation of the latents; unit rows keep Var(eps_k) = noise_sd**2
        eps = (rng.standard_normal((n_samples, n_latent)) * noise_sd) @ W.T
    else:
        raise ConfigError(f"unknown noise_model {noise_model!r}")
    if private_noise_sd:
        eps = eps + rng.standard_normal((n_samples, n_tasks)) * private_noise_sd
    Y = Z @ W.T + eps
    X = Z
    if n_distractors:
        X = np.hstack([Z, rng.standard_normal((n_samples, n_distractors))])
    names = tuple(f"task{k}" for k in range(n_tasks))
    ids = tuple(f"s{i}" for i in range(n_samples))
    panel = TaskPanel(X, Y, np.ones_like(Y, dtype=bool), names, ids)
    truth = GroundTruth(W, float(noise_sd), cosine_similarity_matrix(W, names))
    return panel, truth


def _overlap_sizes(n, alpha, n_tasks, n_rows):
    """Shared-core size and per-task remainder for the largest feasible per-task count <= n."""
    for n_task in range(n, MIN_TASK_SAMPLES - 1, -1):
        m = int(round(n_task * (1.0 - alpha) / (1.0 + alpha)))
        s = n_task - m
        if s + 2 * m == 0 or s + n_tasks * m > n_rows:
            continue
        if abs(s / (s + 2 * m) - alpha) <= ALPHA_TOLERANCE:
            return s, m
    return None


def apply_overlap(panel: TaskPanel, target_alpha: float, seed: int, n_per_task=None) -> TaskPanel:
    """Restrict measurements so every task pair has Jaccard overlap ``target_alpha``.

    All tasks share one core of ``s`` rows and get ``m`` private rows each, with
    equal per-task counts ``s + m``. The count is the largest one that fits in
    the fully measured rows (``s + K m <= rows``), capped at ``n_per_task`` when
    given. Without a cap the eligible rows are partitioned, so the count grows
    from ``rows / K`` at alpha 0 to every row at alpha 1. Pass
    ``n_per_task=rows // K`` to hold it constant across a sweep instead.
    ``target_alpha == 1`` with no cap returns the panel unchanged.
    """
    if not 0.0 <= target_alpha <= 1.0:
        raise ConfigError(f"target_alpha must lie in [0, 1], got {target_alpha}")
    if target_alpha == 1.0 and n_per_task is None:
        return panel
    K = panel.n_tasks
    eligible = np.flatnonzero(panel.mask.all(axis=1))
    n = len(eligible) if n_per_task is None else min(int(n_per_task), len(eligible))
    if n < MIN_TASK_SAMPLES:
        raise InsufficientSamplesError(
            f"insufficient samples: {n} per task < {MIN_TASK_SAMPLES} ({len(eligible)} fully measured rows, K={K})")
    sizes = _overlap_sizes(n, target_alpha, K, len(eligible))
    if sizes is None:
        raise InsufficientSamplesError(
            f"insufficient samples to reach overlap {target_alpha} within {ALPHA_TOLERANCE}")
    s, m = sizes
    rng = np.random.default_rng(seed)
    perm = rng.permutation(eligible)
    mask = np.zeros_like(panel.mask)
    mask[perm[:s], :] = True
    for k in range(K):
        mask[perm[s + k * m:s + (k + 1) * m], k] = True
    return panel.with_mask(mask)


def pairwise_overlap(panel: TaskPanel) -> PairwiseMatrix:
    """Jaccard index of measured-sample sets for every task pair."""
    M = panel.mask.astype(np.int64)
    inter = M.T @ M
    counts = np.diag(inter)
    union = counts[:, None] + counts[None, :] - inter
    O = inter / union
    np.fill_diagonal(O, 1.0)
    return PairwiseMatrix(O, np.ones(O.shape, dtype=bool), "overlap", panel.task_names)


def save_csv_panel(panel: TaskPanel, path) -> None:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", *(f"f{j}" for j in range(panel.n_features)),
                    *(TASK_PREFIX + n for n in panel.task_names)])
        for i in range(panel.n_samples):
            feats = [repr(float(v)) for v in panel.features[i]]
            labs = [repr(float(v)) if m else "" for v, m in zip(panel.labels[i], panel.mask[i])]
            w.writerow([panel.sample_ids[i], *feats, *labs])


def _parse_float(cell, row, col):
    try:
        v = float(cell)
    except ValueError:
        raise ParseError(f"row {row}, column {col!r}: non-numeric value {cell!r}") from None
    if not math.isfinite(v):
        raise ParseError(f"row {row}, column {col!r}: non-finite value {cell!r}")
    return v


def load_csv_panel(path, id_column="id", task_prefix=TASK_PREFIX) -> TaskPanel:
    """Read a panel CSV: ``id,f0,...,task:<name>,...``; empty task cells are unmeasured."""
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError("empty file: missing header row")
    header = [h.strip() for h in rows[0]]
    if not header or header[0] != id_column or not any(h.startswith(task_prefix) for h in header):
        raise ParseError(f"missing header: expected {id_column!r} first and at least one {task_prefix!r} column")
    feat_cols = [j for j, h in enumerate(header) if j > 0 and not h.startswith(task_prefix)]
    task_cols = [j for j, h in enumerate(header) if h.startswith(task_prefix)]
    data = [r for r in rows[1:] if r]
    if not data:
        raise SchemaError("panel has no data rows")
    X = np.empty((len(data), len(feat_cols)))
    Y = np.full((len(data), len(task_cols)), np.nan)
    M = np.zeros((len(data), len(task_cols)), dtype=bool)
    ids = []
    for i, r in enumerate(data, start=2):
        if len(r) != len(header):
            raise ParseError(f"row {i}: expected {len(header)} cells, found {len(r)}")
        ids.append(r[0])
        for a, j in enumerate(feat_cols):
            X[i - 2, a] = _parse_float(r[j], i, header[j])
        for a, j in enumerate(task_cols):
            if r[j].strip() != "":
                Y[i - 2, a] = _parse_float(r[j], i, header[j])
                M[i - 2, a] = True
    names = tuple(header[j][len(task_prefix):] for j in task_cols)
    return TaskPanel(X, Y, M, names, tuple(ids))


def save_ground_truth(truth: GroundTruth, weights_path, similarity_path) -> None:
    names = truth.similarity.names
    with Path(weights_path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["task", *(f"z{j}" for j in range(truth.weights.shape[1]))])
        for name, row in zip(names, truth.weights):
            w.writerow([name, *(repr(float(v)) for v in row)])
    truth.similarity.to_csv(similarity_path)
