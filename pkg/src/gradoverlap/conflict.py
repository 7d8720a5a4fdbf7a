"""Gradient cosine similarity, per-step conflict matrices and their averaging schedule."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyWindowError
from .kernels import NORM_FLOOR
from .pairwise import PairwiseMatrix


def _values(g):
    return np.asarray(getattr(g, "values", g), dtype=np.float64)


def cosine_similarity(g_i, g_j) -> float:
    """Cosine of two gradient vectors; 0 when either norm is below the floor."""
    a, b = _values(g_i), _values(g_j)
    if a.shape != b.shape:
        raise ValueError(f"gradient length mismatch: {a.shape} vs {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na < NORM_FLOOR or nb < NORM_FLOOR:
        return 0.0
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def conflict_matrix(gradients, n_tasks=None, names=None) -> PairwiseMatrix:
    """K x K cosine matrix from the gradients of tasks present in a batch.

    Tasks without a gradient, or with a near-zero one, get invalid rows.
    """
    if len(gradients) < 2:
        raise ValueError("conflict_matrix needs at least two gradients")
    ids = [getattr(g, "task_id", i) for i, g in enumerate(gradients)]
    K = n_tasks if n_tasks is not None else max(ids) + 1
    vecs = {t: _values(g) for t, g in zip(ids, gradients)}
    ok = {t for t, v in vecs.items() if np.linalg.norm(v) >= NORM_FLOOR}
    G = np.zeros((K, K))
    V = np.zeros((K, K), dtype=bool)
    for i in ok:
        for j in ok:
            G[i, j] = 1.0 if i == j else cosine_similarity(vecs[i], vecs[j])
            V[i, j] = True
    return PairwiseMatrix(G, V, "gradient", names)


def _masked_mean(G, V, names):
    counts = V.sum(axis=0)
    sums = np.where(V, G, 0.0).sum(axis=0)
    valid = counts > 0
    mean = np.divide(sums, counts, out=np.zeros_like(sums), where=valid)
    mean = 0.5 * (mean + mean.T)
    return PairwiseMatrix(mean, valid, "gradient", names)


@dataclass
class ConflictAccumulator:
    """Ordered per-step gradient conflict matrices from one training run."""

    window_fraction: float = 0.2
    total_steps_hint: int = None
    steps_per_epoch: int = None
    names: tuple = None
    steps: list = field(default_factory=list)
    matrices: list = field(default_factory=list)
    masks: list = field(default_factory=list)

    def record(self, step: int, matrix: PairwiseMatrix) -> None:
        self.record_arrays(step, matrix.values, matrix.valid, matrix.names)

    def record_arrays(self, step, values, valid, names=None):
        if self.steps and step <= self.steps[-1]:
            raise ValueError(f"record steps must increase strictly ({step} after {self.steps[-1]})")
        self.steps.append(int(step))
        self.matrices.append(np.array(values, dtype=np.float64))
        self.masks.append(np.array(valid, dtype=bool))
        if names is not None:
            self.names = tuple(names)

    @property
    def records(self):
        return [(s, PairwiseMatrix(G, V, "gradient", self.names))
                for s, G, V in zip(self.steps, self.matrices, self.masks)]

    def __len__(self):
        return len(self.steps)

    def _stack(self, upto=None):
        sel = [i for i, s in enumerate(self.steps) if upto is None or s <= upto]
        return np.array([self.matrices[i] for i in sel]), np.array([self.masks[i] for i in sel])

    def window_bounds(self):
        last = self.total_steps_hint if self.total_steps_hint is not None else (self.steps[-1] if self.steps else 0)
        return math.ceil((1.0 - self.window_fraction) * last), last


def finalize(acc: ConflictAccumulator) -> PairwiseMatrix:
    """Per-entry mean over records in the final window, counting only steps where the entry was valid."""
    lo, hi = acc.window_bounds()
    sel = [i for i, s in enumerate(acc.steps) if lo <= s <= hi]
    if not sel:
        raise EmptyWindowError(f"no records in averaging window [{lo}, {hi}]")
    G = np.array([acc.matrices[i] for i in sel])
    V = np.array([acc.masks[i] for i in sel])
    return _masked_mean(G, V, acc.names)


def matrix_at_checkpoints(acc: ConflictAccumulator, checkpoint_steps) -> list:
    """Running average of every record up to each checkpoint step."""
    out = []
    for c in checkpoint_steps:
        if not acc.steps or c < acc.steps[0]:
            raise ValueError(f"checkpoint {c} precedes the first record")
        G, V = acc._stack(upto=c)
        out.append(_masked_mean(G, V, acc.names))
    return out
