"""Average-linkage clustering of tasks, partition agreement metrics and task grouping."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError
from .pairwise import PairwiseMatrix

_TIE_RTOL = 1e-12


@dataclass(frozen=True)
class Dendrogram:
    """Merge list; node ids below ``n_leaves`` are leaves, merge ``m`` creates node ``n_leaves + m``."""

    merges: tuple
    n_leaves: int

    @property
    def heights(self):
        return np.array([h for _, _, h in self.merges])

    def to_csv(self, path):
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["left", "right", "height"])
            for a, b, h in self.merges:
                w.writerow([a, b, repr(float(h))])


@dataclass(frozen=True)
class Partition:
    labels: tuple
    n_groups: int
    imputed: bool = False

    def __post_init__(self):
        labels = tuple(int(v) for v in self.labels)
        if sorted(set(labels)) != list(range(self.n_groups)):
            raise ValueError("partition labels must cover 0..n_groups-1 with no empty group")
        object.__setattr__(self, "labels", labels)

    def groups(self):
        return [[i for i, g in enumerate(self.labels) if g == c] for c in range(self.n_groups)]

    def to_csv(self, path, task_names):
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["task_name", "group_id"])
            for name, g in zip(task_names, self.labels):
                w.writerow([name, g])


def _as_distance_array(D):
    if isinstance(D, PairwiseMatrix):
        if not D.valid.all():
            raise DataError("distance matrix has invalid entries; impute them before clustering")
        D = D.values
    D = np.array(D, dtype=np.float64)
    if D.ndim != 2 or D.shape[0] != D.shape[1]:
        raise DataError("distance matrix must be square")
    if not np.all(np.isfinite(D)):
        raise DataError("distance matrix has non-finite entries; impute them before clustering")
    if not np.allclose(D, D.T, rtol=0, atol=1e-12) or np.any(D < 0) or np.any(np.diag(D) != 0):
        raise DataError("distances must be symmetric, nonnegative, with zero diagonal")
    return D


def linkage_average(D) -> Dendrogram:
    """UPGMA. Ties in the closest-pair search go to the lexicographically smallest (node, node)."""
    D = _as_distance_array(D)
    K = D.shape[0]
    size = {i: 1 for i in range(K)}
    dist = {(i, j): D[i, j] for i in range(K) for j in range(i + 1, K)}
    merges = []
    for m in range(K - 1):
        best_key, best_d = None, np.inf
        for key in sorted(dist):
            d = dist[key]
            if best_key is None or d < best_d - _TIE_RTOL * max(1.0, abs(best_d)):
                best_key, best_d = key, d
        a, b = best_key
        new = K + m
        merges.append((a, b, float(best_d)))
        na, nb = size.pop(a), size.pop(b)
        for c in list(size):
            dac = dist.pop((min(a, c), max(a, c)))
            dbc = dist.pop((min(b, c), max(b, c)))
            dist[(c, new)] = (na * dac + nb * dbc) / (na + nb)
        del dist[(a, b)]
        size[new] = na + nb
    return Dendrogram(tuple(merges), K)


def cut_k(dendrogram: Dendrogram, k: int) -> Partition:
    """Partition into ``k`` groups by undoing the last ``k - 1`` merges."""
    K = dendrogram.n_leaves
    if not 1 <= k <= K:
        raise ConfigError(f"k must lie in [1, {K}], got {k}")
    parent = list(range(2 * K - 1))

    def root(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for m, (a, b, _) in enumerate(dendrogram.merges[:K - k]):
        parent[root(a)] = K + m
        parent[root(b)] = K + m
    first = {}
    labels = []
    for leaf in range(K):
        labels.append(first.setdefault(root(leaf), len(first)))
    return Partition(tuple(labels), k)


def _labels(p):
    return np.asarray(p.labels if isinstance(p, Partition) else p)


def _contingency(a, b):
    a, b = _labels(a), _labels(b)
    if a.shape != b.shape:
        raise ValueError("partitions must label the same number of items")
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    C = np.zeros((ai.max() + 1, bi.max() + 1))
    np.add.at(C, (ai, bi), 1)
    return C


def _comb2(x):
    return x * (x - 1) / 2.0


def ari(a, b) -> float:
    """Adjusted Rand index (Hubert and Arabie)."""
    C = _contingency(a, b)
    n = C.sum()
    index = _comb2(C).sum()
    sa = _comb2(C.sum(axis=1)).sum()
    sb = _comb2(C.sum(axis=0)).sum()
    # scaled by C(n, 2) so integer counts give an exactly rounded result
    pairs = _comb2(n)
    num = index * pairs - sa * sb
    den = 0.5 * (sa + sb) * pairs - sa * sb
    if den == 0:
        return 1.0
    return float(num / den)


def _entropy(counts):
    p = counts[counts > 0] / counts.sum()
    return float(-(p * np.log(p)).sum())


def nmi(a, b) -> float:
    """Mutual information over the arithmetic mean of the two entropies; 1 when both are zero."""
    C = _contingency(a, b)
    n = C.sum()
    ha, hb = _entropy(C.sum(axis=1)), _entropy(C.sum(axis=0))
    if ha == 0.0 and hb == 0.0:
        return 1.0
    P = C / n
    pa = P.sum(axis=1, keepdims=True)
    pb = P.sum(axis=0, keepdims=True)
    nz = P > 0
    mi = float((P[nz] * np.log(P[nz] / (pa @ pb)[nz])).sum())
    return float(np.clip(mi / (0.5 * (ha + hb)), 0.0, 1.0))


def impute_similarity(G: PairwiseMatrix):
    """Fill invalid off-diagonal entries with column means of valid ones; returns (values, imputed)."""
    V = G.valid.copy()
    vals = G.values.copy()
    K = G.size
    off = ~np.eye(K, dtype=bool)
    if np.all(V[off]):
        return vals, False
    good = V & off
    overall = vals[good].mean() if good.any() else 0.0
    col = np.array([vals[good[:, j], j].mean() if good[:, j].any() else overall for j in range(K)])
    fill = 0.5 * (col[:, None] + col[None, :])
    vals = np.where(V | ~off, vals, fill)
    np.fill_diagonal(vals, 1.0)
    return vals, True


def group_tasks(G: PairwiseMatrix, n_groups: int) -> Partition:
    """Average-linkage clustering on ``1 - G`` cut into ``n_groups`` groups."""
    vals, imputed = impute_similarity(G)
    D = np.clip(1.0 - vals, 0.0, None)
    np.fill_diagonal(D, 0.0)
    D = 0.5 * (D + D.T)
    p = cut_k(linkage_average(D), n_groups)
    return Partition(p.labels, p.n_groups, imputed)


def random_partition(K: int, n_groups: int, seed: int) -> Partition:
    """Uniform random labelling conditioned on every group being nonempty."""
    if not 1 <= n_groups <= K:
        raise ConfigError(f"n_groups must lie in [1, {K}], got {n_groups}")
    rng = np.random.default_rng(seed)
    while True:
        labels = rng.integers(0, n_groups, size=K)
        if np.unique(labels).size == n_groups:
            return Partition(tuple(labels), n_groups)
