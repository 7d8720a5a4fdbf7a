"""Correlation metrics, empirical task correlations, matrix tests and the phase-transition curve."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.stats import rankdata

from . import kernels
from .errors import FitError, InsufficientDataError, UndefinedCorrelationError
from .pairwise import PairwiseMatrix


def pearson(x, y) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("pearson needs two 1-D arrays of equal length")
    if x.size < 3:
        raise InsufficientDataError(f"need at least 3 points, got {x.size}")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = dx @ dx
    syy = dy @ dy
    if sxx <= 0 or syy <= 0:
        raise UndefinedCorrelationError("correlation undefined: zero variance")
    return float(np.clip((dx @ dy) / np.sqrt(sxx * syy), -1.0, 1.0))


def spearman(x, y) -> float:
    """Pearson correlation of average ranks."""
    return pearson(rankdata(x), rankdata(y))


def empirical_matrix(panel, min_shared: int = 20) -> PairwiseMatrix:
    """Label correlation over co-measured samples; entries with fewer than ``min_shared`` are invalid."""
    K = panel.n_tasks
    E = np.eye(K)
    V = np.eye(K, dtype=bool)
    for i in range(K):
        for j in range(i + 1, K):
            both = panel.mask[:, i] & panel.mask[:, j]
            if both.sum() < max(min_shared, 3):
                continue
            try:
                E[i, j] = E[j, i] = pearson(panel.labels[both, i], panel.labels[both, j])
            except UndefinedCorrelationError:
                continue
            V[i, j] = V[j, i] = True
    return PairwiseMatrix(E, V, "empirical", panel.task_names)


@dataclass(frozen=True)
class CorrelationResult:
    pearson_r: float
    spearman_rho: float
    p_value: float
    n_pairs: int

    def to_dict(self):
        return asdict(self)


def matrix_correlation(A: PairwiseMatrix, B: PairwiseMatrix, n_permutations: int = 10000,
                       seed: int = 0) -> CorrelationResult:
    """Correlate the jointly valid strict upper triangles of two task matrices.

    The p-value is two-sided, from a Mantel test: tasks of ``A`` are relabelled
    at random (rows and columns together) and the correlation recomputed.
    """
    if A.size != B.size:
        raise ValueError("matrices must cover the same tasks")
    iu, ju, a, va = A.upper()
    _, _, b, vb = B.upper()
    joint = va & vb
    n = int(joint.sum())
    if n < 3:
        raise InsufficientDataError(f"only {n} jointly valid task pairs; need at least 3")
    r = pearson(a[joint], b[joint])
    rho = spearman(a[joint], b[joint])
    if n_permutations <= 0:
        return CorrelationResult(r, rho, float("nan"), n)
    rng = np.random.default_rng(seed)
    perms = rng.permuted(np.tile(np.arange(A.size, dtype=np.int64), (n_permutations, 1)), axis=1)
    null = kernels.mantel_null(np.ascontiguousarray(A.values), np.ascontiguousarray(A.valid),
                               np.ascontiguousarray(b), np.ascontiguousarray(vb),
                               iu.astype(np.int64), ju.astype(np.int64), perms)
    null = null[np.isfinite(null)]
    extreme = int(np.sum(np.abs(null) >= abs(r) - 1e-12))
    p = (1 + extreme) / (1 + null.size)
    return CorrelationResult(r, rho, float(p), n)


@dataclass(frozen=True)
class SigmoidFit:
    """``r(x) = L / (1 + exp(-k (x - x0))) + b`` with x in percent."""

    L: float
    k: float
    x0: float
    b: float
    r_squared: float
    n_points: int
    sse: float

    def __call__(self, x):
        return sigmoid(np.asarray(x, dtype=np.float64), self.L, self.k, self.x0, self.b)

    def to_dict(self):
        return asdict(self)


def sigmoid(x, L, k, x0, b):
    return L / (1.0 + np.exp(np.clip(-k * (x - x0), -700, 700))) + b


def _jacobian(x, L, k, x0):
    s = 1.0 / (1.0 + np.exp(np.clip(-k * (x - x0), -700, 700)))
    ds = s * (1.0 - s)
    return np.column_stack([s, L * ds * (x - x0), -L * ds * k, np.ones_like(x)])


def _gauss_newton(x, y, theta, max_iter=200, rtol=1e-10):
    """Damped Gauss-Newton; returns (theta, sse, converged)."""
    res = sigmoid(x, *theta) - y
    sse = res @ res
    for _ in range(max_iter):
        J = _jacobian(x, *theta[:3])
        step, *_ = np.linalg.lstsq(J, -res, rcond=None)
        lam = 1.0
        for _ in range(60):
            cand = theta + lam * step
            r_c = sigmoid(x, *cand) - y
            sse_c = r_c @ r_c
            if np.isfinite(sse_c) and sse_c <= sse:
                break
            lam *= 0.5
        else:
            return theta, sse, True
        change = sse - sse_c
        theta, res, sse_old, sse = cand, r_c, sse, sse_c
        if sse <= 1e-30 or change <= rtol * sse_old:
            return theta, sse, True
    return theta, sse, False


def fit_sigmoid(points) -> SigmoidFit:
    """Least-squares sigmoid through ``(overlap_percent, r)`` points, best of a grid of starts."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 5:
        raise InsufficientDataError("need at least 5 (x, r) points")
    x, y = pts[:, 0], pts[:, 1]
    if len(np.unique(x)) < 3:
        raise InsufficientDataError("need at least 3 distinct overlap values")
    sst = float(np.sum((y - y.mean()) ** 2))
    if sst == 0.0:
        raise FitError("constant data: slope unidentifiable (r_squared defined as 0)", residuals=np.zeros_like(y))
    L0, b0 = float(np.ptp(y)), float(y.min())
    best = None
    for x0 in (20.0, 30.0, 40.0, 50.0):
        for k in (0.05, 0.15, 0.5):
            theta, sse, ok = _gauss_newton(x, y, np.array([L0, k, x0, b0]))
            if ok and np.all(np.isfinite(theta)) and (best is None or sse < best[1]):
                best = (theta, sse)
    if best is None:
        raise FitError("no start converged", residuals=y - y.mean())
    theta, sse = best
    r2 = float(min(1.0, max(0.0, 1.0 - sse / sst)))
    return SigmoidFit(*(float(v) for v in theta), r_squared=r2, n_points=len(pts), sse=float(sse))


def snr_model(alpha, sigma_signal_sq, sigma_noise_sq, rho_max):
    """Expected r(G, E) when shared samples carry signal and private samples add independent noise."""
    if sigma_signal_sq <= 0 or sigma_noise_sq <= 0:
        raise ValueError("variances must be positive")
    a = np.asarray(alpha, dtype=np.float64)
    out = a * sigma_signal_sq / (a * sigma_signal_sq + (1.0 - a) * sigma_noise_sq) * rho_max
    return float(out) if out.ndim == 0 else out


def snr_inflection(sigma_signal_sq, sigma_noise_sq) -> float:
    return sigma_noise_sq / (sigma_signal_sq + sigma_noise_sq)


def pooled_matrix_correlation(pairs, n_permutations: int = 10000, seed: int = 0) -> CorrelationResult:
    """Correlation over the concatenated upper triangles of several (A, B) matrix pairs.

    The null relabels the tasks of each ``A`` independently, so every
    replicate keeps its own within-matrix dependence.
    """
    a_all, b_all, tri = [], [], []
    for A, B in pairs:
        iu, ju, a, va = A.upper()
        _, _, b, vb = B.upper()
        joint = va & vb
        a_all.append(a[joint])
        b_all.append(b[joint])
        tri.append((A, iu, ju, b, vb))
    a_cat, b_cat = np.concatenate(a_all), np.concatenate(b_all)
    n = a_cat.size
    if n < 3:
        raise InsufficientDataError(f"only {n} jointly valid task pairs; need at least 3")
    r = pearson(a_cat, b_cat)
    rho = spearman(a_cat, b_cat)
    if n_permutations <= 0:
        return CorrelationResult(r, rho, float("nan"), n)
    rng = np.random.default_rng(seed)
    xs, vs, ys = [], [], []
    for A, iu, ju, b, vb in tri:
        perms = rng.permuted(np.tile(np.arange(A.size), (n_permutations, 1)), axis=1)
        pi, pj = perms[:, iu], perms[:, ju]
        xs.append(A.values[pi, pj])
        vs.append(A.valid[pi, pj] & vb[None, :])
        ys.append(b)
    null = kernels.masked_pearson_rows(np.ascontiguousarray(np.hstack(xs)), np.ascontiguousarray(np.hstack(vs)),
                                       np.ascontiguousarray(np.concatenate(ys)))
    null = null[np.isfinite(null)]
    p = (1 + int(np.sum(np.abs(null) >= abs(r) - 1e-12))) / (1 + null.size)
    return CorrelationResult(r, rho, float(p), n)
