import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats as sst
from scipy.optimize import curve_fit

from conftest import make_panel
from gradoverlap.errors import FitError, InsufficientDataError, UndefinedCorrelationError
from gradoverlap.paneldata import generate_panel
from gradoverlap.pairwise import PairwiseMatrix
from gradoverlap.stats import (empirical_matrix, fit_sigmoid, matrix_correlation, pearson,
                               pooled_matrix_correlation, sigmoid, snr_inflection, snr_model, spearman)


def _sym(rng, K):
    A = rng.standard_normal((K, K))
    A = 0.5 * (A + A.T)
    np.fill_diagonal(A, 1.0)
    return PairwiseMatrix(A, np.ones((K, K), bool), "gradient")


def test_pearson_hand_cases():
    x = np.arange(10.0)
    assert pearson(x, 2 * x + 1) == pytest.approx(1.0)
    assert pearson(x, -x) == pytest.approx(-1.0)
    assert pearson([1, 2, 3], [1, 3, 2]) == pytest.approx(0.5)


def test_pearson_guards():
    with pytest.raises(UndefinedCorrelationError):
        pearson([1, 1, 1], [1, 2, 3])
    with pytest.raises(InsufficientDataError):
        pearson([1, 2], [2, 1])


def test_spearman_hand_cases():
    assert spearman([1, 2, 3], [9, 1, 5]) == pytest.approx(-0.5)
    x = np.linspace(0.1, 3, 12)
    assert spearman(x, np.exp(x)) == pytest.approx(1.0)
    assert np.isfinite(spearman([1, 2, 2, 3], [4, 5, 5, 6]))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.integers(3, 40))
def test_correlations_match_scipy(seed, n):
    rng = np.random.default_rng(seed)
    x, y = rng.standard_normal(n), rng.standard_normal(n)
    y[: n // 3] = x[: n // 3]
    x[0] = x[1]  # a tie
    assert pearson(x, y) == pytest.approx(sst.pearsonr(x, y)[0], abs=1e-12)
    assert spearman(x, y) == pytest.approx(sst.spearmanr(x, y)[0], abs=1e-12)


def test_empirical_matrix_duplicates_and_threshold():
    rng = np.random.default_rng(0)
    y = rng.standard_normal(50)
    Y = np.column_stack([y, y, rng.standard_normal(50)])
    M = np.ones((50, 3), bool)
    M[5:, 2] = False
    E = empirical_matrix(make_panel(np.zeros((50, 1)), Y, M), min_shared=20)
    assert E.values[0, 1] == pytest.approx(1.0)
    assert not E.valid[0, 2] and not E.valid[1, 2]


def test_empirical_matrix_tracks_weight_cosine():
    panel, truth = generate_panel(n_samples=2000, n_latent=10, n_tasks=8, noise_sd=0.0, seed=3)
    E = empirical_matrix(panel).values
    iu = np.triu_indices(8, 1)
    assert np.max(np.abs(E[iu] - truth.similarity.values[iu])) <= 0.05


def test_matrix_correlation_identity_and_negation():
    A = _sym(np.random.default_rng(0), 8)
    r = matrix_correlation(A, A, 200)
    assert r.pearson_r == pytest.approx(1.0) and r.spearman_rho == pytest.approx(1.0)
    negA = PairwiseMatrix(-A.values, A.valid, "gradient")
    assert matrix_correlation(A, negA, 0).pearson_r == pytest.approx(-1.0)


def test_matrix_correlation_insufficient_pairs():
    A = _sym(np.random.default_rng(0), 2)
    with pytest.raises(InsufficientDataError):
        matrix_correlation(A, A, 10)


def test_mantel_null_is_calibrated():
    rng = np.random.default_rng(11)
    ps = [matrix_correlation(_sym(rng, 12), _sym(rng, 12), 10_000, seed=t).p_value for t in range(100)]
    assert 0.01 <= np.mean(np.array(ps) < 0.05) <= 0.10


def test_mantel_p_is_deterministic_and_in_range():
    rng = np.random.default_rng(2)
    A, B = _sym(rng, 8), _sym(rng, 8)
    r1 = matrix_correlation(A, B, 500, seed=4)
    r2 = matrix_correlation(A, B, 500, seed=4)
    assert r1 == r2 and 0 < r1.p_value <= 1


def test_pooled_correlation_detects_shared_signal():
    rng = np.random.default_rng(5)
    pairs = []
    for _ in range(5):
        A = _sym(rng, 8)
        noise = _sym(rng, 8)
        pairs.append((A, PairwiseMatrix(A.values + 0.5 * noise.values, A.valid, "ground_truth")))
    res = pooled_matrix_correlation(pairs, 2000)
    assert res.n_pairs == 140 and res.pearson_r > 0.5 and res.p_value < 0.001


def test_pooled_correlation_matches_single_statistic():
    rng = np.random.default_rng(6)
    A, B = _sym(rng, 6), _sym(rng, 6)
    assert pooled_matrix_correlation([(A, B)], 0).pearson_r == pytest.approx(matrix_correlation(A, B, 0).pearson_r)


X = np.arange(10.0, 101.0, 10.0)


def test_sigmoid_exact_recovery():
    fit = fit_sigmoid(np.column_stack([X, sigmoid(X, 0.82, 0.15, 29.7, 0.0)]))
    assert fit.L == pytest.approx(0.82, abs=1e-6)
    assert fit.k == pytest.approx(0.15, abs=1e-6)
    assert fit.x0 == pytest.approx(29.7, abs=1e-6)
    assert fit.b == pytest.approx(0.0, abs=1e-6)
    assert fit.r_squared == pytest.approx(1.0, abs=1e-12)


def _noisy(seed):
    return sigmoid(X, 0.82, 0.15, 29.7, 0.0) + np.random.default_rng(seed).normal(0, 0.02, X.size)


def test_sigmoid_noisy_recovery():
    x0 = np.array([fit_sigmoid(np.column_stack([X, _noisy(s)])).x0 for s in range(20)])
    assert abs(x0.mean() - 29.7) <= 2.0
    assert np.sum(np.abs(x0 - 29.7) > 2.0) <= 1


def test_sigmoid_matches_scipy_optimum():
    def f(x, L, k, x0, b):
        return L / (1 + np.exp(-k * (x - x0))) + b

    for seed in range(20):
        y = _noisy(seed)
        ref, _ = curve_fit(f, X, y, p0=[0.82, 0.15, 29.7, 0.0], maxfev=20_000)
        fit = fit_sigmoid(np.column_stack([X, y]))
        assert fit.sse <= np.sum((f(X, *ref) - y) ** 2) * (1 + 1e-6)
        assert fit.x0 == pytest.approx(ref[2], abs=1e-3)


def test_sigmoid_degenerate_inputs():
    with pytest.raises(FitError):
        fit_sigmoid(np.column_stack([X, np.full(X.size, 0.4)]))
    with pytest.raises(InsufficientDataError):
        fit_sigmoid([(1, 0.1), (2, 0.2)])


def test_snr_model():
    assert snr_model(0.0, 1.0, 2.0, 0.9) == 0.0
    assert snr_model(1.0, 1.0, 2.0, 0.9) == pytest.approx(0.9)
    a = snr_inflection(1.0, 1.0)
    assert a == 0.5 and snr_model(a, 1.0, 1.0, 0.8) == pytest.approx(0.4)
    assert np.all(np.diff(snr_model(np.linspace(0, 1, 11), 1.0, 3.0, 1.0)) > 0)
    with pytest.raises(ValueError):
        snr_model(0.5, 0.0, 1.0, 1.0)
