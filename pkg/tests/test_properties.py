import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import make_panel
from gradoverlap import kernels
from gradoverlap.cluster import Partition, ari, cut_k, group_tasks, linkage_average, nmi
from gradoverlap.conflict import ConflictAccumulator, conflict_matrix, finalize
from gradoverlap.nnet import ArchSpec, GradientVector, init_network, masked_task_loss, task_gradient
from gradoverlap.paneldata import generate_panel, pairwise_overlap
from gradoverlap.pairwise import PairwiseMatrix
from gradoverlap.stats import empirical_matrix, pearson, snr_model, spearman

seeds = st.integers(0, 2**31 - 1)


@settings(max_examples=25, deadline=None)
@given(seeds, st.floats(0.1, 10.0))
def test_backprop_is_linear_in_the_loss(seed, c):
    rng = np.random.default_rng(seed)
    net = init_network(ArchSpec((4, 5, 3), 2), seed)
    X = rng.standard_normal((7, 4))
    acts = kernels.encoder_forward(net.theta.copy(), net.dims_array, net.act_code, X)
    d = rng.standard_normal((7, 3))
    g1, gc = np.zeros(net.theta.size), np.zeros(net.theta.size)
    kernels.encoder_backward(net.theta.copy(), net.dims_array, net.act_code, acts, d, g1)
    kernels.encoder_backward(net.theta.copy(), net.dims_array, net.act_code, acts, c * d, gc)
    assert np.allclose(gc, c * g1, rtol=1e-12, atol=1e-15)


@settings(max_examples=25, deadline=None)
@given(seeds)
def test_labels_outside_the_batch_do_not_matter(seed):
    rng = np.random.default_rng(seed)
    X, Y = rng.standard_normal((20, 3)), rng.standard_normal((20, 2))
    batch = np.arange(10)
    net = init_network(ArchSpec((3, 4), 2), seed)
    Y2 = Y.copy()
    Y2[10:] += rng.standard_normal((10, 2)) * 100
    a, b = make_panel(X, Y), make_panel(X, Y2)
    assert masked_task_loss(net, a, 0, batch) == masked_task_loss(net, b, 0, batch)
    assert np.array_equal(task_gradient(net, a, 1, batch).values, task_gradient(net, b, 1, batch).values)


@settings(max_examples=40)
@given(seeds, st.floats(0.01, 100.0))
def test_conflict_matrix_rescaling(seed, c):
    vs = np.random.default_rng(seed).standard_normal((3, 6))
    base = conflict_matrix([GradientVector(v, k, 1) for k, v in enumerate(vs)]).values
    up = conflict_matrix([GradientVector(v * (c if k == 0 else 1), k, 1) for k, v in enumerate(vs)]).values
    flip = conflict_matrix([GradientVector(v * (-c if k == 0 else 1), k, 1) for k, v in enumerate(vs)]).values
    assert np.allclose(up, base, atol=1e-12)
    assert np.allclose(flip[0, 1:], -base[0, 1:], atol=1e-12)


@settings(max_examples=25)
@given(seeds)
def test_finalize_commutes_with_task_order(seed):
    rng = np.random.default_rng(seed)
    perm = rng.permutation(4)
    acc, acc_p = ConflictAccumulator(window_fraction=1.0), ConflictAccumulator(window_fraction=1.0)
    for step in (10, 20, 30):
        vs = rng.standard_normal((4, 5))
        m = conflict_matrix([GradientVector(v, k, 1) for k, v in enumerate(vs)])
        acc.record(step, m)
        acc_p.record(step, m.permuted(perm))
    F, Fp = finalize(acc), finalize(acc_p)
    assert np.allclose(F.permuted(perm).values, Fp.values)
    assert np.array_equal(F.values, F.values.T) and np.all(np.abs(F.values) <= 1)


@settings(max_examples=40)
@given(seeds, st.floats(0.1, 5.0), st.floats(-3, 3))
def test_pearson_affine_and_spearman_monotone(seed, a, b):
    x = np.random.default_rng(seed).standard_normal(15)
    assert pearson(x, a * x + b) == pytest.approx(1.0)
    assert pearson(x, -a * x + b) == pytest.approx(-1.0)
    y = np.random.default_rng(seed + 1).standard_normal(15)
    assert spearman(np.exp(x), y ** 3) == pytest.approx(spearman(x, y))


def test_empirical_matrix_equals_direct_pearson_on_shared_rows():
    panel, _ = generate_panel(n_samples=200, n_tasks=3, seed=4)
    rng = np.random.default_rng(0)
    sub = panel.with_mask(rng.random(panel.mask.shape) < 0.6)
    E = empirical_matrix(sub)
    both = sub.mask[:, 0] & sub.mask[:, 2]
    assert E.values[0, 2] == pytest.approx(pearson(sub.labels[both, 0], sub.labels[both, 2]), abs=1e-15)


def test_overlap_matrix_invariants():
    panel, _ = generate_panel(n_samples=200, n_tasks=5, seed=4)
    O = pairwise_overlap(panel.with_mask(np.random.default_rng(1).random(panel.mask.shape) < 0.5)).values
    assert np.array_equal(O, O.T) and np.all(np.diag(O) == 1) and np.all((O >= 0) & (O <= 1))


def test_snr_model_monotone():
    a = np.linspace(0, 1, 101)
    assert np.all(np.diff(snr_model(a, 0.7, 1.3, 0.9)) >= 0)


@settings(max_examples=40)
@given(seeds, st.integers(2, 20))
def test_partition_metrics_symmetric_and_label_invariant(seed, n):
    rng = np.random.default_rng(seed)
    a, b = rng.integers(0, 3, n), rng.integers(0, 4, n)
    relabel = rng.permutation(4)
    assert ari(a, b) == pytest.approx(ari(b, a), abs=1e-12)
    assert nmi(a, b) == pytest.approx(nmi(b, a), abs=1e-12)
    assert ari(a, relabel[b]) == pytest.approx(ari(a, b), abs=1e-12)


@settings(max_examples=40)
@given(seeds, st.integers(2, 8), st.floats(0.0, 5.0))
def test_upgma_pair_choices_survive_a_distance_shift(seed, K, c):
    D = np.random.default_rng(seed).random((K, K))
    D = D + D.T
    np.fill_diagonal(D, 0.0)
    shifted = D + c
    np.fill_diagonal(shifted, 0.0)
    a, b = linkage_average(D), linkage_average(shifted)
    assert [m[:2] for m in a.merges] == [m[:2] for m in b.merges]
    G = PairwiseMatrix(1.0 - D / D.max(), np.ones((K, K), bool), "gradient")
    G2 = PairwiseMatrix(np.where(np.eye(K, dtype=bool), 1.0, G.values - 0.3), np.ones((K, K), bool), "gradient")
    assert group_tasks(G, min(2, K)) == group_tasks(G2, min(2, K))


def test_serialization_formats(tmp_path):
    V = np.ones((3, 3), bool)
    V[0, 2] = V[2, 0] = False
    M = PairwiseMatrix(np.eye(3) * 0.5 + 0.5, V, "gradient", ("a", "b", "c"))
    M.to_csv(tmp_path / "m.csv")
    lines = (tmp_path / "m.csv").read_text().splitlines()
    assert lines[0] == ",a,b,c" and lines[1].endswith(",")
    back = PairwiseMatrix.from_csv(tmp_path / "m.csv", "gradient")
    assert np.array_equal(back.valid, V) and np.array_equal(back.values, M.values)
    dend = linkage_average(np.array([[0, 1, 4], [1, 0, 4], [4, 4, 0.0]]))
    dend.to_csv(tmp_path / "d.csv")
    assert (tmp_path / "d.csv").read_text().splitlines()[:2] == ["left,right,height", "0,1,1.0"]
    cut_k(dend, 2).to_csv(tmp_path / "p.csv", ["a", "b", "c"])
    assert (tmp_path / "p.csv").read_text().splitlines() == ["task_name,group_id", "a,0", "b,0", "c,1"]
    assert Partition((1, 0), 2).groups() == [[1], [0]]
