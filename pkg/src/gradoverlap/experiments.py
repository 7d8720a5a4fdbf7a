"""End-to-end experiments on synthetic (or CSV) task panels.

Every runner is a pure function of its ``RunConfig``: all randomness is
seeded from the config and rows come out in a fixed cell order.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from itertools import combinations

import numpy as np

from . import __version__
from ._accel import backend
from .cluster import ari, group_tasks, nmi, random_partition
from .config import RunConfig, config_echo
from .conflict import ConflictAccumulator, finalize, matrix_at_checkpoints
from .errors import FitError, InsufficientDataError, NumericalError, TrainingError
from .nnet import ArchSpec, TrainConfig, init_network, train
from .pairwise import PairwiseMatrix
from .paneldata import apply_overlap, generate_panel, load_csv_panel, pairwise_overlap
from .reports import ExperimentReport
from .stats import (empirical_matrix, fit_sigmoid, matrix_correlation, pearson, pooled_matrix_correlation,
                    spearman)


def _map(fn, items, parallel):
    if parallel and parallel > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=parallel) as ex:
            return list(ex.map(fn, items))
    return [fn(it) for it in items]


def make_panel(cfg: RunConfig, seed: int):
    """(panel, ground_truth) for a seed; ground truth is None for CSV panels."""
    p = cfg.panel
    if p.csv_path:
        return load_csv_panel(p.csv_path), None
    return generate_panel(p.n_samples, p.n_latent, p.n_tasks, p.weight_scheme, float(p.noise_sd), seed,
                          p.n_distractors, p.weight_dist, p.noise_model, float(p.private_noise_sd))


def train_config(cfg: RunConfig, seed: int) -> TrainConfig:
    t = cfg.train
    return TrainConfig(float(t.learning_rate), t.epochs, t.batch_size, t.log_interval_steps,
                       float(t.averaging_window_fraction), seed)


def fit_gradient_matrix(panel, cfg: RunConfig, seed: int):
    """Train a fresh network on ``panel`` and return (train_result, accumulator, finalized G)."""
    arch = ArchSpec((panel.n_features, *cfg.train.hidden), panel.n_tasks, cfg.train.activation)
    net = init_network(arch, seed)
    acc = ConflictAccumulator(float(cfg.train.averaging_window_fraction))
    try:
        res = train(net, panel, train_config(cfg, seed), acc)
    except TrainingError as err:
        raise TrainingError(f"seed {seed}: {err}", step=err.step) from None
    G = finalize(acc) if panel.n_tasks > 1 else None
    return res, acc, G


def heldout_r2(network, panel) -> np.ndarray:
    """Per-task coefficient of determination on measured rows."""
    pred = network.predict(panel.features)
    out = np.empty(panel.n_tasks)
    for k in range(panel.n_tasks):
        m = panel.mask[:, k]
        y = panel.labels[m, k]
        sst = np.sum((y - y.mean()) ** 2)
        out[k] = 1.0 - np.sum((pred[m, k] - y) ** 2) / sst if sst > 0 else float("nan")
    return out


def split_rows(n: int, test_fraction: float, seed: int):
    rng = np.random.default_rng([seed, 7])
    perm = rng.permutation(n)
    n_test = max(1, int(round(test_fraction * n)))
    return np.sort(perm[n_test:]), np.sort(perm[:n_test])


def _corr_fields(prefix, res):
    if res is None:
        return {f"{prefix}_r": None, f"{prefix}_rho": None, f"{prefix}_p": None, f"{prefix}_n_pairs": 0}
    return {f"{prefix}_r": res.pearson_r, f"{prefix}_rho": res.spearman_rho, f"{prefix}_p": res.p_value,
            f"{prefix}_n_pairs": res.n_pairs}


def _safe_corr(A, B, cfg, seed):
    try:
        return matrix_correlation(A, B, cfg.n_permutations, seed)
    except (InsufficientDataError, NumericalError):
        return None


def _report(name, cfg, rows, derived, tables=None):
    derived = dict(derived)
    derived["backend"] = backend()
    derived["version"] = __version__
    return ExperimentReport(name, config_echo(cfg), rows, derived, list(cfg.seeds), tables or {})


def _mean(xs):
    xs = [x for x in xs if x is not None and math.isfinite(x)]
    return float(np.mean(xs)) if xs else None


# ---------------------------------------------------------------- validate

def _validate_cell(args):
    cfg, seed = args
    panel, truth = make_panel(cfg, seed)
    _, _, G = fit_gradient_matrix(panel, cfg, seed)
    E = empirical_matrix(panel, cfg.min_shared)
    res_gs = matrix_correlation(G, truth.similarity, cfg.n_permutations, seed) if truth else None
    res_ge = matrix_correlation(G, E, cfg.n_permutations, seed)
    return G, E, truth, res_gs, res_ge


def run_synthetic_validation(cfg: RunConfig, parallel: int = 1) -> ExperimentReport:
    """Full-overlap panels: does G track the designed similarity and the label correlations?"""
    cells = _map(_validate_cell, [(cfg, s) for s in cfg.seeds], parallel)
    rows = []
    for seed, (G, E, truth, res_gs, res_ge) in zip(cfg.seeds, cells):
        rows.append({"seed": seed, **_corr_fields("gs", res_gs), **_corr_fields("ge", res_ge),
                     "mean_g": float(G.upper()[2].mean())})
    derived = {"mean_r_ge": _mean(r["ge_r"] for r in rows)}
    derived["pooled_ge"] = pooled_matrix_correlation([(c[0], c[1]) for c in cells], cfg.n_permutations,
                                                     cfg.seed).to_dict()
    if cells[0][2] is not None:
        derived["mean_r_gs"] = _mean(r["gs_r"] for r in rows)
        derived["pooled_gs"] = pooled_matrix_correlation([(c[0], c[2].similarity) for c in cells],
                                                         cfg.n_permutations, cfg.seed).to_dict()
    tables = {"matrices": [{"seed": s, "task_i": int(i), "task_j": int(j), "g": float(c[0].values[i, j]),
                            "e": float(c[1].values[i, j]) if c[1].valid[i, j] else None,
                            "s_true": float(c[2].similarity.values[i, j]) if c[2] else None}
                           for s, c in zip(cfg.seeds, cells) for i, j in zip(*np.triu_indices(c[0].size, 1))]}
    return _report("validate", cfg, rows, derived, tables if cfg.write_plot_data else None)


# ---------------------------------------------------------------- phase transition

def _phase_cell(args):
    cfg, alpha, seed = args
    panel, truth = make_panel(cfg, seed)
    degraded = apply_overlap(panel, float(alpha), seed, cfg.n_per_task)
    _, _, G = fit_gradient_matrix(degraded, cfg, seed)
    E = empirical_matrix(degraded, cfg.min_shared)
    O = pairwise_overlap(degraded)
    res_ge = _safe_corr(G, E, cfg, seed)
    res_gs = _safe_corr(G, truth.similarity, cfg, seed) if truth else None
    return {"alpha": float(alpha), "seed": seed, "achieved_overlap": float(O.upper()[2].mean()),
            "n_measured_per_task": int(degraded.mask.sum(axis=0).min()),
            **_corr_fields("ge", res_ge), **_corr_fields("gs", res_gs)}


def summarize_phase(rows, grid):
    """Level means, the sigmoid fit and the shape statistics, all recomputable from ``rows``."""
    levels = []
    for a in grid:
        rs = [r["ge_r"] for r in rows if r["alpha"] == a and r["ge_r"] is not None]
        levels.append({"alpha": float(a), "mean_r": _mean(rs), "sd_r": float(np.std(rs)) if rs else None,
                       "n_seeds": len(rs)})
    usable = [lv for lv in levels if lv["mean_r"] is not None]
    derived = {"levels": levels}
    hi = [r["ge_r"] for r in rows if r["alpha"] >= 0.6 and r["ge_r"] is not None]
    lo = [r["ge_r"] for r in rows if r["alpha"] <= 0.1 and r["ge_r"] is not None]
    derived["mean_r_high"] = _mean(hi)
    derived["mean_r_low"] = _mean(lo)
    derived["gap"] = (derived["mean_r_high"] - derived["mean_r_low"]
                      if hi and lo else None)
    try:
        derived["spearman_alpha_mean_r"] = spearman([lv["alpha"] for lv in usable], [lv["mean_r"] for lv in usable])
    except (InsufficientDataError, NumericalError):
        derived["spearman_alpha_mean_r"] = None
    try:
        fit = fit_sigmoid([(100.0 * lv["alpha"], lv["mean_r"]) for lv in usable])
        derived["sigmoid"] = fit.to_dict()
    except (InsufficientDataError, FitError) as err:
        derived["sigmoid"] = None
        derived["sigmoid_error"] = str(err)
    return derived


def run_phase_transition(cfg: RunConfig, parallel: int = 1) -> ExperimentReport:
    """Sweep homogeneous pairwise overlap and track r(G, E)."""
    grid = [float(a) for a in cfg.overlap_grid]
    rows = _map(_phase_cell, [(cfg, a, s) for a in grid for s in cfg.seeds], parallel)
    return _report("phase", cfg, rows, summarize_phase(rows, grid))


# ---------------------------------------------------------------- zero-overlap null

def _prop1_cell(args):
    cfg, seed = args
    panel, truth = make_panel(cfg, seed)
    degraded = apply_overlap(panel, float(cfg.alpha), seed, cfg.n_per_task)
    _, _, G = fit_gradient_matrix(degraded, cfg, seed)
    res = matrix_correlation(G, truth.similarity, cfg.n_permutations, seed)
    return {"seed": seed, "alpha": float(cfg.alpha), **_corr_fields("gs", res)}


def summarize_prop1(rows):
    rs = np.array([r["gs_r"] for r in rows], dtype=float)
    ps = np.array([r["gs_p"] for r in rows], dtype=float)
    se = float(rs.std(ddof=1) / np.sqrt(rs.size)) if rs.size > 1 else None
    mean = float(rs.mean())
    return {"mean_r": mean, "se_r": se, "abs_mean_over_se": abs(mean) / se if se else None,
            "fraction_p_below_0.05": float(np.mean(ps < 0.05)), "n_seeds": int(rs.size)}


def run_prop1_null(cfg: RunConfig, parallel: int = 1) -> ExperimentReport:
    """r(G, S*) at a fixed overlap (default 0) across many seeds."""
    rows = _map(_prop1_cell, [(cfg, s) for s in cfg.seeds], parallel)
    return _report("prop1", cfg, rows, summarize_prop1(rows))


# ---------------------------------------------------------------- variance decomposition

def _vardecomp_cell(args):
    cfg, seed = args
    panel, _ = make_panel(cfg, seed)
    _, _, G_full = fit_gradient_matrix(panel, cfg, seed)
    E_full = empirical_matrix(panel, cfg.min_shared)
    out = []
    for a in cfg.overlap_grid:
        deg = apply_overlap(panel, float(a), seed, cfg.n_per_task)
        _, _, G = fit_gradient_matrix(deg, cfg, seed) if a < 1 else (None, None, G_full)
        E = empirical_matrix(deg, cfg.min_shared)
        res_e = _safe_corr(E, E_full, cfg, seed)
        res_g = _safe_corr(G, G_full, cfg, seed)
        out.append({"alpha": float(a), "seed": seed,
                    "r_e_vs_full": res_e.pearson_r if res_e else None,
                    "e_n_pairs": res_e.n_pairs if res_e else 0,
                    "r_g_vs_full": res_g.pearson_r if res_g else None,
                    "g_n_pairs": res_g.n_pairs if res_g else 0})
    return out


def summarize_vardecomp(rows, grid):
    levels = []
    for a in grid:
        sel = [r for r in rows if r["alpha"] == a]
        me = _mean(r["r_e_vs_full"] for r in sel)
        mg = _mean(r["r_g_vs_full"] for r in sel)
        share = None
        if me is not None and mg is not None and (2.0 - me - mg) > 0:
            share = (1.0 - me) / (2.0 - me - mg)
        levels.append({"alpha": float(a), "mean_r_e": me, "mean_r_g": mg, "empirical_share_of_loss": share})
    derived = {"levels": levels}
    # degradation = 1 - alpha; both curves should fall as it grows
    for key in ("mean_r_e", "mean_r_g"):
        pts = [(1.0 - lv["alpha"], lv[key]) for lv in levels if lv[key] is not None]
        try:
            derived[f"spearman_degradation_{key}"] = spearman(*zip(*pts)) if len(pts) >= 3 else None
        except NumericalError:
            derived[f"spearman_degradation_{key}"] = None
    return derived


def run_variance_decomposition(cfg: RunConfig, parallel: int = 1) -> ExperimentReport:
    """How much of the degradation comes from E becoming unstable vs G losing signal."""
    grid = [float(a) for a in cfg.overlap_grid]
    per_seed = _map(_vardecomp_cell, [(cfg, s) for s in cfg.seeds], parallel)
    rows = sorted((r for cell in per_seed for r in cell), key=lambda r: (grid.index(r["alpha"]), cfg.seeds.index(r["seed"])))
    return _report("vardecomp", cfg, rows, summarize_vardecomp(rows, grid))


# ---------------------------------------------------------------- cross-domain blocks

def block_labels(n_tasks: int) -> np.ndarray:
    k_a = math.ceil(n_tasks / 2)
    return np.array([0] * k_a + [1] * (n_tasks - k_a))


def _within_minus_cross(values, labels, iu, ju):
    same = labels[iu] == labels[ju]
    return values[iu, ju][same].mean() - values[iu, ju][~same].mean()


def block_contrast_test(Gs, labels, n_permutations, seed):
    """Mean within-block minus cross-block G, pooled over replicates, with a task-relabelling null."""
    K = labels.size
    iu, ju = np.triu_indices(K, 1)
    obs = float(np.mean([_within_minus_cross(G.values, labels, iu, ju) for G in Gs]))
    if n_permutations <= 0:
        return obs, float("nan")
    rng = np.random.default_rng(seed)
    null = np.zeros(n_permutations)
    for G in Gs:
        perms = rng.permuted(np.tile(np.arange(K), (n_permutations, 1)), axis=1)
        plab = labels[perms]
        same = plab[:, iu] == plab[:, ju]
        vals = G.values[iu, ju][None, :]
        null += ((vals * same).sum(1) / same.sum(1)) - ((vals * ~same).sum(1) / (~same).sum(1))
    null /= len(Gs)
    p = (1 + int(np.sum(null >= obs - 1e-12))) / (1 + n_permutations)
    return obs, float(p)


def _crossdomain_cell(args):
    cfg, seed = args
    panel, _ = make_panel(cfg, seed)
    _, _, G = fit_gradient_matrix(panel, cfg, seed)
    E = empirical_matrix(panel, cfg.min_shared)
    return G, E


def run_cross_domain(cfg: RunConfig, parallel: int = 1) -> ExperimentReport:
    """Within-block vs cross-block gradient similarity on a two-block panel."""
    cells = _map(_crossdomain_cell, [(cfg, s) for s in cfg.seeds], parallel)
    labels = block_labels(cells[0][0].size)
    iu, ju = np.triu_indices(labels.size, 1)
    cat = np.where(labels[iu] != labels[ju], "cross", np.where(labels[iu] == 0, "within_a", "within_b"))
    rows = []
    for seed, (G, E) in zip(cfg.seeds, cells):
        part = group_tasks(G, 2)
        row = {"seed": seed, "block_ari": ari(part, labels), "block_nmi": nmi(part, labels),
               "grouping": list(part.labels)}
        for c in ("within_a", "within_b", "cross"):
            sel = cat == c
            g, e = G.values[iu, ju][sel], E.values[iu, ju][sel]
            row[f"{c}_mean_g"] = float(g.mean())
            row[f"{c}_mean_e"] = float(e.mean())
            try:
                row[f"{c}_r_ge"] = pearson(g, e)
            except (InsufficientDataError, NumericalError):
                row[f"{c}_r_ge"] = None
        row["contrast"], row["contrast_p"] = block_contrast_test([G], labels, cfg.n_permutations, seed)
        rows.append(row)
    contrast, p = block_contrast_test([c[0] for c in cells], labels, cfg.n_permutations, cfg.seed)
    derived = {"pooled_contrast": contrast, "pooled_contrast_p": p,
               "seeds_with_ari_1": int(sum(r["block_ari"] == 1.0 for r in rows)), "n_seeds": len(rows)}
    for c in ("within_a", "within_b", "cross"):
        derived[f"{c}_mean_g"] = _mean(r[f"{c}_mean_g"] for r in rows)
        derived[f"{c}_mean_e"] = _mean(r[f"{c}_mean_e"] for r in rows)
        derived[f"{c}_mean_r_ge"] = _mean(r[f"{c}_r_ge"] for r in rows)
    derived["within_mean_g"] = _mean([derived["within_a_mean_g"], derived["within_b_mean_g"]])
    return _report("crossdomain", cfg, rows, derived)


# ---------------------------------------------------------------- dynamics

def _dynamics_cell(args):
    cfg, seed = args
    panel, _ = make_panel(cfg, seed)
    res, acc, G_final = fit_gradient_matrix(panel, cfg, seed)
    epochs = [e for e in cfg.checkpoint_epochs if 1 <= e <= cfg.train.epochs]
    steps = [max(e * res.steps_per_epoch, acc.steps[0]) for e in epochs]
    snaps = matrix_at_checkpoints(acc, steps)
    names = [f"ep{e}" for e in epochs] + ["final"]
    return names, snaps + [G_final]


def _snapshot_corr(A, B):
    _, _, a, va = A.upper()
    _, _, b, vb = B.upper()
    j = va & vb
    try:
        return pearson(a[j], b[j])
    except (InsufficientDataError, NumericalError):
        return None


def run_dynamics(cfg: RunConfig, parallel: int = 1) -> ExperimentReport:
    """Correlation between running-average G snapshots at checkpoint epochs and the final matrix."""
    cells = _map(_dynamics_cell, [(cfg, s) for s in cfg.seeds], parallel)
    names = cells[0][0]
    rows = []
    for seed, (_, snaps) in zip(cfg.seeds, cells):
        for a in range(len(names)):
            for b in range(len(names)):
                rows.append({"seed": seed, "from": names[a], "to": names[b],
                             "r": _snapshot_corr(snaps[a], snaps[b])})
    table = []
    for a in names:
        rec = {"checkpoint": a}
        for b in names:
            rec[b] = _mean(r["r"] for r in rows if r["from"] == a and r["to"] == b)
        table.append(rec)
    to_final = [t["final"] for t in table[:-1]]
    derived = {"checkpoints": names, "mean_table": table, "corr_with_final": dict(zip(names[:-1], to_final))}
    if len(to_final) >= 2 and None not in to_final:
        derived["early_minus_late"] = to_final[0] - to_final[-1]
    return _report("dynamics", cfg, rows, derived, {"table": table})


# ---------------------------------------------------------------- MTL benefit

def _fit_r2(train_panel, test_panel, tasks, cfg, seed):
    sub = train_panel.tasks(tasks)
    arch = ArchSpec((sub.n_features, *cfg.train.hidden), sub.n_tasks, cfg.train.activation)
    res = train(init_network(arch, seed), sub, train_config(cfg, seed))
    return heldout_r2(res.network, test_panel.tasks(tasks))


def _benefit_cell(args):
    cfg, seed = args
    panel, _ = make_panel(cfg, seed)
    tr, te = split_rows(panel.n_samples, float(cfg.test_fraction), seed)
    train_panel, test_panel = panel.rows(tr), panel.rows(te)
    _, _, G = fit_gradient_matrix(train_panel, cfg, seed)
    K = panel.n_tasks
    single = np.array([_fit_r2(train_panel, test_panel, [k], cfg, seed)[0] for k in range(K)])
    out = []
    for i, j in combinations(range(K), 2):
        r2 = _fit_r2(train_panel, test_panel, [i, j], cfg, seed)
        out.append({"seed": seed, "task_i": i, "task_j": j, "g_ij": float(G.values[i, j]),
                    "r2_pair": float(r2.mean()), "r2_i": float(single[i]), "r2_j": float(single[j]),
                    "benefit": float(r2.mean() - 0.5 * (single[i] + single[j]))})
    return G, out


def threshold_sweep(g, benefit, thresholds):
    """Selecting pairs with G >= t: negative transfer avoided, beneficial pairs kept, and their F1."""
    g = np.asarray(g)
    good = np.asarray(benefit) > 0
    table = []
    for t in thresholds:
        sel = g >= t
        kept = float(np.mean(sel[good])) if good.any() else None
        avoided = float(np.mean(~sel[~good])) if (~good).any() else None
        f1 = (2 * kept * avoided / (kept + avoided)
              if kept is not None and avoided is not None and kept + avoided > 0 else None)
        table.append({"threshold": float(t), "n_selected": int(sel.sum()), "neg_avoided": avoided,
                      "beneficial_kept": kept, "f1": f1})
    return table


def _benefit_matrix(rows, K):
    B = np.eye(K)
    for r in rows:
        B[r["task_i"], r["task_j"]] = B[r["task_j"], r["task_i"]] = r["benefit"]
    return PairwiseMatrix(B, np.ones((K, K), dtype=bool), "empirical")


def run_benefit(cfg: RunConfig, parallel: int = 1) -> ExperimentReport:
    """Does pairwise G predict the held-out gain of a two-task model over single-task models?"""
    cells = _map(_benefit_cell, [(cfg, s) for s in cfg.seeds], parallel)
    rows = [r for _, out in cells for r in out]
    g = np.array([r["g_ij"] for r in rows])
    b = np.array([r["benefit"] for r in rows])
    K = cells[0][0].size
    res = pooled_matrix_correlation([(G, _benefit_matrix(out, K)) for G, out in cells], cfg.n_permutations, cfg.seed)
    thresholds = cfg.thresholds if cfg.thresholds is not None else list(np.linspace(g.min(), g.max(), 11))
    sweep = threshold_sweep(g, b, thresholds)
    derived = {"correlation": res.to_dict(), "mean_benefit": float(b.mean()),
               "fraction_positive": float(np.mean(b > 0)), "sweep": sweep}
    return _report("benefit", cfg, rows, derived, {"sweep": sweep})


# ---------------------------------------------------------------- task grouping

def _partition_score(labels, train_panel, test_panel, cfg, seed, cache):
    """Mean held-out R^2 over tasks; each group model is averaged over ``cfg.n_repeats`` initialisations."""
    r2 = np.empty(train_panel.n_tasks)
    for g in sorted(set(labels)):
        members = tuple(i for i, lab in enumerate(labels) if lab == g)
        if members not in cache:
            cache[members] = np.mean([_fit_r2(train_panel, test_panel, list(members), cfg, repeat_seed(seed, r))
                                      for r in range(cfg.n_repeats)], axis=0)
        r2[list(members)] = cache[members]
    return float(r2.mean())


def repeat_seed(seed: int, r: int) -> int:
    return seed if r == 0 else seed + 7919 * r


def _group_cell(args):
    cfg, seed = args
    panel, _ = make_panel(cfg, seed)
    tr, te = split_rows(panel.n_samples, float(cfg.test_fraction), seed)
    train_panel, test_panel = panel.rows(tr), panel.rows(te)
    _, _, G = fit_gradient_matrix(train_panel, cfg, seed)
    K = panel.n_tasks
    cache = {}
    rows = []
    for n in cfg.n_groups:
        part = group_tasks(G, n)
        rows.append({"seed": seed, "n_groups": n, "arm": "gradient", "trial": None,
                     "labels": list(part.labels),
                     "mean_r2": _partition_score(part.labels, train_panel, test_panel, cfg, seed, cache)})
        for t in range(cfg.n_random_trials):
            rp = random_partition(K, n, seed * 1_000_003 + n * 1009 + t)
            rows.append({"seed": seed, "n_groups": n, "arm": "random", "trial": t, "labels": list(rp.labels),
                         "mean_r2": _partition_score(rp.labels, train_panel, test_panel, cfg, seed, cache)})
    return rows


def summarize_grouping(rows, n_groups):
    out = []
    for n in n_groups:
        grad = [r["mean_r2"] for r in rows if r["n_groups"] == n and r["arm"] == "gradient"]
        rand = [r["mean_r2"] for r in rows if r["n_groups"] == n and r["arm"] == "random"]
        g = float(np.mean(grad))
        out.append({"n_groups": n, "gradient_r2": g, "random_mean_r2": float(np.mean(rand)),
                    "random_sd_r2": float(np.std(rand)), "improvement": g - float(np.mean(rand)),
                    "wins": int(sum(g >= x for x in rand)), "n_random": len(rand),
                    "rank_fraction": float(np.mean([g >= x for x in rand]))})
    return out


def run_grouping(cfg: RunConfig, parallel: int = 1) -> ExperimentReport:
    """Clustering G into groups vs random partitions, scored by mean held-out R^2 over all tasks."""
    cells = _map(_group_cell, [(cfg, s) for s in cfg.seeds], parallel)
    rows = [r for cell in cells for r in cell]
    summary = summarize_grouping(rows, cfg.n_groups)
    return _report("group", cfg, rows, {"by_n_groups": summary}, {"summary": summary})


# ---------------------------------------------------------------- overlap audit

def regime(overlap: float, unreliable_below: float = 0.30, reliable_at: float = 0.40) -> str:
    if overlap < unreliable_below:
        return "unreliable"
    if overlap < reliable_at:
        return "transitional"
    return "reliable"


def audit_panel(panel, unreliable_below=0.30, reliable_at=0.40):
    """Per-pair overlap and reliability regime plus panel-level summaries."""
    O = pairwise_overlap(panel)
    rows = []
    for i, j in zip(*np.triu_indices(O.size, 1)):
        v = float(O.values[i, j])
        rows.append({"task_i": panel.task_names[i], "task_j": panel.task_names[j], "overlap": v,
                     "overlap_percent": 100.0 * v, "regime": regime(v, unreliable_below, reliable_at)})
    vals = np.array([r["overlap"] for r in rows])
    derived = {"median_overlap_percent": float(100.0 * np.median(vals)) if vals.size else None,
               "fraction_pairs_at_least_unreliable_cutoff": float(np.mean(vals >= unreliable_below)) if vals.size else None,
               "n_pairs": int(vals.size),
               "regime_counts": {k: int(sum(r["regime"] == k for r in rows))
                                 for k in ("unreliable", "transitional", "reliable")},
               "overlap_matrix": O.to_dict()}
    return rows, derived


def run_audit(cfg: RunConfig, parallel: int = 1, panel=None) -> ExperimentReport:
    if panel is None:
        panel, _ = make_panel(cfg, cfg.seed)
        if cfg.audit_alpha is not None and not cfg.panel.csv_path:
            panel = apply_overlap(panel, float(cfg.audit_alpha), cfg.seed, cfg.n_per_task)
    rows, derived = audit_panel(panel, float(cfg.unreliable_below), float(cfg.reliable_at))
    return _report("audit", cfg, rows, derived)


RUNNERS = {
    "validate": run_synthetic_validation,
    "phase": run_phase_transition,
    "prop1": run_prop1_null,
    "vardecomp": run_variance_decomposition,
    "crossdomain": run_cross_domain,
    "dynamics": run_dynamics,
    "benefit": run_benefit,
    "group": run_grouping,
    "audit": run_audit,
}


def run_experiment(cfg: RunConfig, parallel: int = 1) -> ExperimentReport:
    return RUNNERS[cfg.experiment](cfg, parallel=parallel)
