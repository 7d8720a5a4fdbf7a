"""Time the hot kernels under numba and under the plain numpy fallback.

The backend is fixed at import, so each one runs in its own interpreter:

    python3 benchmarks/bench_kernels.py [--repeats 3] [--epochs 5]
"""
import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import json, sys, time
import numpy as np
from gradoverlap import backend
from gradoverlap.conflict import ConflictAccumulator
from gradoverlap.nnet import ArchSpec, TrainConfig, init_network, train
from gradoverlap.paneldata import apply_overlap, generate_panel
from gradoverlap.pairwise import PairwiseMatrix
from gradoverlap.stats import matrix_correlation, pooled_matrix_correlation

repeats, epochs = int(sys.argv[1]), int(sys.argv[2])
panel, truth = generate_panel(seed=0)
sparse = apply_overlap(panel, 0.3, 0)
net = init_network(ArchSpec((panel.n_features, 32, 16), panel.n_tasks), 0)
rng = np.random.default_rng(0)
mats = []
for _ in range(5):
    A = rng.standard_normal((8, 8))
    mats.append(PairwiseMatrix(A + A.T, np.ones((8, 8), bool), "gradient"))

cases = {
    "train full panel": lambda: train(net, panel, TrainConfig(epochs=epochs), ConflictAccumulator()),
    "train 30% overlap": lambda: train(net, sparse, TrainConfig(epochs=epochs), ConflictAccumulator()),
    "mantel 10k perms": lambda: matrix_correlation(mats[0], truth.similarity, 10_000, 0),
    "pooled 5x10k perms": lambda: pooled_matrix_correlation([(m, truth.similarity) for m in mats], 10_000, 0),
}
out = {"backend": backend(), "warmup": {}, "best": {}}
for name, fn in cases.items():
    t = time.perf_counter(); fn(); out["warmup"][name] = time.perf_counter() - t
    times = []
    for _ in range(repeats):
        t = time.perf_counter(); fn(); times.append(time.perf_counter() - t)
    out["best"][name] = min(times)
print(json.dumps(out))
"""


def run(flag, repeats, epochs):
    env = dict(os.environ, GRADOVERLAP_NUMBA=flag)
    res = subprocess.run([sys.executable, "-c", WORKER, str(repeats), str(epochs)], env=env,
                         capture_output=True, text=True, check=True)
    return json.loads(res.stdout)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--epochs", type=int, default=5)
    args = ap.parse_args()
    fast = run("1", args.repeats, args.epochs)
    slow = run("0", args.repeats, args.epochs)
    print(f"{'kernel':<22}{'numba s':>10}{'numpy s':>10}{'speedup':>9}{'first numba call s':>20}")
    for name in fast["best"]:
        f, s = fast["best"][name], slow["best"][name]
        print(f"{name:<22}{f:>10.3f}{s:>10.3f}{s / f:>8.1f}x{fast['warmup'][name]:>20.2f}")


if __name__ == "__main__":
    main()
