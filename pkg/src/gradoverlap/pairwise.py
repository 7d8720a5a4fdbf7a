"""Symmetric task-by-task matrices with per-entry validity."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

KINDS = ("gradient", "empirical", "overlap", "ground_truth")


def _default_names(k):
    return tuple(f"t{i}" for i in range(k))


@dataclass(frozen=True, eq=False)
class PairwiseMatrix:
    values: np.ndarray
    valid: np.ndarray
    kind: str
    names: tuple = field(default=None)

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        valid = np.array(self.valid, dtype=bool)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise ValueError(f"pairwise matrix must be square, got {values.shape}")
        if valid.shape != values.shape:
            raise ValueError("validity mask shape does not match values")
        if self.kind not in KINDS:
            raise ValueError(f"unknown matrix kind {self.kind!r}")
        if not np.array_equal(valid, valid.T):
            raise ValueError("validity mask must be symmetric")
        if not np.array_equal(np.where(valid, values, 0.0), np.where(valid, values, 0.0).T):
            raise ValueError("matrix values must be symmetric")
        values = np.where(valid, values, 0.0)
        names = _default_names(values.shape[0]) if self.names is None else tuple(self.names)
        if len(names) != values.shape[0]:
            raise ValueError("names length does not match matrix size")
        values.setflags(write=False)
        valid.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "valid", valid)
        object.__setattr__(self, "names", names)

    @property
    def size(self) -> int:
        return self.values.shape[0]

    def upper(self):
        """Strict upper triangle as (row_idx, col_idx, values, valid)."""
        iu, ju = np.triu_indices(self.size, k=1)
        return iu, ju, self.values[iu, ju], self.valid[iu, ju]

    def permuted(self, perm) -> PairwiseMatrix:
        perm = np.asarray(perm)
        return PairwiseMatrix(
            self.values[np.ix_(perm, perm)],
            self.valid[np.ix_(perm, perm)],
            self.kind,
            tuple(self.names[i] for i in perm),
        )

    def submatrix(self, idx) -> PairwiseMatrix:
        return self.permuted(idx)

    def to_csv(self, path):
        path = Path(path)
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["", *self.names])
            for i, name in enumerate(self.names):
                cells = [repr(float(v)) if ok else "" for v, ok in zip(self.values[i], self.valid[i])]
                w.writerow([name, *cells])

    @classmethod
    def from_csv(cls, path, kind) -> PairwiseMatrix:
        with Path(path).open(newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        names = tuple(rows[0][1:])
        k = len(names)
        values = np.zeros((k, k))
        valid = np.zeros((k, k), dtype=bool)
        for i, row in enumerate(rows[1:]):
            for j, cell in enumerate(row[1:]):
                if cell != "":
                    values[i, j] = float(cell)
                    valid[i, j] = True
        return cls(values, valid, kind, names)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "names": list(self.names),
            "values": [[float(v) if ok else None for v, ok in zip(r, m)] for r, m in zip(self.values, self.valid)],
        }
