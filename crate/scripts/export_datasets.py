"""Writes the bundled scikit-learn multiclass datasets to data/ in the
multiclass text format, with each feature standardized to zero mean and
unit variance."""

from pathlib import Path

import numpy as np
from sklearn import datasets

OUT = Path(__file__).resolve().parent.parent / "data"


def write(name, X, y):
    X = np.asarray(X, dtype=float)
    sd = X.std(axis=0)
    sd[sd == 0] = 1.0
    X = (X - X.mean(axis=0)) / sd
    k = int(y.max()) + 1
    with open(OUT / f"{name}.csv", "w") as f:
        f.write(f"d={X.shape[1]},k={k}\n")
        for row, label in zip(X, y):
            f.write(",".join(f"{v:.6g}" for v in row) + f",{int(label) + 1}\n")


if __name__ == "__main__":
    OUT.mkdir(exist_ok=True)
    for name, loader in [("iris", datasets.load_iris), ("wine", datasets.load_wine), ("digits", datasets.load_digits)]:
        d = loader()
        write(name, d.data, d.target)
