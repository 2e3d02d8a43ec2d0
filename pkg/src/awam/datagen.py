"""Synthetic benchmark generators, corruption injectors, splits, CSV ingestion.

Regression data follows an eight-component additive ground truth on
Uniform(0,1)^p covariates with three training-noise regimes:

* ``A`` -- skewed zero-mean mixture 0.8*N(-2,1) + 0.2*N(8,1)
* ``B`` -- skewed zero-mode mixture 0.8*N(0,1) + 0.2*N(20,1)
* ``C`` -- heavy-tailed Student t with 2 degrees of freedom
* ``gauss`` -- plain N(0,1), used for clean/meta/test data

Mixture draws landing in the 20% outlier component are flagged corrupted so
weight audits can separate clean from atypical samples. Explicit injectors
(label flips, additive outliers, feature noise) flag exactly round(r*n)
samples. Classification data follows a two-informative-coordinate quadratic
decision rule on correlated uniform covariates.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import ndtr

NOISE_KINDS = ("gauss", "A", "B", "C")

N_REGRESSION_COMPONENTS = 8


@dataclass
class Dataset:
    """Feature matrix, targets, and per-sample corruption flags."""

    X: np.ndarray               # (n, p)
    y: np.ndarray               # (n,)
    corrupted: np.ndarray       # (n,) bool
    task: str                   # "regression" | "classification"
    true_support: frozenset | None = None
    f_star: np.ndarray | None = None

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        self.corrupted = np.asarray(self.corrupted, dtype=bool)
        if self.X.ndim != 2:
            raise ValueError("X must be 2-d")
        n = self.X.shape[0]
        if self.y.shape != (n,) or self.corrupted.shape != (n,):
            raise ValueError("y/corrupted lengths disagree with X")
        if self.task not in ("regression", "classification"):
            raise ValueError(f"unknown task: {self.task!r}")
        if self.task == "classification" and n and not np.all((self.y == 0) | (self.y == 1)):
            raise ValueError("classification targets must be in {0, 1}")
        if self.f_star is not None:
            self.f_star = np.asarray(self.f_star, dtype=float)
            if self.f_star.shape != (n,):
                raise ValueError("f_star length disagrees with X")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def subset(self, idx: np.ndarray) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(
            X=self.X[idx].copy(),
            y=self.y[idx].copy(),
            corrupted=self.corrupted[idx].copy(),
            task=self.task,
            true_support=self.true_support,
            f_star=self.f_star[idx].copy() if self.f_star is not None else None,
        )


def component_f(j: int, u):
    """The eight additive ground-truth component functions, indexed 1..8."""
    u = np.asarray(u, dtype=float)
    if j == 1:
        return -2.0 * np.sin(2.0 * u)
    if j == 2:
        return 8.0 * u ** 2
    if j == 3:
        return 7.0 * np.sin(u) / (2.0 - np.sin(u))
    if j == 4:
        return 6.0 * np.exp(-u)
    if j == 5:
        return u ** 3 + 1.5 * (u - 1.0) ** 2
    if j == 6:
        return 5.0 * u
    if j == 7:
        return 10.0 * np.sin(np.exp(-u / 2.0))
    if j == 8:
        return -10.0 * ndtr((u - 0.5) / 0.8)
    raise ValueError(f"component index must be in 1..8, got {j}")


def regression_target(X: np.ndarray) -> np.ndarray:
    """Noiseless target: sum of the eight components on the first 8 columns."""
    X = np.asarray(X, dtype=float)
    if X.shape[1] < N_REGRESSION_COMPONENTS:
        raise ValueError(f"need p >= {N_REGRESSION_COMPONENTS}")
    f = np.zeros(X.shape[0])
    for j in range(1, N_REGRESSION_COMPONENTS + 1):
        f += component_f(j, X[:, j - 1])
    return f


def sample_noise(kind: str, rng: np.random.Generator) -> float:
    """One noise draw. Student t(2) uses a normal over sqrt(chi2_2 / 2)."""
    value, _ = _sample_noise_batch(kind, rng, 1)
    return float(value[0])


def _sample_noise_batch(kind: str, rng: np.random.Generator, n: int):
    """n noise draws plus a flag marking draws from an outlier component."""
    if kind == "gauss":
        return rng.normal(0.0, 1.0, size=n), np.zeros(n, dtype=bool)
    if kind == "A":
        outlier = rng.random(n) < 0.2
        eps = np.where(outlier, rng.normal(8.0, 1.0, size=n), rng.normal(-2.0, 1.0, size=n))
        return eps, outlier
    if kind == "B":
        outlier = rng.random(n) < 0.2
        eps = np.where(outlier, rng.normal(20.0, 1.0, size=n), rng.normal(0.0, 1.0, size=n))
        return eps, outlier
    if kind == "C":
        z = rng.normal(0.0, 1.0, size=n)
        chi = rng.chisquare(2, size=n)
        return z / np.sqrt(chi / 2.0), np.zeros(n, dtype=bool)
    raise ValueError(f"unknown noise kind: {kind!r}")


def gen_regression(n: int, p: int, noise_kind: str = "gauss", seed: int = 0) -> Dataset:
    """Additive regression benchmark: 8 informative + p-8 irrelevant coordinates.

    Covariates are Uniform(0,1)^p; the noiseless target is retained in f_star
    and the informative set {0..7} in true_support. Mixture-outlier draws
    (kinds A and B) are flagged corrupted.
    """
    if p < N_REGRESSION_COMPONENTS:
        raise ValueError(f"need p >= {N_REGRESSION_COMPONENTS}, got {p}")
    if noise_kind not in NOISE_KINDS:
        raise ValueError(f"unknown noise kind: {noise_kind!r}")
    rng = np.random.default_rng(seed)
    X = rng.random((n, p))
    f_star = regression_target(X)
    eps, outlier = _sample_noise_batch(noise_kind, rng, n)
    return Dataset(
        X=X,
        y=f_star + eps,
        corrupted=outlier,
        task="regression",
        true_support=frozenset(range(N_REGRESSION_COMPONENTS)),
        f_star=f_star,
    )


def classification_target(X: np.ndarray):
    """Quadratic decision rule on the first two coordinates.

    f*(x) = (x_1 - 0.5)^2 + (x_2 - 0.5)^2 - 0.08; label 0 iff f*(x) <= 0.
    """
    X = np.asarray(X, dtype=float)
    if X.shape[1] < 2:
        raise ValueError("need p >= 2")
    f = (X[:, 0] - 0.5) ** 2 + (X[:, 1] - 0.5) ** 2 - 0.08
    return f, (f > 0).astype(float)


def gen_classification(n: int, p: int, seed: int = 0) -> Dataset:
    """Classification benchmark with correlated uniforms x_ij = (W_ij + U_i)/2."""
    if p < 2:
        raise ValueError(f"need p >= 2, got {p}")
    rng = np.random.default_rng(seed)
    W = rng.random((n, p))
    U = rng.random(n)
    X = (W + U[:, None]) / 2.0
    f_star, y = classification_target(X)
    return Dataset(
        X=X,
        y=y,
        corrupted=np.zeros(n, dtype=bool),
        task="classification",
        true_support=frozenset({0, 1}),
        f_star=f_star,
    )


def _pick_corrupt(rng: np.random.Generator, n: int, r: float) -> np.ndarray:
    if not (0.0 <= r <= 1.0):
        raise ValueError("corruption ratio must be in [0, 1]")
    k = round(r * n)
    return rng.choice(n, size=k, replace=False)


def corrupt_labels(ds: Dataset, r1: float, rng: np.random.Generator) -> Dataset:
    """Flip exactly round(r1*n) uniformly chosen labels; flags those samples."""
    if ds.task != "classification":
        raise ValueError("label flipping applies to classification data")
    idx = _pick_corrupt(rng, ds.n, r1)
    y = ds.y.copy()
    y[idx] = 1.0 - y[idx]
    corrupted = ds.corrupted.copy()
    corrupted[idx] = True
    return replace(ds, X=ds.X.copy(), y=y, corrupted=corrupted)


def inject_outliers(ds: Dataset, r1: float, mean: float, var: float,
                    rng: np.random.Generator) -> Dataset:
    """Add N(mean, var) draws to round(r1*n) regression targets; flags them."""
    if ds.task != "regression":
        raise ValueError("outlier injection applies to regression data")
    if var < 0:
        raise ValueError("variance must be >= 0")
    idx = _pick_corrupt(rng, ds.n, r1)
    y = ds.y.copy()
    y[idx] += rng.normal(mean, np.sqrt(var), size=idx.shape[0])
    corrupted = ds.corrupted.copy()
    corrupted[idx] = True
    return replace(ds, X=ds.X.copy(), y=y, corrupted=corrupted)


def corrupt_features(ds: Dataset, r3: float, rng: np.random.Generator) -> Dataset:
    """Add independent t(2) noise to every coordinate of round(r3*n) rows.

    Corrupted rows may leave the original feature range; clamping happens
    only at basis-transform time.
    """
    idx = _pick_corrupt(rng, ds.n, r3)
    X = ds.X.copy()
    if idx.size:
        z = rng.normal(0.0, 1.0, size=(idx.shape[0], ds.p))
        chi = rng.chisquare(2, size=(idx.shape[0], ds.p))
        X[idx] += z / np.sqrt(chi / 2.0)
    corrupted = ds.corrupted.copy()
    corrupted[idx] = True
    return replace(ds, X=X, y=ds.y.copy(), corrupted=corrupted)


def make_imbalanced(ds: Dataset, r2: float, rng: np.random.Generator) -> Dataset:
    """Subsample the negative class so it makes up fraction r2 of the output.

    Keeps every positive sample; draws round(P * r2 / (1 - r2)) negatives
    uniformly without replacement, preserving original row order.
    """
    if ds.task != "classification":
        raise ValueError("imbalancing applies to classification data")
    if not (0.0 < r2 < 1.0):
        raise ValueError("imbalance factor must lie strictly inside (0, 1)")
    neg = np.flatnonzero(ds.y == 0.0)
    pos = np.flatnonzero(ds.y == 1.0)
    if neg.size == 0 or pos.size == 0:
        raise ValueError("both classes must be present")
    n_neg = round(pos.size * r2 / (1.0 - r2))
    if n_neg < 1:
        raise ValueError(f"imbalance factor {r2} leaves the negative class empty")
    if n_neg > neg.size:
        raise ValueError(
            f"need {n_neg} negatives for r2={r2} but only {neg.size} are available")
    keep_neg = rng.choice(neg, size=n_neg, replace=False)
    keep = np.sort(np.concatenate([pos, keep_neg]))
    return ds.subset(keep)


def _largest_remainder_sizes(n: int, ratios) -> list[int]:
    ratios = np.asarray(ratios, dtype=float)
    if np.any(ratios <= 0):
        raise ValueError("split ratios must be positive")
    exact = n * ratios / ratios.sum()
    sizes = np.floor(exact).astype(int)
    remainder = exact - sizes
    short = n - sizes.sum()
    # ties broken toward the lower index: stable sort on -remainder
    order = np.argsort(-remainder, kind="stable")
    for k in order[:short]:
        sizes[k] += 1
    return sizes.tolist()


def split(ds: Dataset, ratios, rng: np.random.Generator,
          clean_meta: bool = True):
    """Disjoint train/meta/test partition with largest-remainder sizing.

    With clean_meta the meta portion is drawn from unflagged samples only;
    raises if too few clean samples exist.
    """
    n_train, n_meta, n_test = _largest_remainder_sizes(ds.n, ratios)
    if clean_meta:
        clean = np.flatnonzero(~ds.corrupted)
        if clean.size < n_meta:
            raise ValueError(
                f"meta split needs {n_meta} clean samples but only {clean.size} exist")
        meta_idx = rng.choice(clean, size=n_meta, replace=False)
        rest = np.setdiff1d(np.arange(ds.n), meta_idx)
        rest = rng.permutation(rest)
    else:
        perm = rng.permutation(ds.n)
        meta_idx, rest = perm[:n_meta], perm[n_meta:]
    train_idx = rest[:n_train]
    test_idx = rest[n_train:n_train + n_test]
    return ds.subset(train_idx), ds.subset(meta_idx), ds.subset(test_idx)


def write_dataset_csv(ds: Dataset, path) -> None:
    """Write a dataset as CSV: x1..xp, target, corrupted, optional f_star.

    Floats use repr so a read-back is exact.
    """
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        header = [f"x{j + 1}" for j in range(ds.p)] + ["target", "corrupted"]
        if ds.f_star is not None:
            header.append("f_star")
        w.writerow(header)
        for i in range(ds.n):
            row = [repr(float(v)) for v in ds.X[i]]
            row.append(repr(float(ds.y[i])))
            row.append("1" if ds.corrupted[i] else "0")
            if ds.f_star is not None:
                row.append(repr(float(ds.f_star[i])))
            w.writerow(row)


def read_dataset_csv(path, task: str, true_support=None) -> Dataset:
    """Exact inverse of write_dataset_csv."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty file, expected a header row")
    header = rows[0]
    if "target" not in header:
        raise ValueError(f"{path}: missing 'target' column")
    has_fstar = "f_star" in header
    t_col = header.index("target")
    c_col = header.index("corrupted")
    f_col = header.index("f_star") if has_fstar else None
    x_cols = [k for k, name in enumerate(header) if name.startswith("x")]
    X, y, flags, fstar = [], [], [], []
    for row in rows[1:]:
        X.append([float(row[k]) for k in x_cols])
        y.append(float(row[t_col]))
        flags.append(row[c_col] == "1")
        if has_fstar:
            fstar.append(float(row[f_col]))
    n = len(X)
    return Dataset(
        X=np.asarray(X, dtype=float).reshape(n, len(x_cols)),
        y=np.asarray(y, dtype=float),
        corrupted=np.asarray(flags, dtype=bool),
        task=task,
        true_support=frozenset(true_support) if true_support is not None else None,
        f_star=np.asarray(fstar, dtype=float) if has_fstar else None,
    )


def load_csv(path, target_column: str, task: str) -> Dataset:
    """Generic ingestion of a rectangular numeric CSV with a header row.

    Features are min-max rescaled per column using the loaded range; the
    target comes from the named column; all corruption flags start clean.
    Non-numeric cells are reported with their row and column.
    """
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty file, expected a header row")
    header = rows[0]
    if target_column not in header:
        raise ValueError(f"{path}: missing target column {target_column!r}")
    t_col = header.index(target_column)
    width = len(header)
    data = np.empty((len(rows) - 1, width))
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != width:
            raise ValueError(f"{path}: ragged row {i}: {len(row)} cells, expected {width}")
        for k, cell in enumerate(row):
            try:
                data[i - 2, k] = float(cell)
            except ValueError:
                raise ValueError(
                    f"{path}: non-numeric cell at row {i}, column {header[k]!r}: {cell!r}"
                ) from None
    y = data[:, t_col]
    X = np.delete(data, t_col, axis=1)
    if X.shape[0] > 0:
        lo = X.min(axis=0)
        hi = X.max(axis=0)
        span = np.where(hi > lo, hi - lo, 1.0)
        X = (X - lo) / span
    if task == "classification" and X.shape[0] and not np.all((y == 0) | (y == 1)):
        raise ValueError(f"{path}: classification targets must be 0/1")
    return Dataset(
        X=X,
        y=y,
        corrupted=np.zeros(X.shape[0], dtype=bool),
        task=task,
    )
