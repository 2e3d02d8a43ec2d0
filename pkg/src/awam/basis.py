"""Per-coordinate basis expansions mapping raw inputs to transformed features.

Each input coordinate j gets its own family of d scalar basis functions.
A p-dimensional input x maps to a (p*d)-vector laid out block by coordinate:
column j*d + k holds the k-th basis function of coordinate j evaluated at x_j.

Two families are supported:

* ``bspline_cubic`` -- clamped cubic B-splines with interior knots at
  empirical quantiles of the training values (d >= 4, d - 4 interior knots).
* ``trig_orthonormal`` -- sqrt(2)*cos(2*pi*k*u), sqrt(2)*sin(2*pi*k*u) pairs
  on the coordinate's domain affinely rescaled to [0, 1]; an odd leftover
  slot is the constant function 1. Orthonormal under the uniform measure.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import BSpline

BSPLINE_DEGREE = 3
SUP_NORM_GRID = 10_001

KINDS = ("bspline_cubic", "trig_orthonormal")


class ConstantFeatureError(ValueError):
    """A coordinate is constant on the training sample and cannot be scaled."""

    def __init__(self, coordinate: int):
        self.coordinate = coordinate
        super().__init__(f"constant feature: {coordinate}")


@dataclass(frozen=True)
class BasisSpec:
    """Fitted per-coordinate basis description.

    Immutable once fitted; transform operations are pure.
    """

    kind: str
    d: int
    p: int
    domain: np.ndarray        # (p, 2) per-coordinate (lo, hi)
    knots: list | None        # per-coordinate interior knots (bspline only)
    sup_norm: np.ndarray      # (p,) grid bound on max_k |psi_jk|

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown basis kind: {self.kind!r}")
        if self.d < 1:
            raise ValueError("d must be >= 1")
        lo, hi = self.domain[:, 0], self.domain[:, 1]
        if not np.all(lo < hi):
            raise ValueError("domain must satisfy lo < hi per coordinate")

    def _knot_vector(self, j: int) -> np.ndarray:
        interior = np.asarray(self.knots[j], dtype=float)
        lo, hi = self.domain[j]
        k = BSPLINE_DEGREE
        return np.r_[[lo] * (k + 1), interior, [hi] * (k + 1)]

    def to_json(self) -> str:
        doc = {
            "kind": self.kind,
            "d": self.d,
            "p": self.p,
            "domain": self.domain.tolist(),
            "knots": [list(map(float, kj)) for kj in self.knots] if self.knots is not None else None,
            "sup_norm": self.sup_norm.tolist(),
        }
        return json.dumps(doc, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "BasisSpec":
        doc = json.loads(text)
        return cls(
            kind=doc["kind"],
            d=int(doc["d"]),
            p=int(doc["p"]),
            domain=np.asarray(doc["domain"], dtype=float),
            knots=doc["knots"],
            sup_norm=np.asarray(doc["sup_norm"], dtype=float),
        )


def _quantile_knots(col: np.ndarray, n_interior: int) -> np.ndarray:
    """Interior knots at empirical quantiles i/(n_interior+1), linear interpolation."""
    if n_interior == 0:
        return np.empty(0)
    levels = np.arange(1, n_interior + 1) / (n_interior + 1)
    return np.quantile(col, levels)


def fit_basis(X_train: np.ndarray, d: int, kind: str = "bspline_cubic") -> BasisSpec:
    """Fit a basis spec on training features.

    Domain bounds are the per-coordinate training min/max widened by
    1e-6 * range. B-spline interior knots sit at empirical quantiles of the
    coordinate's training values. Raises ConstantFeatureError for a
    degenerate (min == max) coordinate.
    """
    X_train = np.asarray(X_train, dtype=float)
    if X_train.ndim != 2:
        raise ValueError("X_train must be a 2-d array")
    if not np.all(np.isfinite(X_train)):
        raise ValueError("X_train contains non-finite entries")
    if kind not in KINDS:
        raise ValueError(f"unknown basis kind: {kind!r}")
    n, p = X_train.shape
    if kind == "bspline_cubic":
        if d < BSPLINE_DEGREE + 1:
            raise ValueError(f"bspline_cubic needs d >= {BSPLINE_DEGREE + 1}, got {d}")
        if n < d + 4:
            raise ValueError(f"bspline_cubic needs n >= d + 4 = {d + 4}, got n = {n}")
    if d < 1:
        raise ValueError("d must be >= 1")
    if n == 0:
        raise ValueError("cannot fit a basis on an empty sample")

    lo = X_train.min(axis=0)
    hi = X_train.max(axis=0)
    for j in range(p):
        if lo[j] == hi[j]:
            raise ConstantFeatureError(j)
    span = hi - lo
    domain = np.column_stack([lo - 1e-6 * span, hi + 1e-6 * span])

    knots = None
    if kind == "bspline_cubic":
        knots = [_quantile_knots(X_train[:, j], d - 4) for j in range(p)]

    spec = BasisSpec(kind=kind, d=d, p=p, domain=domain, knots=knots,
                     sup_norm=np.ones(p))
    sup = np.empty(p)
    for j in range(p):
        grid = np.linspace(domain[j, 0], domain[j, 1], SUP_NORM_GRID)
        block = eval_coordinate(spec, j, grid)
        sup[j] = np.abs(block).max()
    return BasisSpec(kind=kind, d=d, p=p, domain=domain, knots=knots, sup_norm=sup)


def _trig_block(u: np.ndarray, d: int) -> np.ndarray:
    """Evaluate the trig family on rescaled u in [0, 1]; returns (len(u), d)."""
    out = np.empty((u.shape[0], d))
    n_pairs = d // 2
    for k in range(1, n_pairs + 1):
        ang = 2.0 * np.pi * k * u
        out[:, 2 * k - 2] = np.sqrt(2.0) * np.cos(ang)
        out[:, 2 * k - 1] = np.sqrt(2.0) * np.sin(ang)
    if d % 2 == 1:
        out[:, d - 1] = 1.0
    return out


def eval_coordinate(spec: BasisSpec, j: int, values: np.ndarray) -> np.ndarray:
    """Evaluate coordinate j's d basis functions at the given scalar values.

    Values are clamped to the coordinate's domain first. Returns (len(values), d).
    """
    values = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(values)):
        raise ValueError("non-finite input to basis evaluation")
    lo, hi = spec.domain[j]
    u = np.clip(values, lo, hi)
    if spec.kind == "trig_orthonormal":
        return _trig_block((u - lo) / (hi - lo), spec.d)
    t = spec._knot_vector(j)
    return BSpline.design_matrix(u, t, BSPLINE_DEGREE).toarray()


def transform(spec: BasisSpec, x: np.ndarray) -> np.ndarray:
    """Map one p-vector to its (p*d)-vector of basis values (block layout)."""
    x = np.asarray(x, dtype=float)
    if x.shape != (spec.p,):
        raise ValueError(f"expected a vector of length {spec.p}, got shape {x.shape}")
    return transform_batch(spec, x[None, :])[0]


def transform_batch(spec: BasisSpec, X: np.ndarray) -> np.ndarray:
    """Map an (n, p) matrix to the (n, p*d) feature matrix, row by row.

    Row i equals transform(spec, X[i]); deterministic, clamping out-of-domain
    values per coordinate.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != spec.p:
        raise ValueError(f"expected an (n, {spec.p}) matrix, got shape {X.shape}")
    n = X.shape[0]
    out = np.empty((n, spec.p * spec.d))
    if n == 0:
        return out
    for j in range(spec.p):
        col = X[:, j]
        if not np.all(np.isfinite(col)):
            bad = int(np.flatnonzero(~np.isfinite(col))[0])
            raise ValueError(f"non-finite input at row {bad}, coordinate {j}")
        out[:, j * spec.d:(j + 1) * spec.d] = eval_coordinate(spec, j, col)
    return out
