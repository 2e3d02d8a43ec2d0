"""Additive predictor, loss functions, and the weighted group penalty.

The coefficient matrix beta has one row per coordinate (a block of d basis
coefficients); its flattened order matches the feature-matrix layout. The
group penalty lambda * sum_j tau_j * ||beta_j||_2 drives whole blocks to
zero. Because its gradient is undefined at beta_j = 0, the optimizer uses a
smoothed subgradient with norm-smoothing constant eps_norm; a proximal step
is available as the variant that produces exact zeros.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit


@dataclass
class AdditiveParams:
    """Coefficient matrix, one d-block per input coordinate."""

    beta: np.ndarray  # (p, d)

    def __post_init__(self):
        self.beta = np.asarray(self.beta, dtype=float)
        if self.beta.ndim != 2:
            raise ValueError("beta must be a (p, d) matrix")

    @property
    def p(self) -> int:
        return self.beta.shape[0]

    @property
    def d(self) -> int:
        return self.beta.shape[1]

    def flatten(self) -> np.ndarray:
        return self.beta.reshape(-1)

    @classmethod
    def from_flat(cls, flat: np.ndarray, p: int, d: int) -> "AdditiveParams":
        flat = np.asarray(flat, dtype=float)
        if flat.shape != (p * d,):
            raise ValueError(f"expected {p * d} coefficients, got shape {flat.shape}")
        return cls(flat.reshape(p, d).copy())

    @classmethod
    def zeros(cls, p: int, d: int) -> "AdditiveParams":
        return cls(np.zeros((p, d)))

    def copy(self) -> "AdditiveParams":
        return AdditiveParams(self.beta.copy())

    def block_norms(self) -> np.ndarray:
        return np.linalg.norm(self.beta, axis=1)

    def to_dict(self) -> dict:
        return {"p": self.p, "d": self.d, "blocks": self.beta.tolist()}

    @classmethod
    def from_dict(cls, doc: dict) -> "AdditiveParams":
        beta = np.asarray(doc["blocks"], dtype=float)
        if beta.shape != (doc["p"], doc["d"]):
            raise ValueError("block shape disagrees with recorded (p, d)")
        return cls(beta)


@dataclass
class PenaltyConfig:
    """Group-penalty knobs: strength, per-coordinate weights, smoothing."""

    lam: float
    tau: np.ndarray           # (p,)
    eps_norm: float = 1e-8

    def __post_init__(self):
        self.tau = np.asarray(self.tau, dtype=float)
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")
        if np.any(self.tau < 0):
            raise ValueError("tau entries must be >= 0")
        if self.eps_norm <= 0:
            raise ValueError("eps_norm must be > 0")


def predict(params: AdditiveParams, psi: np.ndarray) -> float:
    """Additive prediction: flattened inner product of beta with psi."""
    psi = np.asarray(psi, dtype=float)
    if psi.shape != (params.p * params.d,):
        raise ValueError(f"expected psi of length {params.p * params.d}, got {psi.shape}")
    return float(params.flatten() @ psi)


def predict_components(params: AdditiveParams, psi: np.ndarray) -> np.ndarray:
    """Per-coordinate partial sums f_j(x); their total equals predict()."""
    psi = np.asarray(psi, dtype=float)
    if psi.shape != (params.p * params.d,):
        raise ValueError(f"expected psi of length {params.p * params.d}, got {psi.shape}")
    return np.sum(psi.reshape(params.p, params.d) * params.beta, axis=1)


def predict_batch(params: AdditiveParams, Psi: np.ndarray) -> np.ndarray:
    """Predictions for an (n, p*d) feature matrix."""
    Psi = np.asarray(Psi, dtype=float)
    if Psi.ndim != 2 or Psi.shape[1] != params.p * params.d:
        raise ValueError(f"expected (n, {params.p * params.d}) features, got {Psi.shape}")
    return Psi @ params.flatten()


def predict_proba(params: AdditiveParams, psi: np.ndarray) -> float:
    """Class-1 probability sigmoid(f(x)), numerically stable for any margin."""
    return float(expit(predict(params, psi)))


def predict_label(margin) -> np.ndarray:
    """Class decision: 1 iff the class-1 probability is >= 0.5."""
    return (np.asarray(margin) >= 0.0).astype(int)


def squared_loss(y, yhat):
    """Squared loss and its derivative with respect to the prediction.

    Returns ((y - yhat)^2, 2*(yhat - y)); broadcasts over arrays.
    """
    y = np.asarray(y, dtype=float)
    yhat = np.asarray(yhat, dtype=float)
    r = yhat - y
    return r * r, 2.0 * r


def logistic_loss(y, margin):
    """Negative log-likelihood of the logistic model and its margin gradient.

    loss = log(1 + exp(margin)) - y * margin, computed via logaddexp so that
    margins of +-1000 stay finite; gradient = sigmoid(margin) - y.
    """
    y = np.asarray(y, dtype=float)
    margin = np.asarray(margin, dtype=float)
    if not np.all((y == 0.0) | (y == 1.0)):
        raise ValueError("logistic targets must be in {0, 1}")
    loss = np.logaddexp(0.0, margin) - y * margin
    grad = expit(margin) - y
    return loss, grad


def loss_and_dmargin(task: str, y, margin):
    """Dispatch per-sample loss and d(loss)/d(margin) for the given task."""
    if task == "regression":
        return squared_loss(y, margin)
    if task == "classification":
        return logistic_loss(y, margin)
    raise ValueError(f"unknown task: {task!r}")


def group_penalty(params: AdditiveParams, cfg: PenaltyConfig) -> float:
    """Exact (unsmoothed) weighted group penalty lambda * sum_j tau_j ||beta_j||."""
    return float(cfg.lam * np.sum(cfg.tau * params.block_norms()))


def group_penalty_smoothed(params: AdditiveParams, cfg: PenaltyConfig) -> float:
    """Smoothed penalty lambda * sum_j tau_j sqrt(||beta_j||^2 + eps^2)."""
    sq = np.sum(params.beta ** 2, axis=1)
    return float(cfg.lam * np.sum(cfg.tau * np.sqrt(sq + cfg.eps_norm ** 2)))


def penalty_subgrad(params: AdditiveParams, cfg: PenaltyConfig) -> np.ndarray:
    """Gradient of the smoothed penalty; finite for all beta including zeros.

    Block j equals lambda * tau_j * beta_j / sqrt(||beta_j||^2 + eps_norm^2).
    """
    sq = np.sum(params.beta ** 2, axis=1)
    scale = cfg.lam * cfg.tau / np.sqrt(sq + cfg.eps_norm ** 2)
    return scale[:, None] * params.beta


def block_prox(params: AdditiveParams, cfg: PenaltyConfig, step: float) -> AdditiveParams:
    """Proximal operator of step * lambda * sum_j tau_j ||beta_j||.

    Shrinks each block toward zero and kills blocks whose norm is at most
    step * lambda * tau_j, producing exact zeros.
    """
    if step <= 0:
        raise ValueError("step must be > 0")
    norms = params.block_norms()
    thresh = step * cfg.lam * cfg.tau
    with np.errstate(divide="ignore", invalid="ignore"):
        factor = np.where(norms > 0, np.maximum(0.0, 1.0 - thresh / norms), 0.0)
    return AdditiveParams(factor[:, None] * params.beta)


def selected_set(params: AdditiveParams, kappa_select: float = 1e-2) -> set[int]:
    """Coordinates whose block norm exceeds kappa_select times the largest.

    A relative threshold stands in for exact nonzeroness, which smoothed
    gradient updates never reach. Returns the empty set for beta == 0.
    """
    if not (0.0 < kappa_select < 1.0):
        raise ValueError("kappa_select must lie in (0, 1)")
    norms = params.block_norms()
    top = norms.max() if norms.size else 0.0
    if top == 0.0:
        return set()
    return set(np.flatnonzero(norms > kappa_select * top).tolist())


def tau_bound(spec, lam: float, S: float = 0.0, f_inf: float = 0.0,
              task: str = "regression") -> np.ndarray:
    """Per-coordinate penalty weight above which an irrelevant coordinate
    is guaranteed to be excluded from the selected set.

    Regression: sqrt(d) * (f_inf + S) * sup_norm_j / lambda.
    Classification: 2 * sqrt(d) * sup_norm_j / lambda.
    """
    if lam <= 0:
        raise ValueError("lambda must be > 0 for the exclusion bound")
    root_d = np.sqrt(spec.d)
    if task == "regression":
        if S < 0 or f_inf < 0:
            raise ValueError("S and f_inf must be >= 0")
        return root_d * (f_inf + S) * spec.sup_norm / lam
    if task == "classification":
        return 2.0 * root_d * spec.sup_norm / lam
    raise ValueError(f"unknown task: {task!r}")
