"""Mini-batch bilevel training loop: virtual, meta, and actual updates.

Each iteration draws one training batch and one meta batch, then

1. takes a hypothetical (virtual) weighted gradient step on the model
   coefficients, producing beta_hat as a function of the weighting net;
2. descends the weighting-net parameters along the exact gradient of the
   one-step-unrolled meta objective theta -> mean meta loss at beta_hat(theta);
3. re-takes the coefficient step with the freshly updated weights.

Per-sample weights multiply loss gradients but their argument (the loss value
itself) is treated as a constant: no gradient flows through the weighting
net's input. The group penalty enters the coefficient steps through its
smoothed subgradient, or through the proximal operator when prox_mode is set
(the virtual step stays smoothed either way, since it is the step the meta
gradient differentiates through).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .basis import BasisSpec, transform_batch
from .datagen import Dataset
from .model import (
    AdditiveParams,
    PenaltyConfig,
    block_prox,
    loss_and_dmargin,
    penalty_subgrad,
)
from .weightnet import WeightNetParams, init_weightnet, v_forward_batch, v_grad_weighted_sum


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss; carries the failing iteration."""

    def __init__(self, iteration: int, history: "TrainHistory"):
        self.iteration = iteration
        self.history = history
        super().__init__(f"non-finite loss at iteration {iteration}")


@dataclass
class TrainConfig:
    """All optimizer knobs for one training run."""

    task: str = "regression"
    T: int = 3000
    b: int = 64
    eta_beta0: float = 0.1
    eta_theta0: float = 0.01
    c1: float | None = None          # default T/2
    c2: float | None = None          # default sqrt(T)/2
    lam: float = 1e-3
    tau: np.ndarray | None = None    # default all-ones
    eps_norm: float = 1e-8
    prox_mode: bool = False
    frozen_v: bool = False           # V == 1 baseline; skips the meta update
    seed: int = 0
    H: int = 100
    log_every: int = 10

    def validate(self, n: int, m: int) -> None:
        if self.task not in ("regression", "classification"):
            raise ValueError(f"unknown task: {self.task!r}")
        if self.T < 0:
            raise ValueError("T must be >= 0")
        if not (1 <= self.b <= min(n, m)):
            raise ValueError(f"batch size must satisfy 1 <= b <= min(n, m) = {min(n, m)}")
        if self.eta_beta0 <= 0 or self.eta_theta0 <= 0:
            raise ValueError("step sizes must be > 0")
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")
        if self.eps_norm <= 0:
            raise ValueError("eps_norm must be > 0")
        if self.H < 1:
            raise ValueError("H must be >= 1")
        if self.log_every < 1:
            raise ValueError("log_every must be >= 1")

    def penalty(self, p: int) -> PenaltyConfig:
        tau = np.ones(p) if self.tau is None else np.asarray(self.tau, dtype=float)
        if tau.shape != (p,):
            raise ValueError(f"tau must have length p = {p}")
        return PenaltyConfig(lam=self.lam, tau=tau, eps_norm=self.eps_norm)

    def penalty_decay_budget(self, p: int) -> float:
        """lambda * max_j tau_j * T; values above ~1 strain the decay condition
        the lower-level convergence guarantee assumes. Reported, not enforced."""
        tau = np.ones(p) if self.tau is None else np.asarray(self.tau, dtype=float)
        return float(self.lam * tau.max() * max(self.T, 1))


@dataclass
class TrainHistory:
    """Per-logged-iteration diagnostics, exportable as CSV."""

    p: int
    iteration: list[int] = field(default_factory=list)
    wall_time_s: list[float] = field(default_factory=list)
    eta_beta: list[float] = field(default_factory=list)
    eta_theta: list[float] = field(default_factory=list)
    train_batch_loss: list[float] = field(default_factory=list)
    meta_batch_loss: list[float] = field(default_factory=list)
    grad_theta_sq: list[float] = field(default_factory=list)
    grad_beta_meta_sq: list[float] = field(default_factory=list)
    mean_weight_clean: list[float] = field(default_factory=list)
    mean_weight_corrupt: list[float | None] = field(default_factory=list)
    block_norms: list[np.ndarray] = field(default_factory=list)

    SCALAR_COLUMNS = (
        "iteration", "wall_time_s", "eta_beta", "eta_theta",
        "train_batch_loss", "meta_batch_loss", "grad_theta_sq",
        "grad_beta_meta_sq", "mean_weight_clean", "mean_weight_corrupt",
    )

    def header(self) -> list[str]:
        return list(self.SCALAR_COLUMNS) + [f"block_norm_{j}" for j in range(self.p)]

    def rows(self):
        for i in range(len(self.iteration)):
            row = [getattr(self, c)[i] for c in self.SCALAR_COLUMNS]
            yield row + list(self.block_norms[i])

    def write_csv(self, path) -> None:
        import csv

        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.header())
            for row in self.rows():
                w.writerow(["" if v is None else repr(float(v)) for v in row])


@dataclass
class PerSampleState:
    """Training-batch quantities the meta update reuses from the virtual step."""

    losses: np.ndarray    # (b,)
    weights: np.ndarray   # (b,)
    grads: np.ndarray     # (b, p*d) flattened per-sample loss gradients at beta
    cache: object         # weighting-net forward cache


def step_sizes(t: int, cfg: TrainConfig):
    """Decaying schedules: eta_beta0*min(1, c1/t) and eta_theta0*min(1, c2/sqrt(t)).

    The defaults c1 = T/2 and c2 = sqrt(T)/2 keep rates flat over the first
    half of training, then decay them.
    """
    if t < 1:
        raise ValueError("iterations are 1-based")
    c1 = cfg.c1 if cfg.c1 is not None else cfg.T / 2.0
    c2 = cfg.c2 if cfg.c2 is not None else np.sqrt(cfg.T) / 2.0
    return (
        cfg.eta_beta0 * min(1.0, c1 / t),
        cfg.eta_theta0 * min(1.0, c2 / np.sqrt(t)),
    )


def minibatch(rng: np.random.Generator, n_items: int, b: int) -> np.ndarray:
    """b distinct indices drawn uniformly without replacement.

    b == n_items returns the full index set without consuming the generator.
    """
    if not (1 <= b <= n_items):
        raise ValueError(f"need 1 <= b <= {n_items}, got b = {b}")
    if b == n_items:
        return np.arange(n_items)
    return rng.choice(n_items, size=b, replace=False)


def _per_sample_losses(beta: AdditiveParams, psi: np.ndarray, y: np.ndarray, task: str):
    margins = psi @ beta.flatten()
    return loss_and_dmargin(task, y, margins)


def _weighted_step(beta: AdditiveParams, weights: np.ndarray, dmargin: np.ndarray,
                   psi: np.ndarray, eta: float, pen: PenaltyConfig,
                   prox: bool) -> AdditiveParams:
    """One weighted gradient step; penalty via smoothed subgradient or prox."""
    b = psi.shape[0]
    data_grad = psi.T @ (weights * dmargin) / b
    if prox:
        stepped = AdditiveParams(beta.beta - eta * data_grad.reshape(beta.p, beta.d))
        return block_prox(stepped, pen, eta)
    full = data_grad.reshape(beta.p, beta.d) + penalty_subgrad(beta, pen)
    return AdditiveParams(beta.beta - eta * full)


def virtual_update(beta: AdditiveParams, theta: WeightNetParams, train_batch,
                   eta_beta_t: float, cfg: TrainConfig):
    """Hypothetical weighted step producing beta_hat(theta).

    Returns (beta_hat, PerSampleState) where the state carries each batch
    member's loss, weight, and flattened gradient for the meta update.
    """
    psi, y = train_batch
    if psi.shape[0] == 0:
        raise ValueError("empty training batch")
    losses, dmargin = _per_sample_losses(beta, psi, y, cfg.task)
    if not np.all(np.isfinite(losses)):
        raise FloatingPointError("non-finite training loss")
    if cfg.frozen_v:
        weights, cache = np.ones_like(losses), None
    else:
        weights, cache = v_forward_batch(theta, losses)
    pen = cfg.penalty(beta.p)
    beta_hat = _weighted_step(beta, weights, dmargin, psi, eta_beta_t, pen, prox=False)
    state = PerSampleState(losses=losses, weights=weights,
                           grads=psi * dmargin[:, None], cache=cache)
    return beta_hat, state


def meta_mean_gradient(beta_hat: AdditiveParams, meta_batch, task: str):
    """Mean flattened gradient of the meta losses at beta_hat, plus mean loss."""
    psi_m, y_m = meta_batch
    losses, dmargin = _per_sample_losses(beta_hat, psi_m, y_m, task)
    return psi_m.T @ dmargin / psi_m.shape[0], float(np.mean(losses))


def meta_update(theta: WeightNetParams, beta: AdditiveParams, beta_hat: AdditiveParams,
                meta_batch, per_sample: PerSampleState, eta_theta_t: float,
                eta_beta_t: float, cfg: TrainConfig):
    """Descend theta along the exact one-step-unrolled meta gradient.

    The unrolled objective is F(theta) = mean meta loss at beta_hat(theta).
    Each training sample contributes through the alignment G_i between the
    mean meta gradient at beta_hat and its own gradient at beta:

        dF/dtheta = -eta_beta * (1/b) * sum_i G_i * dV(L_i)/dtheta,

    so the descent step adds +eta_theta*eta_beta*(1/b)*sum_i G_i*dV_i/dtheta.

    Returns (theta_new, diagnostics) with the meta batch loss and the squared
    norms of the theta- and beta-gradients of the meta objective.
    """
    a, meta_loss = meta_mean_gradient(beta_hat, meta_batch, cfg.task)
    if per_sample.grads.shape[1] != a.shape[0]:
        raise ValueError("cached training gradients do not match meta gradients")
    G = per_sample.grads @ a                                    # (b,)
    b = G.shape[0]
    grad_f = v_grad_weighted_sum(theta, per_sample.cache, -eta_beta_t * G / b)
    theta_new = theta.axpy(-eta_theta_t, grad_f)
    diag = {
        "meta_batch_loss": meta_loss,
        "grad_theta_sq": float(np.sum(grad_f.to_vector() ** 2)),
        "grad_beta_meta_sq": float(np.sum(a ** 2)),
    }
    return theta_new, diag


def actual_update(beta: AdditiveParams, theta_new: WeightNetParams, train_batch,
                  eta_beta_t: float, cfg: TrainConfig) -> AdditiveParams:
    """Commit the weighted step using the freshly updated weighting net.

    Same form as the virtual step but with the new weights; in prox_mode the
    penalty is applied through the proximal operator instead of the smoothed
    subgradient, so irrelevant blocks can reach exact zero.
    """
    psi, y = train_batch
    if psi.shape[0] == 0:
        raise ValueError("empty training batch")
    losses, dmargin = _per_sample_losses(beta, psi, y, cfg.task)
    if not np.all(np.isfinite(losses)):
        raise FloatingPointError("non-finite training loss")
    if cfg.frozen_v:
        weights = np.ones_like(losses)
    else:
        weights, _ = v_forward_batch(theta_new, losses)
    pen = cfg.penalty(beta.p)
    return _weighted_step(beta, weights, dmargin, psi, eta_beta_t, pen, cfg.prox_mode)


def train(cfg: TrainConfig, train_set: Dataset, meta_set: Dataset,
          basis_spec: BasisSpec):
    """Run the full bilevel loop; returns (beta_final, theta_final, history).

    Both datasets are transformed with the same basis spec. Fully
    deterministic given cfg.seed, up to wall-clock timestamps. A non-finite
    loss aborts with DivergenceError carrying the iteration index and the
    history logged so far.
    """
    n, m = train_set.n, meta_set.n
    cfg.validate(n, m)
    if train_set.task != cfg.task or meta_set.task != cfg.task:
        raise ValueError(f"dataset task disagrees with config task {cfg.task!r}")
    if meta_set.corrupted.any():
        raise ValueError("meta set must contain only clean samples")
    psi_train = transform_batch(basis_spec, train_set.X)
    psi_meta = transform_batch(basis_spec, meta_set.X)
    y_train, y_meta = train_set.y, meta_set.y

    beta = AdditiveParams.zeros(basis_spec.p, basis_spec.d)
    theta = init_weightnet(cfg.H, cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    history = TrainHistory(p=basis_spec.p)
    t0 = time.perf_counter()

    for t in range(1, cfg.T + 1):
        eta_b, eta_t = step_sizes(t, cfg)
        train_idx = minibatch(rng, n, cfg.b)
        meta_idx = minibatch(rng, m, cfg.b)
        batch = (psi_train[train_idx], y_train[train_idx])
        mbatch = (psi_meta[meta_idx], y_meta[meta_idx])

        try:
            if cfg.frozen_v:
                _, mloss = meta_mean_gradient(beta, mbatch, cfg.task)
                diag = {"meta_batch_loss": mloss, "grad_theta_sq": 0.0,
                        "grad_beta_meta_sq": 0.0}
                train_loss = float(np.mean(
                    _per_sample_losses(beta, batch[0], batch[1], cfg.task)[0]))
                beta = actual_update(beta, theta, batch, eta_b, cfg)
            else:
                beta_hat, state = virtual_update(beta, theta, batch, eta_b, cfg)
                theta, diag = meta_update(theta, beta, beta_hat, mbatch, state,
                                          eta_t, eta_b, cfg)
                train_loss = float(np.mean(state.losses))
                beta = actual_update(beta, theta, batch, eta_b, cfg)
        except FloatingPointError as err:
            raise DivergenceError(t, history) from err
        if not np.all(np.isfinite(beta.beta)):
            raise DivergenceError(t, history)

        if t % cfg.log_every == 0 or t == 1 or t == cfg.T:
            losses_all, _ = _per_sample_losses(beta, psi_train, y_train, cfg.task)
            if not np.all(np.isfinite(losses_all)):
                raise DivergenceError(t, history)
            if cfg.frozen_v:
                w_all = np.ones_like(losses_all)
            else:
                w_all, _ = v_forward_batch(theta, losses_all)
            flags = train_set.corrupted
            clean_mean = float(np.mean(w_all[~flags])) if np.any(~flags) else float("nan")
            corrupt_mean = float(np.mean(w_all[flags])) if np.any(flags) else None
            history.iteration.append(t)
            history.wall_time_s.append(time.perf_counter() - t0)
            history.eta_beta.append(eta_b)
            history.eta_theta.append(eta_t)
            history.train_batch_loss.append(train_loss)
            history.meta_batch_loss.append(diag["meta_batch_loss"])
            history.grad_theta_sq.append(diag["grad_theta_sq"])
            history.grad_beta_meta_sq.append(diag["grad_beta_meta_sq"])
            history.mean_weight_clean.append(clean_mean)
            history.mean_weight_corrupt.append(corrupt_mean)
            history.block_norms.append(beta.block_norms())

    return beta, theta, history
