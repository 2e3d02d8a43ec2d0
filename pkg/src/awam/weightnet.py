"""Learnable scalar-loss -> weight network with exact analytic gradients.

A two-layer net V(L) = sigmoid(W2 @ tanh(W1 * L + b1) + b2) maps each
per-sample loss value to a weight in (0, 1). tanh keeps the map twice
differentiable with bounded curvature; the sigmoid output pins weights
inside the unit interval. The backward pass is hand-written so the
bilevel update can scale per-sample weight gradients without autodiff.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit


@dataclass
class WeightNetParams:
    """Parameters of the weighting net; H is the hidden width."""

    W1: np.ndarray  # (H, 1)
    b1: np.ndarray  # (H,)
    W2: np.ndarray  # (1, H)
    b2: float

    def __post_init__(self):
        self.W1 = np.asarray(self.W1, dtype=float).reshape(-1, 1)
        self.b1 = np.asarray(self.b1, dtype=float).reshape(-1)
        self.W2 = np.asarray(self.W2, dtype=float).reshape(1, -1)
        self.b2 = float(self.b2)
        if self.b1.shape[0] != self.H or self.W2.shape[1] != self.H:
            raise ValueError("inconsistent hidden widths across W1, b1, W2")

    @property
    def H(self) -> int:
        return self.W1.shape[0]

    @property
    def n_params(self) -> int:
        return 3 * self.H + 1

    def copy(self) -> "WeightNetParams":
        return WeightNetParams(self.W1.copy(), self.b1.copy(), self.W2.copy(), self.b2)

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.W1.ravel(), self.b1, self.W2.ravel(), [self.b2]])

    @classmethod
    def from_vector(cls, vec: np.ndarray, H: int) -> "WeightNetParams":
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (3 * H + 1,):
            raise ValueError(f"expected {3 * H + 1} parameters, got shape {vec.shape}")
        return cls(vec[:H], vec[H:2 * H], vec[2 * H:3 * H], vec[3 * H])

    def axpy(self, scale: float, other: "WeightNetParams") -> "WeightNetParams":
        """Return self + scale * other without mutating either."""
        return WeightNetParams(
            self.W1 + scale * other.W1,
            self.b1 + scale * other.b1,
            self.W2 + scale * other.W2,
            self.b2 + scale * other.b2,
        )

    def to_dict(self) -> dict:
        return {
            "H": self.H,
            "W1": self.W1.ravel().tolist(),
            "b1": self.b1.tolist(),
            "W2": self.W2.ravel().tolist(),
            "b2": self.b2,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "WeightNetParams":
        net = cls(np.asarray(doc["W1"]), np.asarray(doc["b1"]),
                  np.asarray(doc["W2"]), doc["b2"])
        if net.H != doc["H"]:
            raise ValueError("recorded H disagrees with parameter shapes")
        return net


@dataclass
class ForwardCache:
    """Activations retained by v_forward for the exact backward pass."""

    losses: np.ndarray   # (b,) inputs
    hidden: np.ndarray   # (H, b) tanh activations
    weights: np.ndarray  # (b,) sigmoid outputs


def init_weightnet(H: int, seed: int) -> WeightNetParams:
    """Near-zero Gaussian init (std 0.01) with zero biases, so V ~ 0.5."""
    if H < 1:
        raise ValueError("hidden width H must be >= 1")
    rng = np.random.default_rng(seed)
    W1 = rng.normal(0.0, 0.01, size=(H, 1))
    W2 = rng.normal(0.0, 0.01, size=(1, H))
    return WeightNetParams(W1, np.zeros(H), W2, 0.0)


def v_forward_batch(theta: WeightNetParams, losses: np.ndarray):
    """Weights in (0, 1) for a batch of loss values, plus the backward cache."""
    losses = np.asarray(losses, dtype=float)
    if not np.all(np.isfinite(losses)):
        raise ValueError("non-finite loss fed to the weighting net")
    hidden = np.tanh(theta.W1 * losses[None, :] + theta.b1[:, None])  # (H, b)
    weights = expit((theta.W2 @ hidden).ravel() + theta.b2)           # (b,)
    return weights, ForwardCache(losses=losses, hidden=hidden, weights=weights)


def v_forward(theta: WeightNetParams, loss: float):
    """Weight for a single loss value; returns (weight, cache)."""
    weights, cache = v_forward_batch(theta, np.array([float(loss)]))
    return float(weights[0]), cache


def v_grad_weighted_sum(theta: WeightNetParams, cache: ForwardCache,
                        coeffs: np.ndarray) -> WeightNetParams:
    """sum_i coeffs[i] * dV(L_i)/dtheta, shaped like the parameters.

    The chain rule through sigmoid and tanh, vectorized over the batch the
    cache was built from.
    """
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape != cache.losses.shape:
        raise ValueError("coefficient vector does not match the cached batch")
    s = cache.weights * (1.0 - cache.weights)          # (b,) sigmoid slope
    cs = coeffs * s                                    # (b,)
    gb2 = float(np.sum(cs))
    gW2 = (cache.hidden @ cs)[None, :]                 # (1, H)
    back = (theta.W2.T * (1.0 - cache.hidden ** 2)) * cs[None, :]  # (H, b)
    gb1 = back.sum(axis=1)
    gW1 = (back @ cache.losses)[:, None]
    return WeightNetParams(gW1, gb1, gW2, gb2)


def v_grad_theta(theta: WeightNetParams, loss: float,
                 cache: ForwardCache) -> WeightNetParams:
    """Exact dV/dtheta for a single loss value evaluated by v_forward."""
    if cache.losses.shape != (1,) or cache.losses[0] != float(loss):
        raise ValueError("cache does not match the given loss value")
    return v_grad_weighted_sum(theta, cache, np.ones(1))
