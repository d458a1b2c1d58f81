"""Predictive models with exact gradients.

Stateless architectures: parameters travel as one flat vector so the
optimizer can treat every problem as descent on R^d. ``backward``
returns the exact gradient of the logit contracted with an upstream
d(loss)/d(logit) vector; no autodiff.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit


class LinearScorer:
    """Logit w^T x, probability sigma(w^T x)."""

    kind = "linear"

    def __init__(self, input_dim: int):
        if input_dim < 1:
            raise ValueError("input_dim must be >= 1")
        self.input_dim = input_dim

    @property
    def dim(self) -> int:
        return self.input_dim

    def init(self, gen: np.random.Generator) -> np.ndarray:
        bound = 1.0 / np.sqrt(self.input_dim)
        return gen.uniform(-bound, bound, size=self.input_dim)

    def logits(self, params: np.ndarray, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        if X.shape[1] != self.input_dim:
            raise ValueError(f"expected {self.input_dim} features, got {X.shape[1]}")
        return X @ params

    def probs(self, params: np.ndarray, X: np.ndarray) -> np.ndarray:
        return expit(self.logits(params, X))

    def forward(self, params: np.ndarray, x: np.ndarray) -> float:
        return float(self.probs(params, np.atleast_2d(x))[0])

    def backward(self, params: np.ndarray, X: np.ndarray,
                 upstream: np.ndarray) -> np.ndarray:
        """sum_s upstream_s * d(logit_s)/d(params)."""
        X = np.atleast_2d(X)
        upstream = np.atleast_1d(np.asarray(upstream, dtype=np.float64))
        return upstream @ X


class MlpScorer:
    """One hidden ReLU layer: logit = w2 . relu(W1 x + b1) + b2.

    Flat layout: [W1 row-major (h*in), b1 (h), w2 (h), b2 (1)], so
    dim = (in + 1) * h + (h + 1). ReLU subgradient at 0 is 0.
    """

    kind = "mlp"

    def __init__(self, input_dim: int, hidden: int = 64):
        if input_dim < 1 or hidden < 1:
            raise ValueError("input_dim and hidden must be >= 1")
        self.input_dim = input_dim
        self.hidden = hidden

    @property
    def dim(self) -> int:
        return (self.input_dim + 1) * self.hidden + self.hidden + 1

    def unpack(self, params: np.ndarray):
        h, d = self.hidden, self.input_dim
        if params.shape != (self.dim,):
            raise ValueError(f"expected parameter vector of length {self.dim}")
        W1 = params[: h * d].reshape(h, d)
        b1 = params[h * d : h * d + h]
        w2 = params[h * d + h : h * d + 2 * h]
        b2 = params[-1]
        return W1, b1, w2, b2

    def pack(self, W1, b1, w2, b2) -> np.ndarray:
        return np.concatenate([np.ravel(W1), b1, w2, [b2]])

    def init(self, gen: np.random.Generator) -> np.ndarray:
        bin1 = 1.0 / np.sqrt(self.input_dim)
        bin2 = 1.0 / np.sqrt(self.hidden)
        W1 = gen.uniform(-bin1, bin1, size=(self.hidden, self.input_dim))
        b1 = gen.uniform(-bin1, bin1, size=self.hidden)
        w2 = gen.uniform(-bin2, bin2, size=self.hidden)
        b2 = gen.uniform(-bin2, bin2)
        return self.pack(W1, b1, w2, b2)

    def logits(self, params: np.ndarray, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        if X.shape[1] != self.input_dim:
            raise ValueError(f"expected {self.input_dim} features, got {X.shape[1]}")
        W1, b1, w2, b2 = self.unpack(params)
        A = np.maximum(X @ W1.T + b1, 0.0)
        return A @ w2 + b2

    def probs(self, params: np.ndarray, X: np.ndarray) -> np.ndarray:
        return expit(self.logits(params, X))

    def forward(self, params: np.ndarray, x: np.ndarray) -> float:
        return float(self.probs(params, np.atleast_2d(x))[0])

    def backward(self, params: np.ndarray, X: np.ndarray,
                 upstream: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        upstream = np.atleast_1d(np.asarray(upstream, dtype=np.float64))
        W1, b1, w2, _ = self.unpack(params)
        Z1 = X @ W1.T + b1
        A = np.maximum(Z1, 0.0)
        g_w2 = upstream @ A
        g_b2 = float(upstream.sum())
        dZ = (upstream[:, None] * w2[None, :]) * (Z1 > 0.0)
        g_W1 = dZ.T @ X
        g_b1 = dZ.sum(axis=0)
        return self.pack(g_W1, g_b1, g_w2, g_b2)


def make_model(kind: str, input_dim: int, hidden: int = 64):
    if kind == "linear":
        return LinearScorer(input_dim)
    if kind == "mlp":
        return MlpScorer(input_dim, hidden)
    raise ValueError(f"unknown model kind {kind!r}")
