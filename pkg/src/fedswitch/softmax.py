"""Softmax weighting primitives and their lemma-level companions.

The temperature-controlled softmax mean is a smooth lower approximation
of the hard maximum; its gap is below ln(n)/alpha. Masked variants
restrict all probability mass to a participating subset of indices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ClientMask:
    """Nonempty subset of client indices, kept sorted ascending."""

    members: tuple[int, ...]

    def __post_init__(self):
        if len(self.members) == 0:
            raise ValueError("mask must be nonempty")
        srt = tuple(sorted(int(i) for i in self.members))
        if len(set(srt)) != len(srt):
            raise ValueError("mask members must be distinct")
        if srt[0] < 0:
            raise ValueError("mask members must be nonnegative indices")
        object.__setattr__(self, "members", srt)

    @classmethod
    def full(cls, n: int) -> "ClientMask":
        return cls(tuple(range(n)))

    @property
    def size(self) -> int:
        return len(self.members)

    def indices(self) -> np.ndarray:
        return np.asarray(self.members, dtype=np.intp)


def _check_values(v: np.ndarray, alpha: float) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise ValueError("values must be a nonempty 1-d vector")
    if not np.isfinite(v).all():
        raise ValueError("values must be finite")
    if not (np.isfinite(alpha) and alpha >= 0):
        raise ValueError("alpha must be a finite nonnegative real")
    return v


def softmax_weights(v, alpha: float) -> np.ndarray:
    """Weights proportional to exp(alpha * v_i).

    Computed with max-subtraction so arbitrarily large finite alpha*v
    cannot overflow; alpha = 0 gives uniform weights.
    """
    v = _check_values(v, alpha)
    z = alpha * v
    z -= z.max()
    w = np.exp(z)
    return w / w.sum()


def masked_softmax(v, mask: ClientMask, alpha: float) -> np.ndarray:
    """Softmax restricted to ``mask``: zero mass outside, renormalized inside.

    With a full mask this is bitwise identical to :func:`softmax_weights`.
    """
    v = _check_values(v, alpha)
    idx = mask.indices()
    if idx[-1] >= v.size:
        raise ValueError("mask index out of range for value vector")
    out = np.zeros_like(v)
    out[idx] = softmax_weights(v[idx], alpha)
    return out


def softmax_mean(v, alpha: float) -> float:
    """<softmax(alpha v), v>, a lower approximation of max(v).

    Evaluated as max(v) - <w, max(v) - v> so the result never exceeds
    max(v) even in floating point.
    """
    v = _check_values(v, alpha)
    w = softmax_weights(v, alpha)
    vmax = float(v.max())
    return vmax - float(np.dot(w, vmax - v))


def masked_softmax_mean(v, mask: ClientMask, alpha: float) -> float:
    """Softmax mean over the masked entries only.

    Identical, bit for bit, to the softmax mean of the extracted
    subvector.
    """
    v = _check_values(v, alpha)
    idx = mask.indices()
    if idx[-1] >= v.size:
        raise ValueError("mask index out of range for value vector")
    return softmax_mean(v[idx], alpha)


def max_gap_bound(n_or_m: int, alpha: float) -> float:
    """Guaranteed upper bound ln(n)/alpha on max(v) - softmax_mean(v, alpha)."""
    if n_or_m < 1:
        raise ValueError("n must be a positive integer")
    if not (np.isfinite(alpha) and alpha > 0):
        raise ValueError("alpha must be positive")
    return math.log(n_or_m) / alpha


def fsd_uniform_sigma(x) -> float:
    """Smallest sigma such that the gaps max(x) - x_i are stochastically
    dominated by Unif[0, sigma].

    Equals the largest scaled gap of the ascending order statistics:
    max over i < n of (x_(n) - x_(i)) / (1 - i/n). A gap attained by i
    of the n points has probability i/n of being met or exceeded, so
    the uniform tail 1 - t/sigma must still be i/n there.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.size == 0:
        raise ValueError("x must be a nonempty 1-d vector")
    if not np.isfinite(x).all():
        raise ValueError("x must be finite")
    n = x.size
    if n == 1:
        return 0.0
    xs = np.sort(x, kind="stable")
    i = np.arange(1, n)  # order-statistic positions 1..n-1 (1-indexed)
    denom = 1.0 - i / n
    gaps = (xs[-1] - xs[:-1]) / denom
    return float(gaps.max())


def binom_ratio_bound_holds(n: int, n_prime: int, m: int) -> bool:
    """Whether C(n', m)/C(n, m) <= (1 - m/n)^(n (1 - n'/n)).

    Test oracle for the binomial-coefficient bound; expected true for
    every valid (n, n', m).
    """
    if not (n >= n_prime >= m >= 0 and n >= 1):
        raise ValueError("arguments must satisfy n >= n' >= m >= 0, n >= 1")
    ratio = math.comb(n_prime, m) / math.comb(n, m)
    rhs = (1.0 - m / n) ** (n * (1.0 - n_prime / n))
    return ratio <= rhs + 1e-12
