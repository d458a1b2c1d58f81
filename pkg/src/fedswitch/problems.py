"""Per-client objective/constraint oracles.

Each client exposes stochastic batch values and subgradients for the
local objective f_i and constraint g_i, plus exact full-data evaluators
used for telemetry. Batch indices address the oracle's own sample
space: the class-0 subset for Neyman-Pearson objectives, the class-1
subset for its constraint, the full local set for fairness, and the
noise pool for the synthetic benchmark.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit

from fedswitch.datasets import ClientDataset
from fedswitch.errors import ConfigurationError, DegenerateRoundError
from fedswitch.sampling import (INIT_SYNTH, SERVER, Purpose, RngStreamKey,
                                generator_for)

_PROB_FLOOR = 1e-12

# (sum of probs, count) per subgroup, reported by fairness clients so the
# server can re-pool the demographic-parity constraint across the round.
SubgroupStats = tuple[float, int, float, int]


@dataclass(frozen=True)
class ClientOracle:
    client_id: int
    f_size: int
    g_size: int
    f_value: Callable[[np.ndarray, np.ndarray], float]
    g_value: Callable[[np.ndarray, np.ndarray], float]
    f_subgrad: Callable[[np.ndarray, np.ndarray], np.ndarray]
    g_subgrad: Callable[[np.ndarray, np.ndarray], np.ndarray]
    f_exact: Callable[[np.ndarray], float]
    g_exact: Callable[[np.ndarray], float]
    constraint_stats: Optional[Callable[[np.ndarray, np.ndarray],
                                        SubgroupStats]] = None


@dataclass(frozen=True)
class OracleSet:
    dim: int
    clients: tuple[ClientOracle, ...]
    init_w: Callable[[np.random.Generator], np.ndarray]
    server_constraint: Optional[Callable[[Sequence[SubgroupStats]], float]] = None
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return len(self.clients)

    def exact_F(self, w: np.ndarray) -> float:
        return max(c.f_exact(w) for c in self.clients)

    def exact_G(self, w: np.ndarray) -> float:
        return max(c.g_exact(w) for c in self.clients)


# ---------------------------------------------------------------------------
# Neyman-Pearson classification: logistic losses per class
# ---------------------------------------------------------------------------

def _logloss_y0(z: np.ndarray) -> np.ndarray:
    # log(1 + e^z)
    return np.logaddexp(0.0, z)


def _logloss_y1(z: np.ndarray) -> np.ndarray:
    # -z + log(1 + e^z) = log(1 + e^-z)
    return np.logaddexp(0.0, -z)


def np_objective(w: np.ndarray, batch: np.ndarray, client: ClientDataset) -> float:
    """Mean logistic loss over a batch of the client's class-0 subset."""
    if client.class0 is None or client.class0.size == 0:
        raise ConfigurationError(f"client {client.client_id} has no class-0 samples")
    X = client.features[client.class0[batch]]
    return float(_logloss_y0(X @ w).mean())


def np_constraint(w: np.ndarray, batch: np.ndarray, client: ClientDataset) -> float:
    """Mean logistic loss over a batch of the client's class-1 subset."""
    if client.class1 is None or client.class1.size == 0:
        raise ConfigurationError(f"client {client.client_id} has no class-1 samples")
    X = client.features[client.class1[batch]]
    return float(_logloss_y1(X @ w).mean())


def logistic_subgrad(w: np.ndarray, batch: np.ndarray, client: ClientDataset,
                     class_label: int) -> np.ndarray:
    """Mean of (sigma(w.x) - y) x over a batch of the given class subset."""
    subset = client.class0 if class_label == 0 else client.class1
    if subset is None or subset.size == 0:
        raise ConfigurationError(
            f"client {client.client_id} has no class-{class_label} samples")
    X = client.features[subset[batch]]
    resid = expit(X @ w) - float(class_label)
    return (resid @ X) / X.shape[0]


def build_np_oracles(clients: Sequence[ClientDataset]) -> OracleSet:
    if not clients:
        raise ConfigurationError("need at least one client")
    dim = clients[0].features.shape[1]
    oracles = []
    for c in clients:
        if c.class0 is None or c.class0.size == 0:
            raise ConfigurationError(f"client {c.client_id} has no class-0 samples")
        if c.class1 is None or c.class1.size == 0:
            raise ConfigurationError(f"client {c.client_id} has no class-1 samples")
        X0 = c.features[c.class0]
        X1 = c.features[c.class1]
        oracles.append(ClientOracle(
            client_id=c.client_id,
            f_size=c.class0.size, g_size=c.class1.size,
            f_value=lambda w, b, c=c: np_objective(w, b, c),
            g_value=lambda w, b, c=c: np_constraint(w, b, c),
            f_subgrad=lambda w, b, c=c: logistic_subgrad(w, b, c, 0),
            g_subgrad=lambda w, b, c=c: logistic_subgrad(w, b, c, 1),
            f_exact=lambda w, X0=X0: float(_logloss_y0(X0 @ w).mean()),
            g_exact=lambda w, X1=X1: float(_logloss_y1(X1 @ w).mean()),
        ))
    return OracleSet(dim=dim, clients=tuple(oracles),
                     init_w=lambda gen: np.zeros(dim))


# ---------------------------------------------------------------------------
# Fair classification: BCE objective, demographic-parity constraint
# ---------------------------------------------------------------------------

def _clamped(p: np.ndarray) -> np.ndarray:
    return np.clip(p, _PROB_FLOOR, 1.0 - _PROB_FLOOR)


def fair_objective(w: np.ndarray, batch: np.ndarray, client: ClientDataset,
                   model) -> float:
    """Binary cross-entropy loss (negative log-likelihood) over the batch."""
    X = client.features[batch]
    y = client.labels[batch]
    p = _clamped(model.probs(w, X))
    return float(-np.mean(y * np.log(p) + (1.0 - y) * np.log1p(-p)))


def fair_objective_grad(w: np.ndarray, batch: np.ndarray, client: ClientDataset,
                        model) -> np.ndarray:
    X = client.features[batch]
    y = client.labels[batch]
    p = model.probs(w, X)
    return model.backward(w, X, (p - y) / X.shape[0])


def _subgroup_masks(client: ClientDataset, batch: np.ndarray):
    if client.protected is None or client.unprotected is None:
        raise ConfigurationError(
            f"client {client.client_id} has no subgroup annotations")
    if client.protected.size == 0 or client.unprotected.size == 0:
        raise ConfigurationError(
            f"client {client.client_id} has an empty subgroup")
    is_prot = np.zeros(client.size, dtype=bool)
    is_prot[client.protected] = True
    sel = is_prot[batch]
    return sel, ~sel


def fair_constraint(w: np.ndarray, batch: np.ndarray, client: ClientDataset,
                    model) -> float:
    """|mean prob over protected - mean prob over unprotected| on the batch.

    A batch missing one subgroup observes no parity gap and scores 0.
    """
    sel_p, sel_u = _subgroup_masks(client, batch)
    if not sel_p.any() or not sel_u.any():
        return 0.0
    p = model.probs(w, client.features[batch])
    return float(abs(p[sel_p].mean() - p[sel_u].mean()))


def fair_constraint_subgrad(w: np.ndarray, batch: np.ndarray,
                            client: ClientDataset, model) -> np.ndarray:
    """sign(delta) * grad(delta); the subgradient at delta = 0 is zero."""
    sel_p, sel_u = _subgroup_masks(client, batch)
    if not sel_p.any() or not sel_u.any():
        return np.zeros(model.dim)
    X = client.features[batch]
    p = model.probs(w, X)
    delta = p[sel_p].mean() - p[sel_u].mean()
    sign = float(np.sign(delta))
    if sign == 0.0:
        return np.zeros(model.dim)
    upstream = p * (1.0 - p) * (sel_p / sel_p.sum() - sel_u / sel_u.sum()) * sign
    return model.backward(w, X, upstream)


def fair_constraint_stats(w: np.ndarray, batch: np.ndarray,
                          client: ClientDataset, model) -> SubgroupStats:
    """Per-subgroup (sum of probs, count) on the batch, for server pooling."""
    sel_p, sel_u = _subgroup_masks(client, batch)
    p = model.probs(w, client.features[batch])
    return (float(p[sel_p].sum()), int(sel_p.sum()),
            float(p[sel_u].sum()), int(sel_u.sum()))


def server_fair_constraint(stats: Sequence[SubgroupStats]) -> float:
    """Pooled |protected mean - unprotected mean| across sampled clients."""
    if not stats:
        raise DegenerateRoundError("no client statistics to pool")
    sum_p = sum(s[0] for s in stats)
    n_p = sum(s[1] for s in stats)
    sum_u = sum(s[2] for s in stats)
    n_u = sum(s[3] for s in stats)
    if n_p == 0 or n_u == 0:
        raise DegenerateRoundError(
            "a subgroup is absent from every sampled client's batch")
    return abs(sum_p / n_p - sum_u / n_u)


def build_fair_oracles(clients: Sequence[ClientDataset], model) -> OracleSet:
    if not clients:
        raise ConfigurationError("need at least one client")
    for c in clients:
        _subgroup_masks(c, np.arange(0))  # validates subgroup annotations
    oracles = []
    for c in clients:
        X = c.features
        y = c.labels
        full = np.arange(c.size)
        oracles.append(ClientOracle(
            client_id=c.client_id,
            f_size=c.size, g_size=c.size,
            f_value=lambda w, b, c=c: fair_objective(w, b, c, model),
            g_value=lambda w, b, c=c: fair_constraint(w, b, c, model),
            f_subgrad=lambda w, b, c=c: fair_objective_grad(w, b, c, model),
            g_subgrad=lambda w, b, c=c: fair_constraint_subgrad(w, b, c, model),
            f_exact=lambda w, c=c, full=full: fair_objective(w, full, c, model),
            g_exact=lambda w, c=c, full=full: fair_constraint(w, full, c, model),
            constraint_stats=lambda w, b, c=c: fair_constraint_stats(w, b, c, model),
        ))
    return OracleSet(dim=model.dim, clients=tuple(oracles),
                     init_w=model.init,
                     server_constraint=server_fair_constraint,
                     meta={"model": model})


# ---------------------------------------------------------------------------
# Synthetic convex benchmark with a known optimum
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SyntheticProblem:
    oracles: OracleSet
    w_star: np.ndarray
    F_star: float
    slack: float
    L: float
    D: float
    radius: float


def _min_max_quadratic(a: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    """argmin_w max_i (0.5 ||w - a_i||^2 + offset_i) via the epigraph QP."""
    n, d = a.shape
    z0 = np.concatenate([a.mean(axis=0), [10.0 + float(offsets.max())]])
    cons = [{"type": "ineq",
             "fun": (lambda z, ai=a[i], oi=offsets[i]:
                     z[-1] - 0.5 * np.sum((z[:-1] - ai) ** 2) - oi),
             "jac": (lambda z, ai=a[i]:
                     np.concatenate([-(z[:-1] - ai), [1.0]]))}
            for i in range(n)]
    res = minimize(lambda z: z[-1], z0,
                   jac=lambda z: np.concatenate([np.zeros(d), [1.0]]),
                   constraints=cons, method="SLSQP",
                   options={"maxiter": 1000, "ftol": 1e-12})
    w = res.x[:-1]
    feas_gap = float(np.max(0.5 * np.sum((w - a) ** 2, axis=1) + offsets) - res.x[-1])
    if not res.success and feas_gap > 1e-8:
        raise ConfigurationError(f"synthetic optimum solve failed: {res.message}")
    return w


def make_synthetic(n: int, d: int, noise: float, slack: float, seed: int,
                   pool: int = 256, radius: float = 2.0) -> SyntheticProblem:
    """Quadratic objectives, linear constraints, known strictly feasible
    optimum.

    f_i(w, s) = 0.5 ||w - a_i - e_{i,s}||^2 with a zero-mean noise pool
    e, and g_i(w, s) = <c_i + h_{i,s}, w> - b_i with zero-mean pool h;
    b_i is set so G(w*) = -slack at the unconstrained minimax optimum
    w*, which is therefore also the constrained optimum.
    """
    if n < 1 or d < 1:
        raise ValueError("n and d must be >= 1")
    if noise < 0:
        raise ValueError("noise level must be >= 0")
    if slack <= 0:
        raise ValueError("Slater slack must be > 0")
    if pool < 1 or radius <= 0:
        raise ValueError("pool and radius must be positive")

    gen = generator_for(RngStreamKey(seed, 0, SERVER, INIT_SYNTH, Purpose.INIT))
    a = gen.normal(size=(n, d))
    a /= np.maximum(1.0, np.linalg.norm(a, axis=1, keepdims=True))
    c = gen.normal(size=(n, d))
    c /= np.linalg.norm(c, axis=1, keepdims=True)

    e = gen.normal(scale=noise, size=(n, pool, d)) if noise > 0 else np.zeros((n, pool, d))
    h = gen.normal(scale=noise, size=(n, pool, d)) if noise > 0 else np.zeros((n, pool, d))
    e -= e.mean(axis=1, keepdims=True)
    h -= h.mean(axis=1, keepdims=True)
    offsets = 0.5 * np.mean(np.sum(e ** 2, axis=2), axis=1)  # E[0.5||e||^2]

    w_star = _min_max_quadratic(a, offsets)
    if np.linalg.norm(w_star) >= radius:
        raise ConfigurationError("optimum fell outside the parameter ball; "
                                 "increase radius")
    b = c @ w_star + slack

    L_f = radius + float(np.linalg.norm(a, axis=1).max())
    L_g = float(np.linalg.norm(c, axis=1).max())
    L = max(L_f, L_g)
    D = 2.0 * radius

    oracles = []
    for i in range(n):
        ai, ci, bi, ei, hi, off = a[i], c[i], float(b[i]), e[i], h[i], float(offsets[i])
        oracles.append(ClientOracle(
            client_id=i, f_size=pool, g_size=pool,
            f_value=lambda w, idx, ai=ai, ei=ei:
                float(0.5 * np.mean(np.sum((w - ai - ei[idx]) ** 2, axis=1))),
            g_value=lambda w, idx, ci=ci, bi=bi, hi=hi:
                float(np.mean((ci + hi[idx]) @ w) - bi),
            f_subgrad=lambda w, idx, ai=ai, ei=ei:
                w - ai - ei[idx].mean(axis=0),
            g_subgrad=lambda w, idx, ci=ci, hi=hi:
                ci + hi[idx].mean(axis=0),
            f_exact=lambda w, ai=ai, off=off:
                float(0.5 * np.sum((w - ai) ** 2) + off),
            g_exact=lambda w, ci=ci, bi=bi: float(ci @ w - bi),
        ))

    def init_w(g: np.random.Generator) -> np.ndarray:
        x = g.normal(size=d)
        return x * (0.9 * radius / np.linalg.norm(x))

    oset = OracleSet(dim=d, clients=tuple(oracles), init_w=init_w,
                     meta={"L": L, "D": D, "radius": radius})
    problem = SyntheticProblem(
        oracles=oset, w_star=w_star, F_star=oset.exact_F(w_star),
        slack=slack, L=L, D=D, radius=radius)
    if oset.exact_G(w_star) > -slack + 1e-9:
        raise ConfigurationError("constructed instance violates the "
                                 "required Slater slack")
    return problem
