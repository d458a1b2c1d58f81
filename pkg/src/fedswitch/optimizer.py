"""Softmax-weighted switching-gradient engine.

One global round samples a client subset, estimates objective and
constraint values on fresh batches, forms masked softmax weights, and
either descends the weighted objective (constraint estimate within
tolerance) or the weighted constraint. Clients run E local subgradient
steps and return the averaged direction; the server aggregates in
ascending client order with pairwise summation so trajectories are
reproducible bit for bit.

Dedicated code paths for the two full-participation special cases
(single and multiple local steps) are provided for equivalence testing;
they share the same keyed random streams and primitive arithmetic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from fedswitch.errors import DegenerateRoundError
from fedswitch.problems import ClientOracle, OracleSet
from fedswitch.sampling import (INIT_MODEL, NO_STEP, SERVER, Purpose,
                                RngStreamKey, generator_for, sample_batch,
                                sample_subset)
from fedswitch.softmax import ClientMask, softmax_mean, softmax_weights

ALGORITHMS = ("switching", "penalty", "primal_dual")


@dataclass(frozen=True)
class RunConfig:
    """All hyperparameters of one run."""

    K: int
    E: int
    n: int
    m: int
    eta: float
    gamma: float
    epsilon: float
    alpha: float
    B_zeta: int
    B_g: int
    run_seed: int
    algorithm: str = "switching"
    switch_divisor: float = 2.0
    rho: float = 0.0
    lambda0: float = 0.0
    eta_d: float = 0.0
    projection_radius: Optional[float] = None

    def __post_init__(self):
        if self.K < 0:
            raise ValueError("K must be >= 0")
        if self.E < 1:
            raise ValueError("E must be >= 1")
        if not 1 <= self.m <= self.n:
            raise ValueError(f"need 1 <= m <= n, got m={self.m}, n={self.n}")
        if self.eta <= 0 or self.gamma <= 0:
            raise ValueError("step sizes must be positive")
        if self.epsilon <= 0:
            raise ValueError("tolerance must be positive")
        if self.alpha < 0:
            raise ValueError("softmax temperature must be >= 0")
        if self.B_zeta < 1 or self.B_g < 1:
            raise ValueError("batch sizes must be >= 1")
        if self.switch_divisor <= 1:
            raise ValueError("switch divisor must be > 1")
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if self.rho < 0 or self.lambda0 < 0 or self.eta_d < 0:
            raise ValueError("baseline parameters must be >= 0")
        if self.algorithm == "primal_dual" and self.eta_d == 0:
            raise ValueError("primal_dual requires a positive dual step size")
        if self.projection_radius is not None and self.projection_radius <= 0:
            raise ValueError("projection radius must be positive")

    @property
    def threshold(self) -> float:
        return self.epsilon / self.switch_divisor


@dataclass(frozen=True)
class RoundRecord:
    """Telemetry for one global round, evaluated at the pre-update iterate."""

    k: int
    mask: tuple[int, ...]
    G_hat: float            # server constraint estimate (nan if degenerate)
    G_batch_max: float      # hard max of the per-client batch constraint values
    indicator: bool         # G_hat <= epsilon / switch_divisor
    F_exact: float
    G_exact: float
    grad_evals: int         # cumulative m*E*B_g
    entropy: float          # entropy of the aggregation weights
    degenerate: bool = False
    lam: Optional[float] = None  # dual variable (primal-dual only)

    def to_json_dict(self) -> dict:
        out = {
            "k": self.k,
            "mask": list(self.mask),
            "G_hat": None if math.isnan(self.G_hat) else self.G_hat,
            "G_batch_max": None if math.isnan(self.G_batch_max) else self.G_batch_max,
            "indicator": self.indicator,
            "F_exact": self.F_exact,
            "G_exact": self.G_exact,
            "grad_evals": self.grad_evals,
            "entropy": self.entropy,
            "degenerate": self.degenerate,
        }
        if self.lam is not None:
            out["lambda"] = self.lam
        return out


@dataclass(frozen=True)
class RunResult:
    w_bar: np.ndarray        # averaged solution (switching) or final iterate
    w_final: np.ndarray
    S: tuple[int, ...]       # rounds whose estimate cleared the threshold
    history: tuple[RoundRecord, ...]
    kappa: float
    empty_S: bool
    averaged: bool           # whether w_bar is the S-average
    config: RunConfig
    trajectory: Optional[np.ndarray] = None   # (K+1, d) iterates, if recorded
    directions: Optional[np.ndarray] = None   # (K, d) update directions u_k


def pairwise_weighted_sum(weights, vectors) -> np.ndarray:
    """sum_i weights_i * vectors_i by pairwise reduction in index order.

    Fixed association order keeps aggregation bitwise reproducible
    across platforms and client-pool sizes.
    """
    terms = [w * v for w, v in zip(weights, vectors)]
    if not terms:
        raise ValueError("nothing to aggregate")
    while len(terms) > 1:
        nxt = [terms[i] + terms[i + 1] for i in range(0, len(terms) - 1, 2)]
        if len(terms) % 2:
            nxt.append(terms[-1])
        terms = nxt
    return terms[0]


def local_solver(w_k: np.ndarray, indicator: bool, gamma: float, E: int,
                 B_g: int, oracle: ClientOracle, run_seed: int, k: int) -> np.ndarray:
    """E local subgradient steps; returns the averaged step direction.

    Each step draws a fresh gradient batch and descends the objective
    (indicator set) or the constraint. The returned mean of the step
    directions telescopes to (w_{k,0} - w_{k,E}) / (gamma E); with E = 1
    it is exactly the single batch subgradient, independent of gamma.
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    if E < 1:
        raise ValueError("E must be >= 1")
    w = w_k
    dirs = []
    for tau in range(E):
        key = RngStreamKey(run_seed, k, oracle.client_id, tau, Purpose.GRAD_BATCH)
        if indicator:
            idx = sample_batch(oracle.f_size, B_g, key)
            v = oracle.f_subgrad(w, idx)
        else:
            idx = sample_batch(oracle.g_size, B_g, key)
            v = oracle.g_subgrad(w, idx)
        dirs.append(v)
        w = w - gamma * v
    return np.add.reduce(dirs) / E


@dataclass
class _RoundValues:
    mask: ClientMask
    fvals: np.ndarray      # per sampled client, ascending client order
    gvals: np.ndarray
    p: np.ndarray          # objective softmax weights over the mask
    q: np.ndarray          # constraint softmax weights over the mask
    G_hat: float           # nan when the server estimate is degenerate
    degenerate: bool


def _evaluate_round(w: np.ndarray, k: int, cfg: RunConfig,
                    oracles: OracleSet) -> _RoundValues:
    """Subset sampling, value batches, softmax weights, constraint estimate."""
    mask = sample_subset(cfg.n, cfg.m,
                         RngStreamKey(cfg.run_seed, k, SERVER, NO_STEP,
                                      Purpose.SUBSET))
    fvals, gvals, stats = [], [], []
    for i in mask.members:
        oc = oracles.clients[i]
        idx_f = sample_batch(oc.f_size, cfg.B_zeta,
                             RngStreamKey(cfg.run_seed, k, i, 0, Purpose.VALUE_BATCH))
        idx_g = sample_batch(oc.g_size, cfg.B_zeta,
                             RngStreamKey(cfg.run_seed, k, i, 1, Purpose.VALUE_BATCH))
        fvals.append(oc.f_value(w, idx_f))
        gvals.append(oc.g_value(w, idx_g))
        if oracles.server_constraint is not None:
            stats.append(oc.constraint_stats(w, idx_g))
    fv = np.asarray(fvals)
    gv = np.asarray(gvals)
    p = softmax_weights(fv, cfg.alpha)
    q = softmax_weights(gv, cfg.alpha)
    degenerate = False
    if oracles.server_constraint is not None:
        try:
            G_hat = oracles.server_constraint(stats)
        except DegenerateRoundError:
            G_hat = float("nan")
            degenerate = True
    else:
        G_hat = softmax_mean(gv, cfg.alpha)
    return _RoundValues(mask, fv, gv, p, q, G_hat, degenerate)


def _entropy(weights: np.ndarray) -> float:
    nz = weights[weights > 0]
    return float(-(nz * np.log(nz)).sum())


def _project(w: np.ndarray, radius: Optional[float]) -> np.ndarray:
    if radius is None:
        return w
    nrm = float(np.linalg.norm(w))
    if nrm <= radius:
        return w
    return w * (radius / nrm)


def global_round(w: np.ndarray, k: int, cfg: RunConfig, oracles: OracleSet
                 ) -> tuple[np.ndarray, np.ndarray, RoundRecord, bool]:
    """One switching round; returns (w_next, u_k, record, in_S).

    On a degenerate round (constraint estimate unavailable) the update
    falls back to objective weights and the round is excluded from S.
    """
    rv = _evaluate_round(w, k, cfg, oracles)
    indicator = bool(rv.G_hat <= cfg.threshold)   # nan compares False
    use_objective = indicator or rv.degenerate
    dirs = [local_solver(w, use_objective, cfg.gamma, cfg.E, cfg.B_g,
                         oracles.clients[i], cfg.run_seed, k)
            for i in rv.mask.members]
    weights = rv.p if use_objective else rv.q
    u = pairwise_weighted_sum(weights, dirs)
    w_next = _project(w - cfg.eta * u, cfg.projection_radius)
    record = RoundRecord(
        k=k, mask=rv.mask.members, G_hat=rv.G_hat,
        G_batch_max=float(rv.gvals.max()), indicator=indicator,
        F_exact=oracles.exact_F(w), G_exact=oracles.exact_G(w),
        grad_evals=0, entropy=_entropy(weights), degenerate=rv.degenerate)
    return w_next, u, record, indicator and not rv.degenerate


def run(cfg: RunConfig, oracles: OracleSet,
        record_trajectory: bool = False) -> RunResult:
    """Execute K rounds of the configured algorithm.

    The switching method outputs the average of the iterates whose
    constraint estimate cleared the threshold (final iterate, flagged,
    if none did); baselines output their final iterate.
    """
    if oracles.n != cfg.n:
        raise ValueError(f"config expects {cfg.n} clients, oracle set has "
                         f"{oracles.n}")
    from fedswitch import baselines  # deferred: baselines reuses this module

    w = oracles.init_w(generator_for(
        RngStreamKey(cfg.run_seed, 0, SERVER, INIT_MODEL, Purpose.INIT)))
    w = np.asarray(w, dtype=np.float64)
    lam = cfg.lambda0
    wsum = np.zeros_like(w)
    S: list[int] = []
    history: list[RoundRecord] = []
    traj = [w.copy()] if record_trajectory else None
    dirs = [] if record_trajectory else None
    grad_evals = 0

    for k in range(cfg.K):
        if cfg.algorithm == "switching":
            w_next, u, rec, in_S = global_round(w, k, cfg, oracles)
        elif cfg.algorithm == "penalty":
            w_next, u, rec, in_S = baselines.penalty_round(w, k, cfg, oracles)
        else:
            w_next, u, rec, in_S, lam = baselines.primal_dual_round(
                w, k, cfg, oracles, lam)
        if in_S:
            S.append(k)
            wsum += w
        grad_evals += cfg.m * cfg.E * cfg.B_g
        history.append(replace(rec, grad_evals=grad_evals))
        if record_trajectory:
            traj.append(w_next.copy())
            dirs.append(u.copy())
        w = w_next

    empty_S = len(S) == 0
    averaged = cfg.algorithm == "switching" and not empty_S
    w_bar = (wsum / len(S)) if averaged else w.copy()
    return RunResult(
        w_bar=w_bar, w_final=w, S=tuple(S), history=tuple(history),
        kappa=(len(S) / cfg.K) if cfg.K else 0.0, empty_S=empty_S,
        averaged=averaged, config=cfg,
        trajectory=np.array(traj) if record_trajectory else None,
        directions=np.array(dirs) if record_trajectory else None)


# ---------------------------------------------------------------------------
# Dedicated full-participation code paths (equivalence references)
# ---------------------------------------------------------------------------

def run_full_e1(cfg: RunConfig, oracles: OracleSet,
                record_trajectory: bool = False) -> RunResult:
    """Full participation, single local step: the server weighs one batch
    subgradient per client directly. No subset sampling, no local loop."""
    if cfg.m != cfg.n or cfg.E != 1:
        raise ValueError("this path requires m == n and E == 1")
    w = oracles.init_w(generator_for(
        RngStreamKey(cfg.run_seed, 0, SERVER, INIT_MODEL, Purpose.INIT)))
    w = np.asarray(w, dtype=np.float64)
    wsum = np.zeros_like(w)
    S: list[int] = []
    history: list[RoundRecord] = []
    traj = [w.copy()] if record_trajectory else None
    dirs_log = [] if record_trajectory else None
    grad_evals = 0

    for k in range(cfg.K):
        fvals, gvals = [], []
        for i in range(cfg.n):
            oc = oracles.clients[i]
            idx_f = sample_batch(oc.f_size, cfg.B_zeta,
                                 RngStreamKey(cfg.run_seed, k, i, 0, Purpose.VALUE_BATCH))
            idx_g = sample_batch(oc.g_size, cfg.B_zeta,
                                 RngStreamKey(cfg.run_seed, k, i, 1, Purpose.VALUE_BATCH))
            fvals.append(oc.f_value(w, idx_f))
            gvals.append(oc.g_value(w, idx_g))
        fv = np.asarray(fvals)
        gv = np.asarray(gvals)
        p = softmax_weights(fv, cfg.alpha)
        q = softmax_weights(gv, cfg.alpha)
        G_hat = softmax_mean(gv, cfg.alpha)
        indicator = bool(G_hat <= cfg.threshold)
        grads = []
        for i in range(cfg.n):
            oc = oracles.clients[i]
            key = RngStreamKey(cfg.run_seed, k, i, 0, Purpose.GRAD_BATCH)
            if indicator:
                idx = sample_batch(oc.f_size, cfg.B_g, key)
                grads.append(oc.f_subgrad(w, idx))
            else:
                idx = sample_batch(oc.g_size, cfg.B_g, key)
                grads.append(oc.g_subgrad(w, idx))
        weights = p if indicator else q
        u = pairwise_weighted_sum(weights, grads)
        w_next = _project(w - cfg.eta * u, cfg.projection_radius)
        if indicator:
            S.append(k)
            wsum += w
        grad_evals += cfg.n * cfg.B_g
        history.append(RoundRecord(
            k=k, mask=tuple(range(cfg.n)), G_hat=G_hat,
            G_batch_max=float(gv.max()), indicator=indicator,
            F_exact=oracles.exact_F(w), G_exact=oracles.exact_G(w),
            grad_evals=grad_evals, entropy=_entropy(weights)))
        if record_trajectory:
            traj.append(w_next.copy())
            dirs_log.append(u.copy())
        w = w_next

    empty_S = len(S) == 0
    w_bar = (wsum / len(S)) if not empty_S else w.copy()
    return RunResult(
        w_bar=w_bar, w_final=w, S=tuple(S), history=tuple(history),
        kappa=(len(S) / cfg.K) if cfg.K else 0.0, empty_S=empty_S,
        averaged=not empty_S, config=cfg,
        trajectory=np.array(traj) if record_trajectory else None,
        directions=np.array(dirs_log) if record_trajectory else None)


def run_full_multi(cfg: RunConfig, oracles: OracleSet,
                   record_trajectory: bool = False) -> RunResult:
    """Full participation with E >= 1 local steps; same local solver as
    the partial-participation path, without subset machinery."""
    if cfg.m != cfg.n:
        raise ValueError("this path requires m == n")
    w = oracles.init_w(generator_for(
        RngStreamKey(cfg.run_seed, 0, SERVER, INIT_MODEL, Purpose.INIT)))
    w = np.asarray(w, dtype=np.float64)
    wsum = np.zeros_like(w)
    S: list[int] = []
    history: list[RoundRecord] = []
    traj = [w.copy()] if record_trajectory else None
    dirs_log = [] if record_trajectory else None
    grad_evals = 0

    for k in range(cfg.K):
        fvals, gvals = [], []
        for i in range(cfg.n):
            oc = oracles.clients[i]
            idx_f = sample_batch(oc.f_size, cfg.B_zeta,
                                 RngStreamKey(cfg.run_seed, k, i, 0, Purpose.VALUE_BATCH))
            idx_g = sample_batch(oc.g_size, cfg.B_zeta,
                                 RngStreamKey(cfg.run_seed, k, i, 1, Purpose.VALUE_BATCH))
            fvals.append(oc.f_value(w, idx_f))
            gvals.append(oc.g_value(w, idx_g))
        fv = np.asarray(fvals)
        gv = np.asarray(gvals)
        p = softmax_weights(fv, cfg.alpha)
        q = softmax_weights(gv, cfg.alpha)
        G_hat = softmax_mean(gv, cfg.alpha)
        indicator = bool(G_hat <= cfg.threshold)
        dirs = [local_solver(w, indicator, cfg.gamma, cfg.E, cfg.B_g,
                             oracles.clients[i], cfg.run_seed, k)
                for i in range(cfg.n)]
        weights = p if indicator else q
        u = pairwise_weighted_sum(weights, dirs)
        w_next = _project(w - cfg.eta * u, cfg.projection_radius)
        if indicator:
            S.append(k)
            wsum += w
        grad_evals += cfg.n * cfg.E * cfg.B_g
        history.append(RoundRecord(
            k=k, mask=tuple(range(cfg.n)), G_hat=G_hat,
            G_batch_max=float(gv.max()), indicator=indicator,
            F_exact=oracles.exact_F(w), G_exact=oracles.exact_G(w),
            grad_evals=grad_evals, entropy=_entropy(weights)))
        if record_trajectory:
            traj.append(w_next.copy())
            dirs_log.append(u.copy())
        w = w_next

    empty_S = len(S) == 0
    w_bar = (wsum / len(S)) if not empty_S else w.copy()
    return RunResult(
        w_bar=w_bar, w_final=w, S=tuple(S), history=tuple(history),
        kappa=(len(S) / cfg.K) if cfg.K else 0.0, empty_S=empty_S,
        averaged=not empty_S, config=cfg,
        trajectory=np.array(traj) if record_trajectory else None,
        directions=np.array(dirs_log) if record_trajectory else None)


# ---------------------------------------------------------------------------
# Hyperparameter formulas from the convergence guarantees
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TheoremHyperparameters:
    eta: float
    gamma: float
    epsilon_prime: float
    epsilon: float
    alpha_min: float
    sigma_bar_g_sq: float


def theorem_hyperparameters(D: float, L: float, K: int, E: int, m: int, n: int,
                            sigma_g: float, B_g: int, sigma_zeta: float,
                            B_zeta: int, sigma: float, delta: float,
                            variant: str = "partial") -> TheoremHyperparameters:
    """Step sizes, tolerances, and the softmax temperature floor, as the
    convergence statements prescribe them.

    Variants: "partial" (m <= n, E >= 1), "full_multi" (m = n, E >= 1),
    "full_e1" (m = n, E = 1). Noise scales may be zero; the client
    sampling term vanishes at full participation.

    Known wrinkle: the partial/full_multi optimization-error bracket uses
    sqrt(8 ln(8/delta)) as printed in the statements, although the
    underlying derivation absorbs the constant differently.
    """
    if min(D, L) <= 0 or K < 1 or E < 1 or B_g < 1 or B_zeta < 1:
        raise ValueError("D, L must be positive; K, E, batch sizes >= 1")
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    if sigma_g < 0 or sigma_zeta < 0 or sigma < 0:
        raise ValueError("noise scales must be >= 0")
    if not 1 <= m <= n:
        raise ValueError("need 1 <= m <= n")
    if variant not in ("partial", "full_multi", "full_e1"):
        raise ValueError(f"unknown variant {variant!r}")
    if variant != "partial" and m != n:
        raise ValueError(f"variant {variant!r} requires m == n")
    if variant == "full_e1" and E != 1:
        raise ValueError("variant 'full_e1' requires E == 1")

    ln8 = math.log(8.0 / delta)
    if variant == "full_e1":
        sbar2 = (sigma_g ** 2 / B_g) / L ** 2
        sbar = math.sqrt(sbar2)
        eta = D / (2.0 * L * math.sqrt(K))
        gamma = eta
        eps_p = (2.0 * D * L / math.sqrt(K)) * (
            1.0 + sbar2 * (3.0 + 8.0 * ln8 / K) + sbar * math.sqrt(8.0 * ln8))
        est = 4.0 * sigma_zeta * math.sqrt(2.0 * math.log(12.0 * K * n / delta) / B_zeta)
        samp = 0.0
        alpha_min = 2.0 * math.log(n) / eps_p
    else:
        sbar2 = (sigma_g ** 2 / B_g) / (L ** 2 * E)
        sbar = math.sqrt(sbar2)
        eta = D / (L * math.sqrt(8.0 * K))
        gamma = D / (L * E * math.sqrt(8.0 * K))
        eps_p = (D * L / math.sqrt(K / 32.0)) * (
            1.0 + 2.0 * sbar2 * (3.0 + 8.0 * ln8 / K)
            + sbar * math.sqrt(8.0 * ln8) * (1.0 + E / math.sqrt(6.0 * K)))
        if variant == "full_multi":
            est = 4.0 * sigma_zeta * math.sqrt(
                2.0 * math.log(12.0 * K * n / delta) / B_zeta)
            samp = 0.0
            alpha_min = 2.0 * math.log(n) / eps_p
        else:
            est = 4.0 * sigma_zeta * math.sqrt(
                2.0 * math.log(24.0 * K * m / delta) / B_zeta)
            r = m / n
            if m == n:
                samp = 0.0
            else:
                samp = 4.0 * sigma / (abs(math.log(1.0 - r)) * n) * math.log(32.0 / delta)
            alpha_min = 2.0 * math.log(m) / eps_p

    return TheoremHyperparameters(
        eta=eta, gamma=gamma, epsilon_prime=eps_p, epsilon=eps_p + est + samp,
        alpha_min=alpha_min, sigma_bar_g_sq=sbar2)
