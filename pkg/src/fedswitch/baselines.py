"""Penalty and primal-dual comparison methods.

Both share the switching method's federated round skeleton (same subset
and value-batch streams, same local-update structure, same aggregation
primitives) so trajectories are comparable at equal gradient-evaluation
counts. Clients run E local steps on the combined direction
f-subgradient + coeff * g-subgradient and report both averaged
components; the server aggregates the objective part with the objective
softmax weights and the constraint part with the constraint softmax
weights, which is the subgradient of the softmax-weighted composite
objective. The penalty method activates coeff = rho only while the
constraint estimate is positive; the primal-dual method uses the dual
variable and ascends it once per round, projected onto lambda >= 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from fedswitch.optimizer import (RoundRecord, RunConfig, _entropy,
                                 _evaluate_round, _project,
                                 pairwise_weighted_sum)
from fedswitch.problems import ClientOracle, OracleSet
from fedswitch.sampling import Purpose, RngStreamKey, sample_batch


@dataclass(frozen=True)
class DualState:
    """Single multiplier for the pooled constraint; never negative."""

    lam: float

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("dual variable must be >= 0")

    def ascend(self, eta_d: float, G_hat: float) -> "DualState":
        return DualState(max(0.0, self.lam + eta_d * G_hat))


def _local_split(w_k: np.ndarray, coeff_g: float, gamma: float, E: int,
                 B_g: int, oracle: ClientOracle, run_seed: int, k: int
                 ) -> tuple[np.ndarray, np.ndarray | None]:
    """E local steps on f + coeff_g * g; returns the averaged components.

    Objective gradient batches reuse the switching method's step keys
    (tau); constraint gradient batches use keys offset by E so the two
    draws stay independent. With coeff_g = 0 no constraint batches are
    drawn and the objective component matches the switching method's
    local solver bit for bit.
    """
    w = w_k
    fs, gs = [], []
    for tau in range(E):
        idx_f = sample_batch(oracle.f_size, B_g,
                             RngStreamKey(run_seed, k, oracle.client_id, tau,
                                          Purpose.GRAD_BATCH))
        vf = oracle.f_subgrad(w, idx_f)
        fs.append(vf)
        step = vf
        if coeff_g != 0.0:
            idx_g = sample_batch(oracle.g_size, B_g,
                                 RngStreamKey(run_seed, k, oracle.client_id,
                                              E + tau, Purpose.GRAD_BATCH))
            vg = oracle.g_subgrad(w, idx_g)
            gs.append(vg)
            step = vf + coeff_g * vg
        w = w - gamma * step
    u_f = np.add.reduce(fs) / E
    u_g = (np.add.reduce(gs) / E) if coeff_g != 0.0 else None
    return u_f, u_g


def _combined_update(w: np.ndarray, coeff: float, rv, cfg: RunConfig,
                     oracles: OracleSet, k: int) -> tuple[np.ndarray, np.ndarray]:
    parts = [_local_split(w, coeff, cfg.gamma, cfg.E, cfg.B_g,
                          oracles.clients[i], cfg.run_seed, k)
             for i in rv.mask.members]
    u = pairwise_weighted_sum(rv.p, [uf for uf, _ in parts])
    if coeff != 0.0:
        u = u + coeff * pairwise_weighted_sum(rv.q, [ug for _, ug in parts])
    return _project(w - cfg.eta * u, cfg.projection_radius), u


def penalty_round(w: np.ndarray, k: int, cfg: RunConfig, oracles: OracleSet
                  ) -> tuple[np.ndarray, np.ndarray, RoundRecord, bool]:
    """One round descending the softmax objective + rho * hinge of the
    constraint estimate. Degenerate rounds (no estimate) fall back to
    pure objective descent."""
    rv = _evaluate_round(w, k, cfg, oracles)
    active = (not rv.degenerate) and rv.G_hat > 0.0
    coeff = cfg.rho if active else 0.0
    w_next, u = _combined_update(w, coeff, rv, cfg, oracles, k)
    indicator = bool(rv.G_hat <= cfg.threshold)
    record = RoundRecord(
        k=k, mask=rv.mask.members, G_hat=rv.G_hat,
        G_batch_max=float(rv.gvals.max()), indicator=indicator,
        F_exact=oracles.exact_F(w), G_exact=oracles.exact_G(w),
        grad_evals=0, entropy=_entropy(rv.p), degenerate=rv.degenerate)
    return w_next, u, record, indicator and not rv.degenerate


def primal_dual_round(w: np.ndarray, k: int, cfg: RunConfig,
                      oracles: OracleSet, lam: float
                      ) -> tuple[np.ndarray, np.ndarray, RoundRecord, bool, float]:
    """One round of descent on f + lambda * g followed by projected dual
    ascent lambda <- max(0, lambda + eta_d * G_hat) on the server. The
    dual step is skipped on degenerate rounds."""
    rv = _evaluate_round(w, k, cfg, oracles)
    coeff = 0.0 if rv.degenerate else lam
    w_next, u = _combined_update(w, coeff, rv, cfg, oracles, k)
    indicator = bool(rv.G_hat <= cfg.threshold)
    lam_next = lam if rv.degenerate else DualState(lam).ascend(cfg.eta_d, rv.G_hat).lam
    record = RoundRecord(
        k=k, mask=rv.mask.members, G_hat=rv.G_hat,
        G_batch_max=float(rv.gvals.max()), indicator=indicator,
        F_exact=oracles.exact_F(w), G_exact=oracles.exact_G(w),
        grad_evals=0, entropy=_entropy(rv.p), degenerate=rv.degenerate,
        lam=lam)
    return w_next, u, record, indicator and not rv.degenerate, lam_next
