"""Federated constrained minimax optimization toolkit.

Simulates the softmax-weighted switching-gradient method with partial
client participation and multiple local update steps, alongside penalty
and primal-dual baselines, on Neyman-Pearson classification, fairness
constrained classification, and synthetic convex benchmarks. All runs
are deterministic functions of their configuration and seed.
"""

__version__ = "0.1.0"

from fedswitch.optimizer import RunConfig, RoundRecord, RunResult, run

__all__ = ["RunConfig", "RoundRecord", "RunResult", "run", "__version__"]
