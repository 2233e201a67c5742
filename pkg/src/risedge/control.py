"""Congestion measure, per-slot surrogate objective, and learning reward.

The controller minimizes, slot by slot, a surrogate that weighs queue
imbalance against transmit power and accuracy deficit:

  J = sum_k [ (Q_k^r - Q_k^l) * tau * R_k / n_b(c_k) + V * Tr(F_k) - Z_k * G_k(c_k) ]

with the continuous (un-floored) rate term. The learning agent receives
r = -J so that maximizing reward minimizes the surrogate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from risedge.compression import CompressionModel, accuracy_of, bits_per_pattern
from risedge.queueing import QueueState


@dataclass(frozen=True)
class TradeoffConfig:
    """Power-vs-congestion weight V, virtual-queue step, accuracy floors."""

    v: float = 1e5
    virtual_step: float = 1.0
    accuracy_thresholds: tuple[float, ...] = (0.85,)

    def __post_init__(self):
        if self.v < 0.0:
            raise ValueError("v must be nonnegative")
        if self.virtual_step <= 0.0:
            raise ValueError("virtual_step must be positive")
        for g in self.accuracy_thresholds:
            if not 0.0 < g < 1.0:
                raise ValueError(f"accuracy threshold {g} must lie in (0, 1)")


def lyapunov_value(state: QueueState) -> float:
    """Scalar congestion measure: half the squared norm of all queues."""
    return 0.5 * float(
        np.sum(state.q_local.astype(np.float64) ** 2)
        + np.sum(state.q_remote.astype(np.float64) ** 2)
        + np.sum(state.z ** 2)
    )


def slot_objective(state: QueueState, rates: np.ndarray, levels: np.ndarray,
                   covariances: list[np.ndarray], model: CompressionModel,
                   cfg: TradeoffConfig, slot_s: float) -> float:
    """Evaluate the per-slot surrogate J for the chosen decisions."""
    total = 0.0
    for k in range(len(state.q_local)):
        n_b = bits_per_pattern(model, int(levels[k]))
        g = accuracy_of(model, int(levels[k]))
        tr_f = float(np.trace(covariances[k]).real)
        total += (
            (float(state.q_remote[k]) - float(state.q_local[k])) * (slot_s * rates[k]) / n_b
            + cfg.v * tr_f
            - state.z[k] * g
        )
    return total


def reward(j: float) -> float:
    """Reward fed to the learner: the negated surrogate."""
    return -j
