"""Pattern queues: arrivals, per-slot updates, and delay measurement.

Buffers count whole patterns. The per-slot service of the communication
queue is floor(tau * R / n_b) patterns and of the computation queue
floor(tau * f / w); both floors use the left-associative float expression
(slot_s * rate) / bits so independent re-implementations can match exactly.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

ARRIVAL_LAWS = ("poisson", "deterministic", "bernoulli_batch")


@dataclass
class QueueState:
    """Per-device communication, computation, and accuracy-deficit queues."""

    q_local: np.ndarray   # int64, patterns awaiting transmission
    q_remote: np.ndarray  # int64, patterns awaiting service
    z: np.ndarray         # float64, virtual accuracy-deficit queue

    @classmethod
    def zeros(cls, num_devices: int) -> "QueueState":
        return cls(
            q_local=np.zeros(num_devices, dtype=np.int64),
            q_remote=np.zeros(num_devices, dtype=np.int64),
            z=np.zeros(num_devices, dtype=np.float64),
        )

    def copy(self) -> "QueueState":
        return QueueState(self.q_local.copy(), self.q_remote.copy(), self.z.copy())


@dataclass(frozen=True)
class ArrivalProcess:
    """New-pattern arrivals per slot; the law's mean is mean_per_slot."""

    mean_per_slot: float = 4.0
    law: str = "poisson"
    batch_size: int = 8

    def __post_init__(self):
        if self.law not in ARRIVAL_LAWS:
            raise ValueError(f"unknown arrival law {self.law!r}; expected one of {ARRIVAL_LAWS}")
        # mean 0 is allowed only as the degenerate no-traffic case
        if self.mean_per_slot < 0.0:
            raise ValueError("mean_per_slot must be nonnegative")
        if self.law == "bernoulli_batch" and not (0 < self.mean_per_slot <= self.batch_size):
            raise ValueError("bernoulli_batch requires 0 < mean_per_slot <= batch_size")


def sample_arrivals(proc: ArrivalProcess, rng: np.random.Generator) -> int:
    """Draw one slot's arrival count — a nonnegative integer."""
    if proc.law == "poisson":
        return int(rng.poisson(proc.mean_per_slot))
    if proc.law == "deterministic":
        return int(round(proc.mean_per_slot))
    # bernoulli_batch: a full batch with probability mean/batch, else nothing
    return proc.batch_size if rng.random() < proc.mean_per_slot / proc.batch_size else 0


def transmit_capacity(rate: float, bits_per_pattern: float, slot_s: float) -> int:
    """Whole patterns the radio can move this slot: floor(tau * R / n_b)."""
    return int(math.floor((slot_s * rate) / bits_per_pattern))


def service_capacity(cpu_hz: float, load_cycles: float, slot_s: float) -> int:
    """Whole patterns the CPU can serve this slot: floor(tau * f / w)."""
    return int(math.floor((slot_s * cpu_hz) / load_cycles))


def update_local(q_l: int, rate: float, bits_per_pattern: float, slot_s: float, arrivals: int) -> int:
    """Communication queue: max(0, Q - floor(tau R / n_b)) + A."""
    return max(0, q_l - transmit_capacity(rate, bits_per_pattern, slot_s)) + arrivals


def update_remote(q_r: int, q_l: int, rate: float, bits_per_pattern: float,
                  cpu_hz: float, load_cycles: float, slot_s: float) -> int:
    """Computation queue: max(0, Q - floor(tau f / w)) + min(Q_l, floor(tau R / n_b))."""
    inflow = min(q_l, transmit_capacity(rate, bits_per_pattern, slot_s))
    return max(0, q_r - service_capacity(cpu_hz, load_cycles, slot_s)) + inflow


def update_virtual(z: float, accuracy: float, threshold: float, step: float) -> float:
    """Accuracy-deficit queue: max(0, Z - eps * (G - G_th)).

    Grows when the slot's accuracy falls short of the threshold, drains
    otherwise.
    """
    return max(0.0, z - step * (accuracy - threshold))


def average_e2e_delay(mean_q_local: float, mean_q_remote: float,
                      mean_arrivals: float, slot_s: float) -> float:
    """Little's-law delay estimate tau * (Qbar_l + Qbar_r) / Abar in seconds."""
    if mean_arrivals <= 0.0:
        raise ValueError("mean_arrivals must be positive for a delay estimate")
    return slot_s * (mean_q_local + mean_q_remote) / mean_arrivals


@dataclass
class DelayTracker:
    """Ground-truth per-pattern sojourn times via FIFO arrival timestamps.

    A pattern arriving during slot t and served during slot s spent (s - t)
    slot boundaries in the system, matching a Little's-law estimate built
    from start-of-slot queue lengths.
    """

    local: deque = field(default_factory=deque)
    remote: deque = field(default_factory=deque)
    completed: int = 0
    total_delay_slots: int = 0

    def on_arrivals(self, slot: int, count: int) -> None:
        self.local.extend([slot] * count)

    def on_transfer(self, count: int) -> None:
        for _ in range(count):
            self.remote.append(self.local.popleft())

    def on_service(self, slot: int, count: int) -> None:
        for _ in range(count):
            born = self.remote.popleft()
            self.completed += 1
            self.total_delay_slots += slot - born

    def mean_delay_s(self, slot_s: float) -> float:
        if self.completed == 0:
            return 0.0
        return slot_s * self.total_delay_slots / self.completed
