"""Model-based per-slot allocation: CPU scheduling and covariance shaping.

Both sub-problems decouple once compression levels and surface phases are
fixed. CPU cycles go greedily to the most backlogged computation queues.
The per-device transmit covariance minimizes

    V * Tr(F) - a * ln|I + H F H^H / sigma^2|

subject to F >= 0 and Tr(F) <= P, where a is the queue-imbalance rate weight.
The minimizer water-fills over the eigenmodes of H^H H: p_i = max(0,
a/(V+nu) - sigma^2/lambda_i) with nu = 0 when the power budget is slack,
otherwise found by bisection so the budget binds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from risedge.linalg import EIGENVALUE_FLOOR_REL, hermitian_eigh

LN2 = math.log(2.0)
BUDGET_REL_TOL = 1e-9
BISECT_MAX_ITER = 200


@dataclass(frozen=True)
class PowerWeights:
    """Water-filling inputs for one device."""

    a: float       # (Q_l - Q_r) * tau * W / (n_b * ln 2); any sign
    p_max: float   # transmit power budget, watts
    v: float       # power trade-off weight

    def __post_init__(self):
        if self.p_max <= 0.0:
            raise ValueError("p_max must be positive")
        if self.v < 0.0:
            raise ValueError("v must be nonnegative")


def rate_weight(q_local: int, q_remote: int, slot_s: float, bandwidth: float,
                bits_per_pattern: float) -> float:
    """Nats-rate weight a = (Q_l - Q_r) * tau * W / (n_b * ln 2)."""
    return (float(q_local) - float(q_remote)) * slot_s * bandwidth / (bits_per_pattern * LN2)


def schedule_cpu(q_remote: np.ndarray, load_cycles: np.ndarray, f_max: float,
                 slot_s: float) -> np.ndarray:
    """Greedy CPU split: serve the largest computation queue first.

    Each pick grants min(remaining budget, Q * w / tau) — the frequency that
    would drain that queue within the slot — then moves on. Ties break toward
    the lower device index.
    """
    q_remote = np.asarray(q_remote)
    load_cycles = np.asarray(load_cycles, dtype=np.float64)
    if np.any(load_cycles <= 0.0):
        raise ValueError("load_cycles must be positive")
    if f_max <= 0.0:
        raise ValueError("f_max must be positive")

    f = np.zeros(len(q_remote), dtype=np.float64)
    remaining = f_max
    order = np.lexsort((np.arange(len(q_remote)), -q_remote.astype(np.float64)))
    for k in order:
        if remaining <= 0.0 or q_remote[k] <= 0:
            break
        need = (float(q_remote[k]) * load_cycles[k]) / slot_s
        grant = min(remaining, need)
        f[k] = grant
        remaining -= grant
    return f


@dataclass
class WaterfillResult:
    """Covariance plus the eigenmode quantities it was built from."""

    covariance: np.ndarray
    mode_powers: np.ndarray   # aligned with eigenvalues
    eigenvalues: np.ndarray   # of H^H H, descending
    nu: float                 # power-budget multiplier


def waterfill_modes(eigenvalues: np.ndarray, a: float, v: float, p_max: float,
                    noise_power: float) -> tuple[np.ndarray, float]:
    """Per-mode powers for the reduced problem min V sum p - a sum ln(1 + lam p / sigma^2).

    Modes below EIGENVALUE_FLOOR_REL of the largest eigenvalue are treated as
    rank-deficient and receive no power.
    """
    lam = np.asarray(eigenvalues, dtype=np.float64)
    p = np.zeros_like(lam)
    if a <= 0.0 or lam.size == 0 or lam.max() <= 0.0:
        return p, 0.0
    active = lam > EIGENVALUE_FLOOR_REL * lam.max()
    floors = noise_power / lam[active]

    def powers(nu: float) -> np.ndarray:
        return np.maximum(0.0, a / (v + nu) - floors)

    if v > 0.0:
        p0 = powers(0.0)
        if p0.sum() <= p_max:
            p[active] = p0
            return p, 0.0

    # Budget binds. sum p(nu) decreases monotonically in nu; at the upper
    # bracket the water level sits on the lowest floor so sum p = 0.
    lo = 0.0
    hi = a * lam.max() / noise_power
    p_hi = powers(hi)
    tol = BUDGET_REL_TOL * p_max
    for _ in range(BISECT_MAX_ITER):
        if p_hi.sum() >= p_max - tol:
            break
        mid = 0.5 * (lo + hi)
        if powers(mid).sum() > p_max:
            lo = mid
        else:
            hi = mid
            p_hi = powers(hi)
    p[active] = p_hi  # hi side keeps sum p <= p_max
    return p, hi


def solve_covariance(h: np.ndarray, weights: PowerWeights, noise_power: float) -> WaterfillResult:
    """Optimal transmit covariance for one device given its composite channel.

    A nonpositive rate weight (communication queue no longer ahead of the
    computation queue) makes both objective terms non-decreasing in power, so
    the zero matrix is optimal and returned exactly.
    """
    h = np.asarray(h, dtype=np.complex128)
    n_u = h.shape[1]
    if weights.a <= 0.0:
        return WaterfillResult(
            covariance=np.zeros((n_u, n_u), dtype=np.complex128),
            mode_powers=np.zeros(n_u),
            eigenvalues=np.zeros(n_u),
            nu=0.0,
        )
    gram = h.conj().T @ h
    gram = 0.5 * (gram + gram.conj().T)
    lam, u = hermitian_eigh(gram)
    lam = np.maximum(lam, 0.0)
    p, nu = waterfill_modes(lam, weights.a, weights.v, weights.p_max, noise_power)
    f = (u * p[np.newaxis, :]) @ u.conj().T
    f = 0.5 * (f + f.conj().T)
    return WaterfillResult(covariance=f, mode_powers=p, eigenvalues=lam, nu=nu)


def optimal_covariance(h: np.ndarray, weights: PowerWeights, noise_power: float) -> np.ndarray:
    """Covariance matrix only; see `solve_covariance` for diagnostics."""
    return solve_covariance(h, weights, noise_power).covariance


def covariance_objective(p: np.ndarray, eigenvalues: np.ndarray, a: float, v: float,
                         noise_power: float) -> float:
    """Reduced objective V sum p - a sum ln(1 + lam p / sigma^2) at mode powers p."""
    return float(v * np.sum(p) - a * np.sum(np.log1p(eigenvalues * p / noise_power)))
