"""Learned selection of compression levels and surface phases.

A clipped-surrogate policy-gradient agent built directly on numpy: tanh MLPs
for policy mean and value, a state-independent log-std, sigmoid squashing
onto [0,1]^{K+M}, generalized advantage estimation, and an adaptive-moment
optimizer. All parameters live in one flat float64 buffer, which keeps
checkpointing, gradient clipping, and finite-difference verification simple.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from risedge.channel import ChannelConfig, ChannelSet, RisProfile
from risedge.compression import CompressionModel
from risedge.queueing import QueueState

log = logging.getLogger(__name__)

LOG_2PI = math.log(2.0 * math.pi)
LOG_STD_MIN = -20.0
LOG_STD_MAX = 2.0

CHECKPOINT_MAGIC = b"RISEDGE-CKPT1\n"


class TrainingDivergence(RuntimeError):
    """Raised when the networks or losses stop being finite."""


@dataclass(frozen=True)
class AgentHyperparams:
    hidden_layers: int = 5
    hidden_units: int = 32
    discount: float = 0.99
    gae_lambda: float = 0.95
    clip_ratio: float = 0.2
    learning_rate: float = 3e-4
    epochs: int = 10
    minibatch_size: int = 64
    entropy_coef: float = 1e-3
    value_coef: float = 0.5
    grad_clip: float = 10.0
    horizon: int = 2048
    log_std_init: float = -0.7
    reward_scale: float = 1.0
    queue_scale: float = 100.0
    z_scale: float = 1e5
    total_steps: int = 1_000_000

    def __post_init__(self):
        if not 0.0 < self.clip_ratio < 1.0:
            raise ValueError("clip_ratio must lie in (0, 1)")
        if not 0.0 < self.discount <= 1.0:
            raise ValueError("discount must lie in (0, 1]")
        if not 0.0 < self.gae_lambda <= 1.0:
            raise ValueError("gae_lambda must lie in (0, 1]")
        if min(self.hidden_layers, self.hidden_units, self.epochs,
               self.minibatch_size, self.horizon) < 1:
            raise ValueError("network and batch sizes must be positive")
        if min(self.queue_scale, self.z_scale, self.reward_scale) <= 0.0:
            raise ValueError("normalization scales must be positive")


# ---------------------------------------------------------------------------
# observation construction and action mapping

@dataclass
class PrevSlotInfo:
    """The previous slot's outputs the policy is allowed to see."""

    accuracy: np.ndarray  # G_k(c_k(t-1)) per device
    cpu_hz: np.ndarray    # f_k(t-1) per device


def observation_dim(num_devices: int, ue_antennas: int, ap_antennas: int,
                    ris_elements: int) -> int:
    """5K scalars plus re/im of all per-device links and the shared link."""
    k, n_u, n_a, m = num_devices, ue_antennas, ap_antennas, ris_elements
    return 5 * k + 2 * k * n_a * n_u + 2 * k * m * n_u + 2 * n_a * m


class ObservationBuilder:
    """Flattens queue state, previous decisions, and current channels.

    Queue and frequency entries are divided by configurable scales; channel
    blocks are divided by the square root of their nominal link attenuation
    so all entries reach the network at comparable magnitude.
    """

    def __init__(self, cfg: ChannelConfig, queue_scale: float, z_scale: float, f_max: float):
        self.cfg = cfg
        self.queue_scale = queue_scale
        self.z_scale = z_scale
        self.f_max = f_max
        self._ue_ris_norm = 1.0 / math.sqrt(cfg.gain_ue_ris)
        self._ris_ap_norm = 1.0 / math.sqrt(cfg.gain_ris_ap)
        self._ue_ap_norm = 1.0 / math.sqrt(cfg.gain_ue_ap)
        self.dim = observation_dim(cfg.num_devices, cfg.ue_antennas,
                                   cfg.ap_antennas, cfg.ris_elements)

    def __call__(self, state: QueueState, prev: PrevSlotInfo, channels: ChannelSet) -> np.ndarray:
        parts = [
            state.q_local / self.queue_scale,
            state.q_remote / self.queue_scale,
            state.z / self.z_scale,
            prev.accuracy,
            prev.cpu_hz / self.f_max,
        ]
        for h in channels.h_direct:
            scaled = h * self._ue_ap_norm
            parts.append(scaled.real.ravel())
            parts.append(scaled.imag.ravel())
        shared = channels.h_ris_ap * self._ris_ap_norm
        parts.append(shared.real.ravel())
        parts.append(shared.imag.ravel())
        for h in channels.h_ue_ris:
            scaled = h * self._ue_ris_norm
            parts.append(scaled.real.ravel())
            parts.append(scaled.imag.ravel())
        obs = np.concatenate(parts)
        if obs.shape[0] != self.dim:
            raise ValueError(f"observation has {obs.shape[0]} entries, expected {self.dim}")
        if not np.isfinite(obs).all():
            raise ValueError("observation contains non-finite entries")
        return obs


def map_action(u: np.ndarray, model: CompressionModel, ris_elements: int
               ) -> tuple[np.ndarray, RisProfile]:
    """Split a [0,1]^{K+M} vector into compression levels and phase shifts.

    The first K entries index the ordered level set via floor(u * |C|)
    (clamped at the top); the rest scale to phases in [0, 2*pi].
    """
    u = np.clip(np.asarray(u, dtype=np.float64), 0.0, 1.0)
    if u.ndim != 1 or u.shape[0] <= ris_elements:
        raise ValueError(f"action of length {u.shape} cannot carry {ris_elements} phases")
    k = u.shape[0] - ris_elements
    n_levels = len(model)
    idx = np.minimum(n_levels - 1, np.floor(u[:k] * n_levels).astype(np.int64))
    levels = model.levels[idx]
    return levels, RisProfile(phases=2.0 * math.pi * u[k:])


# ---------------------------------------------------------------------------
# flat-parameter MLP

def _orthogonal(rows: int, cols: int, gain: float, rng: np.random.Generator) -> np.ndarray:
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))[np.newaxis, :]
    if rows < cols:
        q = q.T
    return gain * q[:rows, :cols]


class Mlp:
    """Tanh MLP whose weights are views into a shared flat buffer."""

    def __init__(self, sizes: list[int]):
        self.sizes = list(sizes)
        self.n_params = sum((i + 1) * o for i, o in zip(sizes[:-1], sizes[1:]))
        self.w: list[np.ndarray] = []
        self.b: list[np.ndarray] = []
        self.gw: list[np.ndarray] = []
        self.gb: list[np.ndarray] = []
        self._acts: list[np.ndarray] | None = None

    def bind(self, flat: np.ndarray, grad: np.ndarray, offset: int) -> int:
        self.w, self.b, self.gw, self.gb = [], [], [], []
        for n_in, n_out in zip(self.sizes[:-1], self.sizes[1:]):
            self.w.append(flat[offset:offset + n_out * n_in].reshape(n_out, n_in))
            self.gw.append(grad[offset:offset + n_out * n_in].reshape(n_out, n_in))
            offset += n_out * n_in
            self.b.append(flat[offset:offset + n_out])
            self.gb.append(grad[offset:offset + n_out])
            offset += n_out
        return offset

    def init_params(self, rng: np.random.Generator, out_gain: float) -> None:
        last = len(self.w) - 1
        for i, (w, b) in enumerate(zip(self.w, self.b)):
            gain = out_gain if i == last else math.sqrt(2.0)
            w[...] = _orthogonal(w.shape[0], w.shape[1], gain, rng)
            b[...] = 0.0

    def forward(self, x: np.ndarray, cache: bool = False) -> np.ndarray:
        h = x
        acts = [x]
        last = len(self.w) - 1
        for i, (w, b) in enumerate(zip(self.w, self.b)):
            h = h @ w.T + b
            if i < last:
                h = np.tanh(h)
            acts.append(h)
        if cache:
            self._acts = acts
        return h

    def backward(self, grad_out: np.ndarray) -> None:
        """Accumulate parameter gradients from the last cached forward."""
        acts = self._acts
        if acts is None:
            raise RuntimeError("backward() requires a cached forward pass")
        g = grad_out
        last = len(self.w) - 1
        for i in range(last, -1, -1):
            if i < last:
                g = g * (1.0 - acts[i + 1] ** 2)
            self.gw[i] += g.T @ acts[i]
            self.gb[i] += g.sum(axis=0)
            if i > 0:
                g = g @ self.w[i]


# ---------------------------------------------------------------------------
# advantage estimation

def compute_gae(rewards: np.ndarray, values: np.ndarray, bootstrap: float,
                gamma: float, lam: float) -> tuple[np.ndarray, np.ndarray]:
    """Exponentially weighted TD-residual advantages and value targets.

    delta_t = r_t + gamma v_{t+1} - v_t, accumulated backward with factor
    gamma*lam; returns are advantages plus baselines.
    """
    r = np.asarray(rewards, dtype=np.float64)
    v = np.asarray(values, dtype=np.float64)
    if r.shape != v.shape:
        raise ValueError("rewards and values must have equal length")
    adv = np.empty_like(r)
    next_v = bootstrap
    gae = 0.0
    for t in range(len(r) - 1, -1, -1):
        delta = r[t] + gamma * next_v - v[t]
        gae = delta + gamma * lam * gae
        adv[t] = gae
        next_v = v[t]
    return adv, adv + v


# ---------------------------------------------------------------------------
# squashed-Gaussian distribution helpers

def _softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


def squashed_log_prob(z: np.ndarray, mean: np.ndarray, log_std: np.ndarray) -> np.ndarray:
    """Log-density of u = sigmoid(z) where z ~ N(mean, exp(log_std)^2).

    The change of variables adds -log sigmoid'(z) = softplus(z) + softplus(-z)
    per coordinate.
    """
    std = np.exp(log_std)
    gauss = -0.5 * ((z - mean) / std) ** 2 - log_std - 0.5 * LOG_2PI
    return np.sum(gauss + _softplus(z) + _softplus(-z), axis=-1)


def gaussian_entropy(log_std: np.ndarray) -> float:
    """Entropy of the pre-squash Gaussian (the differentiable surrogate)."""
    return float(np.sum(log_std) + 0.5 * len(log_std) * (1.0 + LOG_2PI))


# ---------------------------------------------------------------------------
# the agent

@dataclass
class UpdateStats:
    policy_loss: float
    value_loss: float
    entropy: float
    clip_fraction: float
    grad_clip_events: int
    approx_kl: float


class PpoAgent:
    """Policy/value networks plus the clipped-surrogate update rule."""

    def __init__(self, hp: AgentHyperparams, obs_dim: int, act_dim: int,
                 rng: np.random.Generator, config_hash: str = ""):
        self.hp = hp
        self.obs_dim = obs_dim
        self.act_dim = act_dim
        self.rng = rng
        self.config_hash = config_hash

        hidden = [hp.hidden_units] * hp.hidden_layers
        self.policy = Mlp([obs_dim] + hidden + [act_dim])
        self.value_net = Mlp([obs_dim] + hidden + [1])
        n = self.policy.n_params + act_dim + self.value_net.n_params
        self.flat = np.zeros(n)
        self.grad = np.zeros(n)
        offset = self.policy.bind(self.flat, self.grad, 0)
        self._log_std_slice = slice(offset, offset + act_dim)
        offset += act_dim
        self.value_net.bind(self.flat, self.grad, offset)

        self.policy.init_params(rng, out_gain=0.01)
        self.value_net.init_params(rng, out_gain=1.0)
        self.log_std[...] = hp.log_std_init

        self.adam_m = np.zeros(n)
        self.adam_v = np.zeros(n)
        self.adam_t = 0
        self.grad_clip_events = 0

    @property
    def log_std(self) -> np.ndarray:
        return self.flat[self._log_std_slice]

    # -- acting ------------------------------------------------------------

    def policy_mean(self, obs: np.ndarray) -> np.ndarray:
        out = self.policy.forward(np.atleast_2d(obs))
        if not np.all(np.isfinite(out)):
            raise TrainingDivergence("policy network produced non-finite output")
        return out

    def value(self, obs: np.ndarray) -> float:
        out = self.value_net.forward(np.atleast_2d(obs))
        if not np.all(np.isfinite(out)):
            raise TrainingDivergence("value network produced non-finite output")
        return float(out[0, 0])

    def sample(self, obs: np.ndarray, rng: np.random.Generator | None = None
               ) -> tuple[np.ndarray, np.ndarray, float, float]:
        """Draw an action; returns (u, pre-squash z, log_prob, value)."""
        rng = rng or self.rng
        mean = self.policy_mean(obs)[0]
        z = mean + np.exp(self.log_std) * rng.standard_normal(self.act_dim)
        u = 1.0 / (1.0 + np.exp(-z))
        logp = float(squashed_log_prob(z, mean, self.log_std))
        return u, z, logp, self.value(obs)

    def policy_step(self, obs: np.ndarray, rng: np.random.Generator | None = None
                    ) -> tuple[np.ndarray, float, float]:
        """Sampled action in [0,1]^{K+M} with its log-density and value estimate."""
        u, _, logp, value = self.sample(obs, rng)
        return u, logp, value

    def act_deterministic(self, obs: np.ndarray) -> np.ndarray:
        """Squashed policy mean, used for evaluation."""
        return 1.0 / (1.0 + np.exp(-self.policy_mean(obs)[0]))

    # -- learning ----------------------------------------------------------

    def update(self, obs: np.ndarray, z: np.ndarray, logp_old: np.ndarray,
               adv: np.ndarray, ret: np.ndarray) -> UpdateStats:
        """Run the configured epochs of minibatch updates over one batch.

        Advantages are normalized to zero mean and unit variance across the
        whole batch before any gradient step.
        """
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)
        n = len(adv)
        mb = min(self.hp.minibatch_size, n)

        pol_losses, val_losses, entropies, clip_fracs = [], [], [], []
        kl_last = 0.0
        for _ in range(self.hp.epochs):
            perm = self.rng.permutation(n)
            for start in range(0, n - mb + 1, mb):
                sel = perm[start:start + mb]
                pl, vl, ent, cf = self._minibatch_step(
                    obs[sel], z[sel], logp_old[sel], adv[sel], ret[sel])
                pol_losses.append(pl)
                val_losses.append(vl)
                entropies.append(ent)
                clip_fracs.append(cf)
        with np.errstate(over="ignore"):
            kl_last = float(np.mean(logp_old - squashed_log_prob(
                z, self.policy.forward(obs), self.log_std)))
        return UpdateStats(
            policy_loss=float(np.mean(pol_losses)),
            value_loss=float(np.mean(val_losses)),
            entropy=float(np.mean(entropies)),
            clip_fraction=float(np.mean(clip_fracs)),
            grad_clip_events=self.grad_clip_events,
            approx_kl=kl_last,
        )

    def _minibatch_step(self, obs, z, logp_old, adv, ret) -> tuple[float, float, float, float]:
        pl, vl, ent, cf = self._fill_gradients(obs, z, logp_old, adv, ret)
        if not (np.isfinite(pl) and np.isfinite(vl) and np.all(np.isfinite(self.grad))):
            raise TrainingDivergence(
                f"non-finite update: policy_loss={pl}, value_loss={vl}")
        norm = float(np.linalg.norm(self.grad))
        if norm > self.hp.grad_clip:
            self.grad *= self.hp.grad_clip / norm
            self.grad_clip_events += 1
            log.debug("gradient norm %.3e clipped to %.3e", norm, self.hp.grad_clip)
        self._adam_step()
        np.clip(self.log_std, LOG_STD_MIN, LOG_STD_MAX, out=self.log_std)
        return pl, vl, ent, cf

    def _fill_gradients(self, obs, z, logp_old, adv, ret) -> tuple[float, float, float, float]:
        """Gradient of the total loss into self.grad; returns loss pieces."""
        n = len(adv)
        self.grad[...] = 0.0
        eps = self.hp.clip_ratio

        mean = self.policy.forward(obs, cache=True)
        std = np.exp(self.log_std)
        logp = squashed_log_prob(z, mean, self.log_std)
        rho = np.exp(logp - logp_old)
        unclipped = rho * adv
        clipped = np.clip(rho, 1.0 - eps, 1.0 + eps) * adv
        use_unclipped = unclipped <= clipped
        policy_loss = -float(np.mean(np.minimum(unclipped, clipped)))

        dlogp = np.where(use_unclipped, -adv * rho, 0.0) / n
        dmean = dlogp[:, np.newaxis] * (z - mean) / std**2
        self.policy.backward(dmean)
        log_std_grad = self.grad[self._log_std_slice]
        log_std_grad += np.sum(
            dlogp[:, np.newaxis] * (((z - mean) / std) ** 2 - 1.0), axis=0)

        entropy = gaussian_entropy(self.log_std)
        log_std_grad -= self.hp.entropy_coef

        v = self.value_net.forward(obs, cache=True)[:, 0]
        err = v - ret
        value_loss = 0.5 * float(np.mean(err**2))
        self.value_net.backward((self.hp.value_coef * err / n)[:, np.newaxis])

        return policy_loss, value_loss, entropy, float(np.mean(~use_unclipped))

    def total_loss(self, obs, z, logp_old, adv, ret) -> float:
        """Scalar objective matching `_fill_gradients` (for derivative checks)."""
        mean = self.policy.forward(obs)
        logp = squashed_log_prob(z, mean, self.log_std)
        rho = np.exp(logp - logp_old)
        eps = self.hp.clip_ratio
        surr = np.minimum(rho * adv, np.clip(rho, 1.0 - eps, 1.0 + eps) * adv)
        policy_loss = -float(np.mean(surr))
        v = self.value_net.forward(obs)[:, 0]
        value_loss = 0.5 * float(np.mean((v - ret) ** 2))
        entropy = gaussian_entropy(self.log_std)
        return policy_loss + self.hp.value_coef * value_loss - self.hp.entropy_coef * entropy

    def _adam_step(self, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
        self.adam_t += 1
        self.adam_m *= beta1
        self.adam_m += (1.0 - beta1) * self.grad
        self.adam_v *= beta2
        self.adam_v += (1.0 - beta2) * self.grad**2
        m_hat = self.adam_m / (1.0 - beta1**self.adam_t)
        v_hat = self.adam_v / (1.0 - beta2**self.adam_t)
        self.flat -= self.hp.learning_rate * m_hat / (np.sqrt(v_hat) + eps)

    # -- persistence ---------------------------------------------------------

    def save(self, path: str) -> None:
        """Self-describing checkpoint: JSON header + little-endian float64 arrays."""
        header = {
            "config_hash": self.config_hash,
            "obs_dim": self.obs_dim,
            "act_dim": self.act_dim,
            "policy_sizes": self.policy.sizes,
            "value_sizes": self.value_net.sizes,
            "n_params": int(self.flat.size),
            "adam_t": self.adam_t,
        }
        with open(path, "wb") as fh:
            fh.write(CHECKPOINT_MAGIC)
            fh.write((json.dumps(header, sort_keys=True) + "\n").encode("utf-8"))
            fh.write(self.flat.astype("<f8").tobytes())
            fh.write(self.adam_m.astype("<f8").tobytes())
            fh.write(self.adam_v.astype("<f8").tobytes())

    @classmethod
    def load(cls, path: str, hp: AgentHyperparams, rng: np.random.Generator) -> "PpoAgent":
        with open(path, "rb") as fh:
            magic = fh.read(len(CHECKPOINT_MAGIC))
            if magic != CHECKPOINT_MAGIC:
                raise ValueError(f"{path}: not a checkpoint file")
            header = json.loads(fh.readline().decode("utf-8"))
            blob = fh.read()
        agent = cls(hp, header["obs_dim"], header["act_dim"], rng,
                    config_hash=header.get("config_hash", ""))
        n = header["n_params"]
        if agent.flat.size != n:
            raise ValueError(
                f"{path}: checkpoint has {n} parameters, configured networks need {agent.flat.size}")
        if header["policy_sizes"] != agent.policy.sizes:
            raise ValueError(f"{path}: policy layer shapes {header['policy_sizes']} "
                             f"do not match configuration {agent.policy.sizes}")
        arrays = np.frombuffer(blob, dtype="<f8")
        if arrays.size != 3 * n:
            raise ValueError(f"{path}: truncated checkpoint payload")
        agent.flat[...] = arrays[:n]
        agent.adam_m[...] = arrays[n:2 * n]
        agent.adam_v[...] = arrays[2 * n:]
        agent.adam_t = int(header["adam_t"])
        return agent
