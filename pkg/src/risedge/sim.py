"""Per-slot pipeline, training and baseline runs, and trade-off sweeps.

Slot order: channels are observed, the policy fixes compression levels and
surface phases, water-filling shapes each device's transmit covariance, the
surrogate objective and reward are evaluated, CPU cycles are scheduled
greedily, and finally the physical and virtual queues advance. Episodes only
exist during training; they empty the physical buffers and redraw the user
position, while the virtual accuracy queue persists for the whole run.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from risedge import agent as agent_mod
from risedge.agent import AgentHyperparams, ObservationBuilder, PpoAgent, PrevSlotInfo, map_action
from risedge.allocators import PowerWeights, rate_weight, schedule_cpu, solve_covariance
from risedge.channel import (ChannelConfig, RisProfile, achievable_rate, composite_channel,
                             draw_channels, draw_episode_geometry, rate_from_modes)
from risedge.compression import (CompressionModel, accuracy_of, bits_per_pattern,
                                 realized_accuracy)
from risedge.control import TradeoffConfig, reward, slot_objective
from risedge.queueing import (ArrivalProcess, DelayTracker, QueueState, sample_arrivals,
                              service_capacity, transmit_capacity, update_local,
                              update_remote, update_virtual)

log = logging.getLogger(__name__)

DEEP_AUDIT_PERIOD = 512

BASELINE_POLICIES = ("max_compression", "no_compression", "random_compression")


class SimulationInvariantError(RuntimeError):
    """A per-slot feasibility constraint was violated."""


@dataclass
class SlotDecision:
    """Everything chosen or realized within one slot."""

    levels: np.ndarray
    ris: RisProfile
    covariances: list[np.ndarray]
    cpu_hz: np.ndarray
    rates: np.ndarray
    transfers: np.ndarray
    served: np.ndarray


class RunRecorder:
    """Accumulates per-slot metrics; optionally keeps the full trace."""

    SCALAR_COLS = ("j", "reward")
    DEVICE_COLS = ("q_local", "q_remote", "z", "level", "accuracy", "rate_bps",
                   "tx_power_w", "cpu_hz", "transfer", "served", "arrivals")

    def __init__(self, num_devices: int, keep_trace: bool):
        self.k = num_devices
        self.keep_trace = keep_trace
        self.slots = 0
        self._sums = {c: 0.0 for c in self.SCALAR_COLS}
        self._dev_sums = {c: np.zeros(num_devices) for c in self.DEVICE_COLS}
        self._trace: list[list[float]] = []

    def columns(self) -> list[str]:
        cols = ["slot", *self.SCALAR_COLS]
        for c in self.DEVICE_COLS:
            cols.extend(f"{c}_{k}" for k in range(self.k))
        return cols

    def record(self, slot: int, scalars: dict, device_vals: dict) -> None:
        self.slots += 1
        for c in self.SCALAR_COLS:
            self._sums[c] += scalars[c]
        for c in self.DEVICE_COLS:
            self._dev_sums[c] += device_vals[c]
        if self.keep_trace:
            row = [float(slot)]
            row.extend(float(scalars[c]) for c in self.SCALAR_COLS)
            for c in self.DEVICE_COLS:
                row.extend(float(v) for v in device_vals[c])
            self._trace.append(row)

    def mean(self, col: str) -> float:
        return self._sums[col] / max(1, self.slots)

    def device_mean(self, col: str) -> np.ndarray:
        return self._dev_sums[col] / max(1, self.slots)

    def rows(self):
        return iter(self._trace)

    def verify_consistency(self, tol: float = 1e-9) -> None:
        """Run-level averages must be recomputable from the stored trace."""
        if not self.keep_trace or self.slots == 0:
            return
        trace = np.asarray(self._trace)
        for j, c in enumerate(self.SCALAR_COLS, start=1):
            ref = trace[:, j].mean()
            if abs(self.mean(c) - ref) > tol * max(1.0, abs(ref)):
                raise SimulationInvariantError(f"summary mean of {c} disagrees with trace")
        offset = 1 + len(self.SCALAR_COLS)
        for i, c in enumerate(self.DEVICE_COLS):
            ref = trace[:, offset + i * self.k: offset + (i + 1) * self.k].mean(axis=0)
            if np.any(np.abs(self.device_mean(c) - ref) > tol * np.maximum(1.0, np.abs(ref))):
                raise SimulationInvariantError(f"summary mean of {c} disagrees with trace")


@dataclass
class RunResult:
    summary: dict
    recorder: RunRecorder
    trackers: list[DelayTracker]


class EdgeInferenceSim:
    """Owns the queue state, channel process, and per-slot decision pipeline."""

    def __init__(self, channel_cfg: ChannelConfig, arrivals: ArrivalProcess,
                 model: CompressionModel, tradeoff: TradeoffConfig,
                 slot_s: float, p_max_w: float, f_max_hz: float,
                 cycles_per_pattern: np.ndarray, episode_length: int,
                 initial_level: int, rng: np.random.Generator,
                 queue_scale: float = 100.0, z_scale: float = 1e5,
                 episodes_enabled: bool = True, audit: bool = True):
        k = channel_cfg.num_devices
        self.cfg = channel_cfg
        self.arrivals = arrivals
        self.model = model
        self.tradeoff = tradeoff
        if len(tradeoff.accuracy_thresholds) != k:
            raise ValueError("need one accuracy threshold per device")
        self.slot_s = slot_s
        self.p_max_w = p_max_w
        self.f_max_hz = f_max_hz
        self.loads = np.asarray(cycles_per_pattern, dtype=np.float64)
        if self.loads.shape != (k,):
            raise ValueError("need one cycle load per device")
        self.episode_length = episode_length
        self.initial_level = initial_level
        self.rng = rng
        self.episodes_enabled = episodes_enabled
        self.audit = audit

        self.obs_builder = ObservationBuilder(channel_cfg, queue_scale, z_scale, f_max_hz)
        self.obs_dim = self.obs_builder.dim
        self.action_dim = k + channel_cfg.ris_elements

        self.state = QueueState.zeros(k)
        self.slot = 0
        self.episode_slot = 0
        self.episode_index = 0
        self._recorder: RunRecorder | None = None
        self._trackers = [DelayTracker() for _ in range(k)]
        self._geometry = None
        self._pending = None
        self._prev = None

    # -- lifecycle -----------------------------------------------------------

    def reset_run(self, keep_trace: bool = True) -> np.ndarray:
        """Zero all queues, redraw geometry, and return the first observation."""
        k = self.cfg.num_devices
        self.state = QueueState.zeros(k)
        self.slot = 0
        self.episode_slot = 0
        self.episode_index = 0
        self._trackers = [DelayTracker() for _ in range(k)]
        self._recorder = RunRecorder(k, keep_trace)
        self._prev = PrevSlotInfo(
            accuracy=np.full(k, accuracy_of(self.model, self.initial_level)),
            cpu_hz=np.zeros(k),
        )
        self._geometry = draw_episode_geometry(self.cfg, self.rng)
        self._pending = draw_channels(self.cfg, self._geometry, self.rng)
        return self._observe()

    def _reset_episode(self) -> None:
        """Episode boundary: physical buffers empty and the user moves.

        The virtual accuracy queue deliberately persists — it is the
        controller's memory of the long-run constraint, not a physical
        buffer.
        """
        k = self.cfg.num_devices
        self.state.q_local[...] = 0
        self.state.q_remote[...] = 0
        for tr in self._trackers:
            tr.local.clear()
            tr.remote.clear()
        self._prev = PrevSlotInfo(
            accuracy=np.full(k, accuracy_of(self.model, self.initial_level)),
            cpu_hz=np.zeros(k),
        )
        self._geometry = draw_episode_geometry(self.cfg, self.rng)
        self.episode_slot = 0
        self.episode_index += 1

    def set_queues(self, q_local, q_remote) -> None:
        """Inject buffer contents (tests/warm starts); delay bookkeeping follows.

        Injected patterns are timestamped at the current slot.
        """
        self.state.q_local[...] = np.asarray(q_local, dtype=np.int64)
        self.state.q_remote[...] = np.asarray(q_remote, dtype=np.int64)
        for k in range(self.cfg.num_devices):
            tr = self._trackers[k]
            tr.local.clear()
            tr.remote.clear()
            tr.local.extend([self.slot] * int(self.state.q_local[k]))
            tr.remote.extend([self.slot] * int(self.state.q_remote[k]))

    def start_recording(self, keep_trace: bool) -> None:
        """Fresh metrics (and delay bookkeeping) without touching queue state.

        Patterns already in flight are re-timestamped at the current slot, so
        tracker delays slightly undercount for them; Little's-law figures are
        unaffected.
        """
        self._recorder = RunRecorder(self.cfg.num_devices, keep_trace)
        self._trackers = [DelayTracker() for _ in range(self.cfg.num_devices)]
        for k in range(self.cfg.num_devices):
            self._trackers[k].local.extend([self.slot] * int(self.state.q_local[k]))
            self._trackers[k].remote.extend([self.slot] * int(self.state.q_remote[k]))

    def _observe(self) -> np.ndarray:
        return self.obs_builder(self.state, self._prev, self._pending)

    # -- the slot pipeline -----------------------------------------------------

    def step(self, u: np.ndarray) -> tuple[np.ndarray, float, dict]:
        """Advance one slot under the action u in [0,1]^{K+M}."""
        cfg = self.cfg
        k_devices = cfg.num_devices
        channels = self._pending
        state = self.state

        levels, ris = map_action(u, self.model, cfg.ris_elements)

        covs: list[np.ndarray] = []
        rates = np.zeros(k_devices)
        tx_power = np.zeros(k_devices)
        wf_results = []
        for k in range(k_devices):
            n_b = bits_per_pattern(self.model, int(levels[k]))
            a = rate_weight(int(state.q_local[k]), int(state.q_remote[k]),
                            self.slot_s, cfg.bandwidth_hz, n_b)
            if a > 0.0:
                h = composite_channel(channels, ris, k)
                wf = solve_covariance(h, PowerWeights(a=a, p_max=self.p_max_w, v=self.tradeoff.v),
                                      cfg.noise_power_w)
                rates[k] = rate_from_modes(wf.mode_powers, wf.eigenvalues,
                                           cfg.noise_power_w, cfg.bandwidth_hz)
                tx_power[k] = float(np.sum(wf.mode_powers))
                covs.append(wf.covariance)
                wf_results.append((k, h, wf))
            else:
                covs.append(np.zeros((cfg.ue_antennas, cfg.ue_antennas), dtype=np.complex128))

        f = schedule_cpu(state.q_remote, self.loads, self.f_max_hz, self.slot_s)

        transfers = np.zeros(k_devices, dtype=np.int64)
        served = np.zeros(k_devices, dtype=np.int64)
        arrivals = np.zeros(k_devices, dtype=np.int64)
        acc_real = np.zeros(k_devices)
        for k in range(k_devices):
            n_b = bits_per_pattern(self.model, int(levels[k]))
            transfers[k] = min(int(state.q_local[k]),
                               transmit_capacity(rates[k], n_b, self.slot_s))
            served[k] = min(int(state.q_remote[k]),
                            service_capacity(f[k], self.loads[k], self.slot_s))
            arrivals[k] = sample_arrivals(self.arrivals, self.rng)
            acc_real[k] = realized_accuracy(self.model, int(levels[k]), self.rng)

        j = slot_objective(state, rates, levels, covs, self.model, self.tradeoff, self.slot_s)
        r = reward(j)

        if self.audit:
            self._audit_slot(levels, ris, tx_power, f, state, wf_results)

        self._recorder.record(
            self.slot,
            {"j": j, "reward": r},
            {
                "q_local": state.q_local.astype(np.float64),
                "q_remote": state.q_remote.astype(np.float64),
                "z": state.z.copy(),
                "level": levels.astype(np.float64),
                "accuracy": acc_real,
                "rate_bps": rates,
                "tx_power_w": tx_power,
                "cpu_hz": f,
                "transfer": transfers.astype(np.float64),
                "served": served.astype(np.float64),
                "arrivals": arrivals.astype(np.float64),
            },
        )

        for k in range(k_devices):
            tr = self._trackers[k]
            tr.on_service(self.slot, int(served[k]))
            tr.on_transfer(int(transfers[k]))
            tr.on_arrivals(self.slot, int(arrivals[k]))

        new_ql = np.empty(k_devices, dtype=np.int64)
        new_qr = np.empty(k_devices, dtype=np.int64)
        new_z = np.empty(k_devices)
        for k in range(k_devices):
            n_b = bits_per_pattern(self.model, int(levels[k]))
            new_ql[k] = update_local(int(state.q_local[k]), rates[k], n_b,
                                     self.slot_s, int(arrivals[k]))
            new_qr[k] = update_remote(int(state.q_remote[k]), int(state.q_local[k]),
                                      rates[k], n_b, f[k], self.loads[k], self.slot_s)
            new_z[k] = update_virtual(float(state.z[k]), acc_real[k],
                                      self.tradeoff.accuracy_thresholds[k],
                                      self.tradeoff.virtual_step)
        state.q_local[...] = new_ql
        state.q_remote[...] = new_qr
        state.z[...] = new_z

        self._prev = PrevSlotInfo(accuracy=acc_real, cpu_hz=f)
        self.slot += 1
        self.episode_slot += 1

        episode_end = self.episodes_enabled and self.episode_slot >= self.episode_length
        if episode_end:
            self._reset_episode()

        self._pending = draw_channels(self.cfg, self._geometry, self.rng)
        obs = self._observe()
        info = {"j": j, "episode_end": episode_end,
                "decision": SlotDecision(levels, ris, covs, f, rates, transfers, served)}
        return obs, r, info

    def _audit_slot(self, levels, ris, tx_power, f, state, wf_results) -> None:
        if np.any(tx_power > self.p_max_w * (1.0 + 1e-9) + 1e-12):
            raise SimulationInvariantError(f"transmit power {tx_power} exceeds {self.p_max_w}")
        if np.any(f < 0.0) or f.sum() > self.f_max_hz * (1.0 + 1e-12):
            raise SimulationInvariantError("CPU schedule violates its budget")
        max_usable = state.q_remote.astype(np.float64) * self.loads / self.slot_s
        if np.any(f > max_usable * (1.0 + 1e-12)):
            raise SimulationInvariantError("CPU schedule grants more than a queue can use")
        if np.any((ris.phases < 0.0) | (ris.phases > 2.0 * math.pi)):
            raise SimulationInvariantError("surface phase outside [0, 2*pi]")
        for c in levels:
            self.model.position(int(c))  # raises on unknown level
        if self.slot % DEEP_AUDIT_PERIOD == 0:
            for k, h, wf in wf_results:
                if np.any(wf.mode_powers < 0.0):
                    raise SimulationInvariantError("negative eigenmode power")
                det_rate = achievable_rate(h, wf.covariance, self.cfg.noise_power_w,
                                           self.cfg.bandwidth_hz)
                mode_rate = rate_from_modes(wf.mode_powers, wf.eigenvalues,
                                            self.cfg.noise_power_w, self.cfg.bandwidth_hz)
                if abs(det_rate - mode_rate) > 1e-9 * max(1.0, abs(det_rate)):
                    raise SimulationInvariantError(
                        f"rate mismatch: determinant {det_rate} vs eigenmode {mode_rate}")

    # -- summaries -------------------------------------------------------------

    def finish_run(self, tag: str, config_hash: str = "", seed: int | None = None) -> RunResult:
        rec = self._recorder
        rec.verify_consistency()
        k = self.cfg.num_devices
        mean_arr = rec.device_mean("arrivals")
        littles = np.zeros(k)
        tracker_delay = np.zeros(k)
        for i in range(k):
            if mean_arr[i] > 0.0:
                littles[i] = (self.slot_s *
                              (rec.device_mean("q_local")[i] + rec.device_mean("q_remote")[i])
                              / mean_arr[i])
            tracker_delay[i] = self._trackers[i].mean_delay_s(self.slot_s)
        summary = {
            "policy": tag,
            "config_hash": config_hash,
            "seed": seed,
            "slots": rec.slots,
            "v": self.tradeoff.v,
            "avg_reward": rec.mean("reward"),
            "avg_objective": rec.mean("j"),
            "avg_power_w": float(np.sum(rec.device_mean("tx_power_w"))),
            "avg_accuracy": float(np.mean(rec.device_mean("accuracy"))),
            "avg_rate_bps": [float(x) for x in rec.device_mean("rate_bps")],
            "avg_q_local": [float(x) for x in rec.device_mean("q_local")],
            "avg_q_remote": [float(x) for x in rec.device_mean("q_remote")],
            "final_z": [float(x) for x in self.state.z],
            "mean_arrivals": [float(x) for x in mean_arr],
            "littles_delay_s": [float(x) for x in littles],
            "tracker_delay_s": [float(x) for x in tracker_delay],
            "tracker_completed": [int(t.completed) for t in self._trackers],
        }
        return RunResult(summary=summary, recorder=rec, trackers=self._trackers)


# ---------------------------------------------------------------------------
# run drivers

def baseline_action(policy: str, num_devices: int, ris_elements: int,
                    rng: np.random.Generator) -> np.ndarray:
    """Fixed or random compression plus uniformly random surface phases."""
    if policy == "max_compression":
        levels_u = np.zeros(num_devices)
    elif policy == "no_compression":
        levels_u = np.ones(num_devices)
    elif policy == "random_compression":
        levels_u = rng.random(num_devices)
    else:
        raise ValueError(f"unknown baseline policy {policy!r}; expected one of {BASELINE_POLICIES}")
    return np.concatenate([levels_u, rng.random(ris_elements)])


def run_baseline(env: EdgeInferenceSim, policy: str, n_slots: int,
                 config_hash: str = "", seed: int | None = None,
                 keep_trace: bool = True) -> RunResult:
    """Continuous run under a baseline rule; allocation stays model-based."""
    env.episodes_enabled = False
    env.reset_run(keep_trace=keep_trace)
    for _ in range(n_slots):
        u = baseline_action(policy, env.cfg.num_devices, env.cfg.ris_elements, env.rng)
        env.step(u)
    return env.finish_run(policy, config_hash=config_hash, seed=seed)


@dataclass
class TrainResult:
    agent: PpoAgent
    episode_curve: list[dict]
    update_stats: list[dict]
    train_summary: dict
    eval_result: RunResult


def run_training(env: EdgeInferenceSim, hp: AgentHyperparams, total_steps: int,
                 config_hash: str = "", seed: int | None = None,
                 checkpoint_path: str | None = None,
                 eval_slots: int | None = None) -> TrainResult:
    """Collect rollouts, update the policy, then evaluate deterministically.

    Evaluation continues from the training-end system state (the virtual
    queues keep their accumulated levels) with episode resets disabled and
    the policy mean as the action.
    """
    agent = PpoAgent(hp, env.obs_dim, env.action_dim, env.rng, config_hash=config_hash)
    obs = env.reset_run(keep_trace=False)

    horizon = hp.horizon
    buf_obs = np.zeros((horizon, env.obs_dim))
    buf_z = np.zeros((horizon, env.action_dim))
    buf_logp = np.zeros(horizon)
    buf_val = np.zeros(horizon)
    buf_rew = np.zeros(horizon)
    buf_done = np.zeros(horizon, dtype=bool)

    episode_curve: list[dict] = []
    update_stats: list[dict] = []
    ep_reward_sum = 0.0
    ep_len = 0
    fill = 0

    try:
        for step in range(total_steps):
            u, z, logp, value = agent.sample(obs)
            next_obs, r, info = env.step(u)
            buf_obs[fill] = obs
            buf_z[fill] = z
            buf_logp[fill] = logp
            buf_val[fill] = value
            buf_rew[fill] = r * hp.reward_scale
            buf_done[fill] = info["episode_end"]
            fill += 1
            ep_reward_sum += r
            ep_len += 1
            if info["episode_end"]:
                episode_curve.append({
                    "episode": env.episode_index - 1,
                    "end_step": step + 1,
                    "mean_reward": ep_reward_sum / ep_len,
                })
                ep_reward_sum = 0.0
                ep_len = 0
            obs = next_obs

            if fill == horizon:
                adv, ret = _rollout_targets(agent, buf_rew, buf_val, buf_done, obs, hp)
                stats = agent.update(buf_obs, buf_z, buf_logp, adv, ret)
                update_stats.append({
                    "update": len(update_stats),
                    "step": step + 1,
                    "policy_loss": stats.policy_loss,
                    "value_loss": stats.value_loss,
                    "entropy": stats.entropy,
                    "clip_fraction": stats.clip_fraction,
                    "approx_kl": stats.approx_kl,
                    "grad_clip_events": stats.grad_clip_events,
                })
                fill = 0
    except agent_mod.TrainingDivergence:
        if checkpoint_path is not None:
            agent.save(checkpoint_path)
            log.error("training diverged; checkpoint written to %s", checkpoint_path)
        raise

    train_summary = env.finish_run("train", config_hash=config_hash, seed=seed).summary
    train_summary["episodes"] = env.episode_index

    env.episodes_enabled = False
    env.start_recording(keep_trace=True)
    obs = env._observe()
    for _ in range(eval_slots if eval_slots is not None else env.episode_length):
        u = agent.act_deterministic(obs)
        obs, _, _ = env.step(u)
    eval_result = env.finish_run("eval", config_hash=config_hash, seed=seed)
    return TrainResult(agent=agent, episode_curve=episode_curve, update_stats=update_stats,
                       train_summary=train_summary, eval_result=eval_result)


def _rollout_targets(agent: PpoAgent, rewards, values, dones, last_obs,
                     hp: AgentHyperparams) -> tuple[np.ndarray, np.ndarray]:
    """GAE over episode segments; only the trailing open segment bootstraps."""
    n = len(rewards)
    adv = np.empty(n)
    ret = np.empty(n)
    start = 0
    for t in range(n):
        if dones[t] or t == n - 1:
            bootstrap = 0.0 if dones[t] else agent.value(last_obs)
            a, r_ = agent_mod.compute_gae(rewards[start:t + 1], values[start:t + 1],
                                          bootstrap, hp.discount, hp.gae_lambda)
            adv[start:t + 1] = a
            ret[start:t + 1] = r_
            start = t + 1
    return adv, ret


def run_evaluation(env: EdgeInferenceSim, agent: PpoAgent, n_slots: int,
                   config_hash: str = "", seed: int | None = None) -> RunResult:
    """Deterministic-policy run from a fresh (empty-queue) system state."""
    env.episodes_enabled = False
    obs = env.reset_run(keep_trace=True)
    for _ in range(n_slots):
        u = agent.act_deterministic(obs)
        obs, _, _ = env.step(u)
    return env.finish_run("evaluate", config_hash=config_hash, seed=seed)


def build_sim(exp, rng: np.random.Generator, episodes_enabled: bool = True,
              audit: bool = True) -> EdgeInferenceSim:
    """Assemble a simulator from an ExperimentConfig."""
    hp = exp.agent_hyperparams()
    return EdgeInferenceSim(
        channel_cfg=exp.channel_config(),
        arrivals=exp.arrival_process(),
        model=exp.compression_model(),
        tradeoff=exp.tradeoff_config(),
        slot_s=float(exp.system.slot_s),
        p_max_w=float(exp.system.p_max_w),
        f_max_hz=float(exp.system.f_max_hz),
        cycles_per_pattern=np.array(exp.cycle_loads()),
        episode_length=int(exp.episode.length_slots),
        initial_level=exp.initial_level(),
        rng=rng,
        queue_scale=hp.queue_scale,
        z_scale=hp.z_scale,
        episodes_enabled=episodes_enabled,
        audit=audit,
    )


def sweep_v(exp, v_values: list[float], seed: int,
            total_steps: int | None = None) -> list[TrainResult]:
    """Independent training plus evaluation per trade-off value.

    Each value of V gets its own simulator and generator seeded identically,
    so rows differ only through the trade-off weight.
    """
    import dataclasses

    if not v_values:
        raise ValueError("v_values must be a nonempty list")
    results = []
    for v in v_values:
        cfg_v = dataclasses.replace(
            exp, tradeoff=dataclasses.replace(exp.tradeoff, v=float(v)))
        rng = np.random.default_rng(seed)
        env = build_sim(cfg_v, rng)
        hp = cfg_v.agent_hyperparams()
        steps = total_steps if total_steps is not None else hp.total_steps
        results.append(run_training(env, hp, steps,
                                    config_hash=cfg_v.config_hash, seed=seed))
    return results
