"""Experiment configuration: strict JSON loading, defaults, and hashing.

The config file is JSON with one object per section; every field has a
documented default, unknown keys are a hard error, and all values use SI
base units with the unit spelled in the key name (``_hz``, ``_w``, ``_s``,
``_db``, ``_dbm``, ``_m``). The resolved configuration is hashed so that
every output artifact can state exactly what produced it (the seed is
recorded separately and does not enter the hash).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from typing import Any

import numpy as np

from risedge.agent import AgentHyperparams
from risedge.channel import ChannelConfig, dbm_to_watt
from risedge.compression import CompressionModel, default_model, model_from_csv
from risedge.control import TradeoffConfig
from risedge.queueing import ArrivalProcess


class ConfigError(ValueError):
    """Configuration file problem, annotated with the offending field path."""


@dataclass
class ChannelSection:
    num_devices: int = 1
    ue_antennas: int = 1
    ap_antennas: int = 4
    ris_elements: int = 8
    bandwidth_hz: float = 1e8
    noise_power_dbm: float = -120.0
    carrier_hz: float = 5e9
    rice_factor_db_ue_ris: float = 25.0
    rice_factor_db_ris_ap: float = 25.0
    rice_factor_db_ue_ap: float = 25.0
    attenuation_db_ue_ris: float = 62.60
    attenuation_db_ris_ap: float = 66.34
    attenuation_db_ue_ap: float = 80.0
    direct_link_present: Any = False  # bool, or one flag per device
    max_displacement_m: float = 5.0
    reference_distance_m: float = 25.0


@dataclass
class ArrivalsSection:
    mean_per_slot: float = 4.0
    law: str = "poisson"
    batch_size: int = 8


@dataclass
class CompressionSection:
    levels: Any = None  # None -> 1..100, or an explicit increasing list
    bits_csv: Any = None
    accuracy_csv: Any = None
    stochastic_accuracy: bool = False


@dataclass
class TradeoffSection:
    v: float = 1e5
    virtual_step: float = 1.0
    accuracy_threshold: Any = 0.85  # scalar, or one threshold per device


@dataclass
class SystemSection:
    slot_s: float = 0.01
    p_max_w: float = 0.1
    f_max_hz: float = 3.6e9
    cycles_per_pattern: Any = 5.6e6  # scalar, or one load per device


@dataclass
class EpisodeSection:
    length_slots: int = 1500
    initial_level: Any = None  # None -> highest level


@dataclass
class AgentSection:
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


_SECTIONS = {
    "channel": ChannelSection,
    "arrivals": ArrivalsSection,
    "compression": CompressionSection,
    "tradeoff": TradeoffSection,
    "system": SystemSection,
    "episode": EpisodeSection,
    "agent": AgentSection,
}

_TOP_LEVEL_SCALARS = {"seed": int, "out_dir": str}


def _build_section(cls, data: dict, path: str):
    known = {f.name for f in fields(cls)}
    for key in data:
        if key not in known:
            raise ConfigError(f"{path}.{key}: unknown key")
    return cls(**data)


@dataclass
class ExperimentConfig:
    channel: ChannelSection = field(default_factory=ChannelSection)
    arrivals: ArrivalsSection = field(default_factory=ArrivalsSection)
    compression: CompressionSection = field(default_factory=CompressionSection)
    tradeoff: TradeoffSection = field(default_factory=TradeoffSection)
    system: SystemSection = field(default_factory=SystemSection)
    episode: EpisodeSection = field(default_factory=EpisodeSection)
    agent: AgentSection = field(default_factory=AgentSection)
    seed: int = 0
    out_dir: str = "runs"

    def __post_init__(self):
        self.validate()

    # -- validation ----------------------------------------------------------

    def validate(self) -> None:
        ch, k = self.channel, self.channel.num_devices
        checks = [
            (k >= 1, "channel.num_devices: must be >= 1"),
            (ch.ue_antennas >= 1, "channel.ue_antennas: must be >= 1"),
            (ch.ap_antennas >= 1, "channel.ap_antennas: must be >= 1"),
            (ch.ris_elements >= 1, "channel.ris_elements: must be >= 1"),
            (ch.bandwidth_hz > 0, "channel.bandwidth_hz: must be positive"),
            (ch.carrier_hz > 0, "channel.carrier_hz: must be positive"),
            (ch.max_displacement_m >= 0, "channel.max_displacement_m: must be >= 0"),
            (ch.reference_distance_m > 0, "channel.reference_distance_m: must be positive"),
            (self.arrivals.mean_per_slot > 0, "arrivals.mean_per_slot: must be positive"),
            (self.tradeoff.v >= 0, "tradeoff.v: must be >= 0"),
            (self.tradeoff.virtual_step > 0, "tradeoff.virtual_step: must be positive"),
            (self.system.slot_s > 0, "system.slot_s: must be positive"),
            (self.system.p_max_w > 0, "system.p_max_w: must be positive"),
            (self.system.f_max_hz > 0, "system.f_max_hz: must be positive"),
            (self.episode.length_slots >= 1, "episode.length_slots: must be >= 1"),
        ]
        for ok, message in checks:
            if not ok:
                raise ConfigError(message)
        self.direct_link_flags()
        for g in self.accuracy_thresholds():
            if not 0.0 < g < 1.0:
                raise ConfigError(f"tradeoff.accuracy_threshold: {g} outside (0, 1)")
        for w in self.cycle_loads():
            if w <= 0:
                raise ConfigError("system.cycles_per_pattern: must be positive")
        try:
            self.agent_hyperparams()
        except ValueError as exc:
            raise ConfigError(f"agent: {exc}") from None
        try:
            self.arrival_process()
        except ValueError as exc:
            raise ConfigError(f"arrivals: {exc}") from None
        model = self.compression_model()
        init = self.initial_level()
        if init not in model._index:
            raise ConfigError(f"episode.initial_level: {init} not in the level set")

    # -- per-device broadcasting ----------------------------------------------

    def _per_device(self, value, path: str, kind=float) -> tuple:
        k = self.channel.num_devices
        if isinstance(value, (list, tuple)):
            if len(value) != k:
                raise ConfigError(f"{path}: expected {k} entries, got {len(value)}")
            return tuple(kind(v) for v in value)
        return tuple(kind(value) for _ in range(k))

    def direct_link_flags(self) -> tuple[bool, ...]:
        return self._per_device(self.channel.direct_link_present,
                                "channel.direct_link_present", bool)

    def accuracy_thresholds(self) -> tuple[float, ...]:
        return self._per_device(self.tradeoff.accuracy_threshold,
                                "tradeoff.accuracy_threshold", float)

    def cycle_loads(self) -> tuple[float, ...]:
        return self._per_device(self.system.cycles_per_pattern,
                                "system.cycles_per_pattern", float)

    # -- derived model objects --------------------------------------------------

    def channel_config(self) -> ChannelConfig:
        ch = self.channel
        return ChannelConfig(
            num_devices=ch.num_devices,
            ue_antennas=ch.ue_antennas,
            ap_antennas=ch.ap_antennas,
            ris_elements=ch.ris_elements,
            bandwidth_hz=float(ch.bandwidth_hz),
            noise_power_w=dbm_to_watt(float(ch.noise_power_dbm)),
            carrier_hz=float(ch.carrier_hz),
            rice_factor_db_ue_ris=float(ch.rice_factor_db_ue_ris),
            rice_factor_db_ris_ap=float(ch.rice_factor_db_ris_ap),
            rice_factor_db_ue_ap=float(ch.rice_factor_db_ue_ap),
            attenuation_db_ue_ris=float(ch.attenuation_db_ue_ris),
            attenuation_db_ris_ap=float(ch.attenuation_db_ris_ap),
            attenuation_db_ue_ap=float(ch.attenuation_db_ue_ap),
            direct_link_present=self.direct_link_flags(),
            max_displacement_m=float(ch.max_displacement_m),
            reference_distance_m=float(ch.reference_distance_m),
        )

    def arrival_process(self) -> ArrivalProcess:
        return ArrivalProcess(
            mean_per_slot=float(self.arrivals.mean_per_slot),
            law=self.arrivals.law,
            batch_size=int(self.arrivals.batch_size),
        )

    def compression_model(self) -> CompressionModel:
        cs = self.compression
        levels = np.asarray(cs.levels, dtype=np.int64) if cs.levels is not None else None
        try:
            if cs.bits_csv is None and cs.accuracy_csv is None:
                return default_model(levels, stochastic=cs.stochastic_accuracy)
            if levels is None:
                levels = np.arange(1, 101, dtype=np.int64)
            return model_from_csv(levels, cs.bits_csv, cs.accuracy_csv,
                                  stochastic=cs.stochastic_accuracy)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"compression: {exc}") from None

    def tradeoff_config(self) -> TradeoffConfig:
        return TradeoffConfig(
            v=float(self.tradeoff.v),
            virtual_step=float(self.tradeoff.virtual_step),
            accuracy_thresholds=self.accuracy_thresholds(),
        )

    def agent_hyperparams(self) -> AgentHyperparams:
        a = self.agent
        return AgentHyperparams(
            hidden_layers=int(a.hidden_layers),
            hidden_units=int(a.hidden_units),
            discount=float(a.discount),
            gae_lambda=float(a.gae_lambda),
            clip_ratio=float(a.clip_ratio),
            learning_rate=float(a.learning_rate),
            epochs=int(a.epochs),
            minibatch_size=int(a.minibatch_size),
            entropy_coef=float(a.entropy_coef),
            value_coef=float(a.value_coef),
            grad_clip=float(a.grad_clip),
            horizon=int(a.horizon),
            log_std_init=float(a.log_std_init),
            reward_scale=float(a.reward_scale),
            queue_scale=float(a.queue_scale),
            z_scale=float(a.z_scale),
            total_steps=int(a.total_steps),
        )

    def initial_level(self) -> int:
        if self.episode.initial_level is not None:
            return int(self.episode.initial_level)
        return int(self.compression_model().levels[-1])

    # -- identity ----------------------------------------------------------------

    def resolved_dict(self) -> dict:
        out = {name: asdict(getattr(self, name)) for name in _SECTIONS}
        out["channel"]["direct_link_present"] = list(self.direct_link_flags())
        out["tradeoff"]["accuracy_threshold"] = list(self.accuracy_thresholds())
        out["system"]["cycles_per_pattern"] = list(self.cycle_loads())
        out["episode"]["initial_level"] = self.initial_level()
        if self.compression.levels is not None:
            out["compression"]["levels"] = [int(c) for c in self.compression.levels]
        return out

    @property
    def config_hash(self) -> str:
        canonical = json.dumps(self.resolved_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    # -- construction ---------------------------------------------------------------

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        kwargs: dict[str, Any] = {}
        for key, value in data.items():
            if key in _SECTIONS:
                if not isinstance(value, dict):
                    raise ConfigError(f"{key}: expected an object")
                try:
                    kwargs[key] = _build_section(_SECTIONS[key], value, key)
                except TypeError as exc:
                    raise ConfigError(f"{key}: {exc}") from None
            elif key in _TOP_LEVEL_SCALARS:
                kwargs[key] = _TOP_LEVEL_SCALARS[key](value)
            else:
                raise ConfigError(f"{key}: unknown key")
        return cls(**kwargs)


def load_config(path: str) -> ExperimentConfig:
    """Parse and validate a JSON experiment configuration file."""
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return ExperimentConfig.from_dict(data)
