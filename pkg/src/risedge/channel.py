"""Rician fading links, surface-aided channel composition, and MIMO rate.

Links per device k and slot t:
  * direct device->AP           H_d   (N_a x N_u), absent for blocked devices
  * device->surface             H_ur  (M x N_u)
  * surface->AP (shared)        H_ra  (N_a x M)

Each link is block-i.i.d. Rician: a deterministic unit-modulus rank-1 anchor
frozen per episode carries the specular part, the scattered part is redrawn
every slot. The effective channel is H = H_d + H_ra diag(e^{j phi}) H_ur.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from risedge.linalg import complex_gaussian, logdet_psd, hermitian_eigh

LN2 = math.log(2.0)


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def dbm_to_watt(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


@dataclass(frozen=True)
class ChannelConfig:
    """Static radio geometry and fading parameters."""

    num_devices: int = 1
    ue_antennas: int = 1
    ap_antennas: int = 4
    ris_elements: int = 8
    bandwidth_hz: float = 1e8
    noise_power_w: float = dbm_to_watt(-120.0)
    carrier_hz: float = 5e9
    rice_factor_db_ue_ris: float = 25.0
    rice_factor_db_ris_ap: float = 25.0
    rice_factor_db_ue_ap: float = 25.0
    attenuation_db_ue_ris: float = 62.60
    attenuation_db_ris_ap: float = 66.34
    attenuation_db_ue_ap: float = 80.0
    direct_link_present: tuple[bool, ...] = (False,)
    max_displacement_m: float = 5.0
    reference_distance_m: float = 25.0

    def __post_init__(self):
        if self.num_devices < 1:
            raise ValueError("num_devices must be >= 1")
        if self.ris_elements < 1:
            raise ValueError("ris_elements must be >= 1")
        if self.bandwidth_hz <= 0.0:
            raise ValueError("bandwidth_hz must be positive")
        if self.noise_power_w <= 0.0:
            raise ValueError("noise power must be positive")
        if len(self.direct_link_present) != self.num_devices:
            raise ValueError("direct_link_present must have one flag per device")

    @property
    def gain_ue_ris(self) -> float:
        return db_to_linear(-self.attenuation_db_ue_ris)

    @property
    def gain_ris_ap(self) -> float:
        return db_to_linear(-self.attenuation_db_ris_ap)

    @property
    def gain_ue_ap(self) -> float:
        return db_to_linear(-self.attenuation_db_ue_ap)


@dataclass
class RisProfile:
    """Phase shifts of the reflecting elements, each in [0, 2*pi]."""

    phases: np.ndarray

    def __post_init__(self):
        self.phases = np.asarray(self.phases, dtype=np.float64)
        if self.phases.ndim != 1:
            raise ValueError("phases must be a flat vector")
        if np.any(self.phases < 0.0) or np.any(self.phases > 2.0 * math.pi):
            raise ValueError("phases must lie in [0, 2*pi]")

    @property
    def reflection(self) -> np.ndarray:
        """Diagonal of the unit-modulus reflection matrix."""
        return np.exp(1j * self.phases)


@dataclass
class ChannelSet:
    """One slot's channel realizations; surface->AP link is shared."""

    h_direct: list[np.ndarray]  # per device, (N_a x N_u)
    h_ue_ris: list[np.ndarray]  # per device, (M x N_u)
    h_ris_ap: np.ndarray        # (N_a x M)


@dataclass
class EpisodeGeometry:
    """Per-episode frozen state: specular anchors and displaced path gains."""

    anchor_ue_ris: list[np.ndarray]
    anchor_ue_ap: list[np.ndarray]
    anchor_ris_ap: np.ndarray
    gain_ue_ris: np.ndarray  # per device, linear
    gain_ue_ap: np.ndarray   # per device, linear
    gain_ris_ap: float
    displacement_m: np.ndarray = field(default_factory=lambda: np.zeros(1))


def unit_modulus_anchor(rows: int, cols: int, rng: np.random.Generator) -> np.ndarray:
    """Rank-1 outer product of unit-modulus vectors; every entry has power 1."""
    a = np.exp(1j * 2.0 * math.pi * rng.random(rows))
    b = np.exp(1j * 2.0 * math.pi * rng.random(cols))
    return np.outer(a, b.conj())


def draw_episode_geometry(cfg: ChannelConfig, rng: np.random.Generator) -> EpisodeGeometry:
    """Freeze specular anchors and the user displacement for one episode.

    The device may move up to max_displacement_m from its nominal position;
    both device-side links see the displaced distance through a log-distance
    exponent of 2. The surface->AP link is static.
    """
    k = cfg.num_devices
    anchors_ur = [unit_modulus_anchor(cfg.ris_elements, cfg.ue_antennas, rng) for _ in range(k)]
    anchors_ua = [unit_modulus_anchor(cfg.ap_antennas, cfg.ue_antennas, rng) for _ in range(k)]
    anchor_ra = unit_modulus_anchor(cfg.ap_antennas, cfg.ris_elements, rng)

    d0 = cfg.reference_distance_m
    delta = rng.uniform(-cfg.max_displacement_m, cfg.max_displacement_m, size=k)
    dist = np.maximum(0.1 * d0, d0 + delta)
    factor = (d0 / dist) ** 2  # closer -> higher gain
    return EpisodeGeometry(
        anchor_ue_ris=anchors_ur,
        anchor_ue_ap=anchors_ua,
        anchor_ris_ap=anchor_ra,
        gain_ue_ris=cfg.gain_ue_ris * factor,
        gain_ue_ap=cfg.gain_ue_ap * factor,
        gain_ris_ap=cfg.gain_ris_ap,
        displacement_m=delta,
    )


def rician_link(gain: float, rice_db: float, anchor: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One Rician realization: sqrt(g) (sqrt(k/(1+k)) anchor + sqrt(1/(1+k)) scatter)."""
    kappa = db_to_linear(rice_db)
    scatter = complex_gaussian(anchor.shape[0], anchor.shape[1], 1.0, rng)
    mix = math.sqrt(kappa / (1.0 + kappa)) * anchor + math.sqrt(1.0 / (1.0 + kappa)) * scatter
    return math.sqrt(gain) * mix


def draw_channels(cfg: ChannelConfig, geo: EpisodeGeometry, rng: np.random.Generator) -> ChannelSet:
    """Draw one slot's links; devices without a direct path get all zeros."""
    h_ra = rician_link(geo.gain_ris_ap, cfg.rice_factor_db_ris_ap, geo.anchor_ris_ap, rng)
    h_dir = []
    h_ur = []
    for k in range(cfg.num_devices):
        h_ur.append(rician_link(geo.gain_ue_ris[k], cfg.rice_factor_db_ue_ris, geo.anchor_ue_ris[k], rng))
        if cfg.direct_link_present[k]:
            h_dir.append(rician_link(geo.gain_ue_ap[k], cfg.rice_factor_db_ue_ap, geo.anchor_ue_ap[k], rng))
        else:
            h_dir.append(np.zeros((cfg.ap_antennas, cfg.ue_antennas), dtype=np.complex128))
    return ChannelSet(h_direct=h_dir, h_ue_ris=h_ur, h_ris_ap=h_ra)


def composite_channel(cs: ChannelSet, ris: RisProfile, device: int) -> np.ndarray:
    """Effective device->AP channel H_d + H_ra diag(e^{j phi}) H_ur."""
    h_d = cs.h_direct[device]
    h_ur = cs.h_ue_ris[device]
    h_ra = cs.h_ris_ap
    if h_ra.shape[1] != h_ur.shape[0] or h_d.shape != (h_ra.shape[0], h_ur.shape[1]):
        raise ValueError(
            f"inconsistent link shapes: direct {h_d.shape}, ue-ris {h_ur.shape}, ris-ap {h_ra.shape}"
        )
    if ris.phases.shape[0] != h_ra.shape[1]:
        raise ValueError(f"profile has {ris.phases.shape[0]} phases for {h_ra.shape[1]} elements")
    return h_d + (h_ra * ris.reflection[np.newaxis, :]) @ h_ur


def achievable_rate(h: np.ndarray, f: np.ndarray, noise_power: float, bandwidth: float) -> float:
    """Uplink rate W log2 |I + H F H^H / sigma^2| in bits/s.

    F must be a Hermitian PSD transmit covariance; indefinite input raises.
    """
    h = np.asarray(h, dtype=np.complex128)
    f = np.asarray(f, dtype=np.complex128)
    if f.shape != (h.shape[1], h.shape[1]):
        raise ValueError(f"covariance shape {f.shape} does not match channel {h.shape}")
    w_f, _ = hermitian_eigh(f)
    if w_f.size and w_f[-1] < -1e-10:
        raise ValueError(f"covariance is indefinite: min eigenvalue {w_f[-1]:.3e}")
    n_a = h.shape[0]
    m = np.eye(n_a, dtype=np.complex128) + (h @ f @ h.conj().T) / noise_power
    m = 0.5 * (m + m.conj().T)  # scrub round-off asymmetry before the eig pass
    return max(0.0, bandwidth * logdet_psd(m) / LN2)


def rate_from_modes(mode_powers: np.ndarray, eigenvalues: np.ndarray,
                    noise_power: float, bandwidth: float) -> float:
    """Rate via the eigenmode identity W sum log2(1 + lambda_i p_i / sigma^2).

    Identical to `achievable_rate` when the covariance is built on the
    eigenvectors of H^H H; used on the hot path where those modes are already
    in hand.
    """
    snr = eigenvalues * mode_powers / noise_power
    return float(bandwidth * np.sum(np.log1p(snr)) / LN2)
