"""Rician links, channel composition, and the achievable-rate formula."""

import dataclasses
import math

import numpy as np
import pytest

from risedge.channel import (ChannelConfig, ChannelSet, RisProfile, achievable_rate,
                             composite_channel, db_to_linear, dbm_to_watt, draw_channels,
                             draw_episode_geometry, rate_from_modes, rician_link,
                             unit_modulus_anchor)


@pytest.fixture
def cfg():
    return ChannelConfig(num_devices=1, ue_antennas=1, ap_antennas=4, ris_elements=8)


def test_db_conversions():
    assert db_to_linear(0.0) == 1.0
    assert db_to_linear(10.0) == pytest.approx(10.0)
    assert dbm_to_watt(-120.0) == pytest.approx(1e-15)
    assert dbm_to_watt(30.0) == pytest.approx(1.0)


class TestRicianLink:
    def test_huge_rice_factor_collapses_to_anchor(self):
        rng = np.random.default_rng(0)
        anchor = unit_modulus_anchor(4, 2, rng)
        h = rician_link(0.25, 200.0, anchor, rng)
        assert np.max(np.abs(h - 0.5 * anchor)) < 1e-6

    def test_average_power_matches_gain(self):
        rng = np.random.default_rng(1)
        anchor = unit_modulus_anchor(2, 2, rng)
        gain = db_to_linear(-62.60)
        total = 0.0
        n = 20000
        for _ in range(n):
            h = rician_link(gain, 25.0, anchor, rng)
            total += np.mean(np.abs(h) ** 2)
        assert abs(total / n - gain) / gain < 0.02

    def test_absent_direct_link_is_zero(self, cfg):
        rng = np.random.default_rng(2)
        geo = draw_episode_geometry(cfg, rng)
        cs = draw_channels(cfg, geo, rng)
        assert np.all(cs.h_direct[0] == 0.0)
        assert cs.h_direct[0].shape == (4, 1)

    def test_shapes(self, cfg):
        rng = np.random.default_rng(3)
        geo = draw_episode_geometry(cfg, rng)
        cs = draw_channels(cfg, geo, rng)
        assert cs.h_ue_ris[0].shape == (8, 1)
        assert cs.h_ris_ap.shape == (4, 8)

    def test_anchor_entries_unit_modulus(self):
        anchor = unit_modulus_anchor(6, 3, np.random.default_rng(4))
        assert np.allclose(np.abs(anchor), 1.0)
        assert np.linalg.matrix_rank(anchor) == 1

    def test_displacement_within_bound(self, cfg):
        rng = np.random.default_rng(5)
        for _ in range(50):
            geo = draw_episode_geometry(cfg, rng)
            assert np.all(np.abs(geo.displacement_m) <= cfg.max_displacement_m)
            assert np.all(geo.gain_ue_ris > 0.0)


class TestCompositeChannel:
    def _channel_set(self, rng, m=3):
        return ChannelSet(
            h_direct=[rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))],
            h_ue_ris=[rng.standard_normal((m, 2)) + 1j * rng.standard_normal((m, 2))],
            h_ris_ap=rng.standard_normal((2, m)) + 1j * rng.standard_normal((2, m)),
        )

    def test_zero_phases_is_plain_product(self):
        rng = np.random.default_rng(6)
        cs = self._channel_set(rng)
        h = composite_channel(cs, RisProfile(np.zeros(3)), 0)
        assert np.allclose(h, cs.h_direct[0] + cs.h_ris_ap @ cs.h_ue_ris[0])

    def test_scalar_pi_flips_sign(self):
        cs = ChannelSet(
            h_direct=[np.array([[1.0 + 1.0j]])],
            h_ue_ris=[np.array([[0.5 - 0.25j]])],
            h_ris_ap=np.array([[2.0 + 0.5j]]),
        )
        h = composite_channel(cs, RisProfile(np.array([math.pi])), 0)
        expected = cs.h_direct[0] - cs.h_ris_ap * cs.h_ue_ris[0]
        assert np.allclose(h, expected, atol=1e-12)

    def test_scalar_optimal_phase_beats_grid(self):
        rng = np.random.default_rng(7)
        for _ in range(10):
            h_d = rng.standard_normal() + 1j * rng.standard_normal()
            h_ur = rng.standard_normal() + 1j * rng.standard_normal()
            h_ra = rng.standard_normal() + 1j * rng.standard_normal()
            cs = ChannelSet(h_direct=[np.array([[h_d]])], h_ue_ris=[np.array([[h_ur]])],
                            h_ris_ap=np.array([[h_ra]]))
            phi_star = (np.angle(h_d) - np.angle(h_ra * h_ur)) % (2 * math.pi)
            best = abs(composite_channel(cs, RisProfile(np.array([phi_star])), 0)[0, 0])
            grid = np.linspace(0.0, 2 * math.pi, 10_000)
            grid_best = max(
                abs(h_d + h_ra * np.exp(1j * phi) * h_ur) for phi in grid)
            assert best >= grid_best - 1e-6

    def test_linear_in_each_link(self):
        rng = np.random.default_rng(8)
        cs = self._channel_set(rng)
        prof = RisProfile(rng.uniform(0, 2 * math.pi, 3))
        h1 = composite_channel(cs, prof, 0)
        cs2 = ChannelSet([2.0 * cs.h_direct[0]], cs.h_ue_ris, cs.h_ris_ap)
        h2 = composite_channel(cs2, prof, 0)
        assert np.allclose(h2 - h1, cs.h_direct[0])
        cs3 = ChannelSet(cs.h_direct, [3.0 * cs.h_ue_ris[0]], cs.h_ris_ap)
        h3 = composite_channel(cs3, prof, 0)
        assert np.allclose(h3 - cs.h_direct[0], 3.0 * (h1 - cs.h_direct[0]))

    def test_reflection_unit_modulus(self):
        prof = RisProfile(np.random.default_rng(9).uniform(0, 2 * math.pi, 16))
        assert np.allclose(np.abs(prof.reflection), 1.0)

    def test_rejects_bad_phase_range(self):
        with pytest.raises(ValueError):
            RisProfile(np.array([-0.1]))
        with pytest.raises(ValueError):
            RisProfile(np.array([2 * math.pi + 0.01]))

    def test_rejects_shape_mismatch(self):
        rng = np.random.default_rng(10)
        cs = self._channel_set(rng)
        with pytest.raises(ValueError):
            composite_channel(cs, RisProfile(np.zeros(5)), 0)


class TestAchievableRate:
    def test_zero_channel_zero_rate(self):
        h = np.zeros((2, 2), dtype=complex)
        f = np.eye(2, dtype=complex)
        assert achievable_rate(h, f, 1.0, 1e6) == 0.0

    def test_scalar_capacity(self):
        # |h|^2 = 1, sigma^2 = 1, F = 3 -> W log2(4) = 2W
        h = np.array([[1.0]], dtype=complex)
        f = np.array([[3.0]], dtype=complex)
        assert achievable_rate(h, f, 1.0, 5e6) == pytest.approx(2 * 5e6, rel=1e-12)

    def test_eigenmode_identity(self):
        rng = np.random.default_rng(11)
        for _ in range(10):
            h = rng.standard_normal((3, 2)) + 1j * rng.standard_normal((3, 2))
            gram = h.conj().T @ h
            lam, u = np.linalg.eigh(gram)
            p = rng.uniform(0.1, 2.0, size=2)
            f = (u * p[np.newaxis, :]) @ u.conj().T
            sigma2, w = 0.5, 2e7
            det_rate = achievable_rate(h, f, sigma2, w)
            mode_rate = w * np.sum(np.log2(1.0 + lam * p / sigma2))
            assert det_rate == pytest.approx(mode_rate, rel=1e-9)
            assert det_rate == pytest.approx(
                rate_from_modes(p, lam, sigma2, w), rel=1e-9)

    def test_monotone_in_covariance_scale(self):
        rng = np.random.default_rng(12)
        h = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
        a = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
        f = a.conj().T @ a
        rates = [achievable_rate(h, c * f, 1.0, 1e6) for c in (0.0, 0.5, 1.0, 2.0, 8.0)]
        assert all(r2 >= r1 - 1e-9 for r1, r2 in zip(rates, rates[1:]))
        assert rates[0] == 0.0

    def test_rejects_indefinite_covariance(self):
        h = np.eye(2, dtype=complex)
        with pytest.raises(ValueError, match="indefinite"):
            achievable_rate(h, np.diag([1.0, -0.2]).astype(complex), 1.0, 1e6)

    def test_rejects_shape_mismatch(self):
        with pytest.raises(ValueError):
            achievable_rate(np.ones((2, 2), dtype=complex), np.eye(3, dtype=complex), 1.0, 1.0)


def test_draw_channels_deterministic_for_seed():
    cfg = ChannelConfig(num_devices=2, direct_link_present=(True, False))
    geo = draw_episode_geometry(cfg, np.random.default_rng(1))
    a = draw_channels(cfg, geo, np.random.default_rng(2))
    b = draw_channels(cfg, geo, np.random.default_rng(2))
    assert np.array_equal(a.h_ris_ap, b.h_ris_ap)
    assert np.array_equal(a.h_direct[0], b.h_direct[0])
    assert np.array_equal(a.h_ue_ris[1], b.h_ue_ris[1])


def test_config_rejects_bad_values():
    with pytest.raises(ValueError):
        ChannelConfig(bandwidth_hz=-1.0)
    with pytest.raises(ValueError):
        ChannelConfig(num_devices=2, direct_link_present=(True,))


def test_mobility_perturbs_device_side_gains_only():
    cfg = ChannelConfig(num_devices=1, max_displacement_m=5.0)
    rng = np.random.default_rng(13)
    gains = [draw_episode_geometry(cfg, rng) for _ in range(20)]
    ue_ris = {float(g.gain_ue_ris[0]) for g in gains}
    ris_ap = {g.gain_ris_ap for g in gains}
    assert len(ue_ris) > 1          # user motion changes the device-side path
    assert len(ris_ap) == 1         # the static link never moves
    assert ris_ap == {cfg.gain_ris_ap}
