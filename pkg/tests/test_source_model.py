import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from fpsqkd.errors import ConfigError, DomainError
from fpsqkd.source_model import (
    SourceConfig,
    coherence_suppression,
    generate_pulse_train,
    mu_for_level,
    photons_from_energy,
    photons_per_pulse,
    pm_voltage_to_state,
    power_budget,
    random_choices,
    voa_for_target_mu,
)

H = 6.62607015e-34
C = 299_792_458.0

# frozen from a 30-digit mpmath evaluation of E / (h c / lambda)
PHOTONS_1P4PJ_850NM = 5990598.715375824


def test_photons_per_pulse_default():
    n = photons_per_pulse(SourceConfig())
    assert n == pytest.approx(PHOTONS_1P4PJ_850NM, rel=1e-12)
    # published figure: about 6e6
    assert n == pytest.approx(5.99e6, rel=0.01)


def test_single_photon_energy_gives_one():
    lam = 850e-9
    assert photons_from_energy(H * C / lam, lam) == pytest.approx(1.0, rel=1e-12)


def test_peak_power_times_width_matches_energy():
    energy = 3.5e-3 * 400e-12  # rectangular 3.5 mW x 400 ps
    assert energy == pytest.approx(1.4e-12, rel=1e-12)
    assert photons_from_energy(energy, 850e-9) == pytest.approx(photons_per_pulse(SourceConfig()))


@pytest.mark.parametrize("energy,lam", [(0.0, 850e-9), (-1e-12, 850e-9), (1e-12, 0.0)])
def test_photons_rejects_nonpositive(energy, lam):
    with pytest.raises(DomainError):
        photons_from_energy(energy, lam)


@pytest.mark.parametrize(
    "mu,expected",
    [(0.5, 70.78500224696040), (0.0167, 85.54753757884475)],
)
def test_voa_for_target_mu(mu, expected):
    assert voa_for_target_mu(SourceConfig(), mu) == pytest.approx(expected, abs=1e-9)


def test_voa_zero_when_target_equals_output():
    cfg = SourceConfig()
    assert voa_for_target_mu(cfg, photons_per_pulse(cfg)) == 0.0


def test_voa_rejects_target_above_output():
    cfg = SourceConfig()
    with pytest.raises(DomainError):
        voa_for_target_mu(cfg, 2 * photons_per_pulse(cfg))
    with pytest.raises(DomainError):
        voa_for_target_mu(cfg, 0.0)


def test_mu_for_level():
    assert mu_for_level(0.5, 14.76) == pytest.approx(0.01671, abs=5e-6)
    assert mu_for_level(0.5, 0.0) == 0.5
    assert mu_for_level(0.5, 4.65) == pytest.approx(0.1714, abs=5e-5)
    with pytest.raises(DomainError):
        mu_for_level(0.5, -1.0)


@given(st.floats(min_value=1e-6, max_value=1e6))
def test_budget_round_trip(target):
    cfg = SourceConfig()
    voa = voa_for_target_mu(cfg, target)
    back = mu_for_level(photons_per_pulse(cfg) * 10 ** (-voa / 10), 0.0)
    assert back == pytest.approx(target, rel=1e-9)


class TestPhaseModulator:
    def test_zero_volts_is_plus45(self):
        s = pm_voltage_to_state(0.0, 1.56)
        assert s.label == "P45"
        np.testing.assert_allclose(s.jones, np.array([1, 1]) / math.sqrt(2), atol=1e-15)

    def test_v_pi_is_minus45(self):
        s = pm_voltage_to_state(1.56, 1.56)
        assert s.label == "M45"
        np.testing.assert_allclose(s.stokes, [0, -1, 0], atol=1e-12)

    def test_half_v_pi_is_circular(self):
        s = pm_voltage_to_state(0.78, 1.56)
        assert s.label == "RHC"
        np.testing.assert_allclose(s.jones, np.array([1, 1j]) / math.sqrt(2), atol=1e-15)
        assert pm_voltage_to_state(-0.78, 1.56).label == "LHC"

    def test_measured_circular_voltages_still_label(self):
        assert pm_voltage_to_state(0.81, 1.56).label == "RHC"
        assert pm_voltage_to_state(-0.76, 1.56).label == "LHC"

    def test_far_from_bb84_states_is_custom(self):
        assert pm_voltage_to_state(0.4, 1.56).label == "custom"

    def test_rejects_bad_v_pi(self):
        with pytest.raises(DomainError):
            pm_voltage_to_state(1.0, 0.0)

    def test_table_states_on_poincare_sphere(self):
        v_pi = 1.56
        states = {lab: pm_voltage_to_state(v, v_pi) for lab, v in
                  [("P45", 0.0), ("M45", 1.56), ("RHC", 0.78), ("LHC", -0.78)]}
        s = {k: v.stokes for k, v in states.items()}
        assert np.dot(s["P45"], s["M45"]) == pytest.approx(-1, abs=1e-9)
        assert np.dot(s["RHC"], s["LHC"]) == pytest.approx(-1, abs=1e-9)
        keys = list(s)
        for i in range(4):
            for j in range(i + 1, 4):
                assert np.linalg.norm(s[keys[i]] - s[keys[j]]) > 1.0

    @given(st.floats(min_value=-10, max_value=10))
    def test_periodic_in_two_v_pi(self, v):
        a = pm_voltage_to_state(v, 1.56)
        b = pm_voltage_to_state(v + 2 * 1.56, 1.56)
        assert a.same_as(b)


class TestPulseTrain:
    def test_single_pulse_from_table(self):
        cfg = SourceConfig()
        (p,) = generate_pulse_train(cfg, 1, [("Low", "M45")], rng_seed=0)
        assert p.intensity_transmission == pytest.approx(10 ** -1.476)
        assert p.pm_relative_phase == pytest.approx(math.pi)
        assert 0 <= p.global_phase < 2 * math.pi

    def test_deterministic(self):
        cfg = SourceConfig()
        ch = random_choices(cfg, 2, seed=5)
        a = generate_pulse_train(cfg, 2, ch, rng_seed=9)
        b = generate_pulse_train(cfg, 2, ch, rng_seed=9)
        assert [p.global_phase for p in a] == [p.global_phase for p in b]
        assert [(p.level, p.pol) for p in a] == [(p.level, p.pol) for p in b]

    def test_phase_uniform(self):
        cfg = SourceConfig()
        n = 10_000
        train = generate_pulse_train(cfg, n, random_choices(cfg, n, 1), rng_seed=2024)
        phases = np.array([p.global_phase for p in train])
        assert stats.kstest(phases / (2 * math.pi), "uniform").pvalue > 0.01

    def test_shape_shared(self):
        cfg = SourceConfig()
        train = generate_pulse_train(cfg, 50, random_choices(cfg, 50, 3), rng_seed=1)
        assert all(p.shape is train[0].shape for p in train)

    def test_phases_reduced(self):
        cfg = SourceConfig()
        train = generate_pulse_train(cfg, 20, [("High", "LHC")] * 20, rng_seed=4)
        for p in train:
            assert 0 <= p.pm_relative_phase < 2 * math.pi
            assert 0 <= p.global_phase < 2 * math.pi

    def test_unknown_label(self):
        with pytest.raises(ConfigError):
            generate_pulse_train(SourceConfig(), 1, [("Huge", "P45")], rng_seed=0)
        with pytest.raises(ConfigError):
            generate_pulse_train(SourceConfig(), 1, [("High", "H")], rng_seed=0)

    def test_choice_count_must_match(self):
        with pytest.raises(DomainError):
            generate_pulse_train(SourceConfig(), 2, [("High", "P45")], rng_seed=0)


class TestCoherenceSuppression:
    def test_formula_rtt(self):
        r = coherence_suppression(SourceConfig())
        assert r.rtt_s == pytest.approx(7.2e-12, rel=1e-3)
        assert r.passes_per_period == 1387

    def test_quoted_rtt(self):
        r = coherence_suppression(SourceConfig(), rtt=20e-12)
        assert r.passes_per_period == 500
        assert r.suppression_dB_lower_bound >= 500


class TestPowerBudget:
    def test_published_entries(self):
        b = power_budget(SourceConfig())
        assert b.ld_dc_mW == pytest.approx(1.728, rel=1e-12)
        assert round(b.ld_dc_mW, 1) == 1.7
        assert b.ld_rf_mW == pytest.approx(12.5, rel=1e-12)

    def test_zero_duty(self):
        assert power_budget(SourceConfig(rf_pulse_width=0.0)).ld_rf_mW == 0.0


class TestConfigInvariants:
    def test_bias_above_threshold(self):
        with pytest.raises(ConfigError):
            SourceConfig(bias_current=40e-3)

    def test_reference_level_required(self):
        with pytest.raises(ConfigError):
            SourceConfig(am_levels=(("A", 1.0, 1.0), ("B", 2.0, 3.0)))
        with pytest.raises(ConfigError):
            SourceConfig(am_levels=(("A", 1.0, 0.0), ("B", 2.0, 0.0)))

    def test_reflectivity_range(self):
        with pytest.raises(ConfigError):
            SourceConfig(mirror_reflectivity=1.0)
