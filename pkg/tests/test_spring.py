import dataclasses
import math

import numpy as np
import pytest

import optspring as osp

# Independent hand evaluations of the closed forms; see inline oracles below.
K0_PAPER = 78791.16623878502     # N/m at eta=1, 0.1 W, half-linewidth detuning
ANTIDAMP_ZERO = 168.87700283105  # 1/s, velocity coupling at zero frequency


def inline_static_spring(eta, power_w, detuning, ti=800e-6, lam=1.064e-6):
    """Direct evaluation of the static spring coefficient."""
    return (128.0 * math.pi * eta * power_w * detuning
            / (ti ** 2 * 299792458.0 * lam)) / (1.0 + detuning ** 2)


def test_static_spring_value(config):
    k0 = osp.static_spring_constant(config)
    assert k0 == pytest.approx(inline_static_spring(1.0, 0.1, 0.5), rel=1e-12)
    assert k0 == pytest.approx(K0_PAPER, rel=1e-9)
    assert k0 == pytest.approx(7.9e4, rel=0.01)


def test_static_spring_zero_detuning(config):
    cfg = dataclasses.replace(config, detuning_over_gamma=0.0)
    assert osp.static_spring_constant(cfg) == 0.0


def test_static_spring_odd_in_detuning(config):
    flipped = dataclasses.replace(config, detuning_over_gamma=-0.5)
    assert osp.static_spring_constant(flipped) == -osp.static_spring_constant(config)


def test_spring_at_zero_frequency(config, derived):
    resp = osp.spring_response(0.0, config, derived)
    k0 = osp.static_spring_constant(config)
    assert resp.spring_constant_n_per_m == pytest.approx(k0 / 1.25, rel=1e-12)
    # inline oracle: 2 K0 / (M gamma) / (1 + d^2)^2
    expected = 2 * k0 / (derived.reduced_mass_kg * derived.linewidth_rad_s) / 1.25 ** 2
    assert resp.damping_rad_s == pytest.approx(expected, rel=1e-12)
    assert resp.damping_rad_s == pytest.approx(ANTIDAMP_ZERO, rel=1e-9)
    assert resp.damping_rad_s == pytest.approx(1.7e2, abs=5.0)


def test_spring_high_frequency_asymptotics(config, derived):
    gamma = derived.linewidth_rad_s
    k0 = osp.static_spring_constant(config)
    resp = osp.spring_response(1e3 * gamma, config, derived)
    assert resp.spring_constant_n_per_m == pytest.approx(-k0 * 1e-6, rel=1e-3)
    assert abs(resp.damping_rad_s) < 1e-10 * ANTIDAMP_ZERO


def test_spring_even_in_frequency(config, derived):
    rng = np.random.default_rng(11)
    omega = rng.uniform(0, 5, 40) * derived.linewidth_rad_s
    k_pos, g_pos = osp.spring_constant_and_damping(omega, config, derived)
    k_neg, g_neg = osp.spring_constant_and_damping(-omega, config, derived)
    np.testing.assert_array_equal(k_pos, k_neg)
    np.testing.assert_array_equal(g_pos, g_neg)


def test_spring_odd_symmetry_in_detuning(config, derived):
    rng = np.random.default_rng(12)
    omega = rng.uniform(0, 3, 50) * derived.linewidth_rad_s
    flipped = dataclasses.replace(config, detuning_over_gamma=-0.5)
    derived_f = osp.derive_cavity(flipped)
    k, _ = osp.spring_constant_and_damping(omega, config, derived)
    k_f, _ = osp.spring_constant_and_damping(omega, flipped, derived_f)
    np.testing.assert_allclose(k_f, -k, rtol=1e-14)


def test_zero_detuning_null(config):
    cfg = dataclasses.replace(config, detuning_over_gamma=0.0)
    der = osp.derive_cavity(cfg)
    omega = np.logspace(-3, 3, 31) * der.linewidth_rad_s
    k, g = osp.spring_constant_and_damping(omega, cfg, der)
    assert np.all(k == 0) and np.all(g == 0)


def test_antidamping_positive_for_positive_detuning(config, derived):
    omega = np.logspace(-3, 3, 61) * derived.linewidth_rad_s
    _, g = osp.spring_constant_and_damping(omega, config, derived)
    assert np.all(g > 0)


def test_negative_frequency_rejected(config, derived):
    with pytest.raises(ValueError):
        osp.spring_response(-1.0, config, derived)


def bisection_resonance(config, derived, lo=None, hi=None, steps=200):
    """Independent bisection oracle on W^2 = W_M^2 + K(W)/M."""
    def gap(omega):
        k, _ = osp.spring_constant_and_damping(omega, config, derived)
        return omega ** 2 - config.free_resonance_rad_s ** 2 \
            - float(k) / derived.reduced_mass_kg
    if lo is None:
        lo = config.free_resonance_rad_s
    if hi is None:
        k0 = abs(osp.static_spring_constant(config))
        hi = 10.0 * math.sqrt(config.free_resonance_rad_s ** 2
                              + k0 / derived.reduced_mass_kg)
    assert gap(lo) <= 0 < gap(hi)
    for _ in range(steps):
        mid = 0.5 * (lo + hi)
        if gap(mid) > 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def test_effective_resonance_vs_bisection_oracle(config, derived, spring):
    oracle = bisection_resonance(config, derived)
    assert spring.effective_frequency_rad_s == pytest.approx(oracle, rel=1e-9)
    assert spring.effective_frequency_rad_s / (2 * math.pi) == pytest.approx(
        1266.0, abs=5.0)
    assert spring.residual <= 1e-10


def test_effective_resonance_no_spring(config):
    cfg = dataclasses.replace(config, input_power_w=0.0)
    der = osp.derive_cavity(cfg)
    summary = osp.effective_resonance(cfg, der)
    assert summary.effective_frequency_rad_s == config.free_resonance_rad_s
    assert summary.optical_antidamping_rad_s == 0.0
    assert summary.dilution_factor == 1.0


def test_effective_resonance_above_free_resonance(config, spring):
    assert spring.effective_frequency_rad_s >= config.free_resonance_rad_s


def test_adiabatic_limit(config, derived, spring):
    # frozen-at-zero-frequency spring approximates the fixed point to
    # O((W_eff/linewidth)^2)
    k0_level, _ = osp.spring_constant_and_damping(0.0, config, derived)
    adiabatic = math.sqrt(config.free_resonance_rad_s ** 2
                          + float(k0_level) / derived.reduced_mass_kg)
    omega = spring.effective_frequency_rad_s
    bound = 10.0 * (omega / derived.linewidth_rad_s) ** 2
    assert abs(omega - adiabatic) / omega < bound


def test_statically_unstable_reported(config):
    cfg = dataclasses.replace(config, detuning_over_gamma=-0.5)
    der = osp.derive_cavity(cfg)
    with pytest.raises(osp.StaticInstabilityError, match="statically unstable"):
        osp.effective_resonance(cfg, der)


def test_calibrated_coupling_efficiency(config, measured_config,
                                        measured_spring):
    eta = measured_config.coupling_efficiency
    assert 0.6 < eta < 0.7
    assert eta == pytest.approx(0.65, abs=0.01)
    target = 2 * math.pi * 1018.0
    assert measured_spring.effective_frequency_rad_s == pytest.approx(
        target, rel=1e-3)


def test_calibration_rejects_unreachable_target(config):
    with pytest.raises(ValueError, match="not reachable"):
        osp.calibrate_coupling_efficiency(config, 2 * math.pi * 5000.0)


def test_dilution_metrics_paper_endpoints(measured_config, measured_spring):
    dilution, diluted_q, bound = osp.dilution_metrics(
        measured_spring, measured_config)
    assert dilution == pytest.approx(1018.0 / 12.7, rel=1e-3)
    assert diluted_q == pytest.approx(1.6e6, rel=0.05)
    assert diluted_q == pytest.approx(measured_config.mechanical_q * dilution)
    assert bound == pytest.approx(295.0 * (2 * math.pi * 12.7 / 19950.0)
                                  / measured_spring.effective_frequency_rad_s,
                                  rel=1e-12)


def test_dilution_no_spring_bound(config):
    cfg = dataclasses.replace(config, input_power_w=0.0)
    der = osp.derive_cavity(cfg)
    summary = osp.effective_resonance(cfg, der)
    dilution, diluted_q, bound = osp.dilution_metrics(summary, cfg)
    assert dilution == 1.0
    assert diluted_q == cfg.mechanical_q
    assert bound == pytest.approx(295.0 / 19950.0, rel=1e-12)
    assert bound == pytest.approx(14.8e-3, rel=0.01)


def test_dilution_linearity(measured_spring, measured_config):
    doubled = dataclasses.replace(
        measured_spring,
        effective_frequency_rad_s=2 * measured_spring.effective_frequency_rad_s)
    d1, q1, t1 = osp.dilution_metrics(measured_spring, measured_config)
    d2, q2, t2 = osp.dilution_metrics(doubled, measured_config)
    assert d2 == pytest.approx(2 * d1, rel=1e-12)
    assert q2 == pytest.approx(2 * q1, rel=1e-12)
    assert t2 == pytest.approx(t1 / 2, rel=1e-12)
