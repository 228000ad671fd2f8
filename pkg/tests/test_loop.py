import dataclasses
import math

import numpy as np
import pytest

import optspring as osp
from optspring.scenario import servo_gain_for_quality


def servo_for_q(q, spring, derived):
    return osp.ServoConfig(
        damping_gain_rad_s=servo_gain_for_quality(q, spring, derived))


def test_static_compliance(measured_config, measured_derived, measured_spring):
    servo = servo_for_q(2.0, measured_spring, measured_derived)
    h0 = osp.closed_loop_susceptibility(0.0, measured_spring, servo,
                                        measured_config, measured_derived)
    k_total = measured_derived.reduced_mass_kg \
        * measured_spring.effective_frequency_rad_s ** 2
    assert complex(h0) == pytest.approx(1.0 / k_total, rel=1e-12)


def test_resonant_response_ratio(measured_config, measured_derived,
                                 measured_spring):
    # coldest configuration: resonant over static response equals Q_eff = 1.1
    servo = servo_for_q(1.1, measured_spring, measured_derived)
    omega = measured_spring.effective_frequency_rad_s
    h_res = osp.closed_loop_susceptibility(omega, measured_spring, servo,
                                           measured_config, measured_derived)
    h0 = osp.closed_loop_susceptibility(0.0, measured_spring, servo,
                                        measured_config, measured_derived)
    assert abs(complex(h_res)) / abs(complex(h0)) == pytest.approx(1.1, rel=1e-9)
    net = osp.net_damping(measured_spring, servo, measured_derived)
    assert abs(complex(h_res)) == pytest.approx(
        1.0 / (measured_derived.reduced_mass_kg * net * omega), rel=1e-12)


def test_detuned_without_servo_is_unstable(config, derived, spring):
    report = osp.assess_stability(spring, osp.ServoConfig(0.0), config, derived)
    assert not report.stable
    assert report.net_damping_rad_s < 0
    assert report.decay_rate == pytest.approx(report.net_damping_rad_s / 2)


def test_zero_detuning_is_stable(config):
    cfg = dataclasses.replace(config, detuning_over_gamma=0.0)
    der = osp.derive_cavity(cfg)
    spr = osp.effective_resonance(cfg, der)
    report = osp.assess_stability(spr, osp.ServoConfig(0.0), cfg, der)
    assert report.stable
    assert report.net_damping_rad_s == pytest.approx(
        der.mechanical_damping_rad_s, rel=1e-12)


def test_double_antidamping_servo(config, derived, spring):
    # servo at twice the optical anti-damping leaves roughly the
    # anti-damping level as net damping
    servo = osp.ServoConfig(2.0 * spring.optical_antidamping_rad_s)
    report = osp.assess_stability(spring, servo, config, derived)
    assert report.stable
    expected = spring.optical_antidamping_rad_s + derived.mechanical_damping_rad_s
    assert report.net_damping_rad_s == pytest.approx(expected, rel=1e-12)
    assert report.net_damping_rad_s == pytest.approx(1.7e2, abs=5.0)


def test_disabled_servo_contributes_nothing(config, derived, spring):
    armed = osp.ServoConfig(damping_gain_rad_s=500.0, enabled=False)
    report = osp.assess_stability(spring, armed, config, derived)
    assert report.net_damping_rad_s == pytest.approx(
        derived.mechanical_damping_rad_s - spring.optical_antidamping_rad_s)


def test_sweep_matches_analytic_modulus(measured_config, measured_derived,
                                        measured_spring):
    servo = servo_for_q(5.0, measured_spring, measured_derived)
    grid = np.arange(850.0, 1100.0 + 0.25, 0.25)
    tf = osp.force_response_sweep(grid, measured_spring, servo,
                                  measured_config, measured_derived)
    assert tf.frequency_hz.size == 1001
    assert np.all(np.isfinite(tf.response))
    omega = 2 * np.pi * grid
    mass = measured_derived.reduced_mass_kg
    w0 = measured_spring.effective_frequency_rad_s
    net = osp.net_damping(measured_spring, servo, measured_derived)
    analytic = 1.0 / (mass * np.sqrt((w0 ** 2 - omega ** 2) ** 2
                                     + (net * omega) ** 2))
    np.testing.assert_allclose(np.abs(tf.response), analytic, rtol=1e-12)


def test_sweep_refuses_unstable_plant(config, derived, spring):
    with pytest.raises(osp.UnstablePlantError) as err:
        osp.force_response_sweep([900.0, 1000.0], spring,
                                 osp.ServoConfig(0.0), config, derived)
    assert err.value.growth_rate == pytest.approx(
        abs(osp.net_damping(spring, osp.ServoConfig(0.0), derived)) / 2)
    forced = osp.force_response_sweep([900.0, 1000.0], spring,
                                      osp.ServoConfig(0.0), config, derived,
                                      allow_unstable=True)
    assert np.all(np.isfinite(forced.response))


def test_per_bin_spring_close_to_two_pole(measured_config, measured_derived,
                                          measured_spring):
    # resonance sits ~1e-2 linewidths below the cavity pole, so freezing
    # the spring at the resonance is accurate to O(1e-4) in-band
    servo = servo_for_q(2.0, measured_spring, measured_derived)
    grid = np.linspace(850.0, 1100.0, 201)
    frozen = osp.force_response_sweep(grid, measured_spring, servo,
                                      measured_config, measured_derived)
    exact = osp.force_response_sweep(grid, measured_spring, servo,
                                     measured_config, measured_derived,
                                     per_bin_spring=True)
    rel = np.abs(exact.response - frozen.response) / np.abs(exact.response)
    assert np.max(rel) < 1e-3
    assert np.max(rel) > 0  # the two evaluations genuinely differ


def test_fitted_resonance_independent_of_gain(measured_config,
                                              measured_derived,
                                              measured_spring):
    # the plant resonance does not move with servo gain; the fit recovers
    # it from each sweep even though the raw response peak shifts with
    # damping
    grid = np.arange(2.0, 3300.0, 0.5)
    fitted = []
    for q in (20.0, 5.0, 2.0, 1.1):
        servo = servo_for_q(q, measured_spring, measured_derived)
        tf = osp.force_response_sweep(grid, measured_spring, servo,
                                      measured_config, measured_derived)
        fit = osp.fit_lorentzian(tf.frequency_hz, np.abs(tf.response) ** 2)
        fitted.append(fit.frequency_rad_s)
    spread = (max(fitted) - min(fitted)) / (2 * np.pi)
    assert spread < 0.5  # one grid bin
    for value in fitted:
        assert value == pytest.approx(
            measured_spring.effective_frequency_rad_s, rel=1e-6)


def test_ringdown_conservative_energy(config):
    # negligible loss: amplitude must hold to 1e-6 over 1000 cycles
    cfg = dataclasses.replace(config, input_power_w=0.0,
                              free_resonance_rad_s=2 * math.pi * 200.0,
                              mechanical_q=1e15)
    servo = osp.ServoConfig(0.0, enabled=False)
    dt = 1.0 / (200.0 * 300.0)
    series = osp.time_domain_ringdown(cfg, servo, duration_s=5.0, dt_s=dt,
                                      x0_m=1e-9)
    first = np.max(np.abs(series.samples[:3000]))
    last = np.max(np.abs(series.samples[-3000:]))
    assert abs(last - first) / first < 1e-6


def test_ringdown_recovers_mechanical_q(config):
    cfg = dataclasses.replace(config, input_power_w=0.0)
    servo = osp.ServoConfig(0.0, enabled=False)
    dt = 1.0 / (12.7 * 126.0)
    series = osp.time_domain_ringdown(cfg, servo, duration_s=120.0, dt_s=dt,
                                      x0_m=1e-9)
    freq, rate, quality = osp.ringdown_fit(series)
    assert freq / (2 * math.pi) == pytest.approx(12.7, rel=1e-4)
    assert quality == pytest.approx(19950.0, rel=0.01)


def test_ringdown_unstable_growth(config, derived, spring):
    servo = osp.ServoConfig(0.0)
    net = osp.net_damping(spring, servo, derived)
    assert net < 0
    f_eff = spring.effective_frequency_rad_s / (2 * math.pi)
    series = osp.time_domain_ringdown(config, servo, duration_s=0.06,
                                      dt_s=1.0 / (200.0 * f_eff), x0_m=1e-12)
    _, rate, _ = osp.ringdown_fit(series)
    growth = -rate
    # doubling time of the envelope is ln2 * 2 / |net|
    assert growth == pytest.approx(abs(net) / 2, rel=1e-2)
    assert math.log(2) / growth == pytest.approx(2 * math.log(2) / abs(net),
                                                 rel=1e-2)


def test_ringdown_rejects_coarse_step(config, derived, spring):
    f_eff = spring.effective_frequency_rad_s / (2 * math.pi)
    with pytest.raises(ValueError, match="dt too coarse"):
        osp.time_domain_ringdown(config, osp.ServoConfig(1e4), duration_s=0.1,
                                 dt_s=1.0 / (10.0 * f_eff), x0_m=1e-12)


def test_transfer_function_csv_roundtrip(tmp_path, measured_config,
                                         measured_derived, measured_spring):
    servo = servo_for_q(5.0, measured_spring, measured_derived)
    grid = np.linspace(900.0, 1100.0, 21)
    tf = osp.force_response_sweep(grid, measured_spring, servo,
                                  measured_config, measured_derived)
    path = tmp_path / "tf.csv"
    tf.to_csv(path, {"config_hash": "deadbeef", "seed": 5})
    meta, cols = osp.read_csv(path)
    assert meta["config_hash"] == "deadbeef"
    assert meta["seed"] == "5"
    np.testing.assert_array_equal(cols["frequency_hz"], grid)
    np.testing.assert_array_equal(cols["real_m_per_n"], tf.response.real)
    np.testing.assert_array_equal(cols["imag_m_per_n"], tf.response.imag)


def test_timeseries_csv_roundtrip(tmp_path):
    ts = osp.TimeSeries(sample_rate_hz=100.0,
                        samples=np.sin(np.linspace(0, 6, 50)), seed=9)
    path = tmp_path / "ts.csv"
    ts.to_csv(path)
    meta, cols = osp.read_csv(path)
    assert meta["seed"] == "9"
    np.testing.assert_array_equal(cols["displacement_m"], ts.samples)
