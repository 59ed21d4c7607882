import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trapstab.errors import FitQualityError, InvalidParameterError
from trapstab.spectroscopy import (LINEAR_RANGE_RAD, ExponentialDecayFit, FringeDataset, QubitReference,
                                   RamseyConfig, RamseyFringeFit, decoherence_rate, fit_fringe,
                                   measure_contrast, ramsey_probability, sample_fringe_point, scan_detunings,
                                   scan_fringe, track_frequency, two_point_drift_estimate,
                                   two_point_probabilities)
from trapstab.trap_core import TWO_PI

CFG = RamseyConfig(delay=1e-3, contrast=0.4, offset=0.5)


def test_probability_examples():
    cfg = RamseyConfig(delay=1e-3, contrast=0.5, offset=0.5)
    assert ramsey_probability(0.0, cfg) == 1.0
    assert ramsey_probability(math.pi / cfg.delay, CFG) == pytest.approx(CFG.offset - CFG.contrast, abs=1e-15)
    assert CFG.fringe_period == pytest.approx(TWO_PI * 1e3, rel=1e-15)


@given(d=st.floats(-1e5, 1e5))
def test_probability_is_periodic(d):
    assert ramsey_probability(d + CFG.fringe_period, CFG) == pytest.approx(ramsey_probability(d, CFG), abs=1e-9)


def test_config_validation():
    with pytest.raises(InvalidParameterError):
        RamseyConfig(delay=0.0)
    with pytest.raises(InvalidParameterError):
        RamseyConfig(delay=1e-3, contrast=0.6)
    with pytest.raises(InvalidParameterError):
        RamseyConfig(delay=1e-3, contrast=0.4, offset=0.7)
    with pytest.raises(InvalidParameterError):
        RamseyConfig(delay=1e-3, shots_per_point=0)


def test_binomial_sampling():
    assert sample_fringe_point(0.0, 100, 1) == 0
    assert sample_fringe_point(1.0, 100, 1) == 100
    draws = sample_fringe_point(np.full(20000, 0.5), 100, 7)
    assert draws.mean() == pytest.approx(50.0, abs=0.1)
    assert draws.std() == pytest.approx(5.0, rel=0.03)
    assert sample_fringe_point(0.3, 100, 5) == sample_fringe_point(0.3, 100, 5)
    with pytest.raises(InvalidParameterError):
        sample_fringe_point(1.2, 100, 0)


def test_two_point_balanced_is_zero():
    assert two_point_drift_estimate(0.5, 0.5, CFG).drift == 0.0


def test_two_point_recovers_20_hz():
    shift = TWO_PI * 20.0
    pa, pb = two_point_probabilities(shift, CFG)
    exact = two_point_drift_estimate(pa, pb, CFG)
    linear = two_point_drift_estimate(pa, pb, CFG, linear=True)
    assert exact.drift == pytest.approx(shift, rel=1e-12)
    assert linear.drift == pytest.approx(shift, rel=0.02)
    assert exact.in_range


def test_two_point_flags_excursions():
    inside = TWO_PI * 0.49 / (TWO_PI * CFG.delay)
    outside = 0.55 / CFG.delay
    assert two_point_drift_estimate(*two_point_probabilities(TWO_PI * inside, CFG), CFG).in_range
    assert not two_point_drift_estimate(*two_point_probabilities(outside, CFG), CFG).in_range
    assert not two_point_drift_estimate(*two_point_probabilities(-outside, CFG), CFG).in_range


@settings(max_examples=100)
@given(phase=st.floats(-1.4, 1.4))
def test_two_point_is_odd(phase):
    shift = phase / CFG.delay
    plus = two_point_drift_estimate(*two_point_probabilities(shift, CFG), CFG)
    minus = two_point_drift_estimate(*two_point_probabilities(-shift, CFG), CFG)
    assert plus.drift == pytest.approx(-minus.drift, abs=1e-9)
    assert plus.drift == pytest.approx(shift, rel=1e-9, abs=1e-9)
    assert plus.in_range == (abs(phase) <= LINEAR_RANGE_RAD)


def test_fringe_fit_exact_on_clean_data():
    cfg = RamseyConfig(delay=1e-3, contrast=0.37, offset=0.48, shots_per_point=1)
    x = scan_detunings(cfg.delay, 24, periods=2)
    shift = TWO_PI * 123.0
    y = ramsey_probability(x - shift, cfg)
    est = RamseyFringeFit(delay=cfg.delay).fit(x, y)
    assert est.contrast_ == pytest.approx(0.37, abs=1e-9)
    assert est.offset_ == pytest.approx(0.48, abs=1e-9)
    assert est.center_ == pytest.approx(shift, abs=1e-9 * TWO_PI * 1e3)
    assert np.allclose(est.predict(x), y, atol=1e-12)


def test_fringe_period_recovered():
    x = scan_detunings(1e-3, 48, periods=3)
    y = ramsey_probability(x, CFG)
    est = RamseyFringeFit(delay=0.97e-3, fit_period=True).fit(x, y)
    assert est.result().period_hz == pytest.approx(1000.0, rel=1e-9)


def test_fringe_dataset_csv_round_trip(tmp_path):
    data = scan_fringe(scan_detunings(1e-3, 16), CFG, seed=3)
    data.to_csv(tmp_path / "f.csv")
    back = FringeDataset.from_csv(tmp_path / "f.csv", delay=1e-3)
    assert np.allclose(back.detunings, data.detunings, rtol=1e-12)
    assert np.array_equal(back.up_counts, data.up_counts) and back.shots == data.shots


def test_fit_fringe_quality_checks():
    with pytest.raises(FitQualityError):
        fit_fringe(scan_fringe(scan_detunings(1e-3, 6), CFG, seed=0))
    with pytest.raises(FitQualityError):
        fit_fringe(scan_fringe(np.linspace(-100, 100, 12), CFG, seed=0))
    flat = RamseyConfig(delay=1e-3, contrast=0.0, offset=0.5)
    with pytest.raises(FitQualityError):
        fit_fringe(scan_fringe(scan_detunings(1e-3, 16), flat, seed=0))
    with pytest.raises(InvalidParameterError):
        FringeDataset(detunings=[0.0, 1.0], up_counts=[5, 200], shots=100, delay=1e-3)


def test_fit_center_uncertainty_matches_monte_carlo():
    x = scan_detunings(CFG.delay, 16)
    fits = [fit_fringe(scan_fringe(x, CFG, seed=s)) for s in range(400)]
    centers = np.array([f.center for f in fits])
    reported = np.median([f.center_stderr for f in fits])
    assert abs(centers.mean()) < 4 * centers.std() / math.sqrt(len(centers))
    assert centers.std() == pytest.approx(reported, rel=0.15)


def test_fit_and_two_point_agree():
    shift = TWO_PI * 15.0
    fit = fit_fringe(scan_fringe(scan_detunings(CFG.delay, 32), CFG, seed=12, resonance_shift=shift))
    pa, pb = two_point_probabilities(shift, CFG)
    rng = np.random.default_rng(5)
    na, nb = rng.binomial(CFG.shots_per_point, [pa, pb])
    tp = two_point_drift_estimate(na / 100, nb / 100, CFG).drift
    tp_err = math.sqrt(2 * 0.25 / 100) / (2 * CFG.contrast * CFG.delay)
    assert abs(fit.center - tp) < 3 * math.hypot(fit.center_stderr, tp_err)


@pytest.mark.parametrize("delay", [0.5e-3, 1e-3, 2e-3, 10e-3])
def test_monitored_point_is_delay_independent(delay):
    cfg = RamseyConfig(delay=delay, contrast=0.4, offset=0.5, shots_per_point=1)
    x = scan_detunings(delay, 16)
    est = RamseyFringeFit(delay=delay).fit(x, ramsey_probability(x, cfg))
    assert abs(est.center_) * delay < 1e-12


def test_tracker_constant_input_unbiased():
    cfg = RamseyConfig(delay=1e-3, contrast=0.4, offset=0.5)
    t = np.arange(0, 2000.0, 1.0)
    res = track_frequency(t, np.full(len(t), TWO_PI * 850e3), cfg, 1.0, seed=1, recenter=False)
    err = (res.estimate - res.truth) / TWO_PI
    assert res.in_range.all()
    assert abs(err.mean()) < 4 * err.std() / math.sqrt(len(err))
    assert res.bsbt_center[0] == pytest.approx(QubitReference().hyperfine_splitting + res.estimate[0])


def test_tracker_follows_slow_ramp():
    cfg = RamseyConfig(delay=1e-3, contrast=0.4, offset=0.5, shots_per_point=1000)
    t = np.arange(0, 600.0, 1.0)
    truth = TWO_PI * (850e3 + 0.5 * t)
    res = track_frequency(t, truth, cfg, 2.0, seed=3)
    assert res.in_range.all()
    rate = np.polyfit(res.time, res.estimate / TWO_PI, 1)[0]
    assert rate == pytest.approx(0.5, rel=0.05)


def test_tracker_rescans_after_jump():
    cfg = RamseyConfig(delay=1e-3, contrast=0.4, offset=0.5, shots_per_point=200)
    t = np.arange(0, 50.0, 1.0)
    truth = TWO_PI * (850e3 + np.where(t >= 20, 150.0, 0.0))
    res = track_frequency(t, truth, cfg, 1.0, seed=0)
    assert not res.in_range[20]
    assert res.in_range[25:].all()
    settled = (res.estimate[30:] - res.truth[30:]) / TWO_PI
    assert abs(settled.mean()) < 4 * 10.0 / np.sqrt(len(settled))


def test_tracker_cadence_check():
    with pytest.raises(InvalidParameterError):
        track_frequency([0.0, 1.0], [0.0, 0.0], CFG, 0.1, seed=0)


def test_decay_constant_contrast_is_zero():
    fit = decoherence_rate([(1e-3, 0.4), (2e-3, 0.4), (5e-3, 0.4)])
    assert fit.rate == 0.0 and not fit.decaying and fit.upper_bound >= 0.0


def test_decay_fit_recovers_rate():
    t = np.array([1e-3, 3e-3, 6e-3, 10e-3])
    fit = decoherence_rate(list(zip(t, 0.45 * np.exp(-120.0 * t))))
    assert fit.rate == pytest.approx(120.0, rel=1e-8)
    assert ExponentialDecayFit().fit(t, 0.45 * np.exp(-120.0 * t)).predict([0.0])[0] == pytest.approx(0.45)
    with pytest.raises(InvalidParameterError):
        decoherence_rate([(1e-3, 0.4), (2e-3, 0.3)])


def test_decay_rate_scales_with_noise_variance():
    """Gaussian white frequency noise: contrast ~ exp(-sigma^2 dt T / 2), so rate ~ sigma^2."""
    cfg = RamseyConfig(delay=1e-3, contrast=0.45, offset=0.5, shots_per_point=200)
    dt = 1e-5
    rates = []
    for k, density in enumerate((15.0, 30.0)):
        expected = 0.5 * density ** 2
        delays = [round(f / expected / dt) * dt for f in (0.2, 0.5, 1.0)]
        rows = []
        for i, d in enumerate(delays):
            n = int(round(d / dt)) * 8 * cfg.shots_per_point
            dev = np.random.default_rng([k, i]).standard_normal(n) * density / math.sqrt(dt)
            c, err = measure_contrast(dev, dt, d, cfg, seed=100 * k + i)
            rows.append((d, c, err))
        fit = decoherence_rate(rows)
        assert fit.rate == pytest.approx(expected, rel=0.3)
        rates.append(fit.rate)
    assert rates[1] / rates[0] == pytest.approx(4.0, rel=0.35)
