import dataclasses
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spinpad.errors import (
    ConfigError,
    InsufficientDataError,
    InvalidFitError,
    InvalidParameterError,
)
from spinpad.magnetics import (
    KB_ERG,
    LADDER_TARGETS,
    WER_BASELINE,
    LnWerFit,
    MagSimConfig,
    MtjDevice,
    WerCurve,
    WerPoint,
    WritePulse,
    amplitude_ladder,
    derive_stream,
    estimate_psw,
    find_switching_threshold,
    fit_ln_wer,
    integrate_llg,
    load_device_config,
    merge_sim_config,
    relative_write_energy,
    required_amplitude,
    run_wer_sweep,
    sample_thermal_field,
    thermal_field_std_oe,
    wer_from_psw,
)

# Frozen references for the default device (35x35x1 nm, Ms 1200, alpha 0.006,
# delta 55, eta 1.15 kT/uA).
VOLUME_CM3 = 1.225e-18
HK_OE = 3099.41612244898
IC0_UA = 47.82608695652174
SIGMA_1PS_300K_OE = 138.6046786992719

# Outputs of tests/oracles.py rk4_macrospin at dt=0.1 ps, tilt 0.0953 rad
# (too slow to rerun inline; regenerate with the oracle if these change).
RK4_CASES = [
    (2.0, 20.0, True, 8.6382),
    (0.5, 100.0, False, None),
    (1.5, 40.0, True, 15.2033),
]


def default_device(**kw):
    return MtjDevice(**kw)


def test_device_derived_quantities():
    dev = default_device()
    assert dev.volume_cm3 == pytest.approx(VOLUME_CM3, rel=1e-12)
    assert dev.anisotropy_field_oe == pytest.approx(HK_OE, rel=1e-12)
    assert dev.critical_current_ua == pytest.approx(IC0_UA, rel=1e-12)
    assert dev.barrier_erg == pytest.approx(55.0 * KB_ERG * 300.0, rel=1e-12)


def test_device_validation():
    with pytest.raises(InvalidParameterError):
        default_device(thermal_stability=19.0)
    with pytest.raises(InvalidParameterError):
        default_device(thermal_stability=101.0)
    with pytest.raises(InvalidParameterError):
        default_device(fl_thickness_nm=0.0)
    with pytest.raises(InvalidParameterError):
        default_device(saturation_magnetization_emu_cc=-1.0)
    with pytest.raises(InvalidParameterError):
        default_device(temperature_k=-5.0)
    with pytest.raises(InvalidParameterError):
        default_device(stt_efficiency_kbt_per_ua=0.0)


def test_pulse_and_config_validation():
    with pytest.raises(InvalidParameterError):
        WritePulse(-1.0, 10.0)
    with pytest.raises(InvalidParameterError):
        WritePulse(10.0, 0.0)
    with pytest.raises(InvalidParameterError):
        MagSimConfig(time_step_ps=0.0)
    with pytest.raises(InvalidParameterError):
        MagSimConfig(time_step_ps=11.0)
    with pytest.raises(InvalidParameterError):
        MagSimConfig(trials=0)
    with pytest.raises(InvalidParameterError):
        MagSimConfig(relax_time_ns=-1.0)


def test_thermal_field_std_frozen_value():
    dev = default_device()
    assert thermal_field_std_oe(dev, 1.0) == pytest.approx(
        SIGMA_1PS_300K_OE, rel=1e-9
    )


def test_thermal_field_std_scaling():
    dev = default_device()
    s1 = thermal_field_std_oe(dev, 1.0)
    # sigma ~ 1/sqrt(dt): quartering the step doubles the field
    assert thermal_field_std_oe(dev, 0.25) == pytest.approx(2.0 * s1, rel=1e-12)
    dev0 = default_device(temperature_k=0.0)
    assert thermal_field_std_oe(dev0, 1.0) == 0.0


def test_thermal_field_samples_match_std():
    dev = default_device()
    rng = derive_stream(123, 0)
    h = sample_thermal_field(dev, 1.0, rng, n=100_000)
    assert h.shape == (100_000, 3)
    assert np.std(h) == pytest.approx(SIGMA_1PS_300K_OE, rel=0.02)
    assert abs(np.mean(h)) < 0.02 * SIGMA_1PS_300K_OE
    dev0 = default_device(temperature_k=0.0)
    assert np.all(sample_thermal_field(dev0, 1.0, rng, n=10) == 0.0)


@pytest.mark.parametrize("mult,duration_ns,switched,t_ref", RK4_CASES)
def test_zero_temp_switching_matches_rk4_oracle(mult, duration_ns, switched, t_ref):
    dev = default_device(temperature_k=0.0)
    cfg = MagSimConfig(time_step_ps=1.0, seed=1)
    res = integrate_llg(dev, WritePulse(mult * IC0_UA, duration_ns), cfg, derive_stream(1))
    assert res.switched is switched
    if switched:
        assert res.switch_time_ns == pytest.approx(t_ref, rel=0.02)
    else:
        assert res.switch_time_ns is None


def test_zero_temp_is_seed_independent():
    dev = default_device(temperature_k=0.0)
    pulse = WritePulse(2.0 * IC0_UA, 20.0)
    a = integrate_llg(dev, pulse, MagSimConfig(seed=1), derive_stream(1))
    b = integrate_llg(dev, pulse, MagSimConfig(seed=99), derive_stream(99))
    assert a == b


def test_zero_amplitude_never_switches():
    dev = default_device(temperature_k=0.0)
    res = integrate_llg(dev, WritePulse(0.0, 10.0), MagSimConfig(seed=3), derive_stream(3))
    assert not res.switched


def test_psw_increases_with_amplitude():
    dev = default_device()
    cfg = MagSimConfig(trials=200, seed=7)
    p_low = estimate_psw(dev, WritePulse(60.0, 10.0), cfg)
    p_high = estimate_psw(dev, WritePulse(150.0, 10.0), cfg)
    assert p_low <= 0.3
    assert p_high >= 0.95
    assert p_low < p_high


def test_wer_from_psw_identities():
    assert wer_from_psw(0.0) == 1.0
    assert wer_from_psw(1.0) == 0.0
    rng = np.random.default_rng(5)
    p = rng.random(1000)
    w = wer_from_psw(p)
    # both directions are exact in binary floating point for p in [0, 1]
    assert np.array_equal(1.0 - w, p)
    with pytest.raises(InvalidParameterError):
        wer_from_psw(-0.1)
    with pytest.raises(InvalidParameterError):
        wer_from_psw(1.1)


def test_werpoint_ln_wer():
    pt = WerPoint(100.0, 10.0, 1000, 0.75)
    assert pt.ln_wer == pytest.approx(math.log(0.25), rel=1e-12)
    assert WerPoint(100.0, 10.0, 1000, 1.0).ln_wer == -np.inf
    with pytest.raises(InvalidParameterError):
        WerPoint(100.0, 10.0, 1000, 1.5)
    with pytest.raises(InvalidParameterError):
        WerPoint(100.0, 10.0, 0, 0.5)


def _exact_line_curve(slope=-0.2, intercept=8.0, duration=10.0):
    """Points sampled from ln WER = slope*A + intercept, plus off-window ones."""
    pts = []
    for a in [40.0, 43.0] + [44.0 + 4.0 * i for i in range(10)]:
        wer = min(1.0, math.exp(slope * a + intercept))
        pts.append(WerPoint(a, duration, 10_000, 1.0 - wer))
    pts.append(WerPoint(200.0, duration, 10_000, 1.0))  # saturated, excluded
    return WerCurve(pts)


def test_fit_recovers_exact_line():
    curve = _exact_line_curve()
    fit = fit_ln_wer(curve, 10.0)
    assert fit.n_points == 10
    assert fit.slope_per_ua == pytest.approx(-0.2, rel=1e-9)
    assert fit.intercept == pytest.approx(8.0, rel=1e-9)
    assert fit.r_squared == pytest.approx(1.0, abs=1e-12)
    assert fit.ln_wer_at(50.0) == pytest.approx(-2.0, rel=1e-9)
    assert fit.wer_at(50.0) == pytest.approx(math.exp(-2.0), rel=1e-9)


def test_required_amplitude_frozen_value():
    fit = fit_ln_wer(_exact_line_curve(), 10.0)
    assert required_amplitude(fit, 1e-9) == pytest.approx(143.61632918473205, rel=1e-9)
    with pytest.raises(InvalidParameterError):
        required_amplitude(fit, 0.0)
    with pytest.raises(InvalidParameterError):
        required_amplitude(fit, 1.0)


def test_fit_needs_three_post_onset_points():
    pts = [WerPoint(50.0, 10.0, 100, 0.6), WerPoint(60.0, 10.0, 100, 0.9)]
    with pytest.raises(InsufficientDataError):
        fit_ln_wer(WerCurve(pts), 10.0)
    with pytest.raises(InsufficientDataError):
        fit_ln_wer(_exact_line_curve(), 99.0)  # no such duration


def test_fit_rejects_nonnegative_slope():
    pts = [
        WerPoint(50.0, 10.0, 100, 0.9),
        WerPoint(60.0, 10.0, 100, 0.7),
        WerPoint(70.0, 10.0, 100, 0.55),
    ]
    with pytest.raises(InvalidFitError):
        fit_ln_wer(WerCurve(pts), 10.0)


def test_onset_amplitude():
    curve = _exact_line_curve()
    assert curve.onset_amplitude(10.0) == 44.0  # first point with psw >= 0.5
    low = WerCurve([WerPoint(10.0, 10.0, 100, 0.1)])
    with pytest.raises(InsufficientDataError):
        low.onset_amplitude(10.0)


def test_amplitude_ladder_monotone():
    fit = fit_ln_wer(_exact_line_curve(), 10.0)
    ladder = amplitude_ladder(fit)
    assert set(ladder) == set(LADDER_TARGETS) | {WER_BASELINE}
    ordered = [ladder[t] for t in sorted(ladder, reverse=True)]
    assert all(a < b for a, b in zip(ordered, ordered[1:]))
    assert ladder[WER_BASELINE] > ladder[1e-9]


def test_relative_write_energy():
    base = WritePulse(100.0, 10.0)
    assert relative_write_energy(base, base) == 1.0
    assert relative_write_energy(WritePulse(200.0, 10.0), base) == pytest.approx(4.0)
    assert relative_write_energy(WritePulse(100.0, 20.0), base) == pytest.approx(2.0)
    assert relative_write_energy(WritePulse(200.0, 20.0), base) == pytest.approx(8.0)


def test_wer_sweep_deterministic():
    dev = default_device()
    cfg = MagSimConfig(trials=100, seed=42)
    amps = [90.0, 120.0]
    a = run_wer_sweep(dev, amps, [10.0], cfg)
    b = run_wer_sweep(dev, amps, [10.0], cfg)
    assert a.points == b.points
    assert all(0.0 <= pt.p_switch <= 1.0 for pt in a.points)
    assert [pt.amplitude_ua for pt in a.points] == amps


def test_wer_sweep_parallel_matches_serial():
    dev = default_device()
    cfg = MagSimConfig(trials=100, seed=42)
    serial = run_wer_sweep(dev, [90.0, 120.0], [10.0], cfg, workers=1)
    parallel = run_wer_sweep(dev, [90.0, 120.0], [10.0], cfg, workers=2)
    assert serial.points == parallel.points


def test_wer_curve_csv_roundtrip(tmp_path):
    dev = default_device()
    cfg = MagSimConfig(trials=50, seed=9)
    curve = run_wer_sweep(dev, [80.0, 140.0], [5.0, 10.0], cfg)
    path = tmp_path / "wer.csv"
    curve.to_csv(path)
    back = WerCurve.from_csv(path)
    assert back.points == curve.points
    assert sorted(back.durations()) == [5.0, 10.0]
    assert len(back.at_duration(5.0)) == 2


def test_find_switching_threshold_requires_zero_temp():
    dev = default_device()
    with pytest.raises(InvalidParameterError):
        find_switching_threshold(dev, 100.0, MagSimConfig(seed=1), 20.0, 100.0)


def test_load_device_config(tmp_path):
    path = tmp_path / "dev.json"
    path.write_text(json.dumps({
        "device": {"thermal_stability": 60.0, "temperature_k": 250.0},
        "simulation": {"trials": 500, "seed": 7},
    }))
    dev, cfg = load_device_config(path)
    assert dev.thermal_stability == 60.0
    assert dev.temperature_k == 250.0
    assert dev.damping == 0.006  # untouched default
    assert cfg.trials == 500
    assert cfg.seed == 7

    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"device": {"nonsense": 1.0}}))
    with pytest.raises(ConfigError):
        load_device_config(bad)
    bad.write_text(json.dumps({"mystery": {}}))
    with pytest.raises(ConfigError):
        load_device_config(bad)
    bad.write_text(json.dumps([1, 2]))
    with pytest.raises(ConfigError):
        load_device_config(bad)


def test_merge_sim_config():
    cfg = MagSimConfig(trials=100, seed=1)
    out = merge_sim_config(cfg, trials=200, seed=None)
    assert out.trials == 200
    assert out.seed == 1
    assert cfg.trials == 100  # original untouched


@given(p=st.floats(min_value=0.0, max_value=1.0, allow_nan=False))
def test_wer_psw_complement_property(p):
    w = wer_from_psw(p)
    assert 0.0 <= w <= 1.0
    assert w == 1.0 - p


@given(
    scale=st.floats(min_value=0.1, max_value=10.0, allow_nan=False),
    amp=st.floats(min_value=1.0, max_value=500.0, allow_nan=False),
    dur=st.floats(min_value=0.5, max_value=100.0, allow_nan=False),
)
def test_write_energy_quadratic_in_amplitude(scale, amp, dur):
    base = WritePulse(amp, dur)
    scaled = WritePulse(scale * amp, dur)
    assert relative_write_energy(scaled, base) == pytest.approx(scale**2, rel=1e-9)


@given(
    t1=st.floats(min_value=1.0, max_value=400.0, allow_nan=False),
    t2=st.floats(min_value=1.0, max_value=400.0, allow_nan=False),
)
def test_thermal_field_monotone_in_temperature(t1, t2):
    lo, hi = sorted((t1, t2))
    s_lo = thermal_field_std_oe(default_device(temperature_k=lo), 1.0)
    s_hi = thermal_field_std_oe(default_device(temperature_k=hi), 1.0)
    assert s_lo <= s_hi


@given(
    slope=st.floats(min_value=-1.0, max_value=-0.01, allow_nan=False),
    intercept=st.floats(min_value=1.0, max_value=20.0, allow_nan=False),
    t1=st.floats(min_value=1e-12, max_value=0.5, allow_nan=False),
    t2=st.floats(min_value=1e-12, max_value=0.5, allow_nan=False),
)
@settings(max_examples=50)
def test_required_amplitude_monotone_in_target(slope, intercept, t1, t2):
    fit = LnWerFit(10.0, slope, intercept, 1.0, 5)
    lo, hi = sorted((t1, t2))
    # rarer targets need at least as much drive
    assert required_amplitude(fit, lo) >= required_amplitude(fit, hi)
