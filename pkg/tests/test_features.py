"""Spectral and interval-feature tests against analytic and scipy oracles."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import signal

from relapsense import features


# ---------------------------------------------------------------- Welch PSD


def test_welch_sinusoid_peak_bin_and_power():
    fs = 4.0
    seg_len = 256
    amp = 2.0
    bin_idx = 32
    f0 = bin_idx * fs / seg_len  # exactly bin-aligned
    t = np.arange(4096) / fs
    x = amp * np.sin(2 * np.pi * f0 * t)
    psd = features.welch_psd(x, fs, seg_len=seg_len)
    assert not psd.short_input
    assert int(np.argmax(psd.power)) == bin_idx
    total = np.trapezoid(psd.power, psd.freqs)
    assert total == pytest.approx(amp**2 / 2.0, rel=0.05)


def test_welch_white_noise_integrates_to_variance():
    rng = np.random.default_rng(123)
    x = rng.normal(0.0, 1.5, 1500)
    psd = features.welch_psd(x, fs=4.0, seg_len=256)
    total = np.trapezoid(psd.power, psd.freqs)
    assert total == pytest.approx(np.var(x), rel=0.10)


def test_welch_matches_scipy():
    rng = np.random.default_rng(7)
    x = rng.normal(size=2048)
    fs = 4.0
    psd = features.welch_psd(x, fs, seg_len=256, overlap=0.5)
    f_ref, p_ref = signal.welch(
        x,
        fs=fs,
        window=signal.get_window("hann", 256),
        nperseg=256,
        noverlap=128,
        detrend="constant",
        scaling="density",
    )
    np.testing.assert_allclose(psd.freqs, f_ref, atol=1e-12)
    np.testing.assert_allclose(psd.power, p_ref, rtol=1e-9, atol=1e-12)


def test_welch_short_input_flagged():
    psd = features.welch_psd(np.ones(50), fs=4.0, seg_len=256)
    assert psd.short_input
    assert psd.freqs.size == 129
    with pytest.raises(ValueError):
        features.welch_psd(np.array([]), fs=4.0)


def test_band_fraction_against_dft_oracle():
    """LF/HF fractions must match a direct DFT power split on a pure tone mix."""
    fs = 4.0
    seg = 256
    t = np.arange(seg * 16) / fs
    lf_tone = 1.2 * np.sin(2 * np.pi * (0.09375) * t)  # bin 6: interior of LF
    hf_tone = 0.7 * np.sin(2 * np.pi * (0.25) * t)  # bin 16: inside HF
    psd = features.welch_psd(lf_tone + hf_tone, fs, seg_len=seg)
    lf, hf, lf_frac, hf_frac = features.band_powers(psd)
    want_lf = 1.2**2 / 2
    want_hf = 0.7**2 / 2
    assert lf_frac == pytest.approx(want_lf / (want_lf + want_hf), rel=0.02)
    assert hf_frac == pytest.approx(want_hf / (want_lf + want_hf), rel=0.02)


def test_band_fractions_sum_to_one():
    rng = np.random.default_rng(11)
    for _ in range(20):
        x = rng.normal(size=rng.integers(300, 3000))
        psd = features.welch_psd(x, fs=4.0)
        _, _, lf_frac, hf_frac = features.band_powers(psd)
        assert lf_frac + hf_frac == pytest.approx(1.0, abs=1e-9)


def test_band_powers_requires_hf_coverage():
    psd = features.welch_psd(np.random.default_rng(0).normal(size=512), fs=0.5)
    with pytest.raises(ValueError):
        features.band_powers(psd)


def test_band_power_narrow_band_falls_back_to_riemann():
    psd = features.welch_psd(np.random.default_rng(1).normal(size=512), fs=4.0)
    width = psd.resolution * 0.9  # strictly fewer than 2 bins
    p = features.band_power(psd, 0.1, 0.1 + width)
    assert p >= 0.0


# ------------------------------------------------------ scalar interval math


def test_normalized_energy_examples():
    v = np.array([[3.0, 4.0], [0.0, 0.0]])
    assert features.normalized_energy(v) == pytest.approx(12.5, abs=1e-12)
    assert features.normalized_energy(np.array([[1.0, 2.0, 2.0]])) == pytest.approx(9.0)
    with pytest.raises(ValueError):
        features.normalized_energy(np.empty((0, 3)))


def test_normalized_energy_count_invariance():
    # repeating the same samples must not change the mean energy
    rng = np.random.default_rng(21)
    v = rng.normal(size=(17, 3))
    e1 = features.normalized_energy(v)
    e2 = features.normalized_energy(np.tile(v, (4, 1)))
    assert e1 == pytest.approx(e2, abs=1e-12)


def test_bpm_and_sdnn_hand_computed():
    rr = np.array([1000.0, 1000.0, 1000.0, 1000.0])
    bpm, sdnn = features.bpm_and_sdnn(rr)
    assert bpm == pytest.approx(60.0, abs=1e-12)
    assert sdnn == 0.0
    rr = np.array([800.0, 1200.0])
    bpm, sdnn = features.bpm_and_sdnn(rr)
    assert bpm == pytest.approx(60000.0 / 1000.0, abs=1e-12)
    assert sdnn == pytest.approx(200.0, abs=1e-12)  # population std
    with pytest.raises(ValueError):
        features.bpm_and_sdnn(np.array([800.0]))


def test_time_encoding_cardinal_points():
    assert features.time_encoding(0.0) == pytest.approx((0.0, 1.0), abs=1e-12)
    s, c = features.time_encoding(21600.0)  # 06:00
    assert (s, c) == pytest.approx((1.0, 0.0), abs=1e-12)
    s, c = features.time_encoding(43200.0)  # noon
    assert (s, c) == pytest.approx((0.0, -1.0), abs=1e-12)
    # offset shifts the phase
    assert features.time_encoding(0.0, day_offset=43200.0) == pytest.approx(
        (0.0, -1.0), abs=1e-12
    )


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 1e9), st.floats(0, 86400))
def test_time_encoding_on_unit_circle(t, offset):
    s, c = features.time_encoding(t, offset)
    assert s * s + c * c == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(
    st.integers(0, 10000),
    st.lists(st.floats(0.01, 1.0), min_size=1, max_size=8),
)
def test_apportion_steps_conserves_total(steps, weights):
    fractions = np.asarray(weights) / np.sum(weights)
    shares = features.apportion_steps(steps, fractions)
    assert shares.sum() == steps


def test_step_features_full_and_partial_overlap():
    import pandas as pd

    events = pd.DataFrame(
        {
            "t_start": [0.0, 250.0],
            "t_end": [100.0, 350.0],
            "steps": [100, 60],
            "distance_m": [70.0, 42.0],
            "calories": [5.0, 3.0],
        }
    )
    out = features.step_features(events, (0.0, 300.0))
    assert out is not None
    step_count, dist, cal, stepsize, speed = out
    # first event fully inside: 100 steps; second half inside: 30 steps
    assert step_count == 130
    assert dist == pytest.approx((70.0 + 21.0) / 2)
    assert cal == pytest.approx((5.0 + 1.5) / 2)
    assert stepsize == pytest.approx(0.7, abs=1e-12)
    assert speed == pytest.approx((0.7 + 0.42) / 2)
    assert features.step_features(events, (1000.0, 1300.0)) is None
