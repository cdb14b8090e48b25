import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from msanc.dsp_core import (
    DelayLine,
    FirFilter,
    NoiseSource,
    PowerEstimator,
    SlopeEstimator,
    design_bandpass,
    fir_process,
    freq_response,
    noise_next,
    power_update,
    slope_update,
)
from msanc.errors import ConfigurationError, SignalChainError

finite = st.floats(min_value=-1e3, max_value=1e3, allow_nan=False)


def brute_convolution(h, x):
    """y[n] = sum_k h[k] x[n-k], zero initial state, plain loops."""
    y = []
    for n in range(len(x)):
        acc = 0.0
        for k in range(len(h)):
            if n - k >= 0:
                acc += h[k] * x[n - k]
        y.append(acc)
    return np.array(y)


# --- delay line / FIR ----------------------------------------------------

def test_delay_line_most_recent_first():
    d = DelayLine(3)
    for v in (1.0, 2.0, 3.0, 4.0):
        d.push(v)
    assert d.view().tolist() == [4.0, 3.0, 2.0]


def test_fir_identity_impulse():
    f = FirFilter([1.0, 0.0, 0.0])
    assert [fir_process(f, v) for v in (1.0, 0.0, 0.0)] == [1.0, 0.0, 0.0]


def test_fir_two_tap_average():
    f = FirFilter([0.5, 0.5])
    assert [fir_process(f, v) for v in (1.0, 1.0)] == [0.5, 1.0]


def test_fir_matches_brute_force_convolution():
    rng = np.random.default_rng(0)
    h = rng.standard_normal(256)
    x = rng.standard_normal(1000)
    f = FirFilter(h)
    got = np.array([f.process(v) for v in x])
    assert np.max(np.abs(got - brute_convolution(h, x))) < 1e-12


def test_fir_delay_line_tracks_length():
    f = FirFilter(np.ones(5))
    for v in range(12):
        f.process(float(v))
        assert f.delay_line.size == f.length == 5
    assert f.delay_line.tolist() == [11.0, 10.0, 9.0, 8.0, 7.0]


def test_fir_block_equals_per_sample():
    rng = np.random.default_rng(1)
    h = rng.standard_normal(33)
    x = rng.standard_normal(500)
    a, b = FirFilter(h), FirFilter(h)
    per_sample = np.array([a.process(v) for v in x])
    blocks = np.concatenate([b.process_block(x[:120]), b.process_block(x[120:])])
    np.testing.assert_allclose(blocks, per_sample, atol=1e-12)
    np.testing.assert_allclose(a.delay_line, b.delay_line)


def test_fir_rejects_non_finite_input():
    f = FirFilter([1.0, 2.0])
    with pytest.raises(SignalChainError):
        f.process(float("nan"))


def test_set_coeffs_keeps_history():
    f = FirFilter([1.0, 0.0])
    f.process(3.0)
    f.set_coeffs([0.0, 1.0])
    assert f.process(5.0) == 3.0


@settings(max_examples=50, deadline=None)
@given(st.lists(finite, min_size=1, max_size=8), st.lists(finite, min_size=1, max_size=40))
def test_fir_equals_convolution_property(h, x):
    f = FirFilter(h)
    got = np.array([f.process(v) for v in x])
    scale = max(1.0, max(map(abs, h)) * max(map(abs, x)) * len(h))
    np.testing.assert_allclose(got, brute_convolution(h, x), rtol=0, atol=1e-12 * scale)


# --- band-pass design ------------------------------------------------------

def dft_gain_db(coeffs, f_hz, fs):
    c = np.asarray(coeffs)
    acc = sum(c[k] * complex(math.cos(2 * math.pi * f_hz * k / fs), -math.sin(2 * math.pi * f_hz * k / fs))
              for k in range(c.size))
    return 20 * math.log10(abs(acc))


def test_bandpass_rejects_dc():
    h = design_bandpass(100, 1000, 13000, 513).coeffs
    assert abs(np.sum(h)) < 1e-3


def test_bandpass_gain_inside_wide_band():
    h = design_bandpass(80, 5000, 13000, 257).coeffs
    assert -6.0 <= dft_gain_db(h, 2000.0, 13000.0) <= 1.0


def test_bandpass_is_linear_phase():
    h = design_bandpass(100, 1000, 13000, 513).coeffs
    np.testing.assert_allclose(h, h[::-1], atol=1e-15)


def test_bandpass_passband_and_stopband_513():
    fs = 13000.0
    h = design_bandpass(100, 1000, fs, 513).coeffs
    inside = np.linspace(100, 1000, 400)
    gains = 20 * np.log10(np.abs(freq_response(h, inside, fs)))
    assert gains.min() >= -6.0
    assert dft_gain_db(h, 50.0, fs) <= -40.0
    assert dft_gain_db(h, 1500.0, fs) <= -40.0


def test_bandpass_upper_stopband_257():
    fs = 13000.0
    h = design_bandpass(80, 5000, fs, 257).coeffs
    assert dft_gain_db(h, min(1.5 * 5000, 0.95 * fs / 2), fs) <= -40.0
    inside = np.linspace(80, 5000, 400)
    assert 20 * np.log10(np.abs(freq_response(h, inside, fs))).min() >= -6.0


@pytest.mark.parametrize("low,high,fs,taps", [
    (1000, 100, 13000, 513),
    (100, 100, 13000, 513),
    (0, 100, 13000, 513),
    (100, 7000, 13000, 513),
    (100, 1000, 13000, 512),
])
def test_bandpass_invalid(low, high, fs, taps):
    with pytest.raises(ConfigurationError):
        design_bandpass(low, high, fs, taps)


# --- noise -----------------------------------------------------------------

def test_noise_same_seed_identical():
    a = NoiseSource.bandlimited(42, 100, 1000, 13000)
    b = NoiseSource.bandlimited(42, 100, 1000, 13000)
    sa = [noise_next(a) for _ in range(10_000)]
    sb = [noise_next(b) for _ in range(10_000)]
    assert sa == sb


def test_noise_block_matches_next():
    a = NoiseSource.bandlimited(5, 100, 1000, 13000)
    b = NoiseSource.bandlimited(5, 100, 1000, 13000)
    blk = b.block(20_000)
    assert blk.tolist() == [a.next() for _ in range(20_000)]


def test_noise_different_seeds_differ():
    a = NoiseSource.bandlimited(1, 100, 1000, 13000).block(100)
    b = NoiseSource.bandlimited(2, 100, 1000, 13000).block(100)
    assert not np.array_equal(a, b)


@pytest.fixture(scope="module")
def long_noise():
    return NoiseSource.bandlimited(3, 100, 1000, 13000).block(1_000_000)


def test_noise_unit_variance(long_noise):
    assert 0.9 <= np.var(long_noise) <= 1.1


def test_noise_low_frequency_rejection(long_noise):
    fs = 13000.0
    seg = 8192
    frames = long_noise[: (long_noise.size // seg) * seg].reshape(-1, seg)
    win = np.hanning(seg)
    psd = np.mean(np.abs(np.fft.rfft(frames * win, axis=1)) ** 2, axis=0)
    f = np.fft.rfftfreq(seg, 1 / fs)
    low = psd[(f > 0) & (f < 50)].mean()
    inband = psd[(f >= 100) & (f <= 1000)].mean()
    assert 10 * np.log10(inband / low) >= 30.0


# --- power estimator -------------------------------------------------------

def test_power_first_step():
    p = PowerEstimator(0.999)
    assert power_update(p, 1.0) == pytest.approx(0.001, abs=1e-15)


def test_power_decay_step():
    p = PowerEstimator(0.9, value=1.0)
    assert power_update(p, 0.0) == 0.9


def test_power_geometric_series():
    p = PowerEstimator(0.999)
    for n in range(1, 5001):
        v = p.update(1.0)
        assert v == pytest.approx(1 - 0.999 ** n, rel=1e-12, abs=1e-15)


def test_power_constant_input_monotone():
    p = PowerEstimator(0.95)
    prev = p.value
    for _ in range(500):
        v = p.update(2.0)
        assert prev <= v <= 4.0
        prev = v
    assert v == pytest.approx(4.0, rel=1e-9)


def test_power_lambda_range():
    with pytest.raises(ConfigurationError):
        PowerEstimator(0.5)
    with pytest.raises(ConfigurationError):
        PowerEstimator(1.0)


@given(st.floats(0.9, 0.9999), st.floats(0, 1e6), finite)
def test_power_convex_bound(lam, value, sample):
    p = PowerEstimator(lam, value)
    new = p.update(sample)
    lo, hi = sorted((value, sample * sample))
    assert lo * (1 - 1e-12) <= new <= hi * (1 + 1e-12)
    assert new >= 0


# --- slope estimator -------------------------------------------------------

def slope_direct(seq, n_avg):
    """Evaluate the windowed slope at the last index with an explicit loop."""
    n = len(seq) - 1
    return sum(seq[n - i] * (seq[n - i] - seq[n - i - 1]) for i in range(n_avg)) / n_avg


def test_slope_constant_is_zero():
    s = SlopeEstimator(8)
    vals = [slope_update(s, 3.7) for _ in range(30)]
    assert all(v == 0.0 for v in vals[8:])


def test_slope_ramp_hand_value():
    s = SlopeEstimator(2)
    vals = [slope_update(s, float(n)) for n in range(4)]
    assert vals[3] == 2.5


def test_slope_warm_up():
    s = SlopeEstimator(64)
    vals = [s.update(float(v)) for v in range(66)]
    assert all(v is None for v in vals[:64])
    assert vals[64] is not None
    s.reset()
    assert s.update(1.0) is None


def test_slope_matches_direct_formula():
    rng = np.random.default_rng(9)
    seq = rng.standard_normal(2000).tolist()
    s = SlopeEstimator(64)
    for n, v in enumerate(seq):
        got = s.update(v)
        if n >= 64:
            assert got == pytest.approx(slope_direct(seq[:n + 1], 64), abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=6, max_size=30), st.floats(0.01, 100))
def test_slope_quadratic_scaling(seq, c):
    a, b = SlopeEstimator(4), SlopeEstimator(4)
    for v in seq:
        ta = a.update(v)
        tb = b.update(c * v)
    assert tb == pytest.approx(c * c * ta, rel=1e-9, abs=1e-9)
