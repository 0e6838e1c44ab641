import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cogload.errors import InvalidBand, NonFiniteInput
from cogload.sigproc import (
    BiquadCascade,
    apply_iir,
    design_butterworth_bandpass,
    design_notch,
    magnitude_response,
    preprocess,
)


def analog_bandpass_mag(f, low, high, order, fs):
    """|H| of the analog Butterworth bandpass at the bilinear-warped frequency."""
    warp = lambda hz: 2 * fs * np.tan(np.pi * hz / fs)
    wl, wh = warp(low), warp(high)
    w = warp(np.asarray(f, dtype=float))
    x = (w**2 - wl * wh) / (w * (wh - wl))
    return 1.0 / np.sqrt(1.0 + x ** (2 * order))


def db(x):
    return 20 * np.log10(x)


@pytest.mark.parametrize("fs", [256.0, 200.0])
def test_bandpass_matches_analog_oracle(fs):
    bp = design_butterworth_bandpass(1, 75, 2, fs)
    f = np.linspace(0.2, fs / 2 - 0.5, 400)
    np.testing.assert_allclose(magnitude_response(bp, f), analog_bandpass_mag(f, 1, 75, 2, fs), rtol=1e-9, atol=1e-12)
    assert abs(db(magnitude_response(bp, 10.0))) < 1.0
    assert np.all(np.abs(bp.poles()) < 1)
    assert len(bp) == 2


@pytest.mark.parametrize("band", [(1, 4), (4, 8), (8, 12), (12, 31), (31, 75)])
def test_feature_bands_match_oracle(band):
    bp = design_butterworth_bandpass(*band, 2, 256)
    f = np.linspace(0.5, 127, 300)
    np.testing.assert_allclose(magnitude_response(bp, f), analog_bandpass_mag(f, *band, 2, 256), rtol=1e-8, atol=1e-12)
    edges = magnitude_response(bp, np.array(band, dtype=float))
    np.testing.assert_allclose(edges, 1 / np.sqrt(2), rtol=1e-9)


def test_bandpass_against_scipy():
    signal = pytest.importorskip("scipy.signal")
    sos = signal.butter(2, [1, 75], btype="bandpass", fs=256, output="sos")
    bp = design_butterworth_bandpass(1, 75, 2, 256)
    x = np.random.default_rng(3).standard_normal(3000)
    np.testing.assert_allclose(apply_iir(bp, x), signal.sosfilt(sos, x), atol=1e-10)


@pytest.mark.parametrize("low, high, fs", [(75, 1, 256), (1, 128, 256), (0, 10, 256), (10, 10, 256), (1, 75, 100)])
def test_bandpass_invalid(low, high, fs):
    with pytest.raises(InvalidBand):
        design_butterworth_bandpass(low, high, 2, fs)


def test_bandpass_zero_at_dc():
    bp = design_butterworth_bandpass(1, 75, 2, 256)
    assert magnitude_response(bp, 0.0) < 1e-9
    assert db(magnitude_response(bp, 0.1)) < -20


def test_notch_null_and_passband():
    n = design_notch(60, 30, 256)
    assert magnitude_response(n, 60.0) < 1e-9
    assert db(magnitude_response(n, 60.0) + 1e-300) < -40
    assert db(magnitude_response(n, 50.0)) > -1
    # -3 dB bandwidth equals f0 / Q
    f = np.linspace(55, 65, 200001)
    stop = f[magnitude_response(n, f) < 1 / np.sqrt(2)]
    assert stop[-1] - stop[0] == pytest.approx(2.0, rel=0.02)


def test_notch_configurable_powerline():
    n = design_notch(50, 30, 200)
    assert magnitude_response(n, 50.0) < 1e-9
    assert magnitude_response(n, 60.0) > 0.9


def test_notch_beyond_nyquist():
    with pytest.raises(InvalidBand):
        design_notch(60, 30, 100)
    with pytest.raises(InvalidBand):
        design_notch(60, 0, 256)


def test_identity_cascade():
    ident = BiquadCascade.identity(256)
    x = np.random.default_rng(0).standard_normal(100)
    np.testing.assert_array_equal(apply_iir(ident, x), x)
    assert magnitude_response(ident, 33.0) == pytest.approx(1.0)


def test_unstable_section_rejected():
    with pytest.raises(InvalidBand):
        BiquadCascade(np.array([[1, 0, 0, -2.0, 1.0]]), 256)
    with pytest.raises(InvalidBand):
        BiquadCascade(np.array([[np.nan, 0, 0, 0, 0]]), 256)


def test_bandpass_rejects_dc():
    bp = design_butterworth_bandpass(1, 75, 2, 256)
    y = apply_iir(bp, np.ones(256 * 20))
    assert abs(y[-1]) < 1e-3
    assert np.max(np.abs(y[-256:])) < 1e-3


def test_notch_kills_powerline_sine():
    fs = 256
    t = np.arange(10 * fs) / fs
    x = np.sin(2 * np.pi * 60 * t)
    y = apply_iir(design_notch(60, 30, fs), x)
    tail = slice(-2 * fs, None)
    assert np.sqrt(np.mean(y[tail] ** 2)) < 0.01 * np.sqrt(np.mean(x[tail] ** 2))


def test_nonfinite_rejected():
    bp = design_butterworth_bandpass(1, 75, 2, 256)
    with pytest.raises(NonFiniteInput):
        apply_iir(bp, np.array([1.0, np.nan, 2.0]))
    with pytest.raises(NonFiniteInput):
        apply_iir(bp, np.array([]))


@settings(max_examples=30, deadline=None)
@given(st.floats(-5, 5), st.floats(-5, 5), st.integers(0, 2**31 - 1))
def test_linearity(a, b, seed):
    rng = np.random.default_rng(seed)
    x, y = rng.standard_normal((2, 600))
    bp = design_butterworth_bandpass(1, 75, 2, 256)
    lhs = apply_iir(bp, a * x + b * y)
    rhs = a * apply_iir(bp, x) + b * apply_iir(bp, y)
    scale = max(np.max(np.abs(rhs)), 1e-12)
    assert np.max(np.abs(lhs - rhs)) <= 1e-9 * scale + 1e-12


def test_cascade_composition():
    x = np.random.default_rng(1).standard_normal(2000)
    notch = design_notch(60, 30, 256)
    bp = design_butterworth_bandpass(1, 75, 2, 256)
    np.testing.assert_allclose(apply_iir(notch.then(bp), x), apply_iir(bp, apply_iir(notch, x)), atol=1e-12)


def test_chain_rate_mismatch():
    with pytest.raises(InvalidBand):
        design_notch(60, 30, 256).then(design_notch(60, 30, 200))


def test_multichannel_rows_independent():
    rng = np.random.default_rng(2)
    x = rng.standard_normal((4, 1000))
    bp = design_butterworth_bandpass(1, 75, 2, 256)
    out = apply_iir(bp, x)
    for i in range(4):
        np.testing.assert_array_equal(out[i], apply_iir(bp, x[i]))


def test_zero_phase_has_no_lag():
    fs = 256
    t = np.arange(20 * fs) / fs
    x = np.sin(2 * np.pi * 10 * t)
    y = apply_iir(design_butterworth_bandpass(1, 75, 2, fs), x, zero_phase=True)
    mid = slice(5 * fs, 15 * fs)
    np.testing.assert_allclose(y[mid], x[mid], atol=1e-3)


def test_preprocess_shapes_and_discard():
    x = np.random.default_rng(0).standard_normal((4, 256 * 12))
    assert preprocess(x, 256).shape == x.shape
    assert preprocess(x, 256, discard_s=1.0).shape == (4, 256 * 11)
    assert preprocess(x, 256, notch_hz=None).shape == x.shape
