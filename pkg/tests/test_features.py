import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cogload.errors import DegenerateVariance, EmptyBand, SegmentTooShort, SignalError
from cogload.features import (
    DEFAULT_BANDS,
    BandSet,
    FeatureConfig,
    FeatureToken,
    NormStats,
    band_power,
    compute_norm_stats,
    differential_entropy,
    extract_segment_features,
    feature_columns,
    gaussian_entropy,
    read_feature_csv,
    welch_psd,
    write_feature_csv,
    zscore_normalize,
)

FS = 256.0


def test_default_bands():
    assert DEFAULT_BANDS.bands == (
        ("delta", 1.0, 4.0), ("theta", 4.0, 8.0), ("alpha", 8.0, 12.0), ("beta", 12.0, 31.0), ("gamma", 31.0, 75.0))


def test_bandset_rejects_gaps():
    with pytest.raises(SignalError):
        BandSet((("a", 1, 4), ("b", 5, 8)))
    with pytest.raises(SignalError):
        BandSet((("a", 4, 1),))


def test_welch_matches_scipy():
    signal = pytest.importorskip("scipy.signal")
    x = np.random.default_rng(0).standard_normal((3, 2560))
    f, p = welch_psd(x, FS)
    f2, p2 = signal.welch(x, FS, window="hann", nperseg=512, noverlap=256, detrend=False)
    np.testing.assert_allclose(f, f2)
    np.testing.assert_allclose(p, p2, rtol=1e-10, atol=1e-18)


def test_welch_parseval_white_noise():
    for seed in range(20):
        x = 1.7 * np.random.default_rng(seed).standard_normal(2560)
        f, p = welch_psd(x, FS)
        total = np.sum(p) * (f[1] - f[0])
        assert total == pytest.approx(np.var(x), rel=0.05)


def test_welch_zero_and_nonnegative():
    f, p = welch_psd(np.zeros(2560), FS)
    assert np.all(p == 0)
    _, p = welch_psd(np.random.default_rng(1).standard_normal(3000), FS)
    assert np.all(p >= 0)


def test_welch_errors():
    with pytest.raises(SegmentTooShort):
        welch_psd(np.zeros(100), FS)
    with pytest.raises(SignalError):
        welch_psd(np.zeros(2560), FS, overlap_frac=1.0)


def test_welch_odd_segment_length():
    signal = pytest.importorskip("scipy.signal")
    x = np.random.default_rng(2).standard_normal(999)
    f, p = welch_psd(x, 100.0, nperseg=201)
    _, p2 = signal.welch(x, 100.0, window="hann", nperseg=201, noverlap=100, detrend=False)
    np.testing.assert_allclose(p, p2, rtol=1e-10)


def test_sine_band_power():
    t = np.arange(2560) / FS
    a = 3.0
    x = a * np.sin(2 * np.pi * 10 * t)
    f, p = welch_psd(x, FS)
    alpha = band_power(f, p, (8, 12))
    assert alpha == pytest.approx(a**2 / 2, rel=0.05)
    assert alpha > 100 * band_power(f, p, (1, 4))


def test_band_power_rectangle():
    f = np.linspace(0, 128, 257)
    assert band_power(f, np.ones_like(f), (8, 12)) == pytest.approx(4.0)
    assert band_power(f, np.ones_like(f), (8, 12), mode="mean") == pytest.approx(1.0)


def test_band_power_errors():
    f = np.linspace(0, 128, 257)
    with pytest.raises(EmptyBand):
        band_power(f, np.ones_like(f), (200, 300))
    with pytest.raises(SignalError):
        band_power(f, np.ones_like(f), (12, 8))
    with pytest.raises(SignalError):
        band_power(f, np.ones_like(f), (8, 12), mode="median")


def test_contiguous_bands_add_up():
    f, p = welch_psd(np.random.default_rng(3).standard_normal(2560), FS)
    parts = sum(band_power(f, p, (lo, hi)) for _, lo, hi in DEFAULT_BANDS)
    assert parts == pytest.approx(band_power(f, p, (1, 75)), rel=1e-12)


def band_limited_gaussian(sigma, seed, lo=2.0, hi=70.0, n=2560):
    """Gaussian process with variance ``sigma**2`` confined to ``(lo, hi)`` Hz."""
    rng = np.random.default_rng(seed)
    f = np.fft.rfftfreq(n, 1 / FS)
    sel = (f > lo) & (f < hi)
    spec = np.zeros(f.size, complex)
    spec[sel] = rng.standard_normal(sel.sum()) + 1j * rng.standard_normal(sel.sum())
    x = np.fft.irfft(spec, n)
    return sigma * x / x.std()


@pytest.mark.parametrize("sigma", [0.5, 1.0, 4.0])
def test_de_closed_form(sigma):
    for seed in range(5):
        de = differential_entropy(band_limited_gaussian(sigma, seed), (1, 75), FS)
        assert abs(de - 0.5 * math.log(2 * math.pi * math.e * sigma**2)) < 0.05


def test_de_unit_variance_in_band():
    de = differential_entropy(band_limited_gaussian(1.0, 4), (1, 75), FS)
    assert de == pytest.approx(0.5 * math.log(2 * math.pi * math.e), abs=0.05)


@pytest.mark.parametrize("a", [0.5, 2.0, 10.0])
def test_de_scale_law(a):
    x = np.random.default_rng(5).standard_normal(2560)
    d = differential_entropy(a * x, (4, 8), FS) - differential_entropy(x, (4, 8), FS)
    assert d == pytest.approx(math.log(a), abs=0.02)


def test_de_degenerate_floor():
    with pytest.warns(DegenerateVariance):
        de = differential_entropy(np.zeros(2560), (1, 75), FS)
    assert de == pytest.approx(gaussian_entropy(1e-12))


def test_de_from_variance():
    assert differential_entropy(None, (1, 4), FS, variance=1.0) == pytest.approx(1.4189385332)


def test_segment_features_shape_and_alpha():
    rng = np.random.default_rng(6)
    t = np.arange(2560) / FS
    seg = 0.1 * rng.standard_normal((4, 2560))
    seg[2] = np.sin(2 * np.pi * 10 * t)
    tok = extract_segment_features(seg, FS, segment_index=3, recording_id="r")
    assert tok.shape == (2, 5, 4)
    assert np.argmax(tok.values[0, :, 2]) == 2
    assert np.all(np.isfinite(tok.values))
    assert tok.segment_index == 3 and tok.recording_id == "r"


def test_segment_features_at_200hz():
    seg = np.random.default_rng(7).standard_normal((4, 2000))
    assert extract_segment_features(seg, 200.0).shape == (2, 5, 4)


def test_segment_features_identical_channels():
    x = np.random.default_rng(8).standard_normal(2560)
    tok = extract_segment_features(np.stack([x, x, x, x]), FS)
    for j in range(1, 4):
        np.testing.assert_array_equal(tok.values[..., j], tok.values[..., 0])


def test_segment_features_channel_permutation():
    seg = np.random.default_rng(9).standard_normal((4, 2560))
    perm = [2, 0, 3, 1]
    a = extract_segment_features(seg, FS).values
    b = extract_segment_features(seg[perm], FS).values
    np.testing.assert_allclose(b, a[..., perm], rtol=1e-12)


def test_segment_features_alternatives():
    seg = np.random.default_rng(10).standard_normal((4, 2560))
    welch_de = extract_segment_features(seg, FS, config=FeatureConfig(de_source="welch", psd_mode="mean"))
    assert welch_de.shape == (2, 5, 4)
    with pytest.raises(SignalError):
        extract_segment_features(seg, FS, config=FeatureConfig(de_source="bogus"))


def test_segment_too_short():
    with pytest.raises(SegmentTooShort):
        extract_segment_features(np.zeros((4, 1000)), FS)


def _tok(v):
    return FeatureToken(np.asarray(v, dtype=float), 0, "r")


def test_zscore_examples():
    out, _ = zscore_normalize([_tok([[3.0]])] * 4)
    assert all(np.all(t.values == 0) for t in out)
    out, stats = zscore_normalize([_tok([[-1.0]]), _tok([[1.0]])])
    assert [t.values.item() for t in out] == [-1.0, 1.0]
    s = NormStats(np.array([[5.0]]), np.array([[2.0]]))
    out, used = zscore_normalize([_tok([[9.0]])], s)
    assert out[0].values.item() == 2.0 and used is s


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 30), st.integers(0, 2**31 - 1))
def test_zscore_idempotent(n, seed):
    rng = np.random.default_rng(seed)
    toks = [_tok(rng.standard_normal((2, 5, 4)) * 3 + 1) for _ in range(n)]
    once, _ = zscore_normalize(toks)
    twice, _ = zscore_normalize(once)
    for a, b in zip(once, twice):
        np.testing.assert_allclose(a.values, b.values, atol=1e-9)
    stack = np.stack([t.values for t in once])
    np.testing.assert_allclose(stack.mean(0), 0, atol=1e-9)


def test_norm_stats_roundtrip(tmp_path):
    rng = np.random.default_rng(1)
    stats = compute_norm_stats([_tok(rng.standard_normal((2, 5, 4))) for _ in range(5)])
    stats.save(tmp_path / "s.json")
    back = NormStats.load(tmp_path / "s.json")
    np.testing.assert_array_equal(back.mean, stats.mean)
    np.testing.assert_array_equal(back.std, stats.std)


def test_feature_csv_roundtrip(tmp_path):
    rng = np.random.default_rng(2)
    toks = [FeatureToken(rng.standard_normal((2, 5, 4)), i, "rec") for i in range(3)]
    write_feature_csv(tmp_path / "f.csv", toks)
    back = read_feature_csv(tmp_path / "f.csv")
    for a, b in zip(toks, back):
        np.testing.assert_array_equal(a.values, b.values)
    header = (tmp_path / "f.csv").read_text().splitlines()[0].split(",")
    assert header[:2] == ["recording_id", "segment_index"]
    assert header[2:] == feature_columns()
    assert header[2] == "psd_delta_c0" and header[6] == "psd_theta_c0" and header[22] == "de_delta_c0"
