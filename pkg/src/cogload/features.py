"""Band power (Welch PSD) and differential entropy features per 10 s segment."""
from __future__ import annotations

import csv
import functools
import json
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DegenerateVariance, EmptyBand, SegmentTooShort, SignalError
from .sigproc import apply_iir, design_butterworth_bandpass, magnitude_response

FEATURE_NAMES = ("psd", "de")
DE_FLOOR_EPS = 1e-12


@dataclass(frozen=True)
class BandSet:
    """Ordered, contiguous frequency bands ``(name, low_hz, high_hz)``."""

    bands: tuple = (
        ("delta", 1.0, 4.0),
        ("theta", 4.0, 8.0),
        ("alpha", 8.0, 12.0),
        ("beta", 12.0, 31.0),
        ("gamma", 31.0, 75.0),
    )

    def __post_init__(self):
        bands = tuple((str(n), float(lo), float(hi)) for n, lo, hi in self.bands)
        if not bands:
            raise SignalError("band set is empty")
        for (_, lo, hi), nxt in zip(bands, bands[1:] + (None,)):
            if not lo < hi:
                raise SignalError(f"band ({lo}, {hi}) is not ascending")
            if nxt is not None and nxt[1] != hi:
                raise SignalError("bands must be contiguous and ascending")
        object.__setattr__(self, "bands", bands)

    def __len__(self):
        return len(self.bands)

    def __iter__(self):
        return iter(self.bands)

    @property
    def names(self):
        return [b[0] for b in self.bands]


DEFAULT_BANDS = BandSet()


@dataclass
class FeatureToken:
    """One segment's feature block; ``values[0]`` is band power, ``values[1]`` DE."""

    values: np.ndarray
    segment_index: int
    recording_id: str

    @property
    def shape(self):
        return self.values.shape

    def flat(self):
        return self.values.reshape(-1)


@dataclass
class FeatureConfig:
    segment_s: float = 10.0
    welch_nperseg_s: float = 2.0
    welch_overlap: float = 0.5
    psd_mode: str = "integral"  # or "mean"
    de_source: str = "filter"  # or "welch"
    de_filter_order: int = 2
    bands: BandSet = field(default_factory=BandSet)


def hann(n: int) -> np.ndarray:
    """Periodic Hann window."""
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def welch_psd(x, fs: float, nperseg: int | None = None, overlap_frac: float = 0.5, detrend: bool = False):
    """One-sided Welch PSD of ``x`` along its last axis.

    Hann-windowed segments of ``nperseg`` samples (default 2 s) are
    overlapped by ``overlap_frac``; squared rFFT magnitudes are averaged
    and scaled to density units (signal**2 / Hz).

    Returns
    -------
    freqs : ndarray, shape (nperseg // 2 + 1,)
    psd : ndarray, shape (..., nperseg // 2 + 1)
    """
    x = np.asarray(x, dtype=np.float64)
    if nperseg is None:
        nperseg = int(round(2.0 * fs))
    nperseg = int(nperseg)
    if not 0.0 <= overlap_frac < 1.0:
        raise SignalError(f"overlap fraction must lie in [0, 1), got {overlap_frac}")
    if x.shape[-1] < nperseg or nperseg < 2:
        raise SegmentTooShort(f"signal of {x.shape[-1]} samples is shorter than nperseg={nperseg}")
    step = nperseg - int(np.floor(overlap_frac * nperseg))
    segs = np.lib.stride_tricks.sliding_window_view(x, nperseg, axis=-1)[..., ::step, :]
    if detrend:
        segs = segs - segs.mean(axis=-1, keepdims=True)
    win = hann(nperseg)
    spec = np.abs(np.fft.rfft(segs * win, axis=-1)) ** 2
    psd = spec.mean(axis=-2) / (fs * np.sum(win**2))
    if nperseg % 2:
        psd[..., 1:] *= 2.0
    else:
        psd[..., 1:-1] *= 2.0
    freqs = np.fft.rfftfreq(nperseg, 1.0 / fs)
    return freqs, psd


def band_power(freqs, psd, band, mode: str = "integral"):
    """Trapezoidal integral of ``psd`` over ``low <= f <= high``.

    Contiguous bands therefore add up to the integral over their union.
    ``mode="mean"`` returns the mean density over the same bins instead.
    At least two bins must fall inside the band.
    """
    low, high = band[0], band[1]
    if not low < high:
        raise SignalError(f"band ({low}, {high}) is not ascending")
    freqs = np.asarray(freqs)
    sel = (freqs >= low) & (freqs <= high)
    if np.count_nonzero(sel) < 2:
        raise EmptyBand(f"no frequency interval of the grid falls in ({low}, {high}) Hz")
    p = np.asarray(psd)[..., sel]
    if mode == "mean":
        return p.mean(axis=-1)
    if mode != "integral":
        raise SignalError(f"unknown band power mode {mode!r}")
    df = np.diff(freqs[sel])
    return np.sum((p[..., 1:] + p[..., :-1]) * df / 2.0, axis=-1)


def gaussian_entropy(variance):
    return 0.5 * np.log(2.0 * np.pi * np.e * variance)


@functools.lru_cache(maxsize=256)
def _band_filter(low, high, order, fs):
    filt = design_butterworth_bandpass(low, high, order, fs)
    grid = np.linspace(low, high, 4001)
    gain = float(np.mean(magnitude_response(filt, grid) ** 2))
    return filt, gain


def differential_entropy(x, band, fs: float, order: int = 2, variance=None, eps: float = DE_FLOOR_EPS,
                         gain_correction: bool = True):
    """Gaussian differential entropy (nats) of ``x`` restricted to ``band``.

    The band variance is the sample variance of ``x`` after a Butterworth
    bandpass over ``band``, divided by the filter's mean power gain over
    the band so a flat in-band signal of variance s**2 yields s**2.
    Passing ``variance`` (for instance a Welch band power) skips the
    filtering. Variances at or below ``eps`` are floored and a
    :class:`DegenerateVariance` warning is issued.
    """
    if variance is None:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] < 2:
            raise SegmentTooShort("need at least two samples")
        filt, gain = _band_filter(float(band[0]), float(band[1]), int(order), float(fs))
        variance = np.var(apply_iir(filt, x), axis=-1, ddof=1)
        if gain_correction:
            variance = variance / gain
    variance = np.asarray(variance, dtype=np.float64)
    low = variance <= eps
    if np.any(low):
        warnings.warn(
            f"band ({band[0]}, {band[1]}) Hz variance <= {eps}; entropy floored",
            DegenerateVariance,
            stacklevel=2,
        )
        variance = np.where(low, eps, variance)
    de = gaussian_entropy(variance)
    return float(de) if de.ndim == 0 else de


def extract_segment_features(seg, fs: float, bands: BandSet | None = None, config: FeatureConfig | None = None,
                             segment_index: int = 0, recording_id: str = "") -> FeatureToken:
    """Un-normalized ``(2, n_bands, n_channels)`` token for one segment."""
    config = config or FeatureConfig()
    bands = bands or config.bands
    seg = np.asarray(seg, dtype=np.float64)
    if seg.ndim != 2:
        raise SignalError(f"segment must be (channels, samples), got shape {seg.shape}")
    need = int(round(config.segment_s * fs))
    if seg.shape[1] < need:
        raise SegmentTooShort(f"segment has {seg.shape[1]} samples, expected {need}")
    freqs, psd = welch_psd(seg, fs, int(round(config.welch_nperseg_s * fs)), config.welch_overlap)
    values = np.empty((2, len(bands), seg.shape[0]))
    for i, (_, lo, hi) in enumerate(bands):
        values[0, i] = band_power(freqs, psd, (lo, hi), config.psd_mode)
        if config.de_source == "welch":
            var = band_power(freqs, psd, (lo, hi), "integral")
            values[1, i] = differential_entropy(None, (lo, hi), fs, variance=var)
        elif config.de_source == "filter":
            values[1, i] = differential_entropy(seg, (lo, hi), fs, order=config.de_filter_order)
        else:
            raise SignalError(f"unknown DE variance source {config.de_source!r}")
    return FeatureToken(values, segment_index, recording_id)


@dataclass
class NormStats:
    """Per-position mean and population std of a token population."""

    mean: np.ndarray
    std: np.ndarray

    def to_dict(self):
        return {"shape": list(self.mean.shape), "mean": self.mean.ravel().tolist(), "std": self.std.ravel().tolist()}

    @classmethod
    def from_dict(cls, d):
        shape = tuple(d["shape"])
        return cls(np.array(d["mean"], dtype=np.float64).reshape(shape),
                   np.array(d["std"], dtype=np.float64).reshape(shape))

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)
            fh.write("\n")

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def apply(self, values):
        values = np.asarray(values, dtype=np.float64)
        safe = np.where(self.std > 0, self.std, 1.0)
        return np.where(self.std > 0, (values - self.mean) / safe, 0.0)


def compute_norm_stats(tokens) -> NormStats:
    stack = np.stack([t.values for t in tokens])
    return NormStats(stack.mean(axis=0), stack.std(axis=0))


def zscore_normalize(tokens, stats: NormStats | None = None):
    """Standardize every feature position; returns ``(tokens, stats)``.

    Without ``stats`` the population statistics of ``tokens`` are used;
    supplied stats are applied unchanged. Zero-variance positions map to 0.
    """
    tokens = list(tokens)
    if not tokens:
        raise SignalError("cannot normalize an empty token population")
    if stats is None:
        stats = compute_norm_stats(tokens)
    return [replace(t, values=stats.apply(t.values)) for t in tokens], stats


def feature_columns(bands: BandSet | None = None, channel_names=None):
    bands = bands or DEFAULT_BANDS
    channel_names = channel_names or [f"c{j}" for j in range(4)]
    return [f"{f}_{b}_{c}" for f in FEATURE_NAMES for b in bands.names for c in channel_names]


def write_feature_csv(path, tokens, bands: BandSet | None = None, channel_names=None):
    """One row per token: recording_id, segment_index, then the flattened
    values in feature-major, band-major, channel-minor order. Floats are
    written with ``repr`` so the file round-trips exactly."""
    cols = feature_columns(bands, channel_names)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["recording_id", "segment_index", *cols])
        for t in tokens:
            flat = t.flat()
            if len(flat) != len(cols):
                raise SignalError(f"token has {len(flat)} values, header has {len(cols)}")
            w.writerow([t.recording_id, t.segment_index, *(repr(float(v)) for v in flat)])


def read_feature_csv(path, shape=(2, 5, 4)):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    tokens = []
    for row in rows[1:]:
        vals = np.array([float(v) for v in row[2:]]).reshape(shape)
        tokens.append(FeatureToken(vals, int(row[1]), row[0]))
    return tokens
