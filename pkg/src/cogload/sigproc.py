"""IIR filter design and application for EEG preprocessing.

Filters are stored as cascades of second-order sections, each row holding
``(b0, b1, b2, a1, a2)`` with ``a0 = 1``. The Butterworth bandpass is
designed from the analog low-pass prototype: lowpass-to-bandpass
transform on pre-warped edges, then the bilinear transform. ``order``
is the prototype order, so ``order=2`` yields a 4th-order digital
bandpass (two sections).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _backend
from .errors import InvalidBand, NonFiniteInput


@dataclass(frozen=True)
class BiquadCascade:
    """Immutable cascade of second-order sections."""

    sections: np.ndarray
    sample_rate_hz: float

    def __post_init__(self):
        sec = np.array(self.sections, dtype=np.float64).reshape(-1, 5)
        if not np.all(np.isfinite(sec)):
            raise InvalidBand("filter coefficients must be finite")
        if not self.sample_rate_hz > 0:
            raise InvalidBand("sample rate must be positive")
        for _, _, _, a1, a2 in sec:
            if np.max(np.abs(np.roots([1.0, a1, a2])), initial=0.0) >= 1.0:
                raise InvalidBand(f"unstable section (a1={a1}, a2={a2})")
        sec.setflags(write=False)
        object.__setattr__(self, "sections", sec)
        object.__setattr__(self, "sample_rate_hz", float(self.sample_rate_hz))

    @classmethod
    def identity(cls, fs: float) -> BiquadCascade:
        return cls(np.array([[1.0, 0.0, 0.0, 0.0, 0.0]]), fs)

    def __len__(self):
        return len(self.sections)

    def then(self, other: BiquadCascade) -> BiquadCascade:
        """Cascade equal to applying ``self`` and then ``other``."""
        if other.sample_rate_hz != self.sample_rate_hz:
            raise InvalidBand("cannot chain filters designed for different sample rates")
        return BiquadCascade(np.vstack([self.sections, other.sections]), self.sample_rate_hz)

    def poles(self) -> np.ndarray:
        return np.concatenate([np.roots([1.0, a1, a2]) for *_, a1, a2 in self.sections])


def _check_band(low_hz, high_hz, fs):
    nyq = fs / 2.0
    if not (0.0 < low_hz < high_hz < nyq):
        raise InvalidBand(
            f"need 0 < low < high < Nyquist, got low={low_hz}, high={high_hz}, fs={fs}"
        )


def design_butterworth_bandpass(low_hz: float, high_hz: float, order: int = 2, fs: float = 256.0) -> BiquadCascade:
    """Butterworth bandpass via pre-warped bilinear transform.

    Parameters
    ----------
    low_hz, high_hz : float
        Passband edges (-3 dB points) in Hz.
    order : int
        Order of the analog low-pass prototype. The digital filter has
        order ``2 * order`` and ``order`` sections.
    fs : float
        Sampling rate in Hz.
    """
    _check_band(low_hz, high_hz, fs)
    if int(order) != order or order < 1:
        raise InvalidBand(f"order must be a positive integer, got {order}")
    order = int(order)
    fs2 = 2.0 * fs
    wl = fs2 * np.tan(np.pi * low_hz / fs)
    wh = fs2 * np.tan(np.pi * high_hz / fs)
    bw = wh - wl
    w0sq = wl * wh

    k = np.arange(1, order + 1)
    proto = np.exp(1j * np.pi * (2 * k + order - 1) / (2 * order))
    # each prototype pole p maps to the roots of s^2 - p*bw*s + w0^2
    disc = np.sqrt((proto * bw) ** 2 - 4.0 * w0sq + 0j)
    analog = np.concatenate([(proto * bw + disc) / 2.0, (proto * bw - disc) / 2.0])

    # order zeros at s=0 -> z=+1, order zeros at s=inf -> z=-1
    gain = bw**order * np.real(fs2**order / np.prod(fs2 - analog))
    digital = (fs2 + analog) / (fs2 - analog)

    sections = [[1.0, 0.0, -1.0, a1, a2] for a1, a2 in _pair_poles(digital)]
    sections = np.array(sections)
    sections[:, :3] *= abs(gain) ** (1.0 / len(sections))
    if gain < 0:
        sections[0, :3] *= -1.0
    return BiquadCascade(sections, fs)


def _pair_poles(poles, tol=1e-10):
    """Group poles into real denominator pairs (a1, a2)."""
    upper = sorted((p for p in poles if p.imag > tol), key=lambda p: (abs(p), p.real))
    real = sorted(p.real for p in poles if abs(p.imag) <= tol)
    pairs = [(-2.0 * p.real, abs(p) ** 2) for p in upper]
    if len(real) % 2:
        raise InvalidBand("odd number of real poles cannot be paired")
    for r1, r2 in zip(real[::2], real[1::2]):
        pairs.append((-(r1 + r2), r1 * r2))
    return pairs


def design_notch(f0_hz: float = 60.0, q: float = 30.0, fs: float = 256.0) -> BiquadCascade:
    """Second-order notch with an exact null at ``f0_hz``, bandwidth ``f0_hz / q``."""
    if not (0.0 < f0_hz < fs / 2.0):
        raise InvalidBand(f"notch frequency {f0_hz} Hz must lie in (0, {fs / 2.0}) Hz")
    if not q > 0:
        raise InvalidBand(f"quality factor must be positive, got {q}")
    w0 = 2.0 * np.pi * f0_hz / fs
    g = 1.0 / (1.0 + np.tan(w0 / q / 2.0))
    c = np.cos(w0)
    return BiquadCascade(np.array([[g, -2.0 * g * c, g, -2.0 * g * c, 2.0 * g - 1.0]]), fs)


def apply_iir(filt: BiquadCascade, x, zero_phase: bool = False) -> np.ndarray:
    """Run ``x`` (1-D, or 2-D with one signal per row) through ``filt``.

    Forward-only by default; ``zero_phase`` runs the cascade forward and
    then backward, squaring the magnitude response.
    """
    arr = np.asarray(x, dtype=np.float64)
    if arr.size == 0:
        raise NonFiniteInput("cannot filter an empty signal")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteInput("signal contains NaN or Inf samples")
    rows = np.ascontiguousarray(arr.reshape(-1, arr.shape[-1]))
    out = _backend.cascade_filter(filt.sections, rows)
    if zero_phase:
        out = _backend.cascade_filter(filt.sections, np.ascontiguousarray(out[:, ::-1]))[:, ::-1]
    return np.ascontiguousarray(out).reshape(arr.shape)


def magnitude_response(filt: BiquadCascade, f_hz):
    """``|H(e^{jw})|`` at ``f_hz`` (scalar or array), ``w = 2 pi f / fs``."""
    w = 2.0 * np.pi * np.asarray(f_hz, dtype=np.float64) / filt.sample_rate_hz
    zinv = np.exp(-1j * w)
    h = np.ones_like(zinv)
    for b0, b1, b2, a1, a2 in filt.sections:
        h = h * (b0 + b1 * zinv + b2 * zinv**2) / (1.0 + a1 * zinv + a2 * zinv**2)
    mag = np.abs(h)
    return float(mag) if mag.ndim == 0 else mag


def preprocess(
    samples,
    fs: float,
    band=(1.0, 75.0),
    order: int = 2,
    notch_hz: float | None = 60.0,
    notch_q: float = 30.0,
    zero_phase: bool = False,
    discard_s: float = 0.0,
) -> np.ndarray:
    """Notch then bandpass a ``(channels, T)`` array.

    ``notch_hz=None`` skips the notch. ``discard_s`` drops that many
    leading seconds after filtering to remove the start-up transient.
    """
    chain = design_butterworth_bandpass(band[0], band[1], order, fs)
    if notch_hz is not None:
        chain = design_notch(notch_hz, notch_q, fs).then(chain)
    out = apply_iir(chain, samples, zero_phase=zero_phase)
    skip = int(round(discard_s * fs))
    return out[..., skip:] if skip else out
