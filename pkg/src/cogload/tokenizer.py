"""10 s segmentation, overlapping 3-token sequences and pre-training masks."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .data import SEGMENT_S
from .errors import AlreadyMasked, RecordingTooShort

SEQ_LEN = 3


@dataclass(frozen=True)
class TokenSequence:
    """Three consecutive tokens of one recording; ``source = (recording_id, j)``."""

    tokens: tuple
    source: tuple
    mask_index: int | None = None

    def values(self) -> np.ndarray:
        """``(3, n_features)`` array of the unmasked token values."""
        return np.stack([t.flat() for t in self.tokens])

    def model_input(self) -> np.ndarray:
        """Token values with the masked position replaced by zeros."""
        x = self.values()
        if self.mask_index is not None:
            x[self.mask_index] = 0.0
        return x

    @property
    def target(self) -> np.ndarray:
        """Ground truth of the masked token."""
        if self.mask_index is None:
            raise ValueError("sequence is not masked")
        return self.tokens[self.mask_index].flat().copy()


def segment_recording(rec, fs: float | None = None, segment_s: float = SEGMENT_S):
    """Non-overlapping ``(channels, segment_samples)`` windows; tail dropped."""
    fs = rec.fs if fs is None else fs
    samples = rec.samples if hasattr(rec, "samples") else np.asarray(rec)
    seg_len = int(round(segment_s * fs))
    n = samples.shape[-1] // seg_len
    if n < 1:
        rid = getattr(rec, "recording_id", "recording")
        raise RecordingTooShort(f"{rid}: {samples.shape[-1] / fs:.2f} s is shorter than one {segment_s:g} s segment")
    return [samples[:, i * seg_len:(i + 1) * seg_len] for i in range(n)]


def build_sequences(tokens):
    """Stride-1 windows ``[t_j, t_{j+1}, t_{j+2}]`` over one recording's tokens."""
    tokens = list(tokens)
    out = []
    for j in range(len(tokens) - SEQ_LEN + 1):
        window = tuple(tokens[j:j + SEQ_LEN])
        out.append(TokenSequence(window, (window[0].recording_id, j)))
    return out


def draw_mask_indices(rng, n):
    return rng.integers(0, SEQ_LEN, size=n)


def mask_sequence(seq: TokenSequence, rng) -> TokenSequence:
    if seq.mask_index is not None:
        raise AlreadyMasked(f"sequence {seq.source} already masks position {seq.mask_index}")
    return replace(seq, mask_index=int(draw_mask_indices(rng, 1)[0]))
