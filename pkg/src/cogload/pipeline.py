"""Raw recordings to per-recording feature tokens and labels."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Recording, binarize_labels, infer_channel_map, select_channels
from .features import FeatureConfig, FeatureToken, NormStats, extract_segment_features
from .sigproc import preprocess
from .tokenizer import build_sequences, segment_recording


@dataclass
class PreprocessConfig:
    band_low: float = 1.0
    band_high: float = 75.0
    order: int = 2
    notch_hz: float | None = 60.0
    notch_q: float = 30.0
    zero_phase: bool = False
    discard_s: float = 0.0


@dataclass
class TokenizedRecording:
    recording_id: str
    participant_id: str
    tokens: list
    labels: list | None = None  # binary, one per token

    @property
    def n_segments(self):
        return len(self.tokens)

    def sequences(self):
        return build_sequences(self.tokens)


def recording_tokens(rec: Recording, pre: PreprocessConfig | None = None, feat: FeatureConfig | None = None,
                     channel_map=None) -> list[FeatureToken]:
    pre = pre or PreprocessConfig()
    feat = feat or FeatureConfig()
    if len(rec.channel_names) != 4 or channel_map is not None:
        rec = select_channels(rec, channel_map or infer_channel_map(rec.channel_names))
    x = preprocess(rec.samples, rec.fs, (pre.band_low, pre.band_high), pre.order, pre.notch_hz,
                   pre.notch_q, pre.zero_phase, pre.discard_s)
    view = Recording(rec.recording_id, rec.participant_id, rec.fs, rec.channel_names, x)
    segs = segment_recording(view, rec.fs, feat.segment_s)
    return [extract_segment_features(s, rec.fs, config=feat, segment_index=i, recording_id=rec.recording_id)
            for i, s in enumerate(segs)]


def featurize(recs, pre: PreprocessConfig | None = None, feat: FeatureConfig | None = None, channel_map=None):
    """Tokenize recordings; raw 1..9 labels are binarized and aligned to tokens."""
    out = []
    for rec in recs:
        tokens = recording_tokens(rec, pre, feat, channel_map)
        labels = None
        if rec.labels is not None:
            labels = binarize_labels(rec.labels)[:len(tokens)]
        out.append(TokenizedRecording(rec.recording_id, rec.participant_id, tokens, labels))
    return out


def all_tokens(dataset):
    return [t for r in dataset for t in r.tokens]


def sequence_array(dataset, stats: NormStats | None = None):
    """Stack every sequence of ``dataset`` into ``(N, 3, n_features)``.

    Returns the array, the ``(N, 3)`` label array (or None) and the
    sequence sources ``(recording_id, j)``.
    """
    X, Y, src = [], [], []
    for r in dataset:
        vals = np.stack([t.values for t in r.tokens]) if r.tokens else np.zeros((0, 2, 5, 4))
        if stats is not None:
            vals = stats.apply(vals)
        flat = vals.reshape(len(vals), -1)
        for j in range(len(flat) - 2):
            X.append(flat[j:j + 3])
            src.append((r.recording_id, j))
            if r.labels is not None:
                Y.append(r.labels[j:j + 3])
    X = np.stack(X) if X else np.zeros((0, 3, 40))
    Y = np.asarray(Y, dtype=int) if Y else None
    return X, Y, src
