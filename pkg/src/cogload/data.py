"""Recording ingestion, channel mapping, label binarization and synthetic EEG.

Recording CSV layout: a header row ``t,<ch1>,...,<chN>`` (the ``t``
column is optional and ignored on load) followed by one sample per row.
Labels live in a sidecar text file with one integer (1..9) per line, one
line per complete 10 s window.
"""
from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    ChannelCountMismatch,
    ConfigError,
    LabelCountMismatch,
    LabelOutOfRange,
    MalformedCsv,
    UnknownChannel,
)

SEGMENT_S = 10.0

# 62-electrode montage of the emotion corpora, in their storage order.
SEED_CHANNELS = (
    "FP1 FPZ FP2 AF3 AF4 F7 F5 F3 F1 FZ F2 F4 F6 F8 FT7 FC5 FC3 FC1 FCZ FC2 FC4 FC6 FT8 "
    "T7 C5 C3 C1 CZ C2 C4 C6 T8 TP7 CP5 CP3 CP1 CPZ CP2 CP4 CP6 TP8 P7 P5 P3 P1 PZ P2 P4 "
    "P6 P8 PO7 PO5 PO3 POZ PO4 PO6 PO8 CB1 O1 OZ O2 CB2"
).split()

HEADBAND_CHANNELS = ("TP9", "AF7", "AF8", "TP10")


@dataclass
class Recording:
    recording_id: str
    participant_id: str
    fs: float
    channel_names: list
    samples: np.ndarray  # (channels, T)
    labels: list | None = None  # raw 1..9 ratings, one per 10 s

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        self.channel_names = list(self.channel_names)
        if self.samples.ndim != 2 or self.samples.shape[0] != len(self.channel_names):
            raise ChannelCountMismatch(
                f"{self.recording_id}: {len(self.channel_names)} channel names for samples of shape {self.samples.shape}"
            )
        if self.labels is not None:
            self.labels = [int(v) for v in self.labels]
            if len(self.labels) != self.n_segments:
                raise LabelCountMismatch(
                    f"{self.recording_id}: {len(self.labels)} labels for {self.n_segments} complete 10 s windows"
                )

    @property
    def n_segments(self):
        return int(self.samples.shape[1] // round(SEGMENT_S * self.fs))

    @property
    def duration_s(self):
        return self.samples.shape[1] / self.fs


@dataclass(frozen=True)
class ChannelMap:
    """Source channel name -> canonical slot, listed in slot order."""

    pairs: tuple

    def __post_init__(self):
        pairs = tuple((str(s), int(k)) for s, k in self.pairs)
        if sorted(k for _, k in pairs) != list(range(4)):
            raise ConfigError(f"channel map must target slots 0..3 exactly once, got {pairs}")
        object.__setattr__(self, "pairs", tuple(sorted(pairs, key=lambda p: p[1])))

    @property
    def sources(self):
        return [s for s, _ in self.pairs]


SEED_MAP = ChannelMap((("TP7", 0), ("F7", 1), ("F8", 2), ("TP8", 3)))
HEADBAND_MAP = ChannelMap(tuple((name, i) for i, name in enumerate(HEADBAND_CHANNELS)))


def infer_channel_map(channel_names) -> ChannelMap:
    """Pick the headband identity map or the 62-channel map by name."""
    upper = {n.upper() for n in channel_names}
    if all(s.upper() in upper for s in HEADBAND_MAP.sources):
        return HEADBAND_MAP
    if all(s.upper() in upper for s in SEED_MAP.sources):
        return SEED_MAP
    raise UnknownChannel(f"no known channel map covers channels {list(channel_names)[:8]}...")


def select_channels(rec: Recording, cmap: ChannelMap | None = None) -> Recording:
    """Reindex ``rec`` to the four canonical headband slots.

    Matching is case-insensitive; sample values are copied unchanged.
    """
    cmap = cmap or infer_channel_map(rec.channel_names)
    index = {n.upper(): i for i, n in enumerate(rec.channel_names)}
    rows = []
    for src in cmap.sources:
        if src.upper() not in index:
            raise UnknownChannel(f"{rec.recording_id}: channel {src!r} not in recording")
        rows.append(index[src.upper()])
    return Recording(
        rec.recording_id,
        rec.participant_id,
        rec.fs,
        list(HEADBAND_CHANNELS),
        rec.samples[rows],
        None if rec.labels is None else list(rec.labels),
    )


def binarize_labels(raw):
    """Ratings 1..5 -> 0 (low load), 6..9 -> 1 (high load)."""
    out = []
    for v in raw:
        iv = int(v)
        if iv != v or not 1 <= iv <= 9:
            raise LabelOutOfRange(f"label {v!r} outside 1..9")
        out.append(0 if iv <= 5 else 1)
    return out


def _scan_csv(path, n_cols):
    """Locate the first bad line to report a useful MalformedCsv."""
    with open(path) as fh:
        next(fh)
        for lineno, line in enumerate(fh, start=2):
            cells = line.rstrip("\n").split(",")
            if len(cells) != n_cols:
                raise ChannelCountMismatch(f"{path}:{lineno}: expected {n_cols} columns, found {len(cells)}")
            for cell in cells:
                try:
                    v = float(cell)
                except ValueError:
                    raise MalformedCsv(f"{path}:{lineno}: non-numeric cell {cell!r}") from None
                if not np.isfinite(v):
                    raise MalformedCsv(f"{path}:{lineno}: non-finite cell {cell!r}")
    raise MalformedCsv(f"{path}: unreadable numeric block")


def read_labels(path):
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    try:
        return [int(v) for v in lines]
    except ValueError as exc:
        raise MalformedCsv(f"{path}: {exc}") from None


def load_recording_csv(path, meta=None) -> Recording:
    """Parse a recording CSV.

    ``meta`` keys (all optional): ``recording_id`` (default: file stem),
    ``participant_id`` (default: recording id), ``fs`` (default 256),
    ``labels`` (sidecar path), ``channels`` (expected names or count).
    """
    meta = dict(meta or {})
    path = Path(path)
    try:
        with open(path) as fh:
            header = fh.readline().strip()
    except OSError as exc:
        raise MalformedCsv(f"{path}: {exc}") from None
    if not header:
        raise MalformedCsv(f"{path}: missing header row")
    names = [h.strip() for h in header.split(",")]
    has_t = names[0].lower() == "t"
    channels = names[1:] if has_t else names
    if not channels or any(not c for c in channels):
        raise MalformedCsv(f"{path}: header must name every channel")
    try:
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2, dtype=np.float64)
    except ValueError:
        _scan_csv(path, len(names))
    if data.size == 0:
        raise MalformedCsv(f"{path}: no samples")
    if data.shape[1] != len(names):
        raise ChannelCountMismatch(f"{path}: header has {len(names)} columns, rows have {data.shape[1]}")
    if not np.all(np.isfinite(data)):
        _scan_csv(path, len(names))
    samples = data[:, 1:].T if has_t else data.T

    expected = meta.get("channels")
    if isinstance(expected, int) and expected != len(channels):
        raise ChannelCountMismatch(f"{path}: expected {expected} channels, found {len(channels)}")
    if isinstance(expected, (list, tuple)) and [c.upper() for c in expected] != [c.upper() for c in channels]:
        raise ChannelCountMismatch(f"{path}: expected channels {list(expected)}, found {channels}")

    labels = None
    if meta.get("labels"):
        labels = read_labels(meta["labels"])
    rid = str(meta.get("recording_id") or path.stem)
    return Recording(
        rid,
        str(meta.get("participant_id") or rid),
        float(meta.get("fs", 256.0)),
        channels,
        np.ascontiguousarray(samples),
        labels,
    )


def write_recording_csv(rec: Recording, path, labels_path=None):
    """Write ``rec`` as ``t,<channels>`` CSV (10 significant digits)."""
    t = np.arange(rec.samples.shape[1]) / rec.fs
    block = np.column_stack([t, rec.samples.T])
    np.savetxt(path, block, delimiter=",", fmt="%.10g", header=",".join(["t", *rec.channel_names]), comments="")
    if labels_path is not None and rec.labels is not None:
        with open(labels_path, "w") as fh:
            fh.writelines(f"{v}\n" for v in rec.labels)


def file_sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(path, datasets):
    """``datasets``: name -> list of entries ``{path, labels, recording_id,
    participant_id, fs}`` with paths relative to the manifest."""
    with open(path, "w") as fh:
        json.dump({"datasets": datasets}, fh, indent=1, sort_keys=True)
        fh.write("\n")


def read_manifest(path):
    path = Path(path)
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"manifest {path} does not exist") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"manifest {path}: {exc}") from None
    if "datasets" not in doc:
        raise ConfigError(f"manifest {path} has no 'datasets' table")
    return doc["datasets"]


def load_dataset(manifest_path, name):
    """Load every recording listed under ``name`` in a manifest."""
    manifest_path = Path(manifest_path)
    datasets = read_manifest(manifest_path)
    if name not in datasets:
        raise ConfigError(f"manifest {manifest_path} has no dataset {name!r}")
    base = manifest_path.parent
    recs = []
    for entry in datasets[name]:
        meta = dict(entry)
        if meta.get("labels"):
            meta["labels"] = base / meta["labels"]
        recs.append(load_recording_csv(base / entry["path"], meta))
    return recs


def dataset_hashes(manifest_path, name):
    manifest_path = Path(manifest_path)
    entries = read_manifest(manifest_path).get(name, [])
    return {e["path"]: file_sha256(manifest_path.parent / e["path"]) for e in entries}


# --- synthetic EEG ---------------------------------------------------------

BASE_BAND_VAR = {"delta": 8.0, "theta": 4.0, "alpha": 3.0, "beta": 1.5, "gamma": 0.5}


@dataclass
class SynthSpec:
    """Synthetic corpus description.

    Each 10 s segment is a sum of band-limited Gaussian components whose
    variances are ``BASE_BAND_VAR[band] * profile[label][band]`` times a
    per-participant channel gain and a per-segment jitter, plus a white
    noise floor. ``class_profiles`` maps 0/1 to ``{band: factor}``; missing
    bands default to 1.
    """

    n_recordings: int = 4
    fs: float = 256.0
    duration_s: float = 180.0
    class_profiles: dict = field(default_factory=lambda: {0: {}, 1: {"beta": 3.0, "gamma": 3.0}})
    seed: int = 0
    n_participants: int | None = None
    high_fraction: float = 0.5
    channel_names: tuple = HEADBAND_CHANNELS
    participant_gain_sd: float = 0.0
    segment_jitter_sd: float = 0.0
    noise_floor: float = 0.1
    id_prefix: str = "syn"
    base_band_var: dict = field(default_factory=lambda: dict(BASE_BAND_VAR))
    bands: tuple = (("delta", 1.0, 4.0), ("theta", 4.0, 8.0), ("alpha", 8.0, 12.0),
                    ("beta", 12.0, 31.0), ("gamma", 31.0, 75.0))


def high_load_profiles(factor):
    return {0: {}, 1: {"beta": float(factor), "gamma": float(factor)}}


def _band_noise(rng, n_ch, n, fs, lo, hi):
    """Unit-variance Gaussian noise with spectrum confined to [lo, hi] Hz."""
    freqs = np.fft.rfftfreq(n, 1.0 / fs)
    sel = (freqs >= lo) & (freqs <= hi)
    spec = np.zeros((n_ch, freqs.size), dtype=np.complex128)
    k = int(sel.sum())
    spec[:, sel] = rng.standard_normal((n_ch, k)) + 1j * rng.standard_normal((n_ch, k))
    x = np.fft.irfft(spec, n, axis=-1)
    return x / x.std(axis=-1, keepdims=True)


def _label_block(rng, n_seg, high_fraction):
    n_high = int(round(high_fraction * n_seg))
    labels = np.zeros(n_seg, dtype=int)
    if n_high:
        start = int(rng.integers(0, n_seg - n_high + 1))
        labels[start:start + n_high] = 1
    return labels


def synth_generate(spec: SynthSpec):
    """Deterministic list of synthetic recordings with raw 1..9 labels."""
    if spec.n_recordings < 1 or spec.duration_s < SEGMENT_S or spec.fs <= 0:
        raise ConfigError("SynthSpec needs >= 1 recording of >= 10 s at a positive rate")
    if not 0.0 <= spec.high_fraction <= 1.0:
        raise ConfigError("high_fraction must lie in [0, 1]")
    if spec.bands[-1][2] >= spec.fs / 2:
        raise ConfigError("highest synthetic band must lie below Nyquist")
    n_part = spec.n_participants or spec.n_recordings
    root = np.random.SeedSequence(spec.seed)
    part_rngs = [np.random.default_rng(s) for s in root.spawn(n_part)]
    n_ch = len(spec.channel_names)
    gains = [np.exp(spec.participant_gain_sd * r.standard_normal(n_ch)) for r in part_rngs]
    rec_seeds = np.random.SeedSequence([spec.seed, 1]).spawn(spec.n_recordings)
    seg_len = int(round(SEGMENT_S * spec.fs))
    n_seg = int(spec.duration_s // SEGMENT_S)
    total = int(round(spec.duration_s * spec.fs))
    out = []
    for r in range(spec.n_recordings):
        rng = np.random.default_rng(rec_seeds[r])
        p = r % n_part
        labels = _label_block(rng, n_seg, spec.high_fraction)
        samples = np.zeros((n_ch, total))
        for s in range(n_seg):
            seg = np.zeros((n_ch, seg_len))
            profile = spec.class_profiles.get(int(labels[s]), {})
            for name, lo, hi in spec.bands:
                var = spec.base_band_var.get(name, 1.0) * float(profile.get(name, 1.0))
                jitter = np.exp(spec.segment_jitter_sd * rng.standard_normal(n_ch))
                amp = np.sqrt(var * jitter) * gains[p]
                seg += amp[:, None] * _band_noise(rng, n_ch, seg_len, spec.fs, lo, hi)
            seg += spec.noise_floor * rng.standard_normal((n_ch, seg_len))
            samples[:, s * seg_len:(s + 1) * seg_len] = seg
        tail = total - n_seg * seg_len
        if tail:
            samples[:, n_seg * seg_len:] = spec.noise_floor * rng.standard_normal((n_ch, tail))
        raw = np.where(labels == 1, rng.integers(6, 10, n_seg), rng.integers(1, 6, n_seg))
        out.append(Recording(f"{spec.id_prefix}{r:03d}", f"{spec.id_prefix}p{p:02d}", spec.fs,
                             list(spec.channel_names), samples, raw.tolist()))
    return out


def export_recordings(recs, out_dir, dataset="downstream"):
    """Write recordings and label sidecars; returns manifest entries."""
    out_dir = Path(out_dir)
    os.makedirs(out_dir / dataset, exist_ok=True)
    entries = []
    for rec in recs:
        rel = Path(dataset) / f"{rec.recording_id}.csv"
        lab = Path(dataset) / f"{rec.recording_id}.labels" if rec.labels is not None else None
        write_recording_csv(rec, out_dir / rel, None if lab is None else out_dir / lab)
        entry = {"path": rel.as_posix(), "recording_id": rec.recording_id,
                 "participant_id": rec.participant_id, "fs": rec.fs}
        if lab is not None:
            entry["labels"] = lab.as_posix()
        entries.append(entry)
    return entries
