"""Glue between a :class:`~cogload.config.RunConfig` and the library.

Builds the typed configuration objects of each stage, resolves dataset
and checkpoint paths, and writes run manifests.
"""
from __future__ import annotations

import json
import os
from pathlib import Path

from .data import HEADBAND_MAP, SEED_MAP, SynthSpec, dataset_hashes, file_sha256, high_load_profiles, load_dataset
from .errors import ConfigError
from .evalharness import GROUP_BY, ExperimentConfig
from .features import FeatureConfig
from .model import HEAD_PRESETS, EncoderConfig, HeadConfig, TrainRunConfig, downstream_head
from .pipeline import PreprocessConfig, featurize

CHANNEL_MAPS = {"auto": None, "seed": SEED_MAP, "headband": HEADBAND_MAP}
PRETRAIN_SEED_OFFSET = 1000


def preprocess_config(cfg) -> PreprocessConfig:
    return PreprocessConfig(**cfg["preprocess"])


def feature_config(cfg) -> FeatureConfig:
    f = cfg["features"]
    if f["psd_mode"] not in ("integral", "mean"):
        raise ConfigError(f"[features] psd_mode must be integral or mean, got {f['psd_mode']!r}")
    if f["de_source"] not in ("filter", "welch"):
        raise ConfigError(f"[features] de_source must be filter or welch, got {f['de_source']!r}")
    return FeatureConfig(**f)


def encoder_config(cfg) -> EncoderConfig:
    enc = EncoderConfig(**cfg["encoder"])
    enc.validate()
    return enc


def _check_dtype(section, dtype):
    if dtype not in ("float32", "float64"):
        raise ConfigError(f"[{section}] dtype must be float32 or float64, got {dtype!r}")
    return dtype


def pretrain_configs(cfg):
    """``(TrainRunConfig, HeadConfig)`` of the reconstruction stage."""
    p = cfg["pretrain"]
    run = TrainRunConfig(batch_size=p["batch_size"], epochs=p["epochs"], lr=p["lr"], seed=cfg["run"]["seed"],
                         redraw_mask=p["redraw_mask"], dtype=_check_dtype("pretrain", p["dtype"]))
    run.validate()
    head = HeadConfig(tuple(p["fc_sizes"]), encoder_config(cfg).n_features, "none", p["head_dropout_p"])
    head.validate()
    return run, head


def downstream_head_config(cfg, preset=None) -> HeadConfig:
    d = cfg["downstream"]
    name = preset or d["head"]
    if name == "custom":
        sizes = tuple(d["fc_sizes"])
    elif name in HEAD_PRESETS:
        sizes = HEAD_PRESETS[name]
    else:
        raise ConfigError(f"[downstream] head must be custom or one of {sorted(HEAD_PRESETS)}, got {name!r}")
    head = downstream_head(sizes)
    head.dropout_p = d["head_dropout_p"]
    head.validate()
    return head


def downstream_run_config(cfg) -> TrainRunConfig:
    d = cfg["downstream"]
    if d["scheduler_step"] < 0 or not 0.0 < d["scheduler_gamma"] <= 1.0:
        raise ConfigError("[downstream] scheduler_step must be >= 0 and scheduler_gamma in (0, 1]")
    sched = (d["scheduler_step"], d["scheduler_gamma"]) if d["scheduler_step"] > 0 else None
    run = TrainRunConfig(batch_size=d["batch_size"], epochs=d["epochs"], lr=d["lr"], scheduler=sched,
                         seed=cfg["run"]["seed"], freeze_encoder=d["freeze"],
                         dtype=_check_dtype("downstream", d["dtype"]))
    run.validate()
    return run


def experiment_config(cfg) -> ExperimentConfig:
    e = cfg["eval"]
    if e["group_by"] not in GROUP_BY:
        raise ConfigError(f"[eval] group_by must be one of {GROUP_BY}, got {e['group_by']!r}")
    if e["k"] < 2:
        raise ConfigError("[eval] k must be at least 2")
    if cfg["run"]["jobs"] < 1:
        raise ConfigError("[run] jobs must be at least 1")
    return ExperimentConfig(k=e["k"], group_by=e["group_by"], seed=cfg["run"]["seed"],
                            train=downstream_run_config(cfg), head=downstream_head_config(cfg),
                            encoder=encoder_config(cfg), freeze=cfg["downstream"]["freeze"],
                            jobs=cfg["run"]["jobs"])


def channel_map(cfg):
    name = cfg["data"]["channel_map"]
    if name not in CHANNEL_MAPS:
        raise ConfigError(f"[data] channel_map must be one of {sorted(CHANNEL_MAPS)}, got {name!r}")
    return CHANNEL_MAPS[name]


def synth_specs(cfg):
    """``(pretrain_spec, downstream_spec)`` for the synthetic corpora.

    The pre-training corpus uses the four mapped electrode names of the
    62-channel montage at its own sampling rate and an even class mix; its
    labels are never read. The downstream corpus uses the headband layout.
    """
    s, seed = cfg["synth"], cfg["run"]["seed"]
    profiles = high_load_profiles(s["factor"])
    common = dict(class_profiles=profiles, participant_gain_sd=s["gain_sd"], segment_jitter_sd=s["jitter_sd"],
                  noise_floor=s["noise_floor"])
    down = SynthSpec(n_recordings=s["n_recordings"], n_participants=s["n_participants"], fs=s["fs"],
                     duration_s=s["duration_s"], seed=seed, high_fraction=s["high_fraction"], **common)
    pre = SynthSpec(n_recordings=s["pretrain_recordings"], n_participants=s["pretrain_participants"],
                    fs=s["pretrain_fs"], duration_s=s["pretrain_duration_s"], seed=seed + PRETRAIN_SEED_OFFSET,
                    high_fraction=0.5, channel_names=tuple(s["pretrain_channels"]), id_prefix="pre", **common)
    return pre, down


def manifest_path(cfg) -> Path:
    m = cfg["data"]["manifest"]
    return Path(m) if m else Path(cfg["run"]["run_dir"]) / "data" / "manifest.json"


def load_tokenized(cfg, dataset):
    """Load and tokenize one manifest dataset; returns ``(tokenized, hashes)``."""
    path = manifest_path(cfg)
    recs = load_dataset(path, dataset)
    if not recs:
        raise ConfigError(f"dataset {dataset!r} in {path} lists no recordings")
    toks = featurize(recs, preprocess_config(cfg), feature_config(cfg), channel_map(cfg))
    return toks, {f"{dataset}/{k}": v for k, v in sorted(dataset_hashes(path, dataset).items())}


def checkpoint_path(cfg) -> Path:
    c = cfg["downstream"]["checkpoint"]
    return Path(c) if c else Path(cfg["run"]["run_dir"]) / "pretrain.ckpt"


def write_run_manifest(run_dir, command, cfg, outputs=(), datasets=None, metrics=None, extra=None):
    """``manifest_<command>.json`` tying a run's outputs to its configuration.

    Output files are listed relative to ``run_dir`` with their sha256, so
    a manifest is itself deterministic for a deterministic run.
    """
    run_dir = Path(run_dir)
    doc = {
        "command": command,
        "config_digest": cfg.digest(),
        "config": cfg.to_dict(),
        "seed": cfg["run"]["seed"],
        "datasets": datasets or {},
        "outputs": {Path(p).relative_to(run_dir).as_posix(): file_sha256(p) for p in sorted(map(str, outputs))},
        "metrics": metrics or {},
    }
    if extra:
        doc.update(extra)
    path = run_dir / f"manifest_{command}.json"
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return path


def ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return Path(path)
