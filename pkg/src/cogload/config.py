"""Run configuration: an INI file over a fully defaulted schema.

Every key has a type, a default and a one-line description in
:data:`SCHEMA`. Files may set any subset; unknown sections or keys are
rejected. ``section.key=value`` overrides are applied after the file, so
command-line flags win. The effective configuration hashes to a stable
digest recorded in every run manifest.
"""
from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import dataclass

from .errors import ConfigError


def _bool(text):
    v = str(text).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt_float(text):
    v = str(text).strip().lower()
    return None if v in ("", "none", "off") else float(v)


def _int_list(text):
    return tuple(int(v) for v in str(text).replace(" ", "").split(",") if v)


def _str_list(text):
    return tuple(v.strip() for v in str(text).split(",") if v.strip())


@dataclass(frozen=True)
class Key:
    parse: object
    default: object
    doc: str


SCHEMA = {
    "run": {
        "seed": Key(int, 0, "master seed for synthesis, pre-training and fold splits"),
        "jobs": Key(int, 1, "parallel fold workers; 1 keeps runs bitwise reproducible"),
        "run_dir": Key(str, "runs/default", "output directory for artifacts and the manifest"),
        "log_level": Key(str, "INFO", "logging level"),
    },
    "data": {
        "manifest": Key(str, "", "dataset manifest (JSON) listing recording CSVs"),
        "pretrain_dataset": Key(str, "pretrain", "manifest dataset used for pre-training"),
        "downstream_dataset": Key(str, "downstream", "manifest dataset used for transfer"),
        "channel_map": Key(str, "auto", "auto, seed or headband"),
    },
    "preprocess": {
        "band_low": Key(float, 1.0, "bandpass lower edge, Hz"),
        "band_high": Key(float, 75.0, "bandpass upper edge, Hz"),
        "order": Key(int, 2, "Butterworth analog prototype order (digital order is twice this)"),
        "notch_hz": Key(_opt_float, 60.0, "powerline notch frequency, Hz; 'none' disables"),
        "notch_q": Key(float, 30.0, "notch quality factor"),
        "zero_phase": Key(_bool, False, "forward-backward filtering instead of forward only"),
        "discard_s": Key(float, 0.0, "seconds dropped from the start of each recording"),
    },
    "features": {
        "segment_s": Key(float, 10.0, "segment (token) length, s"),
        "welch_nperseg_s": Key(float, 2.0, "Welch segment length, s"),
        "welch_overlap": Key(float, 0.5, "Welch overlap fraction"),
        "psd_mode": Key(str, "integral", "integral (band power) or mean (mean density)"),
        "de_source": Key(str, "filter", "filter (band-filtered variance) or welch (band power)"),
        "de_filter_order": Key(int, 2, "prototype order of the per-band DE filters"),
    },
    "encoder": {
        "n_blocks": Key(int, 4, "transformer blocks"),
        "d_model": Key(int, 64, "model width"),
        "n_heads": Key(int, 4, "attention heads"),
        "dropout_p": Key(float, 0.1, "dropout probability inside blocks"),
        "positional_encoding": Key(_bool, False, "add sinusoidal positional encoding"),
        "ff_mult": Key(int, 4, "feed-forward width as a multiple of d_model"),
        "mask_token": Key(str, "zeros", "zeros or learned"),
    },
    "pretrain": {
        "fc_sizes": Key(_int_list, (256, 128), "reconstruction head hidden sizes"),
        "head_dropout_p": Key(float, 0.1, "reconstruction head dropout"),
        "batch_size": Key(int, 64, "batch size"),
        "epochs": Key(int, 1000, "pre-training epochs"),
        "lr": Key(float, 1e-4, "Adam learning rate (constant)"),
        "redraw_mask": Key(_bool, True, "re-draw the masked position every epoch"),
        "dtype": Key(str, "float32", "training precision"),
    },
    "downstream": {
        "head": Key(str, "default", "head preset: default (32,16), A1, A2, A3, or custom"),
        "fc_sizes": Key(_int_list, (32, 16), "hidden sizes when head = custom"),
        "head_dropout_p": Key(float, 0.1, "classification head dropout"),
        "batch_size": Key(int, 64, "batch size"),
        "epochs": Key(int, 1000, "downstream epochs"),
        "lr": Key(float, 1e-4, "initial Adam learning rate"),
        "scheduler_step": Key(int, 0, "StepLR step size in epochs; 0 disables the scheduler"),
        "scheduler_gamma": Key(float, 0.75, "StepLR decay factor"),
        "freeze": Key(_bool, True, "freeze the transferred encoder"),
        "supervised": Key(_bool, False, "train from scratch without a pre-trained encoder"),
        "checkpoint": Key(str, "", "pre-trained checkpoint; default <run_dir>/pretrain.ckpt"),
        "dtype": Key(str, "float32", "training precision"),
    },
    "eval": {
        "k": Key(int, 10, "cross-validation folds"),
        "group_by": Key(str, "participant", "fold unit: participant, recording or sequence"),
        "predictions": Key(str, "", "predictions CSV scored by the eval command"),
    },
    "ablate": {
        "study": Key(str, "blocks", "blocks, heads, scheduler or posenc"),
        "scheduler_order": Key(str, "step_gamma", "read the scheduler grid as (step, gamma) or (gamma, step)"),
    },
    "synth": {
        "n_recordings": Key(int, 20, "downstream recordings"),
        "n_participants": Key(int, 20, "downstream participants"),
        "fs": Key(float, 256.0, "downstream sampling rate, Hz"),
        "duration_s": Key(float, 180.0, "downstream recording length, s"),
        "high_fraction": Key(float, 0.38, "share of high-load segments per recording"),
        "factor": Key(float, 2.0, "high-load beta and gamma power factor"),
        "gain_sd": Key(float, 0.8, "per-participant log channel gain sd"),
        "jitter_sd": Key(float, 0.5, "per-segment log band power jitter sd"),
        "noise_floor": Key(float, 0.1, "white noise floor sd"),
        "pretrain_recordings": Key(int, 40, "unlabeled pre-training recordings"),
        "pretrain_participants": Key(int, 20, "pre-training participants"),
        "pretrain_fs": Key(float, 200.0, "pre-training sampling rate, Hz"),
        "pretrain_duration_s": Key(float, 240.0, "pre-training recording length, s"),
        "pretrain_channels": Key(_str_list, ("TP7", "F7", "F8", "TP8"), "pre-training channel names"),
    },
}


# Where outputs go and how loudly; excluded from the digest.
NON_RESULT_KEYS = frozenset({"run.run_dir", "run.log_level"})


class RunConfig:
    """Resolved configuration: ``cfg[section][key]`` holds parsed values."""

    def __init__(self, values):
        self.values = values

    def __getitem__(self, section):
        return self.values[section]

    def get(self, dotted):
        section, key = _split(dotted)
        return self.values[section][key]

    def updated(self, changes):
        """Copy with ``{"section.key": parsed_value}`` replaced."""
        values = {s: dict(kv) for s, kv in self.values.items()}
        for dotted, v in changes.items():
            section, key = _split(dotted)
            values[section][key] = v
        return RunConfig(values)

    def to_dict(self):
        return {s: {k: list(v) if isinstance(v, tuple) else v for k, v in kv.items()} for s, kv in self.values.items()}

    def digest(self):
        """sha256 over every key that can change a result."""
        d = self.to_dict()
        d["run"] = {k: v for k, v in d["run"].items() if f"run.{k}" not in NON_RESULT_KEYS}
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def to_ini(self):
        out = []
        for section, kv in self.to_dict().items():
            out.append(f"[{section}]")
            for k, v in kv.items():
                if isinstance(v, list):
                    v = ",".join(str(x) for x in v)
                out.append(f"{k} = {'none' if v is None else v}")
            out.append("")
        return "\n".join(out)


def _split(dotted):
    if "." not in dotted:
        raise ConfigError(f"override {dotted!r} must look like section.key")
    section, key = dotted.split(".", 1)
    if section not in SCHEMA:
        raise ConfigError(f"unknown config section [{section}]")
    if key not in SCHEMA[section]:
        raise ConfigError(f"unknown config key {key!r} in [{section}]")
    return section, key


def _parse(section, key, text):
    try:
        return SCHEMA[section][key].parse(text)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{section}] {key} = {text!r}: {exc}") from None


def defaults() -> RunConfig:
    return RunConfig({s: {k: spec.default for k, spec in keys.items()} for s, keys in SCHEMA.items()})


def load_config(path=None, overrides=()) -> RunConfig:
    """Defaults, then the INI file at ``path``, then ``section.key=value`` overrides."""
    cfg = defaults()
    if path:
        parser = configparser.ConfigParser(interpolation=None)
        try:
            with open(path) as fh:
                parser.read_file(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except configparser.Error as exc:
            raise ConfigError(f"config {path}: {exc}") from None
        for section in parser.sections():
            if section not in SCHEMA:
                raise ConfigError(f"{path}: unknown config section [{section}]")
            for key, text in parser.items(section):
                if key not in SCHEMA[section]:
                    raise ConfigError(f"{path}: unknown config key {key!r} in [{section}]")
                cfg.values[section][key] = _parse(section, key, text)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} must look like section.key=value")
        dotted, text = item.split("=", 1)
        section, key = _split(dotted.strip())
        cfg.values[section][key] = _parse(section, key, text.strip())
    return cfg
