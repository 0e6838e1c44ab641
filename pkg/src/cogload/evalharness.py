"""Grouped k-fold cross-validation with vote-aggregated scoring.

Per fold: normalization statistics come from the training tokens only,
a model is trained (transferred from a pre-trained encoder, or freshly
initialized for the fully supervised arm), held-out sequences are
predicted, votes are aggregated per segment and only fully voted
segments are scored.
"""
from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .aggregate import VoteTable
from .errors import EvalError, LengthMismatch, TooFewGroups
from .features import NormStats, compute_norm_stats
from .model import (
    EncoderConfig,
    HeadConfig,
    Model,
    TrainRunConfig,
    build_model,
    downstream_head,
    predict_proba,
    threshold,
    train_downstream,
    transfer,
)
from .pipeline import sequence_array

log = logging.getLogger(__name__)

GROUP_BY = ("participant", "recording", "sequence")


@dataclass
class FoldSplit:
    k: int
    assignment: dict
    group_by: str = "participant"

    def fold_of(self, group):
        return self.assignment[group]

    def groups_in(self, fold):
        return [g for g, f in self.assignment.items() if f == fold]


def kfold_split(groups, k: int = 10, seed: int = 0, group_by: str = "participant") -> FoldSplit:
    """Seeded shuffle of the distinct groups, then round-robin fold assignment."""
    uniq = sorted(set(groups), key=str)
    if len(uniq) < k:
        raise TooFewGroups(f"{len(uniq)} groups cannot fill {k} folds")
    order = np.random.default_rng(seed).permutation(len(uniq))
    return FoldSplit(k, {uniq[i]: pos % k for pos, i in enumerate(order)}, group_by)


def _check_pair(pred, truth):
    pred, truth = np.asarray(pred).astype(int), np.asarray(truth).astype(int)
    if pred.shape != truth.shape or pred.ndim != 1:
        raise LengthMismatch(f"prediction shape {pred.shape} vs truth shape {truth.shape}")
    if pred.size == 0:
        raise LengthMismatch("cannot score empty label vectors")
    return pred, truth


def accuracy(pred, truth) -> float:
    pred, truth = _check_pair(pred, truth)
    return float(np.mean(pred == truth))


def macro_f1(pred, truth) -> float:
    """Unweighted mean of the two per-class F1 scores.

    Per class ``F1 = 2 tp / (2 tp + fp + fn)``; a class absent from both
    vectors has F1 = 1.
    """
    pred, truth = _check_pair(pred, truth)
    scores = []
    for c in (0, 1):
        tp = np.sum((pred == c) & (truth == c))
        fp = np.sum((pred == c) & (truth != c))
        fn = np.sum((pred != c) & (truth == c))
        denom = 2 * tp + fp + fn
        scores.append(1.0 if denom == 0 else 2.0 * tp / denom)
    return float(np.mean(scores))


@dataclass
class RunMetrics:
    accuracy: list
    macro_f1: list

    def _stat(self, vals, fn):
        return float(fn(np.asarray(vals, dtype=float)))

    @property
    def mean_accuracy(self):
        return self._stat(self.accuracy, np.mean)

    @property
    def std_accuracy(self):
        return self._stat(self.accuracy, np.std)

    @property
    def mean_f1(self):
        return self._stat(self.macro_f1, np.mean)

    @property
    def std_f1(self):
        return self._stat(self.macro_f1, np.std)

    def summary(self):
        """Percent means with fraction std, the layout of the result tables."""
        return {
            "accuracy": round(100 * self.mean_accuracy, 4),
            "accuracy_std": round(self.std_accuracy, 6),
            "macro_f1": round(100 * self.mean_f1, 4),
            "macro_f1_std": round(self.std_f1, 6),
            "folds": len(self.accuracy),
        }

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["fold", "accuracy", "macro_f1"])
            for i, (a, f) in enumerate(zip(self.accuracy, self.macro_f1)):
                w.writerow([i, f"{100 * a:.6f}", f"{100 * f:.6f}"])

    def write_json(self, path, extra=None):
        with open(path, "w") as fh:
            json.dump({**self.summary(), **(extra or {})}, fh, indent=1, sort_keys=True)
            fh.write("\n")


@dataclass
class ExperimentConfig:
    k: int = 10
    group_by: str = "participant"
    seed: int = 0
    train: TrainRunConfig = field(default_factory=TrainRunConfig)
    head: HeadConfig = field(default_factory=downstream_head)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)  # supervised arm only
    freeze: bool = True
    jobs: int = 1


@dataclass
class FoldResult:
    fold: int
    accuracy: float
    macro_f1: float
    n_scored: int
    train_groups: list
    test_groups: list
    norm_stats: NormStats
    loss_curve: list
    votes: VoteTable
    truth: dict
    model: Model | None = None


def _group_key(group_by, rec, j):
    if group_by == "participant":
        return rec.participant_id
    if group_by == "recording":
        return rec.recording_id
    if group_by == "sequence":
        return f"{rec.recording_id}#{j}"
    raise EvalError(f"unknown group_by {group_by!r}")


def sequence_groups(dataset, group_by):
    """``[(recording, j, group)]`` for every sequence of every recording."""
    out = []
    for r in dataset:
        for j in range(max(r.n_segments - 2, 0)):
            out.append((r, j, _group_key(group_by, r, j)))
    return out


def train_token_stats(dataset, seqs, test_groups):
    """Normalization statistics over the tokens of training sequences only."""
    keep = {}
    for r, j, g in seqs:
        if g not in test_groups:
            for i in range(j, j + 3):
                keep[(r.recording_id, i)] = r.tokens[i]
    return compute_norm_stats([keep[k] for k in sorted(keep)])


def _select(dataset, seqs, groups, stats):
    by_rec = {}
    for r, j, g in seqs:
        if g in groups:
            by_rec.setdefault(r.recording_id, (r, []))[1].append(j)
    X, Y, src = [], [], []
    for rid in sorted(by_rec):
        r, js = by_rec[rid]
        Xr, Yr, _ = sequence_array([r], stats)
        X.append(Xr[js])
        Y.append(Yr[js])
        src.extend((rid, j) for j in js)
    if not X:
        return np.zeros((0, 3, 40)), np.zeros((0, 3), int), []
    return np.concatenate(X), np.concatenate(Y), src


def run_fold(dataset, pretrained, cfg: ExperimentConfig, split: FoldSplit, fold: int, keep_model=False):
    seqs = sequence_groups(dataset, split.group_by)
    test_groups = set(split.groups_in(fold))
    train_groups = sorted({g for _, _, g in seqs if g not in test_groups}, key=str)
    stats = train_token_stats(dataset, seqs, test_groups)
    Xtr, Ytr, _ = _select(dataset, seqs, set(train_groups), stats)
    Xte, Yte, src = _select(dataset, seqs, test_groups, stats)

    ss = np.random.SeedSequence([cfg.seed, fold])
    init_seed, train_seed = (int(s.generate_state(1)[0]) for s in ss.spawn(2))
    init_rng = np.random.default_rng(init_seed)
    if pretrained is None:
        model = build_model(cfg.encoder, cfg.head, init_rng, dtype=cfg.train.dtype)
    else:
        model = transfer(pretrained, cfg.head, cfg.freeze, init_rng)
    model, curve = train_downstream(Xtr, Ytr, replace(cfg.train, seed=train_seed), model)

    preds = threshold(predict_proba(model, Xte))
    table = VoteTable()
    for s, p in zip(src, preds):
        table.accumulate(s, p)
    final = table.finalize()
    labels = {r.recording_id: r.labels for r in dataset}
    truth = {key: labels[key[0]][key[1]] for key in final}
    if split.group_by == "sequence":
        # Covering sequences of a segment fall in different folds, so there is
        # nothing to vote over; score every per-segment prediction instead.
        pred, gt = preds.ravel(), Yte.ravel()
    else:
        if not final:
            raise EvalError(f"fold {fold} has no fully voted segments to score")
        keys = sorted(final)
        pred = [final[k] for k in keys]
        gt = [truth[k] for k in keys]
    return FoldResult(fold, accuracy(pred, gt), macro_f1(pred, gt), len(gt), train_groups,
                      sorted(test_groups, key=str), stats, curve, table, truth, model if keep_model else None)


def _run_fold_safe(args):
    dataset, pretrained, cfg, split, fold, keep = args
    try:
        return run_fold(dataset, pretrained, cfg, split, fold, keep)
    except Exception:
        log.error("fold %d failed; aborting run", fold)
        raise


def run_experiment(dataset, pretrained: Model | None, cfg: ExperimentConfig, keep_models=False):
    """Cross-validate on tokenized, labeled recordings.

    ``pretrained=None`` runs the fully supervised arm (fresh encoder,
    everything trainable). Returns ``(RunMetrics, [FoldResult])``; fold
    results do not depend on ``cfg.jobs``.
    """
    if cfg.group_by not in GROUP_BY:
        raise EvalError(f"group_by must be one of {GROUP_BY}")
    if any(r.labels is None for r in dataset):
        raise EvalError("every downstream recording needs labels")
    groups = [g for _, _, g in sequence_groups(dataset, cfg.group_by)]
    split = kfold_split(groups, cfg.k, cfg.seed, cfg.group_by)
    jobs = [(dataset, pretrained, cfg, split, f, keep_models) for f in range(cfg.k)]
    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(_run_fold_safe, jobs))
    else:
        results = [_run_fold_safe(j) for j in jobs]
    for r in results:
        log.info("fold %d: acc=%.4f f1=%.4f (%d segments)", r.fold, r.accuracy, r.macro_f1, r.n_scored)
    return RunMetrics([r.accuracy for r in results], [r.macro_f1 for r in results]), results
