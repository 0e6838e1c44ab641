from collections import Counter

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cogload.errors import LengthMismatch, TooFewGroups
from cogload.evalharness import (
    ExperimentConfig,
    RunMetrics,
    accuracy,
    kfold_split,
    macro_f1,
    run_experiment,
    sequence_groups,
    train_token_stats,
)
from cogload.features import compute_norm_stats
from cogload.model import EncoderConfig, TrainRunConfig, pretrain
from cogload.pipeline import featurize, sequence_array
from cogload.data import SynthSpec, high_load_profiles, synth_generate


def confusion_oracle(pred, truth):
    """Accuracy and macro F1 from an explicit 2x2 confusion matrix."""
    cm = np.zeros((2, 2))
    for p, t in zip(pred, truth):
        cm[t, p] += 1
    acc = np.trace(cm) / cm.sum()
    f1 = []
    for c in (0, 1):
        prec_den, rec_den = cm[:, c].sum(), cm[c, :].sum()
        if prec_den == 0 and rec_den == 0:
            f1.append(1.0)
            continue
        prec = cm[c, c] / prec_den if prec_den else 0.0
        rec = cm[c, c] / rec_den if rec_den else 0.0
        f1.append(0.0 if prec + rec == 0 else 2 * prec * rec / (prec + rec))
    return acc, np.mean(f1)


def test_metric_examples():
    t = [0, 1, 1, 0]
    assert accuracy(t, t) == 1.0 and macro_f1(t, t) == 1.0
    assert accuracy([0, 0, 0, 0], [0, 1, 0, 1]) == 0.5
    assert macro_f1([1 - v for v in t], t) == 0.0
    truth = [0] * 62 + [1] * 38
    assert accuracy([0] * 100, truth) == pytest.approx(0.62)
    assert macro_f1([0] * 100, truth) == pytest.approx(0.5 * 2 * 0.62 / 1.62)
    assert macro_f1([0] * 100, truth) == pytest.approx(0.383, abs=5e-4)
    assert macro_f1([0, 0], [0, 0]) == 1.0
    with pytest.raises(LengthMismatch):
        accuracy([0, 1], [0])
    with pytest.raises(LengthMismatch):
        macro_f1([], [])


def test_metrics_match_oracle():
    rng = np.random.default_rng(0)
    for _ in range(200):
        n = int(rng.integers(1, 80))
        pred, truth = rng.integers(0, 2, n), rng.integers(0, 2, n)
        acc, f1 = confusion_oracle(pred, truth)
        assert abs(accuracy(pred, truth) - acc) <= 1e-12
        assert abs(macro_f1(pred, truth) - f1) <= 1e-12


def test_kfold_examples():
    groups = [f"g{i}" for i in range(20)]
    split = kfold_split(groups, 10, seed=3)
    assert Counter(split.assignment.values()) == {f: 2 for f in range(10)}
    assert kfold_split(groups, 10, seed=3).assignment == split.assignment
    with pytest.raises(TooFewGroups):
        kfold_split(groups[:5], 10)


@given(st.integers(2, 60), st.integers(2, 10), st.integers(0, 1000))
def test_kfold_partition(n, k, seed):
    if n < k:
        with pytest.raises(TooFewGroups):
            kfold_split(range(n), k, seed)
        return
    split = kfold_split(list(range(n)) * 2, k, seed)
    assert set(split.assignment) == set(range(n))
    sizes = Counter(split.assignment.values())
    assert max(sizes.values()) - min(sizes.values()) <= 1 and len(sizes) == k


def test_run_metrics_exports(tmp_path):
    m = RunMetrics([0.5, 1.0], [0.25, 0.75])
    s = m.summary()
    assert s["accuracy"] == 75.0 and s["accuracy_std"] == 0.25 and s["macro_f1"] == 50.0
    m.write_csv(tmp_path / "m.csv")
    assert (tmp_path / "m.csv").read_text() == "fold,accuracy,macro_f1\n0,50.000000,25.000000\n1,100.000000,75.000000\n"


@pytest.fixture(scope="module")
def tiny_dataset():
    recs = synth_generate(SynthSpec(n_recordings=4, n_participants=4, duration_s=70, seed=0,
                                    class_profiles=high_load_profiles(4.0), high_fraction=0.4))
    return featurize(recs)


@pytest.fixture(scope="module")
def tiny_pretrained(tiny_dataset):
    stats = compute_norm_stats([t for r in tiny_dataset for t in r.tokens])
    X, _, _ = sequence_array(tiny_dataset, stats)
    model, _ = pretrain(X, TrainRunConfig(epochs=2, seed=0), enc=EncoderConfig(n_blocks=1, d_model=8, n_heads=2))
    return model


def test_no_leakage(tiny_dataset, tiny_pretrained):
    cfg = ExperimentConfig(k=4, train=TrainRunConfig(epochs=3), seed=1)
    _, folds = run_experiment(tiny_dataset, tiny_pretrained, cfg)
    seqs = sequence_groups(tiny_dataset, "participant")
    for fr in folds:
        assert not set(fr.test_groups) & set(fr.train_groups)
        train_only = [t for r in tiny_dataset if r.participant_id in fr.train_groups for t in r.tokens]
        ref = compute_norm_stats(train_only)
        np.testing.assert_array_equal(fr.norm_stats.mean, ref.mean)
        np.testing.assert_array_equal(fr.norm_stats.std, ref.std)
        np.testing.assert_array_equal(train_token_stats(tiny_dataset, seqs, set(fr.test_groups)).mean, ref.mean)


def test_scoring_set_matches_finalize(tiny_dataset, tiny_pretrained):
    cfg = ExperimentConfig(k=4, train=TrainRunConfig(epochs=2))
    _, folds = run_experiment(tiny_dataset, tiny_pretrained, cfg)
    for fr in folds:
        assert set(fr.truth) == set(fr.votes.finalize())
        per_rec = Counter(rid for rid, _ in fr.truth)
        for rid, n in per_rec.items():
            n_seg = next(r.n_segments for r in tiny_dataset if r.recording_id == rid)
            assert n == n_seg - 4


def test_determinism_and_both_arms(tiny_dataset, tiny_pretrained):
    cfg = ExperimentConfig(k=4, train=TrainRunConfig(epochs=2), encoder=EncoderConfig(n_blocks=1, d_model=8, n_heads=2))
    a, _ = run_experiment(tiny_dataset, tiny_pretrained, cfg)
    b, _ = run_experiment(tiny_dataset, tiny_pretrained, cfg)
    assert a == b
    sup, _ = run_experiment(tiny_dataset, None, cfg)
    ft, _ = run_experiment(tiny_dataset, tiny_pretrained, ExperimentConfig(
        k=4, freeze=False, train=TrainRunConfig(epochs=2, scheduler=(250, 0.75))))
    for m in (sup, ft):
        assert len(m.accuracy) == 4
        assert all(0 <= v <= 1 for v in m.accuracy + m.macro_f1)


def test_group_by_variants(tiny_dataset, tiny_pretrained):
    for gb in ("recording", "sequence"):
        m, _ = run_experiment(tiny_dataset, tiny_pretrained, ExperimentConfig(k=4, group_by=gb, train=TrainRunConfig(epochs=1)))
        assert len(m.accuracy) == 4
