import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cogload.aggregate import VoteTable, accumulate, finalize, write_predictions_csv
from cogload.errors import DuplicateSequence, LabelOutOfRange


def brute_force(preds_by_rec):
    """Enumerate every segment's covering sequences directly."""
    out = {}
    for rid, preds in preds_by_rec.items():
        n = len(preds) + 2
        for s in range(n):
            votes = [preds[j][s - j] for j in range(len(preds)) if 0 <= s - j <= 2]
            if len(votes) == 3:
                out[(rid, s)] = 1 if sum(votes) >= 2 else 0
    return out


def random_table(rng):
    return {f"r{i}": rng.integers(0, 2, size=(int(rng.integers(1, 25)), 3)).tolist()
            for i in range(int(rng.integers(1, 4)))}


def fill(preds_by_rec, order=None):
    t = VoteTable()
    items = [(rid, j, p) for rid, ps in preds_by_rec.items() for j, p in enumerate(ps)]
    for k in (order if order is not None else range(len(items))):
        rid, j, p = items[k]
        accumulate(t, (rid, j), p)
    return t, len(items)


def test_single_and_overlap():
    t = VoteTable().accumulate(("r", 0), [1, 0, 1])
    assert {k: len(v) for k, v in t.vote_lists().items()} == {("r", 0): 1, ("r", 1): 1, ("r", 2): 1}
    t.accumulate(("r", 1), [0, 0, 0]).accumulate(("r", 2), [1, 1, 1])
    assert len(t.vote_lists()[("r", 2)]) == 3
    with pytest.raises(DuplicateSequence):
        t.accumulate(("r", 0), [0, 0, 0])
    with pytest.raises(LabelOutOfRange):
        VoteTable().accumulate(("r", 0), [0, 2, 1])


@pytest.mark.parametrize("votes, expected", [((1, 1, 0), 1), ((0, 0, 0), 0), ((0, 1, 0), 0), ((1, 1, 1), 1)])
def test_majority(votes, expected):
    t = VoteTable()
    t.accumulate(("r", 0), [0, 0, votes[0]])
    t.accumulate(("r", 1), [0, votes[1], 0])
    t.accumulate(("r", 2), [votes[2], 0, 0])
    assert finalize(t)[("r", 2)] == expected


def test_eighteen_segments():
    preds = {"r": [[1, 1, 1]] * 16}
    t, _ = fill(preds)
    assert sorted(s for _, s in finalize(t)) == list(range(2, 16))


def test_oracle_on_1000_tables():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        preds = random_table(rng)
        t, _ = fill(preds)
        assert finalize(t) == brute_force(preds)


@given(st.integers(5, 60))
def test_output_size(n):
    t, _ = fill({"r": [[0, 1, 0]] * (n - 2)})
    assert len(finalize(t)) == n - 4


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_order_irrelevant(seed):
    rng = np.random.default_rng(seed)
    preds = random_table(rng)
    t1, n = fill(preds)
    t2, _ = fill(preds, rng.permutation(n))
    assert finalize(t1) == finalize(t2)


def test_predictions_csv(tmp_path):
    t, _ = fill({"r": [[1, 0, 1], [1, 1, 0], [0, 1, 1]]})
    write_predictions_csv(tmp_path / "p.csv", t, {("r", 2): 1})
    rows = list(csv.reader(open(tmp_path / "p.csv")))
    assert rows[0] == ["recording_id", "segment_index", "vote0", "vote1", "vote2", "final_label", "ground_truth"]
    assert rows[1] == ["r", "2", "1", "1", "0", "1", "1"]
    assert len(rows) == 2
