"""Majority vote over the three predictions each interior segment receives.

Sequence ``j`` of a recording covers segments ``j, j+1, j+2``, so every
segment away from the recording edges collects exactly three votes.
Segments with fewer votes (the first two and last two) are not scored.
With three binary votes a tie cannot occur.
"""
from __future__ import annotations

import csv
from collections import defaultdict

from .errors import DuplicateSequence, EvalError, LabelOutOfRange
from .tokenizer import SEQ_LEN


class VoteTable:
    """``(recording_id, segment_index) -> [(source j, vote), ...]``."""

    def __init__(self):
        self.votes = defaultdict(list)
        self._seen = set()

    def accumulate(self, source, preds):
        """Add the three predictions of sequence ``source = (recording_id, j)``."""
        rid, j = source
        if (rid, j) in self._seen:
            raise DuplicateSequence(f"sequence {source} was already accumulated")
        preds = [int(p) for p in preds]
        if len(preds) != SEQ_LEN or any(p not in (0, 1) for p in preds):
            raise LabelOutOfRange(f"predictions must be {SEQ_LEN} binary values, got {preds}")
        self._seen.add((rid, j))
        for k, p in enumerate(preds):
            self.votes[(rid, j + k)].append((j, p))
        return self

    def vote_lists(self):
        return {key: [p for _, p in sorted(v)] for key, v in self.votes.items()}

    def finalize(self):
        """``(recording_id, segment) -> majority label`` for fully voted segments."""
        out = {}
        for key in sorted(self.votes):
            votes = self.votes[key]
            if len(votes) == SEQ_LEN:
                out[key] = int(sum(p for _, p in votes) * 2 > SEQ_LEN)
        return out


def accumulate(table: VoteTable, seq_source, preds) -> VoteTable:
    return table.accumulate(seq_source, preds)


def finalize(table: VoteTable):
    return table.finalize()


def write_predictions_csv(path, table: VoteTable, truth=None):
    """Columns: recording_id, segment_index, vote0..2, final_label, ground_truth.

    Only fully voted segments are written; ``truth`` maps
    ``(recording_id, segment) -> label`` and may be omitted (empty cell).
    """
    final = table.finalize()
    lists = table.vote_lists()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["recording_id", "segment_index", "vote0", "vote1", "vote2", "final_label", "ground_truth"])
        for (rid, seg), label in final.items():
            gt = "" if truth is None else truth.get((rid, seg), "")
            w.writerow([rid, seg, *lists[(rid, seg)], label, gt])


def read_predictions_csv(path):
    """Rows of a predictions CSV as ``[(recording_id, segment, final, truth)]``.

    ``truth`` is None where the ground-truth cell is empty. A final label
    that disagrees with its own votes is rejected.
    """
    out = []
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise EvalError(f"cannot read predictions {path}: {exc}") from None
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:2] != ["recording_id", "segment_index"]:
            raise EvalError(f"{path}: not a predictions file")
        for line, row in enumerate(reader, start=2):
            try:
                rid, seg, *votes, final, gt = row
                votes = [int(v) for v in votes]
                final = int(final)
                seg = int(seg)
                gt = int(gt) if gt != "" else None
            except ValueError:
                raise EvalError(f"{path}:{line}: malformed predictions row") from None
            if len(votes) != SEQ_LEN or final != int(sum(votes) * 2 > SEQ_LEN):
                raise EvalError(f"{path}:{line}: final label does not match its votes")
            out.append((rid, seg, final, gt))
    return out
