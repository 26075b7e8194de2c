"""Sequence distances, phone accuracy and corpus phone error rate."""

from __future__ import annotations

from enum import Enum

import numpy as np

from . import kernels
from .core import InvalidLabelError, PairingError, as_labels


class DistanceKind(str, Enum):
    PHONE_EDIT = "phone_edit"
    FRAME_ERROR = "frame_error"


def collapse_runs(y) -> np.ndarray:
    """Merge consecutive duplicate labels: ``(A, A, B, B, C) -> (A, B, C)``."""
    y = as_labels(y)
    if len(y) == 0:
        raise InvalidLabelError("cannot collapse an empty sequence")
    keep = np.ones(len(y), dtype=bool)
    keep[1:] = y[1:] != y[:-1]
    return y[keep]


def edit_distance(a, b) -> int:
    """Unit-cost Levenshtein distance."""
    return int(kernels.edit_distance(as_labels(a), as_labels(b)))


def delta(y_ref, y_hyp, kind=DistanceKind.PHONE_EDIT) -> float:
    """Distance between a reference and a hypothesis label sequence.

    ``phone_edit`` is the edit distance between the run-collapsed sequences
    divided by the collapsed reference length. It is not clamped and can
    exceed 1 when the hypothesis has many insertions. ``frame_error`` is the
    fraction of mismatched frames.
    """
    kind = DistanceKind(kind)
    y_ref = as_labels(y_ref)
    y_hyp = as_labels(y_hyp)
    if kind is DistanceKind.FRAME_ERROR:
        if len(y_ref) != len(y_hyp):
            raise PairingError(f"frame_error needs equal lengths, got {len(y_ref)} and {len(y_hyp)}")
        if len(y_ref) == 0:
            raise InvalidLabelError("empty sequence")
        return float(np.count_nonzero(y_ref != y_hyp)) / len(y_ref)
    ref = collapse_runs(y_ref)
    return edit_distance(ref, collapse_runs(y_hyp)) / len(ref)


def accuracy(y_ref, y_hyp) -> float:
    """Phone accuracy ``1 - delta`` clamped to [0, 1]."""
    return min(1.0, max(0.0, 1.0 - delta(y_ref, y_hyp, DistanceKind.PHONE_EDIT)))


def corpus_per(refs, hyps) -> float:
    """Total edit errors over total collapsed reference length."""
    if len(refs) != len(hyps):
        raise PairingError(f"{len(refs)} references but {len(hyps)} hypotheses")
    errors = 0
    total = 0
    for r, h in zip(refs, hyps):
        rc = collapse_runs(r)
        errors += edit_distance(rc, collapse_runs(h))
        total += len(rc)
    if total == 0:
        return 0.0
    return errors / total
