"""Combining per-image outputs into one decision per specimen."""
from __future__ import annotations

from collections import Counter

import numpy as np

from .errors import EmptyInput, RuleUnsupported
from typing import TYPE_CHECKING

if TYPE_CHECKING:
    from .learners.base import ViewOutputs

AVERAGE = "average"
VOTE = "vote"
RULES = (AVERAGE, VOTE)


def check_rule(rule: str, has_scores: bool):
    if rule not in RULES:
        raise RuleUnsupported(f"unknown aggregation rule {rule!r}; expected one of {RULES}")
    if rule == AVERAGE and not has_scores:
        raise RuleUnsupported("average-score aggregation needs a learner that outputs class scores")


def aggregate(outputs: ViewOutputs, rule: str):
    """Return ``(label, mean score vector)`` for one specimen's views.

    ``average``: argmax of the mean score vector.  ``vote``: the most common
    per-view label; ties go to the higher mean score, then to the earlier
    class in canonical order.
    """
    if len(outputs) == 0:
        raise EmptyInput("no view outputs to aggregate")
    check_rule(rule, outputs.has_scores)
    mean = outputs.scores.mean(axis=0)
    if rule == AVERAGE:
        return outputs.classes[int(np.argmax(mean))], mean
    counts = Counter(outputs.labels)
    best = max(counts.values())
    tied = [i for i, c in enumerate(outputs.classes) if counts.get(c, 0) == best]
    winner = max(tied, key=lambda i: (mean[i], -i))
    return outputs.classes[winner], mean


def aggregate_groups(outputs: ViewOutputs, groups, rule: str) -> dict:
    """Aggregate rows sharing a group key; returns {group: label} in first-seen order."""
    rows = {}
    for i, g in enumerate(groups):
        rows.setdefault(g, []).append(i)
    return {g: aggregate(outputs.take(idx), rule)[0] for g, idx in rows.items()}
