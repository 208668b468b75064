"""Hierarchical error measures: CE, CSE, LCSE, per-rank CE, error
structure, confusion matrices and cross-split aggregation.

All functions take :class:`PredictionRecord` lists whose paths have already
been validated against one taxonomy (see :func:`make_records`).
"""
from __future__ import annotations

import statistics
from fractions import Fraction
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import EmptyInput, NoEligibleRecords, ValidationError
from .taxonomy import Taxonomy, common_prefix_length, path_loss

ABSENT_COLUMN = "<absent>"


@dataclass(frozen=True)
class PredictionRecord:
    specimen_id: str
    truth: tuple
    pred: Optional[tuple]

    @property
    def correct(self) -> bool:
        return self.pred == self.truth


def make_records(pairs, taxonomy: Taxonomy) -> list:
    """Validate ``(specimen_id, truth, pred)`` triples into records."""
    out = []
    for sid, truth, pred in pairs:
        truth = taxonomy.validate_path(truth)
        pred = None if pred is None else taxonomy.validate_path(pred)
        out.append(PredictionRecord(str(sid), truth, pred))
    return out


def _require(records):
    if not records:
        raise EmptyInput("no prediction records")


def classification_error(records) -> float:
    _require(records)
    return sum(not r.correct for r in records) / len(records)


def loss_heights(records, strict: bool = False) -> list:
    return [path_loss(r.pred, r.truth, strict) for r in records]


def cse(records, total_levels: int, strict: bool = False) -> float:
    """Context-sensitive error: summed loss heights over ``n * total_levels``."""
    _require(records)
    deepest = max(len(r.truth) for r in records)
    if total_levels < deepest:
        raise ValidationError(f"total_levels={total_levels} below deepest truth ({deepest})")
    return sum(loss_heights(records, strict)) / (len(records) * total_levels)


def lcse(records, strict: bool = False) -> float:
    """Level-adjusted CSE: each loss height divided by its own truth depth."""
    _require(records)
    # exact rational sum, rounded once
    total = sum(Fraction(h, len(r.truth)) for h, r in zip(loss_heights(records, strict), records))
    return float(total / len(records))


def _at(path, rank):
    if path is None or rank > len(path):
        return None
    return path[rank - 1]


def ce_at_rank(records, rank: int) -> float:
    """Error at one rank over the records whose truth reaches that rank."""
    eligible = [r for r in records if len(r.truth) >= rank]
    if not eligible:
        raise NoEligibleRecords(f"no truth path reaches rank {rank}")
    wrong = sum(_at(r.pred, rank) != r.truth[rank - 1] for r in eligible)
    return wrong / len(eligible)


def first_error_rank(record: PredictionRecord) -> Optional[int]:
    """Rank at which a wrong prediction first departs from the truth."""
    if record.correct:
        return None
    if record.pred is None:
        return 1
    return common_prefix_length(record.pred, record.truth) + 1


def error_structure(records, max_rank: Optional[int] = None) -> dict:
    counts = {}
    for r in records:
        k = first_error_rank(r)
        if k is not None:
            counts[k] = counts.get(k, 0) + 1
    top = max([max_rank or 0] + list(counts))
    return {k: counts.get(k, 0) for k in range(1, top + 1)}


@dataclass
class ConfusionMatrix:
    rank: int
    rows: tuple      # truth node ids
    columns: tuple   # predicted node ids, then ABSENT_COLUMN
    counts: np.ndarray

    def to_dict(self, taxonomy: Optional[Taxonomy] = None):
        label = (lambda n: n) if taxonomy is None else (lambda n: n if n == ABSENT_COLUMN else taxonomy.name(n))
        return {
            "rank": self.rank,
            "rows": [label(n) for n in self.rows],
            "columns": [label(n) for n in self.columns],
            "counts": self.counts.tolist(),
        }


def confusion_matrix(records, rank: int, taxonomy: Taxonomy) -> ConfusionMatrix:
    nodes = taxonomy.nodes_at_rank(rank)
    index = {n: i for i, n in enumerate(nodes)}
    counts = np.zeros((len(nodes), len(nodes) + 1), dtype=np.int64)
    for r in records:
        if len(r.truth) < rank:
            continue
        p = _at(r.pred, rank)
        counts[index[r.truth[rank - 1]], len(nodes) if p is None else index[p]] += 1
    return ConfusionMatrix(rank, nodes, nodes + (ABSENT_COLUMN,), counts)


@dataclass
class MetricsReport:
    n: int
    ce_deepest: Optional[float]
    lcse: Optional[float]
    cse: Optional[float]
    ce_per_rank: dict
    err_structure: dict
    confusion: dict = field(default_factory=dict, repr=False)
    absent: int = 0
    mode: str = "partial"
    incoherent: Optional[float] = None

    def scalars(self) -> dict:
        out = {"ce_deepest": self.ce_deepest, "lcse": self.lcse, "cse": self.cse}
        for rank, v in self.ce_per_rank.items():
            out[f"ce_rank{rank}"] = v
        if self.incoherent is not None:
            out["incoherent"] = self.incoherent
        return {k: v for k, v in out.items() if v is not None}

    def to_dict(self, taxonomy: Optional[Taxonomy] = None) -> dict:
        return {
            "n": self.n,
            "mode": self.mode,
            "ce_deepest": self.ce_deepest,
            "lcse": self.lcse,
            "cse": self.cse,
            "ce_per_rank": {str(k): v for k, v in self.ce_per_rank.items()},
            "err_structure": {str(k): v for k, v in self.err_structure.items()},
            "absent": self.absent,
            "incoherent": self.incoherent,
            "confusion": {str(k): m.to_dict(taxonomy) for k, m in self.confusion.items()},
        }

    @classmethod
    def from_dict(cls, d) -> "MetricsReport":
        """Inverse of :meth:`to_dict` for the scalar fields (confusion is not restored)."""
        return cls(
            n=int(d["n"]), ce_deepest=d.get("ce_deepest"), lcse=d.get("lcse"), cse=d.get("cse"),
            ce_per_rank={int(k): v for k, v in d.get("ce_per_rank", {}).items()},
            err_structure={int(k): v for k, v in d.get("err_structure", {}).items()},
            absent=int(d.get("absent", 0)), mode=d.get("mode", "partial"),
            incoherent=d.get("incoherent"),
        )


def evaluate(records, taxonomy: Taxonomy, strict: bool = False,
             confusion: bool = True) -> MetricsReport:
    """Full report for one set of specimen predictions."""
    _require(records)
    ranks = [r.index for r in taxonomy.ranks]
    per_rank = {k: ce_at_rank(records, k) for k in ranks
                if any(len(r.truth) >= k for r in records)}
    return MetricsReport(
        n=len(records),
        ce_deepest=classification_error(records),
        lcse=lcse(records, strict),
        cse=cse(records, taxonomy.max_depth, strict),
        ce_per_rank=per_rank,
        err_structure=error_structure(records, taxonomy.max_depth),
        confusion={k: confusion_matrix(records, k, taxonomy) for k in per_rank} if confusion else {},
        absent=sum(r.pred is None for r in records),
        mode="strict" if strict else "partial",
    )


def evaluate_per_level(truths: dict, level_preds: dict, taxonomy: Taxonomy) -> MetricsReport:
    """Report for independent per-rank predictions.

    ``level_preds`` maps rank -> {specimen_id: node id or None}.  Only per-rank
    CE and the cross-rank incoherence rate are defined for this topology.
    """
    if not truths:
        raise EmptyInput("no prediction records")
    per_rank, confusion = {}, {}
    for rank, preds in sorted(level_preds.items()):
        records = [PredictionRecord(sid, truth,
                                    None if preds.get(sid) is None else taxonomy.expand_bottom_up(preds[sid]))
                   for sid, truth in truths.items()]
        if any(len(r.truth) >= rank for r in records):
            per_rank[rank] = ce_at_rank(records, rank)
            confusion[rank] = confusion_matrix(records, rank, taxonomy)
    return MetricsReport(
        n=len(truths), ce_deepest=None, lcse=None, cse=None,
        ce_per_rank=per_rank, err_structure={}, confusion=confusion,
        incoherent=incoherence_rate(level_preds, taxonomy, truths),
    )


def incoherence_rate(level_preds: dict, taxonomy: Taxonomy, ids) -> float:
    """Fraction of specimens whose per-rank predictions do not form one chain."""
    ids = list(ids)
    ranks = sorted(level_preds)
    bad = 0
    for sid in ids:
        chosen = [(r, level_preds[r].get(sid)) for r in ranks]
        chosen = [(r, n) for r, n in chosen if n is not None]
        for (r1, n1), (r2, n2) in zip(chosen, chosen[1:]):
            if taxonomy.expand_bottom_up(n2)[r1 - 1] != n1:
                bad += 1
                break
    return bad / len(ids) if ids else 0.0


@dataclass
class SplitAggregate:
    n_reports: int
    mean: dict
    sd: dict
    err_structure_total: dict
    n_total: int
    single: bool = False

    def to_dict(self) -> dict:
        return {
            "n_reports": self.n_reports,
            "n_total": self.n_total,
            "single": self.single,
            "mean": self.mean,
            "sd": self.sd,
            "err_structure_total": {str(k): v for k, v in self.err_structure_total.items()},
        }


def aggregate_splits(reports: Sequence[MetricsReport]) -> SplitAggregate:
    """Unweighted mean and sample standard deviation (n - 1) per scalar.

    A single report gets sd 0 and ``single=True``.
    """
    if not reports:
        raise EmptyInput("no reports to aggregate")
    keys = []
    for rep in reports:
        keys += [k for k in rep.scalars() if k not in keys]
    mean, sd = {}, {}
    for k in keys:
        vals = [rep.scalars()[k] for rep in reports if k in rep.scalars()]
        # statistics works in exact rationals, so identical inputs give sd exactly 0
        mean[k] = statistics.mean(vals)
        sd[k] = statistics.stdev(vals) if len(vals) > 1 else 0.0
    totals = {}
    for rep in reports:
        for k, v in rep.err_structure.items():
            totals[k] = totals.get(k, 0) + v
    return SplitAggregate(len(reports), mean, sd, dict(sorted(totals.items())),
                          sum(rep.n for rep in reports), single=len(reports) == 1)
