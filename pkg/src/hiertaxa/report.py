"""Report emission: JSON documents and a plain-text results table.

JSON schema (``format`` = "hiertaxa-report", ``version`` = 1)::

    {
      "format": "hiertaxa-report", "version": 1,
      "manifest": "<hash of the run manifest>" | null,
      "columns": [
        {"name": str,
         "mode": "partial" | "strict",
         "aggregate": {"n_reports", "n_total", "single", "mean": {metric: x},
                       "sd": {metric: x}, "err_structure_total": {rank: count}},
         "splits": [MetricsReport.to_dict(), ...],
         "warnings": [str, ...]}
      ],
      "ranks": {rank: rank name}
    }

Metric keys are ``ce_deepest``, ``lcse``, ``cse``, ``ce_rank<r>`` and, for
per-level runs, ``incoherent``.  All fractions are in [0, 1].
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

from .metrics import MetricsReport, SplitAggregate, aggregate_splits
from .taxonomy import Taxonomy

FORMAT = "hiertaxa-report"
VERSION = 1


@dataclass
class ReportColumn:
    name: str
    reports: list
    warnings: list = field(default_factory=list)

    @property
    def aggregate(self) -> SplitAggregate:
        return aggregate_splits(self.reports)

    @property
    def mode(self) -> str:
        return self.reports[0].mode if self.reports else "partial"


def report_dict(columns, taxonomy: Taxonomy, manifest: Optional[str] = None,
                confusion: bool = False) -> dict:
    out_cols = []
    for col in columns:
        splits = []
        for rep in col.reports:
            d = rep.to_dict(taxonomy)
            if not confusion:
                d.pop("confusion", None)
            splits.append(d)
        out_cols.append({"name": col.name, "mode": col.mode, "aggregate": col.aggregate.to_dict(),
                         "splits": splits, "warnings": list(col.warnings)})
    return {
        "format": FORMAT, "version": VERSION, "manifest": manifest, "columns": out_cols,
        "ranks": {str(r.index): r.name for r in taxonomy.ranks},
    }


def report_json(columns, taxonomy: Taxonomy, manifest: Optional[str] = None,
                confusion: bool = False) -> str:
    return json.dumps(report_dict(columns, taxonomy, manifest, confusion), indent=2, sort_keys=True) + "\n"


def _fmt(v) -> str:
    return "-" if v is None else f"{v:.3f}"


def table_rows(columns, taxonomy: Taxonomy) -> list:
    """Rows of (label, [cell per column]) in results-table order."""
    aggs = [c.aggregate for c in columns]
    rows = [("Deepest level", None)]
    for key, label in (("ce_deepest", "CE"), ("lcse", "LCSE")):
        rows.append((f"  mean {label}", [_fmt(a.mean.get(key)) for a in aggs]))
        rows.append((f"  sd {label}", [_fmt(a.sd.get(key)) for a in aggs]))
    for rank in taxonomy.ranks:
        key = f"ce_rank{rank.index}"
        if not any(key in a.mean for a in aggs):
            continue
        rows.append((rank.name.capitalize(), None))
        rows.append(("  mean CE", [_fmt(a.mean.get(key)) for a in aggs]))
        rows.append(("  sd CE", [_fmt(a.sd.get(key)) for a in aggs]))
    if any("incoherent" in a.mean for a in aggs):
        rows.append(("Incoherent", [_fmt(a.mean.get("incoherent")) for a in aggs]))
    rows.append(("Error structure", None))
    for rank in taxonomy.ranks:
        rows.append((f"  #ERR({rank.name})",
                     [str(a.err_structure_total.get(rank.index, 0)) for a in aggs]))
    rows.append(("n_total", [str(a.n_total) for a in aggs]))
    return rows


def text_table(columns, taxonomy: Taxonomy, manifest: Optional[str] = None) -> str:
    """Aligned plain-text table: one column per method, mean and sd rows."""
    rows = table_rows(columns, taxonomy)
    names = [c.name for c in columns]
    w0 = max(len(r[0]) for r in rows)
    widths = [max([len(n)] + [len(r[1][i]) for r in rows if r[1] is not None]) for i, n in enumerate(names)]
    lines = []
    if manifest:
        lines.append(f"# manifest: {manifest}")
    lines.append("  ".join([" " * w0] + [n.rjust(w) for n, w in zip(names, widths)]).rstrip())
    for label, cells in rows:
        if cells is None:
            lines.append(label)
        else:
            lines.append("  ".join([label.ljust(w0)] + [c.rjust(w) for c, w in zip(cells, widths)]))
    return "\n".join(lines) + "\n"


def column(name: str, reports: list, warnings=()) -> ReportColumn:
    if any(not isinstance(r, MetricsReport) for r in reports):
        raise TypeError("reports must be MetricsReport instances")
    return ReportColumn(name, list(reports), list(warnings))
