"""Flat, per-level and per-parent-node (cascade) classifier topologies.

Per-image learner outputs are aggregated per specimen; flat predictions are
expanded bottom-up into full label paths, cascade predictions descend the
taxonomy top-down and are coherent by construction.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .aggregation import VOTE, aggregate, check_rule
from .dataset import Dataset, DataSplit, Specimen
from .errors import ValidationError
from .learners.base import ConstantModel, ViewOutputs
from .learners.grid import Data, fit_pipeline, fit_selected
from .learners.preprocess import digest_rows
from .rng import derive_seed
from .taxonomy import ROOT, Taxonomy

log = logging.getLogger(__name__)

SENTINEL = "0"
FLAT = "flat"
PER_LEVEL = "per-level"
CASCADE = "cascade"
TOPOLOGIES = (FLAT, PER_LEVEL, CASCADE)


@dataclass(frozen=True)
class PlanEntry:
    node: str              # ROOT for the top classifier
    children: tuple
    sentinel: bool
    rank: int              # rank of the classes this entry chooses between

    @property
    def classes(self) -> tuple:
        return self.children + ((SENTINEL,) if self.sentinel else ())


@dataclass(frozen=True)
class CascadePlan:
    entries: tuple
    auto: dict             # node -> its only child, resolved without a classifier

    def __len__(self):
        return len(self.entries)

    def entry(self, node) -> Optional[PlanEntry]:
        for e in self.entries:
            if e.node == node:
                return e
        return None

    def by_rank(self) -> dict:
        out = {}
        for e in self.entries:
            out[e.rank] = out.get(e.rank, 0) + 1
        return dict(sorted(out.items()))

    def sentinel_nodes(self) -> tuple:
        return tuple(e.node for e in self.entries if e.sentinel)


def sentinel_census(taxonomy: Taxonomy, truths=None) -> frozenset:
    """Nodes where some truths stop while others continue deeper.

    Without ``truths`` the labels of the taxonomy stand in for the data: a
    label that also has children needs a sentinel class.
    """
    if truths is None:
        return frozenset(leaf for leaf in taxonomy.leaves if taxonomy.children(leaf))
    ends, passes = set(), set()
    for t in truths:
        ends.add(t[-1])
        passes.update(t[:-1])
    return frozenset(ends & passes)


def build_cascade_plan(taxonomy: Taxonomy, census=None) -> CascadePlan:
    """One classifier per node with at least two effective children.

    Effective children are the child taxa plus the sentinel when the node is
    in the census.  Single-child lineages are auto-descended.
    """
    if census is None:
        census = sentinel_census(taxonomy)
    entries, auto = [], {}
    for node in (ROOT,) + tuple(taxonomy.nodes):
        kids = taxonomy.children(node)
        sentinel = node in census and bool(kids)
        rank = 1 if node == ROOT else taxonomy.node(node).rank + 1
        if len(kids) + sentinel >= 2:
            entries.append(PlanEntry(node, kids, sentinel, rank))
        elif len(kids) == 1:
            auto[node] = kids[0]
    return CascadePlan(tuple(entries), auto)


def node_label(truth: tuple, entry: PlanEntry) -> Optional[str]:
    """Training label of a truth path at a plan node (None if it does not pass through)."""
    d = entry.rank - 1
    if d and (len(truth) < d or truth[d - 1] != entry.node):
        return None
    if len(truth) > d:
        return truth[d]
    return SENTINEL if entry.sentinel else None


def collect(dataset: Dataset, split: DataSplit, ids, label_fn) -> Data:
    X, y, groups = [], [], []
    for sid in ids:
        s = dataset[sid]
        label = label_fn(s.truth)
        if label is None:
            continue
        rows = s.rows(split.views.get(sid))
        X.append(rows)
        y += [label] * len(rows)
        groups += [sid] * len(rows)
    if not X:
        return Data.empty(dataset.dim)
    return Data(np.vstack(X), y, groups)


def model_seed(seed: int, key) -> int:
    """Seed of one model; the cascade root shares it with the rank-1 per-level model."""
    if key == ROOT or key == 1:
        return derive_seed(seed, "node", ROOT)
    if isinstance(key, int):
        return derive_seed(seed, "level", key)
    return derive_seed(seed, "node", key)


@dataclass
class NodeFit:
    model: object
    hyper: Optional[object]
    dropped: tuple = ()


def fit_node(learner, train: Data, val: Data, classes, rule, seed, refit=True) -> NodeFit:
    available = set(train.y) | set(val.y)
    kept = [c for c in classes if c in available]
    dropped = tuple(c for c in classes if c not in available)
    if len(kept) < 2:
        both = train.concat(val) if len(val) else train
        only = kept or list(classes[:1])
        model = ConstantModel(only, {}, train.X.shape[1], None, digest_rows(both.X))
        return NodeFit(model, None, dropped)
    if len(set(train.y)) < 2:
        h = sorted(learner.candidates(), key=learner.sort_key)[0]
        return NodeFit(fit_pipeline(learner, train.concat(val), h, kept), h, dropped)
    model, result = fit_selected(learner, train, val, kept, rule, seed, refit)
    return NodeFit(model, result.hyper, dropped)


@dataclass
class TrainedTopology:
    topology: str
    taxonomy: Taxonomy
    models: dict                  # "flat" | rank (int) | node id  ->  TrainedModel
    plan: Optional[CascadePlan] = None
    hypers: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)

    @property
    def has_scores(self) -> bool:
        return all(m.has_scores or m.kind == "constant" for m in self.models.values())

    def predict(self, specimen: Specimen, rule: str = VOTE, image_ids=None):
        if self.topology == FLAT:
            return predict_specimen_flat(self.models[FLAT], specimen, rule, self.taxonomy, image_ids)
        if self.topology == CASCADE:
            return predict_specimen_cascade(self.models, self.plan, specimen, rule, self.taxonomy, image_ids)
        return predict_specimen_per_level(self.models, specimen, rule, image_ids)


def train_flat(dataset: Dataset, split: DataSplit, learner, rule: str = VOTE, seed: int = 0,
               refit: bool = True) -> TrainedTopology:
    tax = dataset.taxonomy
    label = lambda truth: truth[-1]
    tr = collect(dataset, split, split.train, label)
    va = collect(dataset, split, split.val, label)
    fit = fit_node(learner, tr, va, tax.leaves, rule, derive_seed(seed, FLAT), refit)
    out = TrainedTopology(FLAT, tax, {FLAT: fit.model}, hypers={FLAT: fit.hyper})
    _note_dropped(out, FLAT, fit.dropped)
    return out


def train_per_level(dataset: Dataset, split: DataSplit, learner, ranks=(1, 2), rule: str = VOTE,
                    seed: int = 0, refit: bool = True) -> TrainedTopology:
    tax = dataset.taxonomy
    out = TrainedTopology(PER_LEVEL, tax, {})
    for r in ranks:
        label = lambda truth, r=r: truth[r - 1] if len(truth) >= r else None
        tr = collect(dataset, split, split.train, label)
        va = collect(dataset, split, split.val, label)
        fit = fit_node(learner, tr, va, tax.nodes_at_rank(r), rule, model_seed(seed, r), refit)
        out.models[r] = fit.model
        out.hypers[r] = fit.hyper
        _note_dropped(out, r, fit.dropped)
    return out


def train_cascade(dataset: Dataset, split: DataSplit, learner, plan: Optional[CascadePlan] = None,
                  rule: str = VOTE, seed: int = 0, refit: bool = True, jobs: int = 1) -> TrainedTopology:
    """Train one model per plan entry on the specimens passing through that node.

    A child with no training or validation specimens is dropped from its
    node's classes and reported in ``warnings``.
    """
    tax = dataset.taxonomy
    if plan is None:
        plan = build_cascade_plan(tax)

    def one(entry):
        label = lambda truth: node_label(truth, entry)
        tr = collect(dataset, split, split.train, label)
        va = collect(dataset, split, split.val, label)
        return fit_node(learner, tr, va, entry.classes, rule, model_seed(seed, entry.node), refit)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            fits = list(pool.map(one, plan.entries))
    else:
        fits = [one(e) for e in plan.entries]
    out = TrainedTopology(CASCADE, tax, {}, plan)
    for entry, fit in zip(plan.entries, fits):
        out.models[entry.node] = fit.model
        out.hypers[entry.node] = fit.hyper
        _note_dropped(out, entry.node, fit.dropped)
    return out


def _note_dropped(out: TrainedTopology, key, dropped):
    for c in dropped:
        msg = f"EmptyChildClass: model {key!r} has no training data for class {c!r}; it can never be predicted"
        out.warnings.append(msg)
        log.warning(msg)


def train_topology(topology: str, dataset: Dataset, split: DataSplit, learner, rule: str = VOTE,
                   seed: int = 0, ranks=(1, 2), plan=None, jobs: int = 1) -> TrainedTopology:
    if topology == FLAT:
        return train_flat(dataset, split, learner, rule, seed)
    if topology == PER_LEVEL:
        return train_per_level(dataset, split, learner, ranks, rule, seed)
    if topology == CASCADE:
        return train_cascade(dataset, split, learner, plan, rule, seed, jobs=jobs)
    raise ValidationError(f"unknown topology {topology!r}; expected one of {TOPOLOGIES}")


# ------------------------------------------------------------ prediction

def specimen_outputs(model, specimen: Specimen, image_ids=None) -> ViewOutputs:
    return model.predict(specimen.rows(image_ids))


def predict_specimen_flat(model, specimen: Specimen, rule: str, taxonomy: Taxonomy, image_ids=None):
    leaf, _ = aggregate(specimen_outputs(model, specimen, image_ids), rule)
    return taxonomy.expand_bottom_up(leaf)


def predict_specimen_cascade(models: dict, plan: CascadePlan, specimen: Specimen, rule: str,
                             taxonomy: Taxonomy, image_ids=None):
    """Top-down descent; stops at a sentinel decision or at a node without children."""
    rows = specimen.rows(image_ids)
    path, node = [], ROOT
    while True:
        entry = plan.entry(node)
        if entry is not None:
            choice, _ = aggregate(models[node].predict(rows), rule)
            if choice == SENTINEL:
                break
        elif node in plan.auto:
            choice = plan.auto[node]
        else:
            break
        path.append(choice)
        node = choice
    return tuple(path) if path else None


def predict_specimen_per_level(models: dict, specimen: Specimen, rule: str, image_ids=None) -> dict:
    rows = specimen.rows(image_ids)
    return {r: aggregate(m.predict(rows), rule)[0] for r, m in sorted(models.items())}


def scores_outputs(specimen: Specimen, taxonomy: Taxonomy, image_ids=None) -> ViewOutputs:
    """Wrap externally produced per-image leaf scores as learner outputs."""
    scores = specimen.rows(image_ids)
    idx = np.argmax(scores, axis=1)
    return ViewOutputs(taxonomy.leaves, [taxonomy.leaves[i] for i in idx], scores, True)


def predict_specimen_scores(specimen: Specimen, rule: str, taxonomy: Taxonomy, image_ids=None):
    leaf, _ = aggregate(scores_outputs(specimen, taxonomy, image_ids), rule)
    return taxonomy.expand_bottom_up(leaf)


def predict_split(trained: TrainedTopology, dataset: Dataset, split: DataSplit, rule: str = VOTE,
                  role: str = "test") -> dict:
    """Predictions for every specimen of one split role, keyed by specimen id."""
    check_rule(rule, trained.has_scores)
    ids = getattr(split, role)
    return {sid: trained.predict(dataset[sid], rule, split.views.get(sid)) for sid in ids}


def is_coherent(level_pred: dict, taxonomy: Taxonomy) -> bool:
    chosen = [(r, n) for r, n in sorted(level_pred.items()) if n is not None]
    return all(taxonomy.expand_bottom_up(n2)[r1 - 1] == n1
               for (r1, n1), (r2, n2) in zip(chosen, chosen[1:]))
