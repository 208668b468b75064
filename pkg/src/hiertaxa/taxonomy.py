"""Taxonomic hierarchy, label paths and the ancestor arithmetic the metrics
and the cascade are built on.

A label path is a plain tuple of node ids, ``path[k]`` sitting at rank
``k + 1``.  Node ids are the ``/``-joined chain of names from the top rank
down, so two genera with the same name under different families are
different nodes.  A virtual root (id ``""``) sits above rank 1; it never
appears inside a path.
"""
from __future__ import annotations

import csv
import hashlib
import io
import os
from collections import Counter
from dataclasses import dataclass
from importlib import resources
from typing import Iterable, Optional, Sequence

from .errors import (ConflictingParent, EmptyTable, ForeignNode, RaggedRow,
                     TaxonomyError, UnknownLeaf)

ROOT = ""
ABSENT = "-"
SEP = "/"
COUNT_COLUMNS = ("specimens", "images")
FIXTURE = "macroinvertebrates.csv"

LabelPath = tuple


@dataclass(frozen=True)
class Rank:
    index: int
    name: str


@dataclass(frozen=True)
class TaxonNode:
    id: str
    name: str
    rank: int
    parent: Optional[str]  # ROOT for rank-1 nodes, None only for the root itself


def common_prefix_length(a: Sequence[str], b: Sequence[str]) -> int:
    k = 0
    for x, y in zip(a, b):
        if x != y:
            break
        k += 1
    return k


class Taxonomy:
    """Immutable rooted tree of taxa plus the set of class labels.

    ``leaves`` are the deepest-available nodes that occur as labels in the
    data; a leaf may sit at any rank and may itself have children (a genus
    label next to one of its species, for instance).
    """

    def __init__(self, ranks: Sequence[Rank], nodes: Iterable[TaxonNode],
                 leaves: Sequence[str], display: Optional[dict] = None,
                 counts: Optional[dict] = None):
        self.ranks = tuple(ranks)
        if [r.index for r in self.ranks] != list(range(1, len(self.ranks) + 1)):
            raise TaxonomyError("rank indices must be contiguous from 1")
        if len({r.name for r in self.ranks}) != len(self.ranks):
            raise TaxonomyError("rank names must be unique")

        self._nodes: dict[str, TaxonNode] = {}
        self._children: dict[str, list[str]] = {ROOT: []}
        for node in nodes:
            if node.id in self._nodes or node.id == ROOT:
                raise TaxonomyError(f"duplicate node id {node.id!r}")
            parent_rank = 0 if node.parent == ROOT else self._rank_of(node.parent)
            if node.rank != parent_rank + 1:
                raise TaxonomyError(f"node {node.id!r} at rank {node.rank} "
                                    f"under parent at rank {parent_rank}")
            if node.rank > len(self.ranks):
                raise TaxonomyError(f"node {node.id!r} deeper than the deepest rank")
            self._nodes[node.id] = node
            self._children[node.id] = []
            self._children[node.parent].append(node.id)
        self._order = {nid: i for i, nid in enumerate(self._nodes)}

        self.leaves = tuple(leaves)
        if not self.leaves:
            raise EmptyTable("taxonomy has no labels")
        for leaf in self.leaves:
            self._require(leaf)
        if len(set(self.leaves)) != len(self.leaves):
            raise TaxonomyError("duplicate labels")
        self.display = {leaf: leaf.rsplit(SEP, 1)[-1] for leaf in self.leaves}
        self.display.update(display or {})
        self.counts = dict(counts or {})
        self._paths = {nid: self._walk_up(nid) for nid in self._nodes}

    def _rank_of(self, nid):
        try:
            return self._nodes[nid].rank
        except KeyError:
            raise TaxonomyError(f"parent {nid!r} not defined before its child") from None

    def _walk_up(self, nid):
        out = []
        while nid != ROOT:
            out.append(nid)
            nid = self._nodes[nid].parent
        return tuple(reversed(out))

    def _require(self, nid):
        if nid not in self._nodes:
            raise ForeignNode(f"unknown node {nid!r}")

    # -- structure -------------------------------------------------------

    @property
    def max_depth(self) -> int:
        return len(self.ranks)

    @property
    def nodes(self) -> dict:
        return dict(self._nodes)

    def node(self, nid: str) -> TaxonNode:
        self._require(nid)
        return self._nodes[nid]

    def __contains__(self, nid) -> bool:
        return nid in self._nodes

    def __len__(self) -> int:
        return len(self._nodes)

    def children(self, nid: str = ROOT) -> tuple:
        if nid != ROOT:
            self._require(nid)
        return tuple(self._children[nid])

    def name(self, nid: str) -> str:
        return self.node(nid).name

    def nodes_at_rank(self, rank: int) -> tuple:
        return tuple(n.id for n in self._nodes.values() if n.rank == rank)

    def rank_counts(self) -> dict:
        c = Counter(n.rank for n in self._nodes.values())
        return {r.index: c.get(r.index, 0) for r in self.ranks}

    def leaf_depth_histogram(self) -> dict:
        c = Counter(self._nodes[leaf].rank for leaf in self.leaves)
        return {r.index: c.get(r.index, 0) for r in self.ranks}

    def canonical_index(self, nid: str) -> int:
        """Position in taxonomy traversal order (row order, top rank first)."""
        self._require(nid)
        return self._order[nid]

    def is_leaf(self, nid: str) -> bool:
        return nid in self.display

    # -- label paths -----------------------------------------------------

    def validate_path(self, path) -> tuple:
        path = tuple(path)
        if not path:
            raise TaxonomyError("label path must have depth >= 1")
        for nid in path:
            self._require(nid)
        if self._paths[path[-1]] != path:
            raise TaxonomyError(f"not a root-to-node chain: {path!r}")
        return path

    def dca_depth(self, a, b) -> int:
        """Depth of the deepest common ancestor of two paths (0 = virtual root)."""
        a, b = self.validate_path(a), self.validate_path(b)
        return common_prefix_length(a, b)

    def loss_height(self, pred, truth, strict: bool = False) -> int:
        """Levels of ``truth`` below the deepest common ancestor with ``pred``.

        ``pred=None`` scores the full depth of ``truth``.  A correct but
        shallower prediction scores ``depth(truth) - depth(pred)``, or the
        full depth when ``strict``.  A prediction running past the end of a
        correct ``truth`` scores 1.
        """
        truth = self.validate_path(truth)
        if pred is None:
            return len(truth)
        pred = self.validate_path(pred)
        return path_loss(pred, truth, strict)

    def ancestor_at_rank(self, path, rank: int) -> Optional[str]:
        path = self.validate_path(path)
        return path[rank - 1] if 1 <= rank <= len(path) else None

    def expand_bottom_up(self, nid: str) -> tuple:
        self._require(nid)
        return self._paths[nid]

    def names(self, path) -> list:
        return [self._nodes[nid].name for nid in path]

    # -- lookup ----------------------------------------------------------

    def find(self, name: str, rank: Optional[int] = None) -> list:
        return [n.id for n in self._nodes.values()
                if n.name == name and (rank is None or n.rank == rank)]

    def resolve_label(self, text: str) -> str:
        """Map a label as written in a data file to a leaf id.

        Accepts the display (``taxa``) name, the node id or a node name that
        is unique among the leaves.
        """
        text = text.strip()
        for leaf, shown in self.display.items():
            if shown == text:
                return leaf
        if text in self.display:
            return text
        hits = [leaf for leaf in self.leaves if self._nodes[leaf].name == text]
        if len(hits) == 1:
            return hits[0]
        raise UnknownLeaf(f"unknown label {text!r}")

    def path_from_names(self, names: Sequence[str]) -> Optional[tuple]:
        """Resolve rank-ordered names (blank = absent) into a label path."""
        names = [n.strip() for n in names]
        while names and names[-1] in ("", ABSENT):
            names.pop()
        if not names:
            return None
        path, parent = [], ROOT
        for depth, name in enumerate(names, start=1):
            if name in ("", ABSENT):
                raise RaggedRow(f"gap at rank {depth} in {names!r}")
            nid = name if parent == ROOT else parent + SEP + name
            if nid not in self._nodes:
                raise ForeignNode(f"{name!r} is not a child of {parent or 'the root'!r}")
            path.append(nid)
            parent = nid
        return tuple(path)

    # -- serialization ---------------------------------------------------

    def to_rows(self) -> list:
        rows = []
        for leaf in self.leaves:
            row = {"taxa": self.display[leaf]}
            chain = self._paths[leaf]
            for r in reversed(self.ranks):
                row[r.name] = self._nodes[chain[r.index - 1]].name if r.index <= len(chain) else ABSENT
            if leaf in self.counts:
                row.update(zip(COUNT_COLUMNS, (str(v) for v in self.counts[leaf])))
            rows.append(row)
        return rows

    def to_csv(self) -> str:
        fields = ["taxa"] + [r.name for r in reversed(self.ranks)]
        if self.counts:
            fields += list(COUNT_COLUMNS)
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
        writer.writeheader()
        writer.writerows(self.to_rows())
        return buf.getvalue()

    def digest(self) -> str:
        return hashlib.sha256(self.to_csv().encode("utf-8")).hexdigest()


def path_loss(pred: Optional[tuple], truth: tuple, strict: bool = False) -> int:
    """Loss height on already-validated paths (see :meth:`Taxonomy.loss_height`)."""
    if pred is None:
        return len(truth)
    if pred == truth:
        return 0
    d = common_prefix_length(pred, truth)
    if d == len(truth):
        return 1
    if strict and d == len(pred):
        return len(truth)
    return len(truth) - d


def _read_rows(source):
    if isinstance(source, (str, os.PathLike)):
        with open(source, newline="", encoding="utf-8") as fh:
            return _read_rows(fh)
    if hasattr(source, "read"):
        reader = csv.DictReader(source)
        return list(reader.fieldnames or []), [(i, row) for i, row in enumerate(reader, start=2)]
    rows = list(source)
    header = list(rows[0].keys()) if rows else []
    return header, [(i, row) for i, row in enumerate(rows, start=2)]


def parse_taxonomy(source, strict: bool = True) -> Taxonomy:
    """Build a :class:`Taxonomy` from a rank table.

    ``source`` is a path, an open text file or an iterable of dict rows.
    Columns: ``taxa`` (label display name), one column per rank listed
    deepest rank first (``species,genus,family,order``), and optional
    ``specimens``/``images`` counts.  ``-`` or an empty cell marks an
    absent rank, allowed only at the deep end of a row.

    With ``strict`` (default) a name may occur only once per rank; a second
    parent raises :class:`ConflictingParent`.  Otherwise same-named taxa
    under different parents become distinct nodes.
    """
    header, rows = _read_rows(source)
    header = [h.strip() for h in header]
    if "taxa" not in header:
        raise TaxonomyError("missing 'taxa' column")
    rank_names = [h for h in header if h not in ("taxa",) + COUNT_COLUMNS]
    if not rank_names:
        raise TaxonomyError("no rank columns")
    ranks = [Rank(i, name) for i, name in enumerate(reversed(rank_names), start=1)]
    if not rows:
        raise EmptyTable("taxonomy table has no rows")

    nodes: dict[str, TaxonNode] = {}
    by_rank_name: dict[tuple, str] = {}
    leaves, display, counts = [], {}, {}
    for lineno, raw in rows:
        row = {k.strip(): (v or "").strip() for k, v in raw.items() if k is not None}
        cells = [row.get(r.name, "") for r in ranks]
        present = [c not in ("", ABSENT) for c in cells]
        if not present[0]:
            raise RaggedRow(f"missing {ranks[0].name}", row=lineno)
        depth = present.index(False) if False in present else len(present)
        if any(present[depth:]):
            raise RaggedRow("absent rank followed by a deeper present rank", row=lineno)

        parent = ROOT
        for r, name in zip(ranks[:depth], cells[:depth]):
            if SEP in name:
                raise TaxonomyError(f"taxon name {name!r} contains {SEP!r}", row=lineno)
            nid = name if parent == ROOT else parent + SEP + name
            if strict:
                seen = by_rank_name.get((r.index, name))
                if seen is not None and seen != nid:
                    raise ConflictingParent(
                        f"{r.name} {name!r} appears under two parents", row=lineno)
                by_rank_name[(r.index, name)] = nid
            if nid not in nodes:
                nodes[nid] = TaxonNode(nid, name, r.index, parent)
            parent = nid

        if parent in display:
            raise TaxonomyError(f"label {parent!r} listed twice", row=lineno)
        leaves.append(parent)
        display[parent] = row.get("taxa") or nodes[parent].name
        if all(row.get(c) for c in COUNT_COLUMNS):
            try:
                counts[parent] = tuple(int(row[c]) for c in COUNT_COLUMNS)
            except ValueError:
                raise TaxonomyError("non-integer count", row=lineno) from None

    return Taxonomy(ranks, nodes.values(), leaves, display, counts)


def fixture_path():
    return resources.files("hiertaxa") / "data" / FIXTURE


def load_fixture() -> Taxonomy:
    """The bundled 39-taxon benthic macroinvertebrate taxonomy."""
    with fixture_path().open("r", encoding="utf-8", newline="") as fh:
        return parse_taxonomy(fh)
