"""Multi-image specimens, file ingestion, split protocols and synthetic data."""
from __future__ import annotations

import csv
import hashlib
import json
import os
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .errors import (DimensionMismatch, DuplicateImage, EmptyInput, InsufficientSpecimens,
                     ValidationError)
from .rng import Stream, derive_seed
from .taxonomy import Taxonomy

FEATURES = "features"
SCORES = "scores"
COMPARISON = "comparison"
MACHINE_LEARNING = "ml"


@dataclass(frozen=True, eq=False)
class Specimen:
    id: str
    truth: Optional[tuple]
    image_ids: tuple
    values: np.ndarray      # one row per view

    def __post_init__(self):
        if not self.image_ids:
            raise EmptyInput(f"specimen {self.id!r} has no views")

    @property
    def n_views(self) -> int:
        return len(self.image_ids)

    def rows(self, image_ids=None) -> np.ndarray:
        if image_ids is None:
            return self.values
        pos = {im: i for i, im in enumerate(self.image_ids)}
        return self.values[[pos[im] for im in image_ids]]

    def restricted(self, image_ids) -> "Specimen":
        return Specimen(self.id, self.truth, tuple(image_ids), self.rows(image_ids))


class Dataset:
    """Specimens in file order plus the taxonomy their labels refer to."""

    def __init__(self, taxonomy: Taxonomy, specimens: Sequence[Specimen], kind: str = FEATURES):
        self.taxonomy = taxonomy
        self.kind = kind
        self.specimens = {}
        dims = set()
        for s in specimens:
            if s.id in self.specimens:
                raise ValidationError(f"duplicate specimen id {s.id!r}")
            self.specimens[s.id] = s
            dims.add(s.values.shape[1])
        if len(dims) > 1:
            raise DimensionMismatch(f"views with differing dimensions {sorted(dims)}")
        self.dim = dims.pop() if dims else 0
        self._index = {sid: i for i, sid in enumerate(self.specimens)}

    def __len__(self):
        return len(self.specimens)

    def __iter__(self):
        return iter(self.specimens.values())

    def __getitem__(self, sid) -> Specimen:
        return self.specimens[sid]

    def ids(self) -> list:
        return list(self.specimens)

    def order(self, ids) -> list:
        return sorted(ids, key=self._index.__getitem__)

    def by_leaf(self) -> dict:
        """Labelled specimen ids per leaf, leaves in canonical order."""
        out = {leaf: [] for leaf in self.taxonomy.leaves}
        for s in self.specimens.values():
            if s.truth is not None:
                out[s.truth[-1]].append(s.id)
        return out

    def digest(self) -> str:
        h = hashlib.sha256(self.kind.encode())
        for s in self.specimens.values():
            h.update(repr((s.id, s.truth, s.image_ids)).encode())
            h.update(np.ascontiguousarray(s.values, dtype=np.float64).tobytes())
        return h.hexdigest()


def _open_rows(source):
    if isinstance(source, (str, os.PathLike)):
        with open(source, newline="", encoding="utf-8") as fh:
            return _open_rows(fh)
    reader = csv.reader(source)
    rows = [r for r in reader if r and not r[0].startswith("#")]
    if not rows:
        raise EmptyInput("empty file")
    return [h.strip() for h in rows[0]], rows[1:]


def _ingest(source, taxonomy: Taxonomy, kind: str, value_prefix: str,
            expected_dim: Optional[int] = None, label_required: bool = True) -> Dataset:
    header, rows = _open_rows(source)
    if not rows:
        raise EmptyInput("file has a header but no rows")
    if header[:2] != ["specimen_id", "image_id"]:
        raise ValidationError("expected leading columns specimen_id,image_id")
    has_label = len(header) > 2 and header[2] == "label_leaf"
    if label_required and not has_label:
        raise ValidationError("missing label_leaf column")
    start = 3 if has_label else 2
    value_cols = header[start:]
    if any(not c.startswith(value_prefix) for c in value_cols) or not value_cols:
        raise ValidationError(f"value columns must be named {value_prefix}1..{value_prefix}N")
    dim = len(value_cols)
    if expected_dim is not None and dim != expected_dim:
        raise DimensionMismatch(f"expected {expected_dim} value columns, found {dim}")

    grouped: dict = {}
    for lineno, row in enumerate(rows, start=2):
        if len(row) != len(header):
            raise DimensionMismatch(f"row {lineno}: {len(row)} cells, header has {len(header)}")
        sid, image = row[0].strip(), row[1].strip()
        truth = taxonomy.expand_bottom_up(taxonomy.resolve_label(row[2])) if has_label else None
        entry = grouped.setdefault(sid, {"truth": truth, "images": [], "values": []})
        if entry["truth"] != truth:
            raise ValidationError(f"row {lineno}: specimen {sid!r} has conflicting labels")
        if image in entry["images"]:
            raise DuplicateImage(f"row {lineno}: image {image!r} repeated for specimen {sid!r}")
        try:
            values = [float(v) for v in row[start:]]
        except ValueError:
            raise ValidationError(f"row {lineno}: non-numeric value") from None
        entry["images"].append(image)
        entry["values"].append(values)
    specimens = [Specimen(sid, e["truth"], tuple(e["images"]), np.array(e["values"], dtype=np.float64))
                 for sid, e in grouped.items()]
    return Dataset(taxonomy, specimens, kind)


def ingest_features(source, taxonomy: Taxonomy, expected_dim: Optional[int] = None) -> Dataset:
    """Read ``specimen_id,image_id,label_leaf,f1..fN`` rows, grouping views by specimen.

    ``label_leaf`` may be a taxa display name, a leaf node id or a leaf node
    name that is unambiguous.
    """
    return _ingest(source, taxonomy, FEATURES, "f", expected_dim)


def ingest_scores(source, taxonomy: Taxonomy) -> Dataset:
    """Read per-image class scores ``specimen_id,image_id[,label_leaf],s_1..s_K``.

    ``K`` must equal the number of taxonomy leaves; column ``s_k`` is the
    k-th leaf in canonical (table row) order.  Without a label column the
    specimens carry no truth.
    """
    return _ingest(source, taxonomy, SCORES, "s_", len(taxonomy.leaves), label_required=False)


def _write_atomic(path, text: str):
    path = os.fspath(path)
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def write_features(dataset: Dataset, path, precision: int = 10):
    prefix = "f" if dataset.kind == FEATURES else "s_"
    tax = dataset.taxonomy
    lines = [",".join(["specimen_id", "image_id", "label_leaf"]
                      + [f"{prefix}{k}" for k in range(1, dataset.dim + 1)])]
    for s in dataset:
        label = tax.display[s.truth[-1]] if s.truth is not None else ""
        for im, row in zip(s.image_ids, s.values):
            lines.append(",".join([s.id, im, label] + [f"{v:.{precision}g}" for v in row]))
    _write_atomic(path, "\n".join(lines) + "\n")


# ---------------------------------------------------------------- splits

def largest_remainder(n: int, fractions: Sequence[float]) -> list:
    """Integer allocation of ``n`` items proportional to ``fractions``.

    Floors first; leftover items go to the largest fractional remainders,
    earlier parts winning ties.  Arithmetic is exact (rational).
    """
    fr = [Fraction(f).limit_denominator(10 ** 6) if not isinstance(f, Fraction) else f for f in fractions]
    quotas = [n * f for f in fr]
    counts = [q.numerator // q.denominator for q in quotas]
    left = n - sum(counts)
    order = sorted(range(len(fr)), key=lambda i: (-(quotas[i] - counts[i]), i))
    for i in order[:left]:
        counts[i] += 1
    return counts


def subsample_views(specimen: Specimen, cap: int, seed: int) -> Specimen:
    """Uniformly keep ``cap`` views (original order preserved) when there are more."""
    if cap < 1:
        raise ValidationError("view cap must be >= 1")
    if specimen.n_views <= cap:
        return specimen
    keep = Stream(seed).sample(specimen.n_views, cap)
    return specimen.restricted([specimen.image_ids[i] for i in keep])


DEFAULT_EXTRAS = (7, 7, 7, 7, 7, 7, 7, 6, 6, 6)


def default_comparison_counts(leaves: Sequence[str], n_splits: int = 10,
                              extras: Sequence[int] = DEFAULT_EXTRAS) -> list:
    """One test specimen per taxon plus a second one for a rotating block of taxa.

    With 39 taxa the totals are 46 (seven splits) and 45 (three splits),
    457 over ten splits.
    """
    out, offset = [], 0
    n = len(leaves)
    for k in range(n_splits):
        extra = min(extras[k % len(extras)], n)
        counts = {leaf: 1 for leaf in leaves}
        for j in range(extra):
            counts[leaves[(offset + j) % n]] += 1
        offset += extra
        out.append(counts)
    return out


@dataclass
class SplitSpec:
    scheme: str = COMPARISON
    seed: int = 0
    n_splits: int = 10
    test_counts: Optional[object] = None        # {leaf: n} or a list of them (one per split)
    ml_fractions: tuple = (0.7, 0.1, 0.2)
    comparison_fractions: tuple = (0.8, 0.2)
    train_cap: int = 50
    test_cap: Optional[int] = None              # 10 for comparison, 50 for ml
    stratified: bool = True

    def __post_init__(self):
        if self.scheme not in (COMPARISON, MACHINE_LEARNING):
            raise ValidationError(f"unknown split scheme {self.scheme!r}")
        for fr in (self.ml_fractions, self.comparison_fractions):
            if any(f < 0 for f in fr) or abs(sum(fr) - 1.0) > 1e-9:
                raise ValidationError(f"fractions {fr} must be non-negative and sum to 1")
        if self.n_splits < 1 or self.train_cap < 1:
            raise ValidationError("n_splits and train_cap must be >= 1")
        if self.test_cap is None:
            self.test_cap = 10 if self.scheme == COMPARISON else 50

    def counts_for(self, k: int, leaves) -> dict:
        tc = self.test_counts
        if tc is None:
            return default_comparison_counts(leaves, self.n_splits)[k]
        counts = tc[k] if isinstance(tc, (list, tuple)) else tc
        if any(v < 0 for v in counts.values()):
            raise ValidationError("test counts must be >= 0")
        return {leaf: int(counts.get(leaf, 0)) for leaf in leaves}


@dataclass
class DataSplit:
    index: int
    train: tuple
    val: tuple
    test: tuple
    views: dict = field(default_factory=dict)   # specimen id -> retained image ids

    def role(self, sid):
        for name in ("train", "val", "test"):
            if sid in getattr(self, name):
                return name
        return None

    def to_dict(self, extra: Optional[dict] = None) -> dict:
        out = {"split": self.index, "train": list(self.train), "val": list(self.val),
               "test": list(self.test),
               "views": {sid: list(v) for sid, v in self.views.items()}}
        out.update(extra or {})
        return out

    def to_json(self, extra: Optional[dict] = None) -> str:
        return json.dumps(self.to_dict(extra), indent=1) + "\n"

    @classmethod
    def from_dict(cls, d) -> "DataSplit":
        return cls(int(d["split"]), tuple(d["train"]), tuple(d["val"]), tuple(d["test"]),
                   {sid: tuple(v) for sid, v in d.get("views", {}).items()})

    @classmethod
    def load(cls, path) -> "DataSplit":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def save(self, path, extra: Optional[dict] = None):
        _write_atomic(path, self.to_json(extra))


def _finish(dataset: Dataset, spec: SplitSpec, k: int, train, val, test) -> DataSplit:
    train, val, test = (tuple(dataset.order(s)) for s in (train, val, test))
    views = {}
    for role, ids in (("train", train), ("val", val), ("test", test)):
        cap = spec.test_cap if role == "test" else spec.train_cap
        for sid in ids:
            kept = subsample_views(dataset[sid], cap, derive_seed(spec.seed, "views", k, sid))
            views[sid] = kept.image_ids
    return DataSplit(k, train, val, test, {sid: views[sid] for sid in dataset.order(views)})


def make_comparison_splits(dataset: Dataset, spec: SplitSpec) -> list:
    """Fixed per-taxon test counts; the rest of each taxon split 80/20 train/val."""
    groups = dataset.by_leaf()
    leaves = dataset.taxonomy.leaves
    splits = []
    for k in range(spec.n_splits):
        counts = spec.counts_for(k, leaves)
        train, val, test = [], [], []
        for leaf in leaves:
            ids = groups[leaf]
            if counts[leaf] > len(ids):
                raise InsufficientSpecimens(
                    f"{dataset.taxonomy.display[leaf]!r}: {counts[leaf]} test specimens "
                    f"requested, {len(ids)} available")
            ids = Stream(spec.seed, COMPARISON, k, leaf).shuffled(ids)
            t = counts[leaf]
            test += ids[:t]
            rest = ids[t:]
            n_tr, _ = largest_remainder(len(rest), spec.comparison_fractions)
            train += rest[:n_tr]
            val += rest[n_tr:]
        splits.append(_finish(dataset, spec, k, train, val, test))
    return splits


def make_ml_splits(dataset: Dataset, spec: SplitSpec) -> list:
    """Random 70/10/20 splits, per taxon (stratified) or over all specimens."""
    groups = dataset.by_leaf()
    labelled = [sid for ids in groups.values() for sid in ids]
    if len(labelled) < 10:
        raise InsufficientSpecimens(f"need at least 10 labelled specimens, have {len(labelled)}")
    splits = []
    for k in range(spec.n_splits):
        parts = ([], [], [])
        blocks = list(groups.items()) if spec.stratified else [("all", dataset.order(labelled))]
        for key, ids in blocks:
            ids = Stream(spec.seed, MACHINE_LEARNING, k, key).shuffled(ids)
            start = 0
            for part, n in zip(parts, largest_remainder(len(ids), spec.ml_fractions)):
                part += ids[start:start + n]
                start += n
        splits.append(_finish(dataset, spec, k, *parts))
    return splits


def make_splits(dataset: Dataset, spec: SplitSpec) -> list:
    if spec.scheme == COMPARISON:
        return make_comparison_splits(dataset, spec)
    return make_ml_splits(dataset, spec)


# ------------------------------------------------------------- synthetic

def _directions(stream: Stream, k: int, dim: int) -> np.ndarray:
    """``k`` unit vectors, mutually orthogonal when ``k <= dim``."""
    G = stream.normal((dim, k))
    if k <= dim:
        Q, R = np.linalg.qr(G)
        return (Q * np.sign(np.diag(R))).T
    return (G / np.linalg.norm(G, axis=0)).T


def synthetic_means(taxonomy: Taxonomy, dim: int = 16, separation: float = 10.0,
                    alignment: float = 1.0, seed: int = 0, clade_gain: float = 1.5) -> dict:
    """Class means built from per-rank offsets.

    A node at rank r contributes an offset of length
    ``separation * clade_gain**(H - r)``; siblings get orthogonal directions,
    so sibling labels sit at least ``separation`` apart.  ``alignment`` blends
    between means that share their ancestors' offsets (1: clade-clustered)
    and means whose every offset is drawn independently per label (0).
    """
    if not 0.0 <= alignment <= 1.0:
        raise ValidationError("alignment must lie in [0, 1]")
    H = taxonomy.max_depth
    length = {r: separation * clade_gain ** (H - r) for r in range(1, H + 1)}
    offset = {}
    for parent in ("",) + tuple(taxonomy.nodes):
        kids = taxonomy.children(parent)
        if kids:
            dirs = _directions(Stream(seed, "synthetic", "offsets", parent), len(kids), dim)
            for kid, d in zip(kids, dirs):
                offset[kid] = d * length[taxonomy.node(kid).rank]
    means = {}
    for leaf in taxonomy.leaves:
        path = taxonomy.expand_bottom_up(leaf)
        shared = sum(offset[n] for n in path)
        indep = np.zeros(dim)
        for n in path:
            d = Stream(seed, "synthetic", "independent", leaf, n).normal(dim)
            indep += d / np.linalg.norm(d) * length[taxonomy.node(n).rank]
        means[leaf] = alignment * shared + (1.0 - alignment) * indep
    return means


def generate_synthetic(taxonomy: Taxonomy, n_per_leaf: int = 30, views: int = 5, dim: int = 16,
                       separation: float = 10.0, alignment: float = 1.0, seed: int = 0,
                       means: Optional[dict] = None, covariances: Optional[dict] = None,
                       clade_gain: float = 1.5) -> Dataset:
    """Gaussian feature views for every taxonomy label.

    Each view is an independent draw from ``N(mean[leaf], cov[leaf])``
    (identity covariance unless given).  Specimen ids are ``S00001``...,
    image ids ``<specimen>_<k>``.
    """
    if n_per_leaf < 1 or views < 1 or dim < 1:
        raise ValidationError("n_per_leaf, views and dim must be >= 1")
    if means is None:
        means = synthetic_means(taxonomy, dim, separation, alignment, seed, clade_gain)
    specimens, counter = [], 0
    for leaf in taxonomy.leaves:
        mean = np.asarray(means[leaf], dtype=np.float64)
        cov = None if covariances is None else covariances.get(leaf)
        chol = None if cov is None else np.linalg.cholesky(np.asarray(cov, dtype=np.float64))
        truth = taxonomy.expand_bottom_up(leaf)
        for _ in range(n_per_leaf):
            counter += 1
            sid = f"S{counter:05d}"
            z = Stream(seed, "synthetic", "views", sid).normal((views, mean.shape[0]))
            values = mean + (z if chol is None else z @ chol.T)
            specimens.append(Specimen(sid, truth, tuple(f"{sid}_{v}" for v in range(views)), values))
    return Dataset(taxonomy, specimens, FEATURES)
