"""Command-line entry point: ``hiertaxa <command> ...``.

Exit codes: 0 success, 2 invalid input, 3 learner/runtime failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .aggregation import RULES, VOTE, check_rule
from .config import (RunManifest, Settings, file_digest, read_config, resolve_seed,
                     write_atomic)
from .dataset import (COMPARISON, MACHINE_LEARNING, DataSplit, SplitSpec, generate_synthetic,
                      ingest_features, ingest_scores, make_splits, write_features)
from .errors import HierTaxaError, LearnerError, ValidationError
from .hierarchy import (CASCADE, FLAT, PER_LEVEL, TOPOLOGIES, TrainedTopology, build_cascade_plan,
                        is_coherent, predict_split, predict_specimen_scores, train_topology)
from .learners import (CASCADE_GRID, FLAT_GRID, GridSpec, SoftmaxHyper, SoftmaxLearner,
                       SvmLearner)
from .learners.io import model_from_bytes, model_to_bytes
from .metrics import PredictionRecord, evaluate, evaluate_per_level
from .report import column, report_json, text_table
from .taxonomy import Taxonomy, load_fixture, parse_taxonomy

log = logging.getLogger("hiertaxa")

BUNDLE_FORMAT = "hiertaxa-bundle"
BUNDLE_VERSION = 1


# ------------------------------------------------------------- loading

def load_taxonomy(path=None, lenient=False) -> Taxonomy:
    if path is None:
        return load_fixture()
    return parse_taxonomy(path, strict=not lenient)


def load_dataset(args, tax: Taxonomy):
    if getattr(args, "scores", None):
        return ingest_scores(args.scores, tax), args.scores
    if getattr(args, "features", None):
        return ingest_features(args.features, tax), args.features
    raise ValidationError("give --features or --scores")


def build_learner(settings: Settings, topology: str, args):
    kind = settings.get("learner", getattr(args, "learner", None))
    variance = settings.float("variance_kept")
    if kind == "softmax":
        hyper = SoftmaxHyper(learning_rate=settings.float("softmax_lr"),
                             epochs=settings.int("softmax_epochs"),
                             l2=settings.float("softmax_l2"))
        return SoftmaxLearner(hyper, settings.floats("softmax_l2_grid"), variance)
    if kind != "svm":
        raise ValidationError(f"unknown learner {kind!r}; expected svm or softmax")
    preset = settings.get("grid", getattr(args, "grid", None)) or ("cascade" if topology == CASCADE else "flat")
    if preset not in ("flat", "cascade"):
        raise ValidationError(f"unknown grid preset {preset!r}")
    base = CASCADE_GRID if preset == "cascade" else FLAT_GRID
    grid = GridSpec(settings.floats("c_grid") or base.c, settings.floats("gamma_grid") or base.gamma,
                    settings.get("grid_phase") or base.phase,
                    settings.float("refine_factor") or base.refine_factor)
    return SvmLearner(grid, settings.float("tol"), variance)


def read_test_counts(path, tax: Taxonomy, n_splits: int):
    """``taxa,count`` (same for every split) or ``taxa,split0,split1,...``."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    if len(rows) < 2:
        raise ValidationError(f"{path}: no test counts")
    width = len(rows[0]) - 1
    if width not in (1, n_splits):
        raise ValidationError(f"{path}: expected 1 or {n_splits} count columns, found {width}")
    per_split = [{} for _ in range(width)]
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != width + 1:
            raise ValidationError(f"{path}: row {lineno}: expected {width + 1} cells")
        leaf = tax.resolve_label(row[0])
        for k, cell in enumerate(row[1:]):
            try:
                per_split[k][leaf] = int(cell)
            except ValueError:
                raise ValidationError(f"{path}: row {lineno}: count {cell!r} is not an integer") from None
    return per_split[0] if width == 1 else per_split


def _settings(args) -> Settings:
    return Settings(read_config(getattr(args, "config", None)))


def _manifest(command, settings, seed, tax, dataset=None, **kw) -> RunManifest:
    return RunManifest(command=command, config=settings.snapshot(), seeds={"seed": seed},
                       taxonomy_hash=tax.digest(),
                       dataset_hash=dataset.digest() if dataset is not None else None, **kw)


def _out(args, text):
    if getattr(args, "out", None):
        write_atomic(args.out, text)
    else:
        sys.stdout.write(text)


# ------------------------------------------------------------ taxonomy

def taxonomy_stats(tax: Taxonomy) -> dict:
    counts = tax.rank_counts()
    out = {
        "leaves": len(tax.leaves),
        "ranks": {r.name: counts.get(r.index, 0) for r in tax.ranks},
        "leaf_depths": {str(d): n for d, n in tax.leaf_depth_histogram().items()},
        "digest": tax.digest(),
    }
    if tax.counts:
        out["specimens"] = sum(v[0] for v in tax.counts.values())
        out["images"] = sum(v[1] for v in tax.counts.values())
    return out


def cmd_taxonomy(args) -> int:
    tax = load_taxonomy(args.file, args.lenient)
    stats = taxonomy_stats(tax)
    if args.action == "validate":
        print(f"ok: {stats['leaves']} leaves, {len(tax)} nodes, {len(tax.ranks)} ranks")
        return 0
    if args.json:
        print(json.dumps(stats, indent=2, sort_keys=True))
        return 0
    print(" / ".join([f"{stats['leaves']} leaves"] + [str(v) for v in stats["ranks"].values()]))
    for name, v in stats["ranks"].items():
        print(f"  {name:<10} {v}")
    print("leaf depth histogram")
    for d, n in stats["leaf_depths"].items():
        print(f"  depth {d}: {n}")
    if "specimens" in stats:
        print(f"specimens {stats['specimens']}  images {stats['images']}")
    return 0


# --------------------------------------------------------------- synth

def cmd_synth(args) -> int:
    settings = _settings(args)
    seed = resolve_seed(args.seed, settings)
    tax = load_taxonomy(args.taxonomy, args.lenient)
    ds = generate_synthetic(tax, n_per_leaf=args.n_per_leaf, views=args.views, dim=args.dim,
                            separation=args.separation, alignment=args.alignment, seed=seed)
    write_features(ds, args.out)
    print(f"wrote {len(ds)} specimens to {args.out}")
    return 0


# --------------------------------------------------------------- split

def cmd_split(args) -> int:
    settings = _settings(args)
    seed = resolve_seed(args.seed, settings)
    tax = load_taxonomy(args.taxonomy, args.lenient)
    ds, src = load_dataset(args, tax)
    scheme = settings.get("scheme", args.scheme)
    n_splits = settings.int("n_splits", args.n_splits)
    counts_file = settings.get("test_counts", args.test_counts)
    spec = SplitSpec(
        scheme=scheme, seed=seed, n_splits=n_splits,
        test_counts=read_test_counts(counts_file, tax, n_splits) if counts_file else None,
        train_cap=settings.int("train_cap"), test_cap=settings.int("test_cap"),
        stratified=settings.bool("stratified"),
    )
    inputs = {"data": file_digest(src)}
    if counts_file:
        inputs["test_counts"] = file_digest(counts_file)
    manifest = _manifest("split", settings, seed, tax, ds, inputs=inputs)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    splits = make_splits(ds, spec)
    for sp in splits:
        sp.save(out / f"split_{sp.index:02d}.json", {"manifest": manifest.hash, "scheme": scheme})
    write_atomic(out / "manifest.json", manifest.to_json())
    sizes = ", ".join(str(len(sp.test)) for sp in splits)
    print(f"wrote {len(splits)} {scheme} splits to {out} (test sizes {sizes})")
    return 0


# --------------------------------------------------------------- train

def _model_key(key):
    if key == FLAT:
        return {"type": "flat"}
    if isinstance(key, int):
        return {"type": "rank", "rank": key}
    return {"type": "node", "node": key}


def _decode_key(d):
    return {"flat": lambda: FLAT, "rank": lambda: int(d["rank"]), "node": lambda: d["node"]}[d["type"]]()


def save_bundle(trained: TrainedTopology, path, manifest: RunManifest, rule: str, learner):
    path = Path(path)
    (path / "models").mkdir(parents=True, exist_ok=True)
    models = []
    for i, (key, model) in enumerate(trained.models.items()):
        name = f"models/model_{i:03d}.npz"
        write_atomic(path / name, model_to_bytes(model))
        hyper = trained.hypers.get(key)
        models.append({"key": _model_key(key), "file": name, "classes": list(model.classes),
                       "hyper": hyper.as_dict() if hyper is not None else None})
    bundle = {
        "format": BUNDLE_FORMAT, "version": BUNDLE_VERSION, "manifest": manifest.hash,
        "topology": trained.topology, "rule": rule, "learner": learner.describe(),
        "models": models, "warnings": list(trained.warnings),
    }
    if trained.plan is not None:
        bundle["plan"] = [{"node": e.node, "classes": list(e.classes), "rank": e.rank}
                          for e in trained.plan.entries]
    write_atomic(path / "taxonomy.csv", trained.taxonomy.to_csv())
    write_atomic(path / "bundle.json", json.dumps(bundle, indent=2, sort_keys=True) + "\n")
    write_atomic(path / "manifest.json", manifest.to_json())


def load_bundle(path):
    path = Path(path)
    try:
        with open(path / "bundle.json", encoding="utf-8") as fh:
            meta = json.load(fh)
    except FileNotFoundError:
        raise ValidationError(f"{path}: not a model bundle (bundle.json missing)") from None
    if meta.get("format") != BUNDLE_FORMAT or meta.get("version") != BUNDLE_VERSION:
        raise ValidationError(f"{path}: unsupported bundle format")
    tax = parse_taxonomy(path / "taxonomy.csv", strict=False)
    models, hypers = {}, {}
    for m in meta["models"]:
        key = _decode_key(m["key"])
        models[key] = model_from_bytes((path / m["file"]).read_bytes())
        hypers[key] = m["hyper"]
    plan = None
    if meta["topology"] == CASCADE:
        plan = build_cascade_plan(tax)
        if [e.node for e in plan.entries] != [p["node"] for p in meta["plan"]]:
            raise ValidationError(f"{path}: stored cascade plan does not match its taxonomy")
    trained = TrainedTopology(meta["topology"], tax, models, plan, hypers, list(meta["warnings"]))
    return trained, meta


def cmd_train(args) -> int:
    settings = _settings(args)
    seed = resolve_seed(args.seed, settings)
    tax = load_taxonomy(args.taxonomy, args.lenient)
    ds, src = load_dataset(args, tax)
    split = DataSplit.load(args.split)
    topology = settings.get("topology", args.topology)
    if topology not in TOPOLOGIES:
        raise ValidationError(f"unknown topology {topology!r}; expected one of {TOPOLOGIES}")
    rule = settings.get("rule", args.rule)
    learner = build_learner(settings, topology, args)
    check_rule(rule, learner.has_scores)
    ranks = tuple(int(r) for r in settings.get("ranks", args.ranks).split(","))
    jobs = settings.int("jobs", args.jobs)
    described = learner.describe()
    manifest = _manifest("train", settings, seed, tax, ds, topology=topology, learner=described,
                         grid=described.get("grid"),
                         inputs={"data": file_digest(src), "split": file_digest(args.split)})
    trained = train_topology(topology, ds, split, learner, rule, seed, ranks=ranks, jobs=jobs)
    save_bundle(trained, args.out, manifest, rule, learner)
    # EmptyChildClass warnings were already logged during training
    print(f"trained {len(trained.models)} model(s) ({topology}) into {args.out}")
    return 0


# ------------------------------------------------------------- predict

def _names_row(tax: Taxonomy, path) -> list:
    cells = [""] * tax.max_depth
    for i, nid in enumerate(path or ()):
        cells[i] = tax.name(nid)
    return cells


def prediction_csv(tax: Taxonomy, preds: dict, manifest_hash: str, per_level: bool = False) -> str:
    buf = io.StringIO()
    buf.write(f"# manifest: {manifest_hash}\n")
    w = csv.writer(buf, lineterminator="\n")
    header = ["specimen_id"] + [f"rank{r.index}" for r in tax.ranks]
    w.writerow(header + (["coherent"] if per_level else []))
    for sid, pred in preds.items():
        if per_level:
            cells = [""] * tax.max_depth
            for r, nid in pred.items():
                cells[r - 1] = tax.name(nid) if nid is not None else ""
            w.writerow([sid] + cells + [int(is_coherent(pred, tax))])
        else:
            w.writerow([sid] + _names_row(tax, pred))
    return buf.getvalue()


def cmd_predict(args) -> int:
    settings = _settings(args)
    seed = resolve_seed(args.seed, settings)
    split = DataSplit.load(args.split)
    inputs = {"split": file_digest(args.split)}
    if args.bundle:
        trained, meta = load_bundle(args.bundle)
        tax = trained.taxonomy
        rule = args.rule or meta["rule"]
        ds, src = load_dataset(args, tax)
        inputs.update(bundle=file_digest(Path(args.bundle) / "bundle.json"), data=file_digest(src))
        manifest = _manifest("predict", settings, seed, tax, ds, topology=trained.topology,
                             learner=meta["learner"], inputs=inputs)
        manifest.config["rule"] = rule
        preds = predict_split(trained, ds, split, rule, args.role)
        per_level = trained.topology == PER_LEVEL
    else:
        if not args.scores:
            raise ValidationError("give --bundle, or --scores for externally scored images")
        tax = load_taxonomy(args.taxonomy, args.lenient)
        ds, src = load_dataset(args, tax)
        rule = args.rule or VOTE
        check_rule(rule, True)
        inputs["data"] = file_digest(src)
        manifest = _manifest("predict", settings, seed, tax, ds, topology=FLAT,
                             learner={"kind": "external-scores"}, inputs=inputs)
        manifest.config["rule"] = rule
        ids = getattr(split, args.role)
        preds = {sid: predict_specimen_scores(ds[sid], rule, tax, split.views.get(sid)) for sid in ids}
        per_level = False
    _out(args, prediction_csv(tax, preds, manifest.hash, per_level))
    if args.out:
        write_atomic(args.out + ".manifest.json", manifest.to_json())
    return 0


# ------------------------------------------------------------ evaluate

def read_prediction_csv(path, tax: Taxonomy):
    """Returns (preds, per_level, manifest).

    ``preds`` maps specimen id to a label path (None when all cells are
    blank) or, for per-level files (``coherent`` column), to {rank: node}.
    """
    manifest = None
    with open(path, newline="", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    body = []
    for line in lines:
        if line.startswith("#"):
            if line.startswith("# manifest:"):
                manifest = line.split(":", 1)[1].strip()
            continue
        body.append(line)
    rows = list(csv.reader(body))
    if not rows:
        raise ValidationError(f"{path}: empty prediction file")
    header = rows[0]
    if not header or header[0] != "specimen_id":
        raise ValidationError(f"{path}: first column must be specimen_id")
    rank_cols = [i for i, h in enumerate(header) if h.startswith("rank")]
    ranks = [int(header[i][4:]) for i in rank_cols]
    per_level = "coherent" in header
    preds = {}
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise ValidationError(f"{path}: row {lineno}: {len(row)} cells, header has {len(header)}")
        sid = row[0]
        if sid in preds:
            raise ValidationError(f"{path}: row {lineno}: duplicate specimen {sid!r}")
        names = [row[i] for i in rank_cols]
        try:
            if per_level:
                level = {}
                for r, name in zip(ranks, names):
                    if name.strip():
                        hits = tax.find(name.strip(), r)
                        if len(hits) != 1:
                            raise ValidationError(f"{name!r} does not name exactly one node at rank {r}")
                        level[r] = hits[0]
                preds[sid] = level
            else:
                preds[sid] = tax.path_from_names(names)
        except ValidationError as exc:
            raise ValidationError(f"{path}: row {lineno}: {exc}") from None
    return preds, per_level, manifest


def load_truths(args, tax: Taxonomy) -> dict:
    if args.truth:
        preds, per_level, _ = read_prediction_csv(args.truth, tax)
        if per_level or any(p is None for p in preds.values()):
            raise ValidationError(f"{args.truth}: truth file needs a complete path on every row")
        return preds
    ds, _ = load_dataset(args, tax)
    truths = {s.id: s.truth for s in ds if s.truth is not None}
    if not truths:
        raise ValidationError("the dataset carries no labels")
    return truths


def evaluate_file(path, truths: dict, tax: Taxonomy, strict: bool):
    preds, per_level, _ = read_prediction_csv(path, tax)
    missing = [sid for sid in preds if sid not in truths]
    if missing:
        raise ValidationError(f"{path}: no truth for specimens {missing[:5]}")
    if per_level:
        ranks = sorted({r for d in preds.values() for r in d}) or [1]
        level = {r: {sid: d.get(r) for sid, d in preds.items()} for r in ranks}
        return evaluate_per_level({sid: truths[sid] for sid in preds}, level, tax)
    records = [PredictionRecord(sid, truths[sid], p) for sid, p in preds.items()]
    return evaluate(records, tax, strict=strict)


def cmd_evaluate(args) -> int:
    settings = _settings(args)
    seed = resolve_seed(args.seed, settings)
    tax = load_taxonomy(args.taxonomy, args.lenient)
    truths = load_truths(args, tax)
    strict = settings.bool("strict", True if args.strict else None)
    groups = []
    if args.predictions:
        groups.append([args.name] + args.predictions)
    groups += args.column or []
    if not groups:
        raise ValidationError("no prediction files given")
    columns, inputs = [], {}
    for name, *files in groups:
        if not files:
            raise ValidationError(f"column {name!r} has no prediction files")
        reports = []
        for f in files:
            reports.append(evaluate_file(f, truths, tax, strict))
            inputs[f"{name}:{os.path.basename(f)}"] = file_digest(f)
        columns.append(column(name, reports))
    if args.truth:
        inputs["truth"] = file_digest(args.truth)
    else:
        inputs["data"] = file_digest(args.scores or args.features)
    manifest = _manifest("evaluate", settings, seed, tax, inputs=inputs)
    table = text_table(columns, tax, manifest.hash)
    if args.json:
        write_atomic(args.json, report_json(columns, tax, manifest.hash, args.confusion))
    if args.table:
        write_atomic(args.table, table)
    if args.json or args.table:
        write_atomic((args.json or args.table) + ".manifest.json", manifest.to_json())
    sys.stdout.write(table)
    return 0


def cmd_report(args) -> int:
    """Re-render the text table of a saved JSON report."""
    from .metrics import MetricsReport
    with open(args.report, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") != "hiertaxa-report":
        raise ValidationError(f"{args.report}: not a report file")
    tax = load_taxonomy(args.taxonomy, args.lenient)
    cols = [column(c["name"], [MetricsReport.from_dict(s) for s in c["splits"]], c["warnings"])
            for c in doc["columns"]]
    sys.stdout.write(text_table(cols, tax, doc.get("manifest")))
    return 0


# -------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="overrides config and $HIERTAXA_SEED")
    common.add_argument("--config", help="flat key = value config file")
    common.add_argument("--jobs", type=int, default=None, help="worker threads for cascade training")
    common.add_argument("--lenient", action="store_true",
                        help="accept a (rank, name) pair under two parents in taxonomy files")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="hiertaxa", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("taxonomy", parents=[common], help="validate a taxonomy table or print its stats")
    t.add_argument("action", choices=("validate", "stats"))
    t.add_argument("file", nargs="?", help="taxonomy CSV (default: bundled fixture)")
    t.add_argument("--json", action="store_true")
    t.set_defaults(func=cmd_taxonomy)

    def data_args(q):
        q.add_argument("--taxonomy", help="taxonomy CSV (default: bundled fixture)")
        g = q.add_mutually_exclusive_group()
        g.add_argument("--features", help="feature CSV: specimen_id,image_id,label_leaf,f1..fN")
        g.add_argument("--scores", help="score CSV: specimen_id,image_id[,label_leaf],s_1..s_K")

    s = sub.add_parser("synth", parents=[common], help="write a synthetic feature CSV")
    s.add_argument("--taxonomy")
    s.add_argument("--out", required=True)
    s.add_argument("--n-per-leaf", type=int, default=30)
    s.add_argument("--views", type=int, default=5)
    s.add_argument("--dim", type=int, default=16)
    s.add_argument("--separation", type=float, default=10.0)
    s.add_argument("--alignment", type=float, default=1.0)
    s.set_defaults(func=cmd_synth)

    sp = sub.add_parser("split", parents=[common], help="write train/val/test split files")
    data_args(sp)
    sp.add_argument("--scheme", choices=(COMPARISON, MACHINE_LEARNING), default=None)
    sp.add_argument("--n-splits", type=int, default=None)
    sp.add_argument("--test-counts", help="CSV taxa,count[,...] for the comparison scheme")
    sp.add_argument("--out", required=True, help="output directory")
    sp.set_defaults(func=cmd_split)

    tr = sub.add_parser("train", parents=[common], help="train a topology on one split")
    data_args(tr)
    tr.add_argument("--split", required=True)
    tr.add_argument("--topology", choices=TOPOLOGIES, default=None)
    tr.add_argument("--learner", choices=("svm", "softmax"), default=None)
    tr.add_argument("--grid", choices=("flat", "cascade"), default=None)
    tr.add_argument("--rule", choices=RULES, default=None)
    tr.add_argument("--ranks", default=None, help="per-level ranks, e.g. 1,2")
    tr.add_argument("--out", required=True, help="bundle directory")
    tr.set_defaults(func=cmd_train)

    pr = sub.add_parser("predict", parents=[common], help="predict label paths for a split role")
    data_args(pr)
    pr.add_argument("--bundle")
    pr.add_argument("--split", required=True)
    pr.add_argument("--role", choices=("train", "val", "test"), default="test")
    pr.add_argument("--rule", choices=RULES, default=None)
    pr.add_argument("--out", help="prediction CSV (default: stdout)")
    pr.set_defaults(func=cmd_predict)

    ev = sub.add_parser("evaluate", parents=[common], help="score prediction files and print the table")
    data_args(ev)
    ev.add_argument("predictions", nargs="*", help="prediction CSVs, one per split")
    ev.add_argument("--name", default="predictions", help="column name for the positional files")
    ev.add_argument("--column", nargs="+", action="append", metavar=("NAME", "CSV"),
                    help="an extra table column: NAME followed by its prediction CSVs")
    ev.add_argument("--truth", help="truth CSV in prediction-file layout")
    ev.add_argument("--strict", action="store_true", help="score correct-prefix answers as full errors")
    ev.add_argument("--json", help="write the JSON report here")
    ev.add_argument("--table", help="write the text table here")
    ev.add_argument("--confusion", action="store_true", help="include confusion matrices in the JSON")
    ev.set_defaults(func=cmd_evaluate)

    rp = sub.add_parser("report", parents=[common], help="print the table of a saved JSON report")
    rp.add_argument("report")
    rp.add_argument("--taxonomy")
    rp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except (FileNotFoundError, IsADirectoryError, json.JSONDecodeError, UnicodeDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (LearnerError, HierTaxaError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    except (RuntimeError, ArithmeticError, MemoryError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
