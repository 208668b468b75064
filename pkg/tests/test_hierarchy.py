import itertools

import numpy as np
import pytest

from hiertaxa import load_fixture
from hiertaxa.aggregation import AVERAGE, VOTE, aggregate, aggregate_groups
from hiertaxa.dataset import DataSplit, Dataset, Specimen, SplitSpec, generate_synthetic, make_splits
from hiertaxa.errors import EmptyInput, RuleUnsupported, ValidationError
from hiertaxa.hierarchy import (CASCADE, FLAT, PER_LEVEL, SENTINEL, build_cascade_plan, is_coherent,
                                node_label, predict_specimen_cascade, predict_specimen_flat,
                                predict_specimen_scores, predict_split, sentinel_census,
                                train_topology)
from hiertaxa.learners import GridSpec, SoftmaxLearner, SvmLearner, ViewOutputs
from hiertaxa.taxonomy import ROOT

from _trees import small_tree, path


@pytest.fixture(scope="module")
def bundled():
    return load_fixture()


class Stub:
    """Stands in for a trained node model: maps a one-hot leaf row to a fixed answer."""
    has_scores = True
    kind = "stub"

    def __init__(self, classes, answer, leaves):
        self.classes = tuple(classes)
        self.answer = answer
        self.leaves = leaves

    def predict(self, X):
        labels = [self.answer(self.leaves[int(np.argmax(row))]) for row in X]
        scores = np.array([[float(c == lab) for c in self.classes] for lab in labels])
        return ViewOutputs(self.classes, labels, scores.reshape(len(labels), len(self.classes)), True)


def one_hot_specimen(tax, leaf, views=2, sid="s"):
    row = np.array([float(x == leaf) for x in tax.leaves])
    return Specimen(sid, tax.expand_bottom_up(leaf), tuple(f"{sid}_{k}" for k in range(views)),
                    np.tile(row, (views, 1)))


def perfect_models(tax, plan):
    models = {}
    for e in plan.entries:
        # off-path specimens get the first class, as a real model must answer something
        answer = lambda leaf, e=e: node_label(tax.expand_bottom_up(leaf), e) or e.classes[0]
        models[e.node] = Stub(e.classes, answer, tax.leaves)
    return models


# ------------------------------------------------------------------ plan

def test_fixture_plan(bundled):
    plan = build_cascade_plan(bundled)
    assert len(plan) == 17
    assert plan.by_rank() == {1: 1, 2: 4, 3: 5, 4: 7}
    assert plan.sentinel_nodes() == ("Plecoptera/Leuctridae/Leuctra", "Plecoptera/Nemouridae/Nemoura")
    leuctra = plan.entry("Plecoptera/Leuctridae/Leuctra")
    assert leuctra.classes == ("Plecoptera/Leuctridae/Leuctra/Leuctra nigra", SENTINEL)


def test_small_tree_plan():
    tax = small_tree()
    plan = build_cascade_plan(tax)
    assert [e.node for e in plan.entries] == ["OrdA", "OrdA/FamB", "OrdA/FamB/GenA"]
    assert not plan.sentinel_nodes()
    assert plan.auto[ROOT] == "OrdA"


def test_single_lineage_plan():
    import io
    from hiertaxa.taxonomy import parse_taxonomy
    tax = parse_taxonomy(io.StringIO("taxa,species,genus,family,order\nS,S,G,F,O\n"))
    plan = build_cascade_plan(tax)
    assert len(plan) == 0
    assert len(plan.auto) == 4


def test_plan_reaches_every_leaf(bundled):
    # descend with perfect node models: every label comes back unchanged
    plan = build_cascade_plan(bundled)
    models = perfect_models(bundled, plan)
    for leaf in bundled.leaves:
        s = one_hot_specimen(bundled, leaf)
        assert predict_specimen_cascade(models, plan, s, VOTE, bundled) == bundled.expand_bottom_up(leaf)


def test_census_from_truths(bundled):
    truths = [bundled.expand_bottom_up(leaf) for leaf in bundled.leaves]
    assert sentinel_census(bundled, truths) == sentinel_census(bundled)
    # without any genus-only Leuctra truth, no sentinel is needed there
    nigra = "Plecoptera/Leuctridae/Leuctra/Leuctra nigra"
    only_species = [t for t in truths if t[-1] != "Plecoptera/Leuctridae/Leuctra"]
    plan = build_cascade_plan(bundled, sentinel_census(bundled, only_species))
    assert plan.entry("Plecoptera/Leuctridae/Leuctra") is None
    assert plan.auto["Plecoptera/Leuctridae/Leuctra"] == nigra
    assert len(plan) == 16


def test_diptera_never_enters_a_family_model(bundled):
    plan = build_cascade_plan(bundled)
    truth = bundled.expand_bottom_up(bundled.resolve_label("Simuliidae"))
    used = [e.node for e in plan.entries if node_label(truth, e) is not None]
    assert used == [ROOT]
    assert plan.auto["Diptera"] == "Diptera/Simuliidae"


def test_node_labels(bundled):
    plan = build_cascade_plan(bundled)
    leuctra = plan.entry("Plecoptera/Leuctridae/Leuctra")
    genus_only = bundled.expand_bottom_up("Plecoptera/Leuctridae/Leuctra")
    assert node_label(genus_only, leuctra) == SENTINEL
    assert node_label(genus_only + ("Plecoptera/Leuctridae/Leuctra/Leuctra nigra",), leuctra).endswith("nigra")
    assert node_label(("Diptera", "Diptera/Simuliidae"), leuctra) is None
    assert node_label(("Diptera", "Diptera/Simuliidae"), plan.entry(ROOT)) == "Diptera"


# ----------------------------------------------------------- aggregation

def _outputs(labels, scores, classes=("A", "B")):
    return ViewOutputs(classes, list(labels), np.array(scores, dtype=float), True)


def _enumerated_winner(labels, scores, classes):
    # brute force: rank every class by (votes, mean score, earlier position)
    best = None
    for i, c in enumerate(classes):
        votes = sum(lab == c for lab in labels)
        mean = sum(row[i] for row in scores) / len(scores)
        key = (votes, mean, -i)
        if best is None or key > best[0]:
            best = (key, c)
    return best[1]


def test_vote_ties_match_enumeration():
    levels = (0.0, 0.5, 1.0)
    classes = ("A", "B")
    n = 0
    for labels in itertools.product(classes, repeat=2):
        for flat in itertools.product(levels, repeat=4):
            scores = [flat[:2], flat[2:]]
            got, _ = aggregate(_outputs(labels, scores), VOTE)
            assert got == _enumerated_winner(labels, scores, classes)
            n += 1
    assert n == 4 * 81


def test_aggregate_examples():
    assert aggregate(_outputs("AAA", [[1, 0]] * 3), VOTE)[0] == "A"
    assert aggregate(_outputs("AAA", [[1, 0]] * 3), AVERAGE)[0] == "A"
    assert aggregate(_outputs("AAB", [[1, 0], [1, 0], [0, 1]]), VOTE)[0] == "A"
    # one confident view outweighs two lukewarm ones under averaging
    assert aggregate(_outputs("AAB", [[0.6, 0.4], [0.6, 0.4], [0, 5]]), AVERAGE)[0] == "B"
    # exact tie in votes and scores: canonical order decides
    assert aggregate(_outputs("AB", [[1, 0], [0, 1]]), VOTE)[0] == "A"
    with pytest.raises(EmptyInput):
        aggregate(_outputs("", np.zeros((0, 2))), VOTE)
    votes = ViewOutputs(("A", "B"), ["A"], np.array([[1.0, 0.0]]), False)
    with pytest.raises(RuleUnsupported):
        aggregate(votes, AVERAGE)
    assert aggregate(votes, VOTE)[0] == "A"


def test_aggregate_groups():
    out = _outputs("ABBA", [[1, 0], [0, 1], [0, 1], [1, 0]])
    assert aggregate_groups(out, ["x", "y", "y", "x"], VOTE) == {"x": "A", "y": "B"}


# ------------------------------------------------------------ prediction

def test_flat_expansion(bundled):
    for leaf in bundled.leaves:
        s = one_hot_specimen(bundled, leaf, views=3)
        for rule in (VOTE, AVERAGE):
            p = predict_specimen_scores(s, rule, bundled)
            assert p[-1] == leaf and len(p) == bundled.node(leaf).rank
            assert bundled.validate_path(p) == p


def test_small_tree_perfect_cascade():
    tax = small_tree()
    plan = build_cascade_plan(tax)
    models = perfect_models(tax, plan)
    for leaf in tax.leaves:
        for rule in (VOTE, AVERAGE):
            got = predict_specimen_cascade(models, plan, one_hot_specimen(tax, leaf), rule, tax)
            assert got == tax.expand_bottom_up(leaf)


def test_sentinel_truncates_at_genus(bundled):
    plan = build_cascade_plan(bundled)
    models = perfect_models(bundled, plan)
    node = "Plecoptera/Leuctridae/Leuctra"
    models[node] = Stub(plan.entry(node).classes, lambda leaf: SENTINEL, bundled.leaves)
    s = one_hot_specimen(bundled, node + "/Leuctra nigra")
    got = predict_specimen_cascade(models, plan, s, VOTE, bundled)
    assert got == ("Plecoptera", "Plecoptera/Leuctridae", node)


def test_wrong_order_propagates(bundled):
    plan = build_cascade_plan(bundled)
    models = perfect_models(bundled, plan)
    models[ROOT] = Stub(plan.entry(ROOT).classes, lambda leaf: "Trichoptera", bundled.leaves)
    leaf = next(x for x in bundled.leaves if x.startswith("Plecoptera/") and x.count("/") == 3)
    got = predict_specimen_cascade(models, plan, one_hot_specimen(bundled, leaf), VOTE, bundled)
    truth = bundled.expand_bottom_up(leaf)
    assert got[0] == "Trichoptera"
    assert all(g != t for g, t in zip(got, truth))
    assert bundled.validate_path(got) == got


def test_is_coherent(bundled):
    assert is_coherent({1: "Plecoptera", 2: "Plecoptera/Leuctridae"}, bundled)
    assert not is_coherent({1: "Diptera", 2: "Plecoptera/Leuctridae"}, bundled)
    assert is_coherent({1: "Diptera", 2: None}, bundled)


# -------------------------------------------------------------- training

@pytest.fixture(scope="module")
def small_run(bundled):
    ds = generate_synthetic(bundled, n_per_leaf=8, views=2, dim=16, seed=5)
    split = make_splits(ds, SplitSpec(n_splits=1, seed=5, test_counts={leaf: 2 for leaf in bundled.leaves}))[0]
    return ds, split


def _svm():
    return SvmLearner(GridSpec((16.0,), (2.0 ** -6,)))


def test_per_level_classes(bundled, small_run):
    ds, split = small_run
    trained = train_topology(PER_LEVEL, ds, split, _svm(), seed=1)
    assert sorted(trained.models) == [1, 2]
    assert len(trained.models[1].classes) == 7
    assert len(trained.models[2].classes) == 23


def test_flat_model_classes(bundled, small_run):
    ds, split = small_run
    trained = train_topology(FLAT, ds, split, _svm(), seed=1)
    assert trained.models[FLAT].classes == bundled.leaves
    preds = predict_split(trained, ds, split)
    assert set(preds) == set(split.test)
    assert all(p[-1] in bundled.leaves for p in preds.values())
    with pytest.raises(RuleUnsupported):
        predict_split(trained, ds, split, AVERAGE)


def test_cascade_coherent_nested_and_shares_order_model(bundled, small_run):
    ds, split = small_run
    casc = train_topology(CASCADE, ds, split, _svm(), seed=3)
    level = train_topology(PER_LEVEL, ds, split, _svm(), seed=3, ranks=(1,))
    assert len(casc.models) == 17
    pc = predict_split(casc, ds, split)
    pl = predict_split(level, ds, split)
    for sid, p in pc.items():
        truth = ds[sid].truth
        assert bundled.validate_path(p) == p
        wrong_above = False
        for r in range(1, len(truth) + 1):
            wrong = len(p) < r or p[r - 1] != truth[r - 1]
            assert wrong or not wrong_above
            wrong_above = wrong
        assert p[0] == pl[sid][1]


def test_empty_child_is_dropped_with_warning(bundled, small_run):
    ds, split = small_run
    nigra = "Plecoptera/Leuctridae/Leuctra/Leuctra nigra"
    keep = lambda ids: tuple(s for s in ids if ds[s].truth[-1] != nigra)
    thin = DataSplit(0, keep(split.train), keep(split.val), split.test, split.views)
    trained = train_topology(CASCADE, ds, thin, SoftmaxLearner(l2_grid=(1e-3,)), seed=0)
    node = "Plecoptera/Leuctridae/Leuctra"
    assert trained.models[node].kind == "constant"
    assert any("EmptyChildClass" in w and "nigra" in w for w in trained.warnings)


def test_unknown_topology(small_run):
    ds, split = small_run
    with pytest.raises(ValidationError):
        train_topology("global", ds, split, _svm())


def test_flat_with_stub_model():
    tax = small_tree()
    model = Stub(tax.leaves, lambda leaf: leaf, tax.leaves)
    for leaf in tax.leaves:
        assert predict_specimen_flat(model, one_hot_specimen(tax, leaf), AVERAGE, tax) == path(
            tax, *tax.names(tax.expand_bottom_up(leaf)))


def test_dataset_without_truths_predicts(bundled):
    tax = small_tree()
    s = one_hot_specimen(tax, tax.leaves[0])
    ds = Dataset(tax, [Specimen("u", None, s.image_ids, s.values)], "scores")
    assert predict_specimen_scores(ds["u"], VOTE, tax) == tax.expand_bottom_up(tax.leaves[0])
