import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hiertaxa.errors import EmptyInput, NoEligibleRecords
from hiertaxa.metrics import (ABSENT_COLUMN, MetricsReport, PredictionRecord, aggregate_splits,
                              ce_at_rank, classification_error, confusion_matrix, cse,
                              error_structure, evaluate, evaluate_per_level, incoherence_rate,
                              lcse, make_records)

from _oracle import oracle
from _trees import small_tree, path, random_records, random_taxonomy


@pytest.fixture(scope="module")
def tax():
    return small_tree()


def rec(sid, truth, pred):
    return PredictionRecord(sid, truth, pred)


@pytest.fixture(scope="module")
def p(tax):
    return {
        "SpA": path(tax, "OrdA", "FamB", "GenA", "SpA"),
        "SpB": path(tax, "OrdA", "FamB", "GenA", "SpB"),
        "SpC": path(tax, "OrdA", "FamC", "GenC", "SpC"),
        "GenB": path(tax, "OrdA", "FamB", "GenB"),
        "FamA": path(tax, "OrdA", "FamA"),
        "FamB": path(tax, "OrdA", "FamB"),
    }


def test_classification_error(p):
    assert classification_error([rec("a", p["SpA"], p["SpA"])]) == 0
    assert classification_error([rec("a", p["SpA"], None), rec("b", p["SpC"], None)]) == 1
    three = [rec("a", p["SpA"], p["SpA"]), rec("b", p["SpB"], p["SpA"]), rec("c", p["SpC"], p["SpC"])]
    assert classification_error(three) == pytest.approx(1 / 3)
    with pytest.raises(EmptyInput):
        classification_error([])


def test_cse_examples(tax, p):
    assert cse([rec("a", p["SpA"], p["SpA"])], 4) == 0
    assert cse([rec("a", p["SpA"], None)], 4) == 1.0
    two = [rec("a", p["SpA"], p["SpA"]), rec("b", p["SpA"], p["SpB"])]
    assert cse(two, 4) == 1 / 8


def test_lcse_examples(p):
    assert lcse([rec("a", p["SpA"], p["SpA"])]) == 0
    # wrong at rank 1 is impossible in a one-order tree, an absent answer is the same height
    assert lcse([rec("a", p["FamA"], None)]) == 1.0
    mixed = [rec("a", p["SpA"], p["SpB"]), rec("b", p["FamA"], p["FamA"])]
    assert lcse(mixed) == 0.125


def test_ce_at_rank(p):
    recs = [rec("a", p["SpA"], p["SpB"]), rec("b", p["FamA"], p["FamA"])]
    assert [ce_at_rank(recs, r) for r in (1, 2, 3)] == [0, 0, 0]
    assert ce_at_rank(recs, 4) == 1.0      # only one truth reaches species
    # flat prediction with one family confusion
    flat = [rec("a", p["SpA"], p["SpC"]), rec("b", p["SpB"], p["SpB"]), rec("c", p["GenB"], p["GenB"])]
    assert ce_at_rank(flat, 2) == pytest.approx(1 / 3)
    assert ce_at_rank(flat, 1) == 0
    with pytest.raises(NoEligibleRecords):
        ce_at_rank([rec("b", p["FamA"], p["FamA"])], 3)


def test_error_structure(p):
    assert error_structure([rec("a", p["SpA"], p["SpC"])]) == {1: 0, 2: 1}
    assert error_structure([rec("a", p["SpA"], None)], 4) == {1: 1, 2: 0, 3: 0, 4: 0}
    assert error_structure([rec("a", p["SpA"], p["SpA"])], 4) == {1: 0, 2: 0, 3: 0, 4: 0}


def test_error_structure_conserves_published_total():
    # 2 + 16 + 12 + 22 errors at the four ranks over 457 records
    assert 2 + 16 + 12 + 22 == 52
    assert round(52 / 457, 3) == 0.114


def test_confusion_matrix(tax, p):
    recs = [rec("a", p["SpA"], p["SpB"]), rec("b", p["SpB"], p["SpB"]),
            rec("c", p["SpC"], None), rec("d", p["FamA"], p["FamA"])]
    m = confusion_matrix(recs, 4, tax)
    assert m.columns[-1] == ABSENT_COLUMN
    i = {n: k for k, n in enumerate(m.rows)}
    assert m.counts[i[p["SpA"][-1]], i[p["SpB"][-1]]] == 1
    assert m.counts[i[p["SpC"][-1]], -1] == 1
    assert m.counts.sum() == 3                 # FamA truth does not reach species
    perfect = confusion_matrix([rec("b", p["SpB"], p["SpB"])], 4, tax)
    assert np.trace(perfect.counts[:, :-1]) == perfect.counts.sum()


def test_confusion_row_sums(tax, p):
    recs = [rec(str(i), t, q) for i, (t, q) in enumerate(
        [(p["SpA"], p["SpB"]), (p["SpA"], None), (p["GenB"], p["SpA"]), (p["FamA"], p["FamA"])])]
    m = confusion_matrix(recs, 2, tax)
    per_taxon = {n: sum(r.truth[1] == n for r in recs) for n in m.rows}
    assert dict(zip(m.rows, m.counts.sum(axis=1).tolist())) == per_taxon


def test_aggregate_splits():
    def report(ce):
        return MetricsReport(n=10, ce_deepest=ce, lcse=ce / 2, cse=ce / 4, ce_per_rank={1: ce},
                             err_structure={1: round(ce * 10)})
    agg = aggregate_splits([report(0.1), report(0.3)])
    assert agg.mean["ce_deepest"] == pytest.approx(0.2)
    assert agg.sd["ce_deepest"] == pytest.approx(math.sqrt(0.02))
    assert agg.sd["ce_deepest"] == pytest.approx(0.1414, abs=1e-4)
    assert agg.err_structure_total == {1: 4}
    same = aggregate_splits([report(0.2)] * 3)
    assert same.sd["ce_deepest"] == 0
    one = aggregate_splits([report(0.2)])
    assert one.single and one.sd["ce_deepest"] == 0
    with pytest.raises(EmptyInput):
        aggregate_splits([])


def test_make_records_validates(tax, p):
    (r,) = make_records([("x", p["SpA"], None)], tax)
    assert r.pred is None
    with pytest.raises(Exception):
        make_records([("x", ("OrdA", "OrdA/FamB/GenA"), None)], tax)


def test_per_level_report_and_incoherence(tax, p):
    truths = {"a": p["SpA"], "b": p["SpC"]}
    level = {1: {"a": "OrdA", "b": "OrdA"}, 2: {"a": "OrdA/FamB", "b": "OrdA/FamA"}}
    rep = evaluate_per_level(truths, level, tax)
    assert rep.ce_per_rank == {1: 0.0, 2: 0.5}
    assert rep.incoherent == 0.0
    assert incoherence_rate(level, tax, truths) == 0.0


def test_report_round_trip(tax, p):
    rep = evaluate([rec("a", p["SpA"], p["SpB"]), rec("b", p["FamA"], None)], tax)
    again = MetricsReport.from_dict(rep.to_dict(tax))
    assert again.scalars() == rep.scalars()
    assert again.err_structure == rep.err_structure


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 200), st.booleans())
def test_matches_oracle(seed, n, strict):
    rng = np.random.default_rng(seed)
    t = random_taxonomy(rng)
    recs = random_records(rng, t, n)
    ref = oracle(t, recs, strict)
    rep = evaluate(recs, t, strict=strict, confusion=False)
    assert rep.ce_deepest == ref["ce"]
    assert rep.cse == ref["cse"]
    assert rep.lcse == ref["lcse"]
    assert rep.err_structure == ref["err"]
    assert rep.ce_per_rank == ref["ce_rank"]
    assert rep.lcse <= rep.ce_deepest
    assert sum(rep.err_structure.values()) == round(rep.ce_deepest * n)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_lcse_equals_ce_iff_every_error_is_total(seed):
    rng = np.random.default_rng(seed)
    t = random_taxonomy(rng)
    recs = random_records(rng, t, 30)
    total = all(r.correct or t.loss_height(r.pred, r.truth) == len(r.truth) for r in recs)
    assert (lcse(recs) == classification_error(recs)) == total


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_cse_equals_lcse_for_uniform_depth(seed):
    rng = np.random.default_rng(seed)
    t = random_taxonomy(rng)
    full = [leaf for leaf in t.leaves if len(t.expand_bottom_up(leaf)) == t.max_depth]
    if not full:
        return
    recs = [r for r in random_records(rng, t, 40) if len(r.truth) == t.max_depth]
    if recs:
        assert cse(recs, t.max_depth) == pytest.approx(lcse(recs), abs=1e-15)
