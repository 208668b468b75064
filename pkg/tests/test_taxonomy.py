import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hiertaxa.errors import (ConflictingParent, EmptyTable, ForeignNode, RaggedRow,
                             TaxonomyError)
from hiertaxa.taxonomy import fixture_path, load_fixture, parse_taxonomy, path_loss

from _trees import small_tree, path, random_taxonomy


@pytest.fixture(scope="module")
def tax():
    return small_tree()


@pytest.fixture(scope="module")
def bundled():
    return load_fixture()


def test_small_tree_counts(tax):
    assert tax.rank_counts() == {1: 1, 2: 3, 3: 3, 4: 3}
    assert len(tax.leaves) == 5
    assert tax.leaf_depth_histogram() == {1: 0, 2: 1, 3: 1, 4: 3}


def test_bundled_counts(bundled):
    assert len(bundled.leaves) == 39
    assert bundled.rank_counts() == {1: 7, 2: 23, 3: 30, 4: 26}
    assert sum(c[0] for c in bundled.counts.values()) == 9631
    assert sum(c[1] for c in bundled.counts.values()) == 460004


def test_bundled_round_trip_is_byte_identical(bundled):
    with fixture_path().open("r", encoding="utf-8", newline="") as fh:
        assert bundled.to_csv() == fh.read()
    again = parse_taxonomy(io.StringIO(bundled.to_csv()))
    assert again.nodes == bundled.nodes
    assert again.leaves == bundled.leaves


def test_simuliidae_is_a_family_label(bundled):
    leaf = bundled.resolve_label("Simuliidae")
    assert bundled.names(bundled.expand_bottom_up(leaf)) == ["Diptera", "Simuliidae"]


def test_single_row_tree():
    t = parse_taxonomy(io.StringIO("taxa,species,genus,family,order\nA,-,-,-,A\n"))
    assert len(t) == 1
    assert t.leaf_depth_histogram()[1] == 1


def test_dca_depth(tax):
    t = path(tax, "OrdA", "FamB", "GenA", "SpA")
    assert tax.dca_depth(t, t) == 4
    assert tax.dca_depth(t, path(tax, "OrdA", "FamB", "GenA", "SpB")) == 3
    assert tax.dca_depth(t, path(tax, "OrdA", "FamC", "GenC", "SpC")) == 1


def test_loss_height(tax):
    t = path(tax, "OrdA", "FamB", "GenA", "SpA")
    assert tax.loss_height(t, t) == 0
    assert tax.loss_height(path(tax, "OrdA", "FamB", "GenA", "SpB"), t) == 1
    assert tax.loss_height(None, t) == 4
    # correct prefix: partial credit, or the full depth in strict mode
    assert tax.loss_height(path(tax, "OrdA", "FamB"), t) == 2
    assert tax.loss_height(path(tax, "OrdA", "FamB"), t, strict=True) == 4


def test_overshoot_scores_one(tax):
    truth = path(tax, "OrdA", "FamB", "GenA")
    assert tax.loss_height(path(tax, "OrdA", "FamB", "GenA", "SpA"), truth) == 1


def test_ancestor_at_rank_and_expand(tax):
    t = path(tax, "OrdA", "FamB", "GenA", "SpA")
    assert tax.ancestor_at_rank(t, 2) == "OrdA/FamB"
    assert tax.ancestor_at_rank(t, 1) == "OrdA"
    assert tax.ancestor_at_rank(path(tax, "OrdA", "FamA"), 3) is None
    assert tax.expand_bottom_up("OrdA/FamB/GenA/SpA") == t
    assert tax.expand_bottom_up("OrdA/FamA") == ("OrdA", "OrdA/FamA")


def test_foreign_node(tax):
    with pytest.raises(ForeignNode):
        tax.dca_depth(("OrdA",), ("Nope",))
    with pytest.raises(ForeignNode):
        tax.expand_bottom_up("OrdA/FamZ")


def test_invalid_chain_rejected(tax):
    with pytest.raises(TaxonomyError):
        tax.validate_path(("OrdA", "OrdA/FamB/GenA"))
    with pytest.raises(TaxonomyError):
        tax.validate_path(())


@pytest.mark.parametrize("body, error, row", [
    ("A,-,GenA,-,OrdA\n", RaggedRow, 2),
    ("A,-,-,-,-\n", RaggedRow, 2),
    ("A,SpA,GenA,FamA,OrdA\nB,SpB,GenA,FamB,OrdA\n", ConflictingParent, 3),
])
def test_parse_errors_cite_row(body, error, row):
    with pytest.raises(error) as exc:
        parse_taxonomy(io.StringIO("taxa,species,genus,family,order\n" + body))
    assert f"row {row}" in str(exc.value)


def test_empty_table():
    with pytest.raises(EmptyTable):
        parse_taxonomy(io.StringIO("taxa,species,genus,family,order\n"))


def test_lenient_mode_keeps_homonyms_apart():
    text = "taxa,species,genus,family,order\nA,SpA,GenA,FamA,OrdA\nB,SpB,GenA,FamB,OrdA\n"
    t = parse_taxonomy(io.StringIO(text), strict=False)
    assert len(t.find("GenA", 3)) == 2


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_path_properties(seed):
    rng = np.random.default_rng(seed)
    t = random_taxonomy(rng)
    paths = [t.expand_bottom_up(n) for n in t.nodes]
    for leaf in t.leaves:
        p = t.expand_bottom_up(leaf)
        assert t.validate_path(p) == p and p[-1] == leaf
    for _ in range(20):
        a = paths[int(rng.integers(len(paths)))]
        b = paths[int(rng.integers(len(paths)))]
        assert t.dca_depth(a, b) == t.dca_depth(b, a)
        assert t.dca_depth(a, a) == len(a)
        h = t.loss_height(a, b)
        assert 0 <= h <= len(b)
        assert (h == 0) == (a == b)
        assert path_loss(a, b) == h
