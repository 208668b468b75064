"""Small taxonomies shared by the test modules."""
import io

import numpy as np

from hiertaxa.taxonomy import parse_taxonomy

SMALL_CSV = """taxa,species,genus,family,order
FamA,-,-,FamA,OrdA
SpA,SpA,GenA,FamB,OrdA
SpB,SpB,GenA,FamB,OrdA
GenB,-,GenB,FamB,OrdA
SpC,SpC,GenC,FamC,OrdA
"""

RANK_NAMES = ("order", "family", "genus", "species")


def small_tree():
    return parse_taxonomy(io.StringIO(SMALL_CSV))


def path(tax, *names):
    return tax.path_from_names(names)


def random_taxonomy(rng: np.random.Generator, max_depth=4, max_leaves=20):
    """Random rank tree: mixed leaf depths, labels with children allowed."""
    depth = int(rng.integers(1, max_depth + 1))
    n_rows = int(rng.integers(1, max_leaves + 1))
    ranks = RANK_NAMES[:depth]
    rows, seen = [], set()
    for _ in range(n_rows * 3):
        if len(rows) == n_rows:
            break
        d = int(rng.integers(1, depth + 1))
        # few names per rank so lineages share prefixes
        chain, prefix = [], ""
        for r in range(d):
            k = int(rng.integers(0, 3))
            prefix = f"{prefix}{'abcd'[r]}{k}"
            chain.append(prefix)
        if tuple(chain) in seen:
            continue
        seen.add(tuple(chain))
        cells = chain + ["-"] * (depth - d)
        rows.append({"taxa": chain[-1], **{ranks[i]: cells[i] for i in range(depth)}})
    buf = io.StringIO()
    buf.write(",".join(["taxa"] + list(reversed(ranks))) + "\n")
    for row in rows:
        buf.write(",".join([row["taxa"]] + [row[r] for r in reversed(ranks)]) + "\n")
    buf.seek(0)
    return parse_taxonomy(buf)


def random_records(rng, tax, n):
    """(truth, pred) pairs: correct, sibling swaps, prefixes, overshoots and absent predictions."""
    from hiertaxa.metrics import PredictionRecord
    leaves = list(tax.leaves)
    nodes = list(tax.nodes)
    out = []
    for i in range(n):
        truth = tax.expand_bottom_up(leaves[int(rng.integers(len(leaves)))])
        u = rng.random()
        if u < 0.3:
            pred = truth
        elif u < 0.4:
            pred = None
        elif u < 0.8:
            pred = tax.expand_bottom_up(leaves[int(rng.integers(len(leaves)))])
        else:
            pred = tax.expand_bottom_up(nodes[int(rng.integers(len(nodes)))])
        out.append(PredictionRecord(f"r{i}", truth, pred))
    return out
