from collections import Counter
from itertools import product

import numpy as np
import pytest
from scipy import stats

from treevardist.experiments import tree_key, uniformity_pvalue
from treevardist.random_trees import (
    all_trees,
    default_labels,
    derive_seed,
    make_rng,
    random_permutation,
    random_tree,
    relabel,
    uniform_tree,
    yule_harding_tree,
)
from treevardist.tree import Tree, TreeError, cherries, parse_newick, tree_identity, write_newick


def test_quartets_only():
    keys = {tree_key(t) for t in all_trees(default_labels(4))}
    for seed in range(20):
        assert tree_key(uniform_tree(4, seed=seed)) in keys
        assert tree_key(yule_harding_tree(4, seed=seed)) in keys


@pytest.mark.parametrize("gen", [uniform_tree, yule_harding_tree])
def test_deterministic(gen):
    assert write_newick(gen(30, seed=11)) == write_newick(gen(30, seed=11))
    assert write_newick(gen(30, seed=11)) != write_newick(gen(30, seed=12))


@pytest.mark.parametrize("gen", [uniform_tree, yule_harding_tree])
def test_binary_with_labels(gen):
    t = gen(17, labels=[f"x{i}" for i in range(17)], seed=3)
    assert t.is_binary and t.n == 17
    assert set(t.labels) == {f"x{i}" for i in range(17)}


def test_errors():
    with pytest.raises(TreeError):
        uniform_tree(2)
    with pytest.raises(TreeError):
        yule_harding_tree(4, labels=["a", "a", "b", "c"])
    with pytest.raises(ValueError):
        make_rng(None)
    with pytest.raises(ValueError):
        random_tree("pda", 5)


def test_all_trees_counts():
    for n, count in [(4, 3), (5, 15), (6, 105), (7, 945)]:
        trees = list(all_trees(default_labels(n)))
        assert len(trees) == count
        assert len({tree_key(t) for t in trees}) == count


def test_uniform_chi_square():
    assert uniformity_pvalue(5, 15000, seed=2024) > 0.001


def test_relabeled_uniform_is_uniform():
    labels = default_labels(5)
    index = {tree_key(t): i for i, t in enumerate(all_trees(labels))}
    pi = random_permutation(labels, seed=9)
    counts = np.zeros(15)
    for i in range(15000):
        counts[index[tree_key(relabel(uniform_tree(5, seed=derive_seed(77, i)), pi))]] += 1
    assert stats.chisquare(counts).pvalue > 0.001


def test_yule_relabel_invariance():
    labels = default_labels(5)
    index = {tree_key(t): i for i, t in enumerate(all_trees(labels))}
    pi = random_permutation(labels, seed=4)
    plain, moved = np.zeros(15), np.zeros(15)
    for i in range(6000):
        plain[index[tree_key(yule_harding_tree(5, seed=derive_seed(5, i)))]] += 1
        moved[index[tree_key(relabel(yule_harding_tree(5, seed=derive_seed(6, i)), pi))]] += 1
    assert stats.chi2_contingency(np.vstack([plain, moved])).pvalue > 0.001


def _yule_shapes(n):
    """Exact law of the cherry count over all equally likely Yule split orders."""
    law = Counter()
    for choices in product(*[range(i) for i in range(2, n)]):
        # rooted tree as child lists; vertex 0 is the root
        children = {0: [1, 2]}
        current = [1, 2]
        nxt = 3
        for k in choices:
            leaf = current[k]
            children[leaf] = [nxt, nxt + 1]
            current[k] = nxt
            current.append(nxt + 1)
            nxt += 2
        a, b = children[0]
        edges = [(a, b)] + [(v, c) for v, cs in children.items() if v != 0 for c in cs]
        # the root is gone, so shift ids to start at 0
        edges = [(u - 1, v - 1) for u, v in edges]
        tree = Tree(edges, {v - 1: f"l{i}" for i, v in enumerate(current)})
        law[len(cherries(tree))] += 1
    return law


def test_yule_snowflake_law_differs_from_uniform():
    law = _yule_shapes(6)
    assert sum(law.values()) == 120
    assert law[3] == 24
    exact_yule = law[3] / 120
    uniform_snowflakes = sum(
        len(cherries(t)) == 3 for t in all_trees(default_labels(6))
    )
    assert uniform_snowflakes == 15
    assert exact_yule != pytest.approx(15 / 105)
    draws = 4000
    hits = sum(len(cherries(yule_harding_tree(6, seed=derive_seed(8, i)))) == 3
               for i in range(draws))
    sigma = np.sqrt(exact_yule * (1 - exact_yule) / draws)
    assert abs(hits / draws - exact_yule) < 4 * sigma


def test_relabel():
    t = parse_newick("((a,b),(c,d));")
    assert tree_identity(relabel(t, {x: x for x in "abcd"}), t)
    swapped = relabel(t, {"a": "c", "b": "b", "c": "a", "d": "d"})
    assert tree_identity(swapped, parse_newick("((c,b),(a,d));"))
    assert not tree_identity(swapped, t)
    with pytest.raises(TreeError):
        relabel(t, {"a": "a", "b": "a", "c": "c", "d": "d"})


def test_derive_seed_streams_differ():
    seeds = {derive_seed(1, i) for i in range(1000)}
    assert len(seeds) == 1000
    assert derive_seed(1, 2) == derive_seed(1, 2)
