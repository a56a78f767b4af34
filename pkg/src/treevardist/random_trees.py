"""Seeded random tree generators and exhaustive enumeration.

All randomness goes through :func:`make_rng`, numpy's PCG64 seeded from a
``SeedSequence``; it gives the same stream on every platform. Sub-streams
for trials or blocks are derived with :func:`derive_seed`.
"""

from __future__ import annotations

from typing import Iterator, Mapping, Optional, Sequence, Union

import numpy as np

from .tree import Tree, TreeError

SeedLike = Union[int, Sequence[int], np.random.Generator, None]

TREE_KINDS = ("uniform", "yule-harding")


def make_rng(seed: SeedLike) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None:
        raise ValueError("an explicit seed is required")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


def derive_seed(seed: int, *keys: int) -> int:
    """A 63-bit seed for the independent stream ``(seed, *keys)``."""
    state = np.random.SeedSequence([int(seed), *map(int, keys)]).generate_state(2, np.uint32)
    return (int(state[0]) << 31) ^ int(state[1])


def default_labels(n: int) -> list[str]:
    """``t1..tn`` zero-padded so that sorting keeps numeric order."""
    width = len(str(n))
    return [f"t{i:0{width}d}" for i in range(1, n + 1)]


def _check(n: int, labels: Optional[Sequence[str]]) -> list[str]:
    if n < 3:
        raise TreeError("random trees need n >= 3")
    labels = default_labels(n) if labels is None else [str(x) for x in labels]
    if len(labels) != n:
        raise TreeError(f"expected {n} labels, got {len(labels)}")
    if len(set(labels)) != n:
        raise TreeError("duplicate labels")
    return labels


def _insert(edges: list, eid: int, leaf: int, internal: int) -> None:
    """Subdivide edge ``eid`` with ``internal`` and hang ``leaf`` from it."""
    u, v = edges[eid]
    edges[eid] = (u, internal)
    edges.append((internal, v))
    edges.append((internal, leaf))


def _star(n: int) -> list:
    # leaves are vertices 0..n-1, internal vertices n..2n-3
    return [(0, n), (1, n), (2, n)]


def uniform_tree(n: int, labels: Optional[Sequence[str]] = None, seed: SeedLike = 0) -> Tree:
    """Uniform draw from the (2n-5)!! binary X-trees, by random edge insertion.

    Leaf ``i`` (``i >= 3``) subdivides a uniformly chosen edge of the current
    tree, which has ``2i - 3`` edges; every tree arises from exactly one
    choice sequence.
    """
    labels = _check(n, labels)
    rng = make_rng(seed)
    edges = _star(n)
    for i in range(3, n):
        _insert(edges, int(rng.integers(len(edges))), i, n + i - 2)
    return Tree(edges, dict(enumerate(labels)))


def all_trees(labels: Sequence[str]) -> Iterator[Tree]:
    """Every binary X-tree on ``labels`` exactly once, (2n-5)!! in total."""
    n = len(labels)
    labels = _check(n, labels)
    leaf_map = dict(enumerate(labels))

    def grow(edges: list, i: int) -> Iterator[Tree]:
        if i == n:
            yield Tree(edges, leaf_map)
            return
        for eid in range(len(edges)):
            nxt = list(edges)
            _insert(nxt, eid, i, n + i - 2)
            yield from grow(nxt, i + 1)

    yield from grow(_star(n), 3)


def yule_harding_tree(n: int, labels: Optional[Sequence[str]] = None, seed: SeedLike = 0) -> Tree:
    """Unrooted Yule-Harding draw.

    Grow a rooted tree from a cherry by splitting a uniformly chosen current
    leaf until there are ``n`` leaves, suppress the root, then assign labels
    by a uniform random permutation.
    """
    labels = _check(n, labels)
    rng = make_rng(seed)
    # vertex 0 is the root; children lists grow as leaves split
    children: list[list[int]] = [[1, 2], [], []]
    current = [1, 2]
    while len(current) < n:
        k = int(rng.integers(len(current)))
        leaf = current[k]
        a, b = len(children), len(children) + 1
        children[leaf] = [a, b]
        children.extend([[], []])
        current[k] = a
        current.append(b)

    left, right = children[0]
    edges = [(left, right)]
    for v in range(1, len(children)):
        for c in children[v]:
            edges.append((v, c))
    # shift ids down by one now that the root is gone
    edges = [(u - 1, v - 1) for u, v in edges]
    perm = rng.permutation(n)
    leaf_map = {current[i] - 1: labels[int(perm[i])] for i in range(n)}
    return Tree(edges, leaf_map)


def random_tree(kind: str, n: int, labels: Optional[Sequence[str]] = None,
                seed: SeedLike = 0) -> Tree:
    if kind == "uniform":
        return uniform_tree(n, labels, seed)
    if kind == "yule-harding":
        return yule_harding_tree(n, labels, seed)
    raise ValueError(f"unknown tree distribution {kind!r}; expected one of {TREE_KINDS}")


def relabel(tree: Tree, pi: Mapping[str, str]) -> Tree:
    """Same shape with every leaf label ``v`` replaced by ``pi[v]``."""
    labels = set(tree.labels)
    if set(pi) != labels or set(pi.values()) != labels:
        raise TreeError("pi must be a bijection of the tree's label set")
    mapping = {v: pi[lab] for v, lab in tree.leaf_labels.items()}
    return Tree(tree.edges, mapping, tree.annotations)


def random_permutation(labels: Sequence[str], seed: SeedLike) -> dict[str, str]:
    rng = make_rng(seed)
    labels = list(labels)
    perm = rng.permutation(len(labels))
    return {labels[i]: labels[int(perm[i])] for i in range(len(labels))}
