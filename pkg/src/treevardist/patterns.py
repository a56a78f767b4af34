"""Leaf-pattern distributions of a tree-based Markov process.

A pattern assigns a state in ``0..q-1`` to every leaf. Patterns are indexed
in base ``q`` with the leaves in sorted label order, the first label being
the most significant digit, so for two leaves ``a < b`` the indices
``0, 1, 2, 3`` are the patterns ``00, 01, 10, 11`` written as ``ab``.

Per-pattern likelihoods use the pruning recursion (children before
parents). Below 40 bits of pattern entropy it runs in linear space; above
that every partial vector is rescaled and the log scale carried along, so
large trees do not underflow.
"""

from __future__ import annotations

import io
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping, Optional, Sequence, Union

import numpy as np

from .models import TransitionMechanism
from .random_trees import SeedLike, make_rng
from .tree import Tree, TreeError

DEFAULT_BUDGET = 2 ** 24
LINEAR_SPACE_BITS = 40
_BLOCK = 1 << 16


class BudgetExceeded(ValueError):
    """Dense enumeration would exceed the pattern budget; sample instead."""


def pattern_index(states: Sequence[int], q: int = 2) -> int:
    index = 0
    for s in states:
        index = index * q + int(s)
    return index


def pattern_states(index: int, n: int, q: int = 2) -> tuple[int, ...]:
    if not 0 <= index < q ** n:
        raise ValueError(f"pattern index {index} out of range for n={n}, q={q}")
    out = [0] * n
    for i in range(n - 1, -1, -1):
        index, out[i] = divmod(index, q)
    return tuple(out)


def _states_array(tree: Tree, pattern, q: int) -> np.ndarray:
    """Normalize an int index, a sequence, or a label->state mapping."""
    n = tree.n
    if isinstance(pattern, Mapping):
        if set(pattern) != set(tree.labels):
            raise TreeError("pattern labels do not match the tree")
        row = [pattern[lab] for lab in tree.labels]
    elif isinstance(pattern, (int, np.integer)):
        row = pattern_states(int(pattern), n, q)
    else:
        row = list(pattern)
        if len(row) != n:
            raise TreeError(f"pattern has {len(row)} states, tree has {n} leaves")
    arr = np.asarray(row, dtype=np.int64)
    if np.any((arr < 0) | (arr >= q)):
        raise ValueError(f"states must lie in 0..{q - 1}")
    return arr


@dataclass
class PatternDistribution:
    """Dense (exact) or sparse (empirical) distribution over patterns.

    Exactly one of ``probs`` and ``counts`` is set. Empirical frequencies are
    ``counts[i] / total``.
    """

    leaf_order: tuple
    q: int
    probs: Optional[np.ndarray] = None
    counts: Optional[dict] = None
    total: int = 0

    @property
    def n(self) -> int:
        return len(self.leaf_order)

    @property
    def is_dense(self) -> bool:
        return self.probs is not None

    def prob(self, index: int) -> float:
        if self.probs is not None:
            return float(self.probs[index])
        return self.counts.get(index, 0) / self.total

    def frequency(self, index: int) -> Fraction:
        if self.counts is None:
            raise ValueError("exact frequencies exist only for empirical distributions")
        return Fraction(self.counts.get(index, 0), self.total)

    def support(self) -> list:
        if self.probs is not None:
            return [int(i) for i in np.flatnonzero(self.probs)]
        return sorted(self.counts)

    def to_dense(self) -> np.ndarray:
        if self.probs is not None:
            return self.probs
        size = self.q ** self.n
        if size > DEFAULT_BUDGET:
            raise BudgetExceeded(f"q^n = {size} exceeds the dense budget")
        out = np.zeros(size)
        for i, c in self.counts.items():
            out[i] = c / self.total
        return out

    def compatible(self, other: "PatternDistribution") -> bool:
        return self.leaf_order == other.leaf_order and self.q == other.q

    def to_tsv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# leaves={','.join(self.leaf_order)}\tq={self.q}\tn={self.n}\n")
        buf.write("pattern\tprobability\n")
        if self.probs is not None:
            for i, p in enumerate(self.probs):
                buf.write(f"{i}\t{float(p)!r}\n")
        else:
            for i in sorted(self.counts):
                buf.write(f"{i}\t{self.counts[i] / self.total!r}\n")
        return buf.getvalue()

    @classmethod
    def from_tsv(cls, text: str) -> "PatternDistribution":
        lines = text.splitlines()
        header = dict(item.split("=", 1) for item in lines[0].lstrip("# ").split("\t"))
        leaves = tuple(header["leaves"].split(","))
        q = int(header["q"])
        probs = np.zeros(q ** len(leaves))
        for line in lines[2:]:
            if line.strip():
                i, p = line.split("\t")
                probs[int(i)] = float(p)
        return cls(leaves, q, probs=probs)


# -- likelihoods ---------------------------------------------------------------


def _leaf_columns(tree: Tree) -> list[int]:
    """Leaf vertex for each column of a sorted-label state matrix."""
    return [tree.vertex(lab) for lab in tree.labels]


def log_likelihoods(tree: Tree, mech: TransitionMechanism, states: np.ndarray,
                    root: Optional[int] = None, scaled: Optional[bool] = None) -> np.ndarray:
    """Natural-log probability of each row of ``states`` (shape ``(k, n)``).

    Columns follow ``tree.labels``. ``scaled`` forces or disables per-vertex
    rescaling; by default it is used once ``n * log2(q)`` reaches 40.
    """
    mech.check_tree(tree)
    states = np.asarray(states)
    if states.ndim == 1:
        states = states[None, :]
    k, n = states.shape
    if n != tree.n:
        raise TreeError(f"patterns have {n} columns, tree has {tree.n} leaves")
    q = mech.q
    if scaled is None:
        scaled = n * np.log2(q) >= LINEAR_SPACE_BITS
    view = tree.rooted(root)
    column = {v: i for i, v in enumerate(_leaf_columns(tree))}
    lam = mech.lam
    out = np.empty(k)
    for start in range(0, k, _BLOCK):
        block = states[start:start + _BLOCK]
        m = block.shape[0]
        # partial likelihoods are (q, m): one row per state keeps reductions cheap
        partial: dict[int, np.ndarray] = {}
        logscale = np.zeros(m)
        for v in view.postorder:
            cur = partial.pop(v, None)
            if v in column:
                onehot = (block[:, column[v]] == np.arange(q)[:, None]).astype(float)
                cur = onehot if cur is None else cur * onehot
            elif scaled:
                top = cur.max(axis=0)
                np.maximum(top, 1e-300, out=top)
                cur /= top
                logscale += np.log(top)
            parent = view.parent[v]
            if parent < 0:
                with np.errstate(divide="ignore"):
                    out[start:start + m] = np.log(cur.mean(axis=0)) + logscale
                break
            le = lam[view.parent_edge[v]]
            msg = le * cur + ((1.0 - le) / q) * cur.sum(axis=0)
            prev = partial.get(parent)
            partial[parent] = msg if prev is None else prev * msg
    return out


def pattern_likelihood(tree: Tree, mech: TransitionMechanism, pattern,
                       root: Optional[int] = None) -> float:
    """Probability of one pattern (int index, state sequence, or label map)."""
    row = _states_array(tree, pattern, mech.q)
    return float(np.exp(log_likelihoods(tree, mech, row[None, :], root)[0]))


def pattern_log_likelihood(tree: Tree, mech: TransitionMechanism, pattern,
                           root: Optional[int] = None) -> float:
    row = _states_array(tree, pattern, mech.q)
    return float(log_likelihoods(tree, mech, row[None, :], root, scaled=True)[0])


def exact_distribution(tree: Tree, mech: TransitionMechanism, root: Optional[int] = None,
                       budget: int = DEFAULT_BUDGET) -> PatternDistribution:
    """All ``q^n`` pattern probabilities.

    Subtree tables are combined bottom-up: each vertex holds a ``(q, q^m)``
    array of conditional leaf-pattern probabilities for its ``m`` leaves,
    and the root's table is averaged over a uniform root state.
    """
    mech.check_tree(tree)
    q, n = mech.q, tree.n
    if q ** n > budget:
        raise BudgetExceeded(
            f"q^n = {q}^{n} exceeds the enumeration budget {budget}; use Monte Carlo"
        )
    view = tree.rooted(root)
    mats = mech.matrices()
    tables: dict[int, tuple[np.ndarray, list[int]]] = {}
    for v in view.postorder:
        parts = []
        if tree.is_leaf(v):
            parts.append((np.eye(q), [v]))
        for c in view.children[v]:
            table, leaves = tables.pop(c)
            parts.append((mats[view.parent_edge[c]] @ table, leaves))
        table, leaves = parts[0]
        for other, more in parts[1:]:
            table = (table[:, :, None] * other[:, None, :]).reshape(q, -1)
            leaves = leaves + more
        tables[v] = (table, leaves)
    table, leaves = tables[view.root]
    flat = table.mean(axis=0)
    # reorder axes from traversal order to sorted-label order
    position = {v: i for i, v in enumerate(leaves)}
    axes = [position[v] for v in _leaf_columns(tree)]
    probs = np.ascontiguousarray(flat.reshape((q,) * n).transpose(axes)).reshape(-1)
    return PatternDistribution(tree.labels, q, probs=probs)


# -- simulation ----------------------------------------------------------------


def simulate_sites(tree: Tree, mech: TransitionMechanism, k: int, seed: SeedLike,
                   root: Optional[int] = None) -> np.ndarray:
    """``k`` independent sites as a ``(k, n)`` int8 array in sorted-label order.

    The root vertex gets a uniform state; each edge then either copies its
    parent's state or, with probability ``p_e``, switches to one of the other
    states uniformly.
    """
    mech.check_tree(tree)
    if k < 1:
        raise ValueError("k must be at least 1")
    rng = make_rng(seed)
    q = mech.q
    view = tree.rooted(root)
    cols = _leaf_columns(tree)
    p = mech.p
    out = np.empty((k, tree.n), dtype=np.int8)
    for start in range(0, k, _BLOCK):
        m = min(_BLOCK, k - start)
        state = np.empty((tree.num_vertices, m), dtype=np.int8)
        state[view.root] = rng.integers(q, size=m)
        for v in view.preorder[1:]:
            parent_state = state[view.parent[v]]
            flip = rng.random(m) < p[view.parent_edge[v]]
            if q == 2:
                state[v] = parent_state ^ flip
            else:
                shift = rng.integers(1, q, size=m).astype(np.int8)
                state[v] = np.where(flip, (parent_state + shift) % q, parent_state)
        out[start:start + m] = state[cols].T
    return out


def site_indices(sites: np.ndarray, q: int = 2) -> list[int]:
    return [pattern_index(row, q) for row in np.asarray(sites)]


def empirical_distribution(sites: np.ndarray, leaf_order: Sequence[str],
                           q: int = 2) -> PatternDistribution:
    """Observed pattern frequencies ``m_chi / k`` kept as exact counts."""
    sites = np.asarray(sites)
    if sites.ndim != 2 or sites.shape[0] == 0:
        raise ValueError("need a nonempty (k, n) site array")
    if sites.shape[1] != len(leaf_order):
        raise ValueError("site width does not match the leaf order")
    rows, counts = np.unique(sites, axis=0, return_counts=True)
    table = {pattern_index(r, q): int(c) for r, c in zip(rows, counts)}
    return PatternDistribution(tuple(leaf_order), q, counts=table, total=int(sites.shape[0]))


# -- marginals and events ------------------------------------------------------


def marginal(dist: PatternDistribution, labels: Iterable[str]) -> PatternDistribution:
    """Exact marginal of a dense distribution on a subset of leaves."""
    keep = sorted(set(labels))
    order = list(dist.leaf_order)
    missing = set(keep) - set(order)
    if missing:
        raise ValueError(f"labels not in distribution: {sorted(missing)}")
    cube = dist.to_dense().reshape((dist.q,) * dist.n)
    drop = tuple(i for i, lab in enumerate(order) if lab not in keep)
    probs = cube.sum(axis=drop).reshape(-1) if drop else cube.reshape(-1)
    return PatternDistribution(tuple(keep), dist.q, probs=np.ascontiguousarray(probs))


def agreement_mask(leaf_order: Sequence[str], q: int,
                   pairs: Iterable[tuple[str, str]]) -> np.ndarray:
    """Boolean vector over all patterns: every listed pair is in equal states."""
    n = len(leaf_order)
    pos = {lab: i for i, lab in enumerate(leaf_order)}
    grid = np.indices((q,) * n).reshape(n, -1)
    mask = np.ones(q ** n, dtype=bool)
    for a, b in pairs:
        mask &= grid[pos[a]] == grid[pos[b]]
    return mask


def event_probability(dist: PatternDistribution, mask: np.ndarray) -> float:
    return float(dist.to_dense()[mask].sum())


# -- files ---------------------------------------------------------------------


def format_sites(sites: np.ndarray) -> str:
    """One site per line, one digit per leaf in sorted-label order."""
    sites = np.asarray(sites)
    if sites.size and sites.max() > 9:
        raise ValueError("site files hold single-digit states only")
    return "".join("".join(map(str, row)) + "\n" for row in sites.tolist())


def parse_sites(text: str) -> np.ndarray:
    rows = [line.strip() for line in text.splitlines()
            if line.strip() and not line.lstrip().startswith("#")]
    if not rows:
        return np.zeros((0, 0), dtype=np.int8)
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise ValueError("site lines have different lengths")
    return np.array([[int(ch) for ch in r] for r in rows], dtype=np.int8)


def pattern_counts(sites: np.ndarray, q: int = 2) -> Counter:
    return Counter(site_indices(sites, q))


Pattern = Union[int, Sequence[int], Mapping[str, int]]
