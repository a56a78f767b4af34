"""Event-based lower bounds on the variational distance of two model trees.

The pipeline:

1. :func:`close_pairs` packs disjoint leaf pairs of the first tree that sit
   at distance 2 or 3 with pairwise edge-disjoint paths.
2. :func:`select_far_pairs` keeps those pairs that are at least ``h`` apart
   in the second tree, again with edge-disjoint paths there.
3. Along edge-disjoint paths the agreement events are independent, so the
   number ``Z`` of kept pairs whose endpoints agree is Poisson-binomial
   under either model (:func:`z_distribution`).
4. For any event ``A``, ``2 |P1(A) - P2(A)|`` is at most the variational
   distance; :func:`vardist_lower_bound` scans the events ``Z > l``.
"""

from __future__ import annotations

import json
import logging
import math
from collections import deque
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .models import TransitionMechanism, constant_c, path_agreement
from .tree import Tree, TreeError, path_between

log = logging.getLogger(__name__)

ROUTES = ("greedy", "chopping")


def default_h(n: int) -> int:
    """``max(2, floor(log2 log2 n))``."""
    if n < 4:
        return 2
    return max(2, int(math.floor(math.log2(math.log2(n)))))


def default_q_chop(n: int) -> int:
    """``ceil(log2(n)^2)``, at least 2."""
    return max(2, math.ceil(math.log2(n) ** 2))


@dataclass(frozen=True)
class PairSet:
    """Ordered disjoint leaf pairs and their paths in a designated tree."""

    pairs: tuple
    paths: tuple

    def __len__(self) -> int:
        return len(self.pairs)

    def distances(self) -> list[int]:
        return [len(p) for p in self.paths]

    @classmethod
    def build(cls, tree: Tree, pairs: Sequence[tuple[str, str]]) -> "PairSet":
        pairs = tuple((str(a), str(b)) for a, b in pairs)
        return cls(pairs, tuple(tuple(path_between(tree, a, b)) for a, b in pairs))


def pair_set_violations(tree: Tree, pairs: PairSet, distances=(2, 3)) -> list[str]:
    """Everything wrong with ``pairs`` as a close-pair packing of ``tree``."""
    problems = []
    used_leaves: set[str] = set()
    used_edges: set[int] = set()
    for (a, b), path in zip(pairs.pairs, pairs.paths):
        if a in used_leaves or b in used_leaves or a == b:
            problems.append(f"pair {a},{b} reuses a leaf")
        used_leaves.update((a, b))
        true_path = path_between(tree, a, b)
        if sorted(true_path) != sorted(path):
            problems.append(f"pair {a},{b} carries a wrong path")
        if distances is not None and len(true_path) not in distances:
            problems.append(f"pair {a},{b} at distance {len(true_path)}")
        shared = used_edges.intersection(true_path)
        if shared:
            problems.append(f"pair {a},{b} shares edges {sorted(shared)}")
        used_edges.update(true_path)
    return problems


def _farthest_leaf(tree: Tree, start: int) -> int:
    dist = {start: 0}
    queue = deque([start])
    while queue:
        v = queue.popleft()
        for w, _ in tree.neighbors(v):
            if w not in dist:
                dist[w] = dist[v] + 1
                queue.append(w)
    best = max(dist[v] for v in tree.leaf_labels)
    return tree.vertex(min(tree.label(v) for v in tree.leaf_labels if dist[v] == best))


def close_pairs(tree: Tree) -> PairSet:
    """At least ``ceil(n/4)`` disjoint leaf pairs at distance 2 or 3.

    The tree is hung from one end of a longest path and leaves are matched
    bottom-up, deepest cherries first. Each vertex passes up at most one
    unmatched leaf, and only one that is its own child, so every match
    closes a path of length 2 or 3 that no other match touches. Matching as
    soon as two candidates meet is never worse than postponing, which makes
    the packing maximum; in particular it meets the ``n/4`` guarantee.
    """
    if tree.n < 4:
        raise TreeError("close pairs need at least 4 leaves")
    if not tree.is_binary:
        raise TreeError("close pairs need a binary tree")
    first = tree.vertex(tree.labels[0])
    end = _farthest_leaf(tree, first)
    view = tree.rooted(end)
    avail: dict[int, tuple[int, int]] = {}
    found: list[tuple[str, str]] = []
    for v in view.postorder:
        if v == end:
            child = view.children[v][0]
            cand = avail.pop(child, None)
            if cand is not None and cand[1] + 1 in (2, 3):
                found.append((tree.label(cand[0]), tree.label(v)))
            break
        if tree.is_leaf(v):
            avail[v] = (v, 0)
            continue
        cands = []
        for c in view.children[v]:
            got = avail.pop(c, None)
            if got is not None:
                cands.append((got[0], got[1] + 1))
        if len(cands) == 2 and cands[0][1] + cands[1][1] <= 3:
            found.append((tree.label(cands[0][0]), tree.label(cands[1][0])))
        elif cands:
            best = min(cands, key=lambda c: c[1])
            if best[1] <= 1:
                avail[v] = best
    pairs = sorted(tuple(sorted(p)) for p in found)
    result = PairSet.build(tree, pairs)
    need = math.ceil(tree.n / 4)
    if len(result) < need:
        log.warning("close_pairs found %d < ceil(n/4) = %d pairs for %r",
                    len(result), need, tree)
        if len(result) < tree.n // 4:
            raise AssertionError(f"close_pairs found {len(result)} < floor(n/4) pairs")
    return result


@dataclass(frozen=True)
class ChopResult:
    q_chop: int
    cut_edges: tuple
    components: tuple      # per component: sorted tuple of vertex ids
    leaf_sets: tuple       # per component: sorted tuple of leaf labels
    degenerate: Optional[int]

    def nondegenerate(self) -> list[int]:
        return [i for i in range(len(self.components)) if i != self.degenerate]

    def violations(self, tree: Tree) -> list[str]:
        q = self.q_chop
        problems = []
        seen = [v for comp in self.components for v in comp]
        if sorted(seen) != list(range(tree.num_vertices)):
            problems.append("components do not partition the vertices")
        small = [i for i, leaves in enumerate(self.leaf_sets) if len(leaves) < q]
        if len(small) > 1:
            problems.append(f"{len(small)} components below q leaves")
        if small and small != [self.degenerate]:
            problems.append("degenerate flag does not match the small component")
        for i, leaves in enumerate(self.leaf_sets):
            if len(leaves) > 2 * q - 2:
                problems.append(f"component {i} has {len(leaves)} > 2q-2 leaves")
        if len(self.cut_edges) > tree.n // q:
            problems.append("more cuts than floor(n/q)")
        return problems


def chop(tree: Tree, q_chop: int) -> ChopResult:
    """Delete edges so every component but one holds q..2q-2 leaves.

    Hang the tree from its first leaf and count leaves bottom-up; the edge
    above a vertex is cut as soon as its count reaches ``q_chop``. Each
    child then carries at most ``q_chop - 1`` leaves, so a binary vertex
    collects at most ``2 q_chop - 2``. Only the root's component can end
    up short; it is flagged degenerate.
    """
    if q_chop < 2:
        raise ValueError("q_chop must be at least 2")
    if not tree.is_binary:
        raise TreeError("chopping needs a binary tree")
    view = tree.rooted()
    count = [0] * tree.num_vertices
    cut: list[int] = []
    for v in view.postorder:
        if tree.is_leaf(v):
            count[v] += 1
        parent = view.parent[v]
        if parent < 0:
            continue
        if count[v] >= q_chop:
            cut.append(view.parent_edge[v])
        else:
            count[parent] += count[v]
    removed = set(cut)
    comp_of = [-1] * tree.num_vertices
    components = []
    for start in view.preorder:
        if comp_of[start] >= 0:
            continue
        idx = len(components)
        comp_of[start] = idx
        members = [start]
        queue = deque([start])
        while queue:
            v = queue.popleft()
            for w, e in tree.neighbors(v):
                if e not in removed and comp_of[w] < 0:
                    comp_of[w] = idx
                    members.append(w)
                    queue.append(w)
        components.append(tuple(sorted(members)))
    leaf_sets = tuple(
        tuple(sorted(tree.label(v) for v in comp if tree.is_leaf(v))) for comp in components
    )
    small = [i for i, leaves in enumerate(leaf_sets) if len(leaves) < q_chop]
    return ChopResult(q_chop, tuple(sorted(cut)), tuple(components), leaf_sets,
                      small[0] if small else None)


def _pair_list(pairs) -> list[tuple[str, str]]:
    return list(pairs.pairs) if isinstance(pairs, PairSet) else [tuple(p) for p in pairs]


def select_far_pairs(pairs, tree2: Tree, h: int, route: str = "greedy",
                     q_chop: Optional[int] = None) -> list[int]:
    """Indices of pairs at least ``h`` apart in ``tree2`` with disjoint paths.

    ``greedy`` seats pairs shortest-path first whenever none of their edges
    is taken. ``chopping`` chops ``tree2`` and takes at most one far pair
    inside each full component; paths inside different components cannot
    share edges.
    """
    plist = _pair_list(pairs)
    if h < 1:
        raise ValueError("h must be at least 1")
    labels = set(tree2.labels)
    for a, b in plist:
        if a not in labels or b not in labels:
            raise TreeError(f"pair {a},{b} has labels missing from the second tree")
    paths = [path_between(tree2, a, b) for a, b in plist]
    far = [i for i, p in enumerate(paths) if len(p) >= h]
    if route == "greedy":
        chosen = []
        claimed: set[int] = set()
        for i in sorted(far, key=lambda i: (len(paths[i]), i)):
            if claimed.isdisjoint(paths[i]):
                claimed.update(paths[i])
                chosen.append(i)
        return sorted(chosen)
    if route == "chopping":
        result = chop(tree2, q_chop or default_q_chop(tree2.n))
        chosen = []
        for comp in result.nondegenerate():
            members = set(result.leaf_sets[comp])
            inside = [i for i in far if plist[i][0] in members and plist[i][1] in members]
            if inside:
                chosen.append(min(inside, key=lambda i: (len(paths[i]), i)))
        return sorted(chosen)
    raise ValueError(f"unknown route {route!r}; expected one of {ROUTES}")


def pair_agreement_probs(tree: Tree, mech: TransitionMechanism, pairs,
                         index: Optional[Sequence[int]] = None) -> np.ndarray:
    """``P[state(a_i) = state(b_i)]`` on ``tree`` for each selected pair."""
    mech.check_tree(tree)
    plist = _pair_list(pairs)
    if index is None:
        index = range(len(plist))
    out = []
    for i in index:
        if not 0 <= i < len(plist):
            raise IndexError(f"pair index {i} out of range")
        a, b = plist[i]
        out.append(path_agreement(mech, path_between(tree, a, b)))
    return np.asarray(out, dtype=float)


def z_distribution(probs: Sequence[float]) -> np.ndarray:
    """Exact pmf on ``0..m`` of a sum of independent Bernoulli(probs)."""
    probs = np.asarray(probs, dtype=float)
    if np.any((probs < 0) | (probs > 1)) or not np.all(np.isfinite(probs)):
        raise ValueError("probabilities must lie in [0, 1]")
    pmf = np.zeros(probs.size + 1)
    pmf[0] = 1.0
    for j, p in enumerate(probs):
        pmf[1:j + 2] = pmf[1:j + 2] * (1.0 - p) + pmf[0:j + 1] * p
        pmf[0] *= 1.0 - p
    return pmf


def tail_probabilities(pmf: np.ndarray) -> np.ndarray:
    """``P[Z > l]`` for ``l = 0..m``."""
    rev = np.cumsum(pmf[::-1])[::-1]
    return np.append(rev[1:], 0.0)


def agreement_floor(g: float, family: str = "cfn", q: int = 2) -> float:
    """Smallest agreement probability of a 3-edge path with every ``p_e <= g``.

    For CFN this is ``1 - 3g + 6g^2 - 4g^3``.
    """
    lam = 1.0 - g * q / (q - 1)
    return 1.0 - (1.0 - 1.0 / q) * (1.0 - lam ** 3)


def agreement_ceiling(f: float, h: int, family: str = "cfn", q: int = 2) -> float:
    """Largest agreement probability of an ``h``-edge path with every ``p_e >= f``.

    For CFN this is ``(1 + (1 - 2f)^h) / 2``.
    """
    lam = 1.0 - f * q / (q - 1)
    return 1.0 - (1.0 - 1.0 / q) * (1.0 - lam ** h)


@dataclass
class Certificate:
    n: int
    h: int
    route: str
    pairs: list
    index: list
    probs1: list
    probs2: list
    pmf1: list
    pmf2: list
    threshold: int
    gap: float
    bound: float
    g: Optional[float] = None
    paper_threshold: Optional[float] = None
    paper_gap: Optional[float] = None
    paper_bound: Optional[float] = None
    extra: dict = field(default_factory=dict)

    @property
    def size(self) -> int:
        return len(self.index)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


def _gap_above(pmf1: np.ndarray, pmf2: np.ndarray, level: float) -> float:
    support = np.arange(pmf1.size)
    above = support > level
    return abs(float(pmf1[above].sum() - pmf2[above].sum()))


def vardist_lower_bound(t1: Tree, m1: TransitionMechanism, t2: Tree, m2: TransitionMechanism,
                        h: Optional[int] = None, g: Optional[float] = None,
                        route: str = "greedy", q_chop: Optional[int] = None,
                        pairs: Optional[PairSet] = None) -> Certificate:
    """Certified lower bound on vardist((t1, m1), (t2, m2)).

    Returns ``2 max_l |P1[Z > l] - P2[Z > l]|`` together with everything
    needed to recheck it. When ``g`` is given the gap at the fixed level
    ``|I| (floor(g) + c) / 2`` is reported too.
    """
    if t1.labels != t2.labels:
        raise TreeError("trees are on different label sets")
    if (m1.family, m1.q) != (m2.family, m2.q):
        raise ValueError("both mechanisms must share the same family and state count")
    m1.check_tree(t1)
    m2.check_tree(t2)
    if t1.n < 4:
        raise TreeError("certificates need n >= 4")
    if h is None:
        h = default_h(t1.n)
    if pairs is None:
        pairs = close_pairs(t1)
    index = select_far_pairs(pairs, t2, h, route, q_chop)
    probs1 = pair_agreement_probs(t1, m1, pairs, index)
    probs2 = pair_agreement_probs(t2, m2, pairs, index)
    pmf1 = z_distribution(probs1)
    pmf2 = z_distribution(probs2)
    gaps = np.abs(tail_probabilities(pmf1) - tail_probabilities(pmf2))
    threshold = int(np.argmax(gaps))
    gap = float(gaps[threshold])
    cert = Certificate(
        n=t1.n, h=int(h), route=route,
        pairs=[list(p) for p in pairs.pairs], index=list(index),
        probs1=probs1.tolist(), probs2=probs2.tolist(),
        pmf1=pmf1.tolist(), pmf2=pmf2.tolist(),
        threshold=threshold, gap=gap, bound=min(2.0, 2.0 * gap),
    )
    if g is not None:
        level = 0.5 * (agreement_floor(g, m1.family, m1.q) + constant_c(m1.family, m1.q)) * len(index)
        cert.g = float(g)
        cert.paper_threshold = level
        cert.paper_gap = _gap_above(pmf1, pmf2, level)
        cert.paper_bound = min(2.0, 2.0 * cert.paper_gap)
    return cert


def azuma_bound(t: float, k: int, lam: float) -> float:
    """``2 exp(-lam^2 / (2 t^2 k))``: tail bound for a ``t``-Lipschitz function
    of ``k`` independent variables deviating from its mean by ``lam``.
    """
    if t <= 0 or k < 1 or lam < 0:
        raise ValueError("need t > 0, k >= 1 and lam >= 0")
    return 2.0 * math.exp(-lam * lam / (2.0 * t * t * k))
