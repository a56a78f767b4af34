"""Unrooted leaf-labelled trees, Newick I/O and split-based identity.

Trees are immutable once built. Vertices are integer ids ``0..V-1`` and
every edge carries a stable integer id (its position in ``Tree.edges``).
Branch annotations read from Newick are kept raw, one optional float per
edge id; what they mean (transition probability or length) is decided by
:mod:`treevardist.models`.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Optional, Sequence

Compose = Callable[[Optional[float], Optional[float]], Optional[float]]


class TreeError(ValueError):
    """Raised for structurally invalid trees or bad arguments."""


class NewickError(TreeError):
    """Newick syntax error; ``position`` is the 0-based offset in the text."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at position {position})")
        self.position = position


def add_annotations(a: Optional[float], b: Optional[float]) -> Optional[float]:
    """Default composition rule: sum, with a missing value acting as zero."""
    if a is None:
        return b
    if b is None:
        return a
    return a + b


@dataclass(frozen=True)
class Split:
    """Bipartition of the leaf labels induced by removing one edge.

    ``first`` is the side holding the smallest label.
    """

    first: frozenset
    second: frozenset

    @classmethod
    def from_sides(cls, side: Iterable[str], labels: Iterable[str]) -> "Split":
        side = frozenset(side)
        rest = frozenset(labels) - side
        if not side or not rest:
            raise TreeError("both sides of a split must be nonempty")
        if min(side) < min(rest):
            return cls(side, rest)
        return cls(rest, side)

    @property
    def is_trivial(self) -> bool:
        return len(self.first) == 1 or len(self.second) == 1

    def __str__(self) -> str:
        return "".join(sorted(self.first)) + "|" + "".join(sorted(self.second))


class Tree:
    """An unrooted phylogenetic X-tree.

    Args:
        edges: ``(u, v)`` vertex pairs; the edge id is the list position.
        leaf_labels: mapping from each degree-1 vertex to its label.
        annotations: optional raw branch value per edge id.

    Vertex ids must be ``0..V-1``. Degree-2 vertices are allowed (subtrees
    produced by restriction or chopping can have them); ``is_binary`` tells
    whether every vertex has degree 1 or 3.
    """

    def __init__(
        self,
        edges: Sequence[tuple[int, int]],
        leaf_labels: Mapping[int, str],
        annotations: Optional[Sequence[Optional[float]]] = None,
    ):
        edges = tuple((int(u), int(v)) for u, v in edges)
        if not edges:
            raise TreeError("a tree needs at least one edge")
        num_vertices = len(edges) + 1
        adjacency: list[list[tuple[int, int]]] = [[] for _ in range(num_vertices)]
        for eid, (u, v) in enumerate(edges):
            if u == v or not (0 <= u < num_vertices and 0 <= v < num_vertices):
                raise TreeError(f"edge {eid} = {(u, v)} is not a valid vertex pair")
            adjacency[u].append((v, eid))
            adjacency[v].append((u, eid))

        seen = {0}
        queue = deque([0])
        while queue:
            x = queue.popleft()
            for y, _ in adjacency[x]:
                if y not in seen:
                    seen.add(y)
                    queue.append(y)
        if len(seen) != num_vertices:
            raise TreeError("edges do not form a connected acyclic graph")

        labels = {int(v): str(lab) for v, lab in leaf_labels.items()}
        leaves = {v for v in range(num_vertices) if len(adjacency[v]) == 1}
        if set(labels) != leaves:
            raise TreeError("leaf labels must cover exactly the degree-1 vertices")
        if len(set(labels.values())) != len(labels):
            raise TreeError("duplicate leaf label")

        if annotations is None:
            annotations = (None,) * len(edges)
        annotations = tuple(None if a is None else float(a) for a in annotations)
        if len(annotations) != len(edges):
            raise TreeError("one annotation per edge is required")

        self._edges = edges
        self._adjacency = tuple(tuple(nbrs) for nbrs in adjacency)
        self._labels = labels
        self._vertex_of = {lab: v for v, lab in labels.items()}
        self._annotations = annotations
        self._leaf_order = tuple(sorted(self._vertex_of))
        self._rooted_cache: dict[int, "RootedView"] = {}
        self._split_masks: Optional[frozenset] = None

    # -- basic accessors -------------------------------------------------

    @property
    def edges(self) -> tuple[tuple[int, int], ...]:
        return self._edges

    @property
    def num_edges(self) -> int:
        return len(self._edges)

    @property
    def num_vertices(self) -> int:
        return len(self._adjacency)

    @property
    def n(self) -> int:
        """Number of leaves."""
        return len(self._labels)

    @property
    def labels(self) -> tuple[str, ...]:
        """Leaf labels in sorted order (the pattern order used library-wide)."""
        return self._leaf_order

    @property
    def annotations(self) -> tuple[Optional[float], ...]:
        return self._annotations

    @property
    def leaf_labels(self) -> dict[int, str]:
        return dict(self._labels)

    def neighbors(self, v: int) -> tuple[tuple[int, int], ...]:
        """``(neighbor, edge_id)`` pairs of vertex ``v``."""
        return self._adjacency[v]

    def degree(self, v: int) -> int:
        return len(self._adjacency[v])

    def is_leaf(self, v: int) -> bool:
        return v in self._labels

    def label(self, v: int) -> str:
        return self._labels[v]

    def vertex(self, label: str) -> int:
        try:
            return self._vertex_of[label]
        except KeyError:
            raise TreeError(f"unknown leaf label {label!r}") from None

    @property
    def is_binary(self) -> bool:
        return all(len(nb) in (1, 3) for nb in self._adjacency)

    def internal_vertices(self) -> list[int]:
        return [v for v in range(self.num_vertices) if v not in self._labels]

    def with_annotations(self, annotations: Sequence[Optional[float]]) -> "Tree":
        return Tree(self._edges, self._labels, annotations)

    def __repr__(self) -> str:
        return f"Tree({write_newick(self, annotations=False)!r})"

    # -- rooted views and paths ------------------------------------------

    def rooted(self, root: Optional[int] = None) -> "RootedView":
        """Parent pointers and traversal orders for the tree hung at ``root``.

        The default root is the leaf with the smallest label.
        """
        if root is None:
            root = self._vertex_of[self._leaf_order[0]]
        view = self._rooted_cache.get(root)
        if view is None:
            view = RootedView(self, root)
            self._rooted_cache[root] = view
        return view

    def split_masks(self) -> frozenset:
        """Splits as bitmasks over ``labels``, side without the first label."""
        if self._split_masks is None:
            view = self.rooted()
            index = {lab: i for i, lab in enumerate(self._leaf_order)}
            below = [0] * self.num_vertices
            for v in view.postorder:
                if v in self._labels:
                    below[v] |= 1 << index[self._labels[v]]
                parent = view.parent[v]
                if parent >= 0:
                    below[parent] |= below[v]
            # root is the first leaf, so every subtree mask avoids bit 0
            full = (1 << self.n) - 1
            masks = {below[v] for v in view.postorder if view.parent[v] >= 0}
            self._split_masks = frozenset(m for m in masks if 0 < m < full)
        return self._split_masks

    def splits(self, trivial: bool = True) -> frozenset:
        labels = self._leaf_order
        out = set()
        for mask in self.split_masks():
            side = [labels[i] for i in range(self.n) if mask >> i & 1]
            split = Split.from_sides(side, labels)
            if trivial or not split.is_trivial:
                out.add(split)
        return frozenset(out)


class RootedView:
    """The tree hung from one vertex.

    ``parent[v]`` and ``parent_edge[v]`` are -1 at the root. ``postorder``
    lists children before parents; ``children[v]`` is sorted by the smallest
    leaf label below each child.
    """

    def __init__(self, tree: Tree, root: int):
        size = tree.num_vertices
        if not 0 <= root < size:
            raise TreeError(f"no vertex {root}")
        parent = [-1] * size
        parent_edge = [-1] * size
        depth = [0] * size
        order = [root]
        visited = [False] * size
        visited[root] = True
        i = 0
        while i < len(order):
            v = order[i]
            i += 1
            for w, eid in tree.neighbors(v):
                if not visited[w]:
                    visited[w] = True
                    parent[w] = v
                    parent_edge[w] = eid
                    depth[w] = depth[v] + 1
                    order.append(w)
        postorder = order[::-1]
        min_label: list[Optional[str]] = [None] * size
        children: list[list[int]] = [[] for _ in range(size)]
        for v in postorder:
            if tree.is_leaf(v):
                lab = tree.label(v)
                if min_label[v] is None or lab < min_label[v]:
                    min_label[v] = lab
            p = parent[v]
            if p >= 0:
                children[p].append(v)
                if min_label[p] is None or (min_label[v] is not None and min_label[v] < min_label[p]):
                    min_label[p] = min_label[v]
        for kids in children:
            kids.sort(key=lambda c: min_label[c] or "")
        self.tree = tree
        self.root = root
        self.parent = parent
        self.parent_edge = parent_edge
        self.depth = depth
        self.preorder = order
        self.postorder = postorder
        self.children = [tuple(k) for k in children]
        self.min_label = min_label

    def path_edges(self, u: int, v: int) -> list[int]:
        """Edge ids on the path from vertex ``u`` to vertex ``v``, in order."""
        head: list[int] = []
        tail: list[int] = []
        depth, parent, pedge = self.depth, self.parent, self.parent_edge
        while depth[u] > depth[v]:
            head.append(pedge[u])
            u = parent[u]
        while depth[v] > depth[u]:
            tail.append(pedge[v])
            v = parent[v]
        while u != v:
            head.append(pedge[u])
            tail.append(pedge[v])
            u, v = parent[u], parent[v]
        head.extend(reversed(tail))
        return head


# -- paths, distances, cherries --------------------------------------------


def path_between(tree: Tree, u: str, v: str) -> list[int]:
    """Edge ids of the unique path between leaves ``u`` and ``v``."""
    if u == v:
        raise TreeError("path endpoints must differ")
    return tree.rooted().path_edges(tree.vertex(u), tree.vertex(v))


def leaf_distance(tree: Tree, u: str, v: str) -> int:
    return len(path_between(tree, u, v))


def cherries(tree: Tree) -> list[tuple[str, str]]:
    """All pairs of leaves adjacent to a common vertex, sorted."""
    if tree.n < 4:
        raise TreeError("cherries need at least 4 leaves")
    if not tree.is_binary:
        raise TreeError("cherries are defined here for binary trees only")
    out = []
    for v in tree.internal_vertices():
        leaves = sorted(tree.label(w) for w, _ in tree.neighbors(v) if tree.is_leaf(w))
        for i in range(len(leaves)):
            for j in range(i + 1, len(leaves)):
                out.append((leaves[i], leaves[j]))
    return sorted(out)


def tree_identity(t1: Tree, t2: Tree) -> bool:
    """True iff the two X-trees have the same split set."""
    if t1.labels != t2.labels:
        raise TreeError("trees are on different label sets")
    return t1.split_masks() == t2.split_masks()


def count_binary_trees(n: int) -> int:
    """Number of binary phylogenetic X-trees with ``|X| = n``: (2n-5)!!."""
    if n < 3:
        raise TreeError("counting needs n >= 3")
    return math.prod(range(1, 2 * n - 4, 2))


# -- restriction -------------------------------------------------------------


def restrict(
    tree: Tree,
    values: Sequence,
    subset: Iterable[str],
    compose: Compose = add_annotations,
) -> tuple[Tree, list]:
    """Minimal subtree spanning ``subset`` with degree-2 vertices suppressed.

    Each suppressed path becomes one edge whose value folds the path's
    values with ``compose``. Returns the new tree and its per-edge values.
    """
    subset = set(subset)
    if len(subset) < 2:
        raise TreeError("restriction needs at least 2 labels")
    unknown = subset - set(tree.labels)
    if unknown:
        raise TreeError(f"labels not in tree: {sorted(unknown)}")
    values = list(values)
    if len(values) != tree.num_edges:
        raise TreeError("one value per edge is required")
    if subset == set(tree.labels) and all(tree.degree(v) != 2 for v in range(tree.num_vertices)):
        return tree, values

    keep_vertex = [True] * tree.num_vertices
    degree = [tree.degree(v) for v in range(tree.num_vertices)]
    stack = [
        v for v in range(tree.num_vertices)
        if degree[v] == 1 and not (tree.is_leaf(v) and tree.label(v) in subset)
    ]
    while stack:
        v = stack.pop()
        if not keep_vertex[v]:
            continue
        keep_vertex[v] = False
        for w, _ in tree.neighbors(v):
            if keep_vertex[w]:
                degree[w] -= 1
                if degree[w] == 1 and not (tree.is_leaf(w) and tree.label(w) in subset):
                    stack.append(w)

    def kept_neighbors(v):
        return [(w, e) for w, e in tree.neighbors(v) if keep_vertex[w]]

    anchors = [v for v in range(tree.num_vertices) if keep_vertex[v] and degree[v] != 2]
    # leaves first in label order, then internal anchors in id order
    anchors.sort(key=lambda v: (0, tree.label(v), 0) if tree.is_leaf(v) else (1, "", v))
    new_id = {v: i for i, v in enumerate(anchors)}
    new_edges: list[tuple[int, int]] = []
    new_values: list = []
    done_edges: set[int] = set()
    for a in anchors:
        for w, e in kept_neighbors(a):
            if e in done_edges:
                continue
            value = values[e]
            done_edges.add(e)
            prev, cur = a, w
            while cur not in new_id:
                (nxt, e2), = [(x, y) for x, y in kept_neighbors(cur) if x != prev]
                value = compose(value, values[e2])
                done_edges.add(e2)
                prev, cur = cur, nxt
            new_edges.append((new_id[a], new_id[cur]))
            new_values.append(value)
    labels = {new_id[v]: tree.label(v) for v in anchors if tree.is_leaf(v)}
    annotations = new_values if all(x is None or isinstance(x, (int, float)) for x in new_values) else None
    return Tree(new_edges, labels, annotations), new_values


# -- Newick ------------------------------------------------------------------

_SPECIAL = set("()[]':;, \t\r\n")


class _Node:
    __slots__ = ("children", "label", "length", "start")

    def __init__(self, start: int):
        self.children: list[_Node] = []
        self.label: Optional[str] = None
        self.length: Optional[float] = None
        self.start = start


class _NewickReader:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def skip(self) -> None:
        text = self.text
        while self.pos < len(text):
            ch = text[self.pos]
            if ch.isspace():
                self.pos += 1
            elif ch == "[":
                end = text.find("]", self.pos)
                if end < 0:
                    raise NewickError("unterminated comment", self.pos)
                self.pos = end + 1
            else:
                break

    def peek(self) -> str:
        self.skip()
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def label(self) -> Optional[str]:
        self.skip()
        text = self.text
        if self.pos < len(text) and text[self.pos] == "'":
            start = self.pos
            self.pos += 1
            chars = []
            while True:
                if self.pos >= len(text):
                    raise NewickError("unterminated quoted label", start)
                ch = text[self.pos]
                if ch == "'":
                    if text[self.pos + 1:self.pos + 2] == "'":
                        chars.append("'")
                        self.pos += 2
                        continue
                    self.pos += 1
                    return "".join(chars)
                chars.append(ch)
                self.pos += 1
        start = self.pos
        while self.pos < len(text) and text[self.pos] not in _SPECIAL:
            self.pos += 1
        return text[start:self.pos] or None

    def length(self) -> Optional[float]:
        if self.peek() != ":":
            return None
        self.pos += 1
        self.skip()
        start = self.pos
        while self.pos < len(self.text) and self.text[self.pos] not in _SPECIAL:
            self.pos += 1
        token = self.text[start:self.pos]
        try:
            value = float(token)
        except ValueError:
            raise NewickError(f"bad branch value {token!r}", start) from None
        if not math.isfinite(value):
            raise NewickError(f"bad branch value {token!r}", start)
        return value

    def read(self) -> _Node:
        if self.peek() != "(":
            raise NewickError("expected '('", self.pos)
        self.pos += 1
        root = _Node(self.pos - 1)
        stack = [root]
        expect_child = True
        while True:
            ch = self.peek()
            if expect_child:
                if ch == "(":
                    self.pos += 1
                    node = _Node(self.pos - 1)
                    stack[-1].children.append(node)
                    stack.append(node)
                    continue
                if ch in ("", ",", ")", ";"):
                    raise NewickError("leaf without a label", self.pos)
                leaf = _Node(self.pos)
                leaf.label = self.label()
                if leaf.label is None:
                    raise NewickError(f"unexpected character {ch!r}", self.pos)
                leaf.length = self.length()
                stack[-1].children.append(leaf)
                expect_child = False
            elif ch == ",":
                self.pos += 1
                expect_child = True
            elif ch == ")":
                self.pos += 1
                node = stack.pop()
                node.label = self.label()
                node.length = self.length()
                if not stack:
                    if self.peek() != ";":
                        raise NewickError("expected ';'", self.pos)
                    self.pos += 1
                    if self.peek():
                        raise NewickError("trailing text after ';'", self.pos)
                    return node
            elif ch == ";":
                raise NewickError("unbalanced '('", self.pos)
            else:
                raise NewickError(
                    f"unexpected character {ch!r}" if ch else "unexpected end of input", self.pos
                )


def parse_newick(text: str, compose: Compose = add_annotations) -> Tree:
    """Parse one Newick tree into an unrooted :class:`Tree`.

    A root of degree 2 is suppressed and its two branch values are merged
    with ``compose``. Internal node labels are ignored.
    """
    root = _NewickReader(text).read()

    # drop unlabelled single-child roots: "((a,b));"
    while len(root.children) == 1 and root.label is None:
        root = root.children[0]

    edges: list[tuple[int, int]] = []
    values: list[Optional[float]] = []
    labels: dict[int, str] = {}
    seen_labels: dict[str, int] = {}
    ids: dict[int, int] = {}

    def vid(node: _Node) -> int:
        key = id(node)
        if key not in ids:
            ids[key] = len(ids)
        return ids[key]

    suppress = len(root.children) == 2
    stack: list[tuple[_Node, Optional[_Node]]] = [(root, None)]
    order: list[tuple[_Node, Optional[_Node]]] = []
    while stack:
        node, parent = stack.pop()
        order.append((node, parent))
        for child in reversed(node.children):
            stack.append((child, node))

    for node, parent in order:
        if not node.children:
            if node.label is None:
                raise NewickError("leaf without a label", node.start)
            if node.label in seen_labels:
                raise NewickError(f"duplicate leaf label {node.label!r}", node.start)
            seen_labels[node.label] = 1
    if len(seen_labels) < 2:
        raise NewickError("a tree needs at least 2 leaves", 0)

    if suppress:
        left, right = root.children
        for node, parent in order:
            if node is root:
                continue
            if parent is root:
                continue
            edges.append((vid(parent), vid(node)))
            values.append(node.length)
        edges.append((vid(left), vid(right)))
        values.append(compose(left.length, right.length))
    else:
        for node, parent in order:
            if parent is not None:
                edges.append((vid(parent), vid(node)))
                values.append(node.length)
    for node, _ in order:
        if not node.children:
            labels[vid(node)] = node.label
    # a labelled root of degree 1 counts as a leaf
    if not suppress and len(root.children) == 1:
        if root.label is None:
            raise NewickError("leaf without a label", root.start)
        labels[vid(root)] = root.label
    return Tree(edges, labels, values)


def _format_label(label: str) -> str:
    if any(ch in _SPECIAL for ch in label):
        return "'" + label.replace("'", "''") + "'"
    return label


def _format_value(value: Optional[float]) -> str:
    if value is None:
        return ""
    return ":" + repr(float(value))


def write_newick(tree: Tree, annotations: bool = True) -> str:
    """Canonical Newick for ``tree``.

    The output is rooted on an edge next to the smallest-labelled leaf and
    children are ordered by their smallest leaf label, so equal trees give
    byte-equal strings. The root edge's value is written on the first child.
    """
    values = tree.annotations if annotations else (None,) * tree.num_edges
    first = tree.vertex(tree.labels[0])
    if tree.n == 2 and tree.num_edges == 1:
        return (
            f"({_format_label(tree.labels[0])}{_format_value(values[0])},"
            f"{_format_label(tree.labels[1])});"
        )
    hub, hub_edge = tree.neighbors(first)[0]
    view = tree.rooted(first)
    # pick the hub's child whose subtree has the largest smallest label
    kids = view.children[hub]
    if not kids:
        raise TreeError("cannot write a tree whose first leaf has no sibling structure")
    far = kids[-1]
    root_edge = view.parent_edge[far]
    side_view = tree.rooted(far)

    def render(start: int, view_: RootedView) -> str:
        # iterative post-order rendering of the subtree below ``start``
        out: dict[int, str] = {}
        stack = [(start, False)]
        while stack:
            v, expanded = stack.pop()
            kids_ = view_.children[v]
            if not kids_:
                out[v] = _format_label(tree.label(v))
                continue
            if not expanded:
                stack.append((v, True))
                for c in reversed(kids_):
                    stack.append((c, False))
                continue
            parts = [out.pop(c) + _format_value(values[view_.parent_edge[c]]) for c in kids_]
            text = "(" + ",".join(parts) + ")"
            if tree.is_leaf(v):
                raise TreeError("labelled vertex with children")
            out[v] = text
        return out[start]

    near_text = render(hub, side_view)
    far_view = tree.rooted(hub)
    far_text = render(far, far_view)
    return f"({near_text}{_format_value(values[root_edge])},{far_text});"
