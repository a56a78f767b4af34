"""Transition mechanisms on tree edges.

Two families are supported:

``cfn``
    two states, each edge flips the state with probability ``p_e < 1/2``.
``symmetric``
    ``q`` states; an edge changes state with probability ``p_e`` and picks
    one of the other ``q - 1`` states uniformly. With ``q = 2`` this is the
    CFN channel.

Every edge has a second eigenvalue ``lam_e = 1 - p_e * q / (q - 1)``; the
probability that two vertices disagree depends only on the product of the
eigenvalues along their path. Lengths are ``t = -ln(1 - 2p)/2`` for CFN and
``t = -ln(lam)`` for the symmetric family, so that agreement along a path of
total length ``x`` is ``H(x)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .tree import Tree, TreeError, restrict

FAMILIES = ("cfn", "symmetric")


class ModelError(ValueError):
    pass


def _check_family(family: str, q: int) -> None:
    if family not in FAMILIES:
        raise ModelError(f"unknown family {family!r}; expected one of {FAMILIES}")
    if family == "cfn" and q != 2:
        raise ModelError("the cfn family has exactly 2 states")
    if q < 2:
        raise ModelError("need at least 2 states")


def max_p(q: int) -> float:
    """Supremum of legal transition probabilities for ``q`` states."""
    return (q - 1) / q


@dataclass(frozen=True)
class TransitionMechanism:
    """Per-edge parameters for one tree.

    ``values[e]`` is ``p_e`` when ``parameterization == "p"`` and ``t(e)``
    when it is ``"t"``.
    """

    values: tuple
    family: str = "cfn"
    q: int = 2
    parameterization: str = "p"
    _p: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        _check_family(self.family, self.q)
        if self.parameterization not in ("p", "t"):
            raise ModelError("parameterization must be 'p' or 't'")
        vals = tuple(float(v) for v in self.values)
        object.__setattr__(self, "values", vals)
        arr = np.asarray(vals, dtype=float)
        if not np.all(np.isfinite(arr)):
            raise ModelError("non-finite edge parameter")
        if self.parameterization == "p":
            bad = np.flatnonzero((arr < 0) | (arr >= max_p(self.q)))
            if bad.size:
                raise ModelError(
                    f"edge {int(bad[0])}: p = {arr[bad[0]]} outside [0, {max_p(self.q)})"
                )
            p = arr
        else:
            bad = np.flatnonzero(arr < 0)
            if bad.size:
                raise ModelError(f"edge {int(bad[0])}: negative length {arr[bad[0]]}")
            p = _t_to_p_array(arr, self.family, self.q)
        p.setflags(write=False)
        object.__setattr__(self, "_p", p)

    # -- constructors ---------------------------------------------------------

    @classmethod
    def constant(cls, tree: Tree, value: float, family: str = "cfn", q: int = 2,
                 parameterization: str = "p") -> "TransitionMechanism":
        return cls((value,) * tree.num_edges, family, q, parameterization)

    @classmethod
    def from_annotations(cls, tree: Tree, family: str = "cfn", q: int = 2,
                         parameterization: str = "p") -> "TransitionMechanism":
        missing = [e for e, v in enumerate(tree.annotations) if v is None]
        if missing:
            raise ModelError(f"edges without a branch value: {missing}")
        return cls(tree.annotations, family, q, parameterization)

    @classmethod
    def uniform_random(cls, tree: Tree, low: float, high: float, rng: np.random.Generator,
                       family: str = "cfn", q: int = 2) -> "TransitionMechanism":
        """Edge probabilities drawn independently from ``U[low, high]``."""
        return cls(tuple(rng.uniform(low, high, size=tree.num_edges)), family, q, "p")

    # -- views ----------------------------------------------------------------

    @property
    def num_edges(self) -> int:
        return len(self.values)

    @property
    def p(self) -> np.ndarray:
        """Edge transition probabilities (read-only array)."""
        return self._p

    @property
    def lam(self) -> np.ndarray:
        """Second eigenvalue of each edge's transition matrix."""
        return 1.0 - self._p * self.q / (self.q - 1)

    @property
    def t(self) -> np.ndarray:
        if self.parameterization == "t":
            return np.asarray(self.values, dtype=float)
        return _p_to_t_array(self._p, self.family, self.q)

    def matrix(self, edge: int) -> np.ndarray:
        q, p = self.q, self._p[edge]
        m = np.full((q, q), p / (q - 1))
        np.fill_diagonal(m, 1.0 - p)
        return m

    def matrices(self) -> np.ndarray:
        """Stacked ``(num_edges, q, q)`` transition matrices."""
        q = self.q
        off = self._p / (q - 1)
        m = np.broadcast_to(off[:, None, None], (self.num_edges, q, q)).copy()
        idx = np.arange(q)
        m[:, idx, idx] = (1.0 - self._p)[:, None]
        return m

    def check_tree(self, tree: Tree) -> None:
        if tree.num_edges != self.num_edges:
            raise ModelError(
                f"mechanism has {self.num_edges} edges but the tree has {tree.num_edges}"
            )

    def validate(self, strict: bool = False) -> None:
        """Raise unless every ``p_e`` is legal; ``strict`` also forbids ``p_e = 0``."""
        if strict and np.any(self._p <= 0):
            raise ModelError("strict model: every edge needs p_e > 0")

    def compose(self, a: Optional[float], b: Optional[float]) -> Optional[float]:
        """Value of a two-edge path collapsed to one edge, in this parameterization."""
        if a is None:
            return b
        if b is None:
            return a
        if self.parameterization == "t":
            return a + b
        return compose_p(a, b, self.q)

    def to_json(self) -> str:
        return json.dumps({
            "edges": {str(e): v for e, v in enumerate(self.values)},
            "family": self.family,
            "q": self.q,
            "parameterization": self.parameterization,
        }, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "TransitionMechanism":
        data = json.loads(text)
        edges = data["edges"]
        values = tuple(edges[str(e)] for e in range(len(edges)))
        return cls(values, data["family"], int(data["q"]), data["parameterization"])


def compose_p(a: float, b: float, q: int = 2) -> float:
    """Transition probability of two edges in series."""
    k = q / (q - 1)
    return (1.0 - (1.0 - k * a) * (1.0 - k * b)) / k


def _p_to_t_array(p: np.ndarray, family: str, q: int) -> np.ndarray:
    t = -np.log1p(-p * q / (q - 1))
    if family == "cfn":
        t = t / 2.0
    return t + 0.0


def _t_to_p_array(t: np.ndarray, family: str, q: int) -> np.ndarray:
    x = 2.0 * t if family == "cfn" else t
    return -np.expm1(-x) * (q - 1) / q


def p_to_t(mech: TransitionMechanism) -> TransitionMechanism:
    if mech.parameterization == "t":
        return mech
    return TransitionMechanism(tuple(mech.t), mech.family, mech.q, "t")


def t_to_p(mech: TransitionMechanism) -> TransitionMechanism:
    if mech.parameterization == "p":
        return mech
    return TransitionMechanism(tuple(mech.p), mech.family, mech.q, "p")


def evaluate_H(family: str, x: float, q: int = 2) -> float:
    """Agreement probability of two vertices at total length ``x``."""
    _check_family(family, q)
    if x < 0:
        raise ModelError("length must be nonnegative")
    if family == "cfn":
        return 0.5 * (1.0 + math.exp(-2.0 * x))
    return 1.0 / q + (1.0 - 1.0 / q) * math.exp(-x)


def constant_c(family: str, q: int = 2) -> float:
    """Limit of ``H`` for long paths: ``1/q``."""
    _check_family(family, q)
    return 1.0 / q


def path_disagreement(mech: TransitionMechanism, path: Sequence[int]) -> float:
    """Probability that the endpoints of ``path`` are in different states."""
    path = list(path)
    if not path:
        raise ModelError("empty path")
    for e in path:
        if not 0 <= e < mech.num_edges:
            raise ModelError(f"unknown edge id {e}")
    prod = float(np.prod(mech.lam[path]))
    return (1.0 - 1.0 / mech.q) * (1.0 - prod)


def path_agreement(mech: TransitionMechanism, path: Sequence[int]) -> float:
    return 1.0 - path_disagreement(mech, path)


def restrict_mechanism(tree: Tree, mech: TransitionMechanism,
                       subset: Iterable[str]) -> tuple[Tree, TransitionMechanism]:
    """Restrict ``tree`` to ``subset`` and collapse suppressed paths of ``mech``."""
    mech.check_tree(tree)
    sub, values = restrict(tree, mech.values, subset, mech.compose)
    return sub, TransitionMechanism(tuple(values), mech.family, mech.q, mech.parameterization)


@dataclass
class ValidationReport:
    passed: bool
    violations: list = field(default_factory=list)
    messages: list = field(default_factory=list)

    def __str__(self) -> str:
        if self.passed:
            return "ok"
        parts = list(self.messages)
        parts += [f"edge {e}: p = {p:.6g}" for e, p in self.violations]
        return "; ".join(parts)


def validate_mechanism(tree: Tree, mech: TransitionMechanism, f: float = 0.0,
                       g: Optional[float] = None) -> ValidationReport:
    """Check ``f <= p_e <= g`` on every edge. Never raises."""
    report = ValidationReport(True)
    if g is None:
        g = max_p(mech.q)
    if f > g:
        report.passed = False
        report.messages.append(f"empty constraint interval: f = {f} > g = {g}")
    if tree.num_edges != mech.num_edges:
        report.passed = False
        report.messages.append("edge count mismatch between tree and mechanism")
        return report
    for e, p in enumerate(mech.p):
        if p < f or p > g:
            report.passed = False
            report.violations.append((e, float(p)))
    return report


__all__ = [
    "FAMILIES", "ModelError", "TransitionMechanism", "ValidationReport", "compose_p",
    "constant_c", "evaluate_H", "max_p", "p_to_t", "path_agreement", "path_disagreement",
    "restrict_mechanism", "t_to_p", "validate_mechanism", "TreeError",
]
