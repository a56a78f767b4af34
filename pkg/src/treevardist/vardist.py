"""Variational distance sum_x |P1(x) - P2(x)| between pattern distributions."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .models import TransitionMechanism
from .patterns import (
    PatternDistribution,
    log_likelihoods,
    simulate_sites,
)
from .random_trees import SeedLike, derive_seed, make_rng
from .tree import Tree, TreeError

METHODS = ("exact", "mc", "empirical-gap")


@dataclass(frozen=True)
class VardistEstimate:
    estimate: float
    stderr: float
    samples: int
    method: str

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if not 0.0 <= self.estimate <= 2.0:
            raise ValueError(f"variational distance {self.estimate} outside [0, 2]")


def _clip(x: float) -> float:
    return float(min(2.0, max(0.0, x)))


def vardist_exact(d1: PatternDistribution, d2: PatternDistribution) -> VardistEstimate:
    """Exact distance; at most one side may be sparse when the other is dense."""
    if not d1.compatible(d2):
        raise ValueError("distributions differ in leaf order or state count")
    if d1.is_dense and d2.is_dense:
        value = float(np.abs(d1.probs - d2.probs).sum())
        support = d1.probs.size
    elif d1.is_dense or d2.is_dense:
        dense, sparse = (d1, d2) if d1.is_dense else (d2, d1)
        idx = np.fromiter(sparse.counts, dtype=np.int64, count=len(sparse.counts))
        freq = np.array([sparse.counts[i] for i in idx], dtype=float) / sparse.total
        covered = dense.probs[idx]
        value = float(np.abs(freq - covered).sum() + (dense.probs.sum() - covered.sum()))
        support = dense.probs.size
    else:
        keys = set(d1.counts) | set(d2.counts)
        value = sum(abs(d1.prob(i) - d2.prob(i)) for i in keys)
        support = len(keys)
    return VardistEstimate(_clip(value), 0.0, int(support), "exact")


def vardist_via_min(d1: PatternDistribution, d2: PatternDistribution) -> float:
    """``2 (1 - sum_x min(P1, P2))``, the overlap form of the same distance."""
    if not d1.compatible(d2):
        raise ValueError("distributions differ in leaf order or state count")
    return 2.0 * (1.0 - float(np.minimum(d1.to_dense(), d2.to_dense()).sum()))


def _check_pair(t1: Tree, m1: TransitionMechanism, t2: Tree, m2: TransitionMechanism) -> None:
    if t1.labels != t2.labels:
        raise TreeError("trees are on different label sets")
    if (m1.family, m1.q) != (m2.family, m2.q):
        raise ValueError("both mechanisms must share the same family and state count")
    m1.check_tree(t1)
    m2.check_tree(t2)


def _one_sided(t1, m1, t2, m2, samples, seed):
    sites = simulate_sites(t1, m1, samples, seed)
    l1 = log_likelihoods(t1, m1, sites)
    l2 = log_likelihoods(t2, m2, sites)
    # sites drawn from P1 always have P1 > 0 for p_e < (q-1)/q
    with np.errstate(over="ignore"):
        ratio = np.exp(l2 - l1)
    values = 2.0 * np.maximum(0.0, 1.0 - ratio)
    mean = float(values.mean())
    se = float(values.std(ddof=1) / math.sqrt(samples)) if samples > 1 else float("inf")
    return mean, se


def vardist_mc(t1: Tree, m1: TransitionMechanism, t2: Tree, m2: TransitionMechanism,
               samples: int = 100_000, seed: SeedLike = 0,
               symmetric: bool = False) -> VardistEstimate:
    """Unbiased Monte Carlo estimate using patterns drawn from ``(t1, m1)``.

    Each draw contributes ``2 max(0, 1 - P2(x)/P1(x))``, whose mean under P1
    is ``2 sum_x (P1 - P2)_+``, i.e. the variational distance. With
    ``symmetric`` the two one-sided estimates are averaged.
    """
    _check_pair(t1, m1, t2, m2)
    if samples < 1:
        raise ValueError("samples must be positive")
    if not symmetric:
        mean, se = _one_sided(t1, m1, t2, m2, samples, seed)
        return VardistEstimate(_clip(mean), se, samples, "mc")
    base = seed if isinstance(seed, int) else int(make_rng(seed).integers(2**62))
    a, sa = _one_sided(t1, m1, t2, m2, samples, derive_seed(base, 0))
    b, sb = _one_sided(t2, m2, t1, m1, samples, derive_seed(base, 1))
    return VardistEstimate(_clip((a + b) / 2), math.hypot(sa, sb) / 2, 2 * samples, "mc")


def empirical_gap_from_sites(tree: Tree, mech: TransitionMechanism,
                             sites: np.ndarray) -> VardistEstimate:
    """Distance between the observed pattern frequencies and the model.

    Only observed patterns are touched: the unobserved ones contribute their
    total model mass ``1 - sum_observed P``.
    """
    sites = np.asarray(sites)
    k = sites.shape[0]
    if k < 1:
        raise ValueError("need at least one site")
    rows, counts = np.unique(sites, axis=0, return_counts=True)
    probs = np.exp(log_likelihoods(tree, mech, rows))
    value = float(np.abs(counts / k - probs).sum() + (1.0 - probs.sum()))
    return VardistEstimate(_clip(value), 0.0, int(k), "empirical-gap")


def empirical_gap(tree: Tree, mech: TransitionMechanism, k: int,
                  seed: SeedLike = 0) -> VardistEstimate:
    if k < 1:
        raise ValueError("k must be at least 1")
    return empirical_gap_from_sites(tree, mech, simulate_sites(tree, mech, k, seed))
