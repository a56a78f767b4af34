"""Reproducible experiment drivers.

Every trial draws from its own stream ``derive_seed(seed, n, role, trial)``,
so any single row can be recomputed in isolation from the config and the
seed printed next to it.
"""

from __future__ import annotations

import dataclasses
import json
import math
import platform
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Optional

import numpy as np
from scipy import stats

from . import __version__
from .discriminator import (
    azuma_bound,
    chop,
    close_pairs,
    default_h,
    pair_set_violations,
    vardist_lower_bound,
)
from .models import TransitionMechanism, max_p, path_agreement
from .patterns import DEFAULT_BUDGET, agreement_mask, event_probability, exact_distribution
from .random_trees import TREE_KINDS, all_trees, default_labels, derive_seed, make_rng, random_tree
from .tree import Tree, path_between
from .vardist import empirical_gap, vardist_exact, vardist_mc

EXPERIMENTS = ("separation", "empirical-gap", "lemma-audit")
VARDIST_MODES = ("auto", "exact", "mc", "none")

# stream roles for derive_seed
_T1, _T2, _M1, _M2, _MC, _SITES = range(6)


class ConfigError(ValueError):
    pass


def _int_list(text) -> tuple:
    if isinstance(text, (list, tuple)):
        return tuple(int(x) for x in text)
    return tuple(int(x) for x in str(text).replace(" ", "").split(",") if x)


@dataclass
class ExperimentConfig:
    name: str = "separation"
    n: tuple = (8, 10, 12)
    family: str = "cfn"
    q: int = 2
    f: float = 0.2
    g: float = 0.2
    trials: int = 50
    seed: Optional[int] = None
    k: tuple = (1000,)
    tree_kind: str = "uniform"
    samples: int = 100_000
    vardist: str = "auto"
    h: Optional[int] = None
    route: str = "greedy"
    output: Optional[str] = None

    def __post_init__(self):
        self.n = _int_list(self.n)
        self.k = _int_list(self.k)
        self.q, self.trials, self.samples = int(self.q), int(self.trials), int(self.samples)
        self.f, self.g = float(self.f), float(self.g)
        if self.seed is not None:
            self.seed = int(self.seed)
        if self.h is not None:
            self.h = int(self.h)

    def validate(self) -> "ExperimentConfig":
        if self.name not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.name!r}; expected one of {EXPERIMENTS}")
        if self.seed is None:
            raise ConfigError("a seed is required")
        if self.family == "cfn" and self.q != 2:
            raise ConfigError("the cfn family has q = 2")
        if self.family not in ("cfn", "symmetric") or self.q < 2:
            raise ConfigError(f"bad model family {self.family!r} with q = {self.q}")
        if not 0 <= self.f <= self.g < max_p(self.q):
            raise ConfigError(f"need 0 <= f <= g < {max_p(self.q)}, got f = {self.f}, g = {self.g}")
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")
        if not self.n or min(self.n) < 2:
            raise ConfigError("n values must be at least 2")
        if not self.k or min(self.k) < 1:
            raise ConfigError("k values must be at least 1")
        if self.tree_kind not in TREE_KINDS:
            raise ConfigError(f"unknown tree distribution {self.tree_kind!r}")
        if self.vardist not in VARDIST_MODES:
            raise ConfigError(f"vardist mode must be one of {VARDIST_MODES}")
        if self.samples < 1:
            raise ConfigError("samples must be positive")
        if self.h is not None and self.h < 1:
            raise ConfigError("h must be at least 1")
        if self.route not in ("greedy", "chopping"):
            raise ConfigError(f"unknown route {self.route!r}")
        return self

    @classmethod
    def keys(cls) -> list[str]:
        return [f.name for f in dataclasses.fields(cls)]

    @classmethod
    def parse(cls, text: str, **overrides) -> "ExperimentConfig":
        """Flat ``key = value`` lines; ``#`` starts a comment."""
        values = {}
        known = set(cls.keys())
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            key = key.strip().replace("-", "_")
            if not sep:
                raise ConfigError(f"line {lineno}: expected key = value")
            if key not in known:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
            value = value.strip()
            values[key] = None if value.lower() in ("", "none") else value
        values.update({k: v for k, v in overrides.items() if v is not None})
        try:
            return cls(**values)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["n"], d["k"] = list(self.n), list(self.k)
        return d


@dataclass
class ExperimentReport:
    name: str
    columns: list
    rows: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)

    def to_tsv(self) -> str:
        lines = ["\t".join(self.columns)]
        for row in self.rows:
            lines.append("\t".join(_fmt(row.get(c)) for c in self.columns))
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        return json.dumps({"experiment": self.name, "summary": self.summary,
                           "provenance": self.provenance}, indent=2, sort_keys=True) + "\n"

    def write(self, prefix: str) -> tuple[Path, Path]:
        base = Path(prefix)
        base.parent.mkdir(parents=True, exist_ok=True)
        tsv, js = base.with_suffix(".tsv"), base.with_suffix(".json")
        tsv.write_text(self.to_tsv())
        js.write_text(self.to_json())
        return tsv, js

    def column(self, name: str, **where) -> list:
        return [r[name] for r in self.rows
                if all(r.get(k) == v for k, v in where.items()) and r.get(name) is not None]


def _fmt(v) -> str:
    if v is None:
        return "NA"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _stats(values) -> dict:
    arr = np.asarray([v for v in values if v is not None], dtype=float)
    if arr.size == 0:
        return {}
    q10, med, q90 = np.quantile(arr, [0.1, 0.5, 0.9])
    return {"median": float(med), "q10": float(q10), "q90": float(q90),
            "min": float(arr.min()), "max": float(arr.max()), "count": int(arr.size)}


def _provenance(config: ExperimentConfig) -> dict:
    return {"config": config.to_dict(), "version": __version__,
            "numpy": np.__version__, "python": platform.python_version()}


def _mechanism(tree: Tree, config: ExperimentConfig, seed: int) -> TransitionMechanism:
    if config.f == config.g:
        return TransitionMechanism.constant(tree, config.f, config.family, config.q)
    return TransitionMechanism.uniform_random(tree, config.f, config.g, make_rng(seed),
                                              config.family, config.q)


def _fits_budget(n: int, q: int) -> bool:
    return n * math.log2(q) <= math.log2(DEFAULT_BUDGET)


def run_trial_separation(config: ExperimentConfig, n: int, trial: int) -> dict:
    """One row of :func:`exp_separation`, recomputable on its own."""
    s = config.seed
    t1 = random_tree("uniform", n, seed=derive_seed(s, n, _T1))
    m1 = _mechanism(t1, config, derive_seed(s, n, _M1))
    t2 = random_tree(config.tree_kind, n, seed=derive_seed(s, n, _T2, trial))
    m2 = _mechanism(t2, config, derive_seed(s, n, _M2, trial))
    row = {"n": n, "trial": trial, "seed": s, "method": None, "vardist": None,
           "stderr": None, "gap_to_2": None}
    mode = config.vardist
    if mode == "auto":
        mode = "exact" if _fits_budget(n, config.q) else "mc"
    if mode == "exact":
        est = vardist_exact(exact_distribution(t1, m1), exact_distribution(t2, m2))
    elif mode == "mc":
        est = vardist_mc(t1, m1, t2, m2, config.samples, derive_seed(s, n, _MC, trial))
    else:
        est = None
    if est is not None:
        row.update(method=mode, vardist=est.estimate, stderr=est.stderr,
                   gap_to_2=2.0 - est.estimate)
    if n >= 4:
        h = config.h if config.h is not None else default_h(n)
        cert = vardist_lower_bound(t1, m1, t2, m2, h=h, g=config.g, route=config.route)
        row.update(h=h, pairs=len(cert.pairs), selected=cert.size, threshold=cert.threshold,
                   bound=cert.bound, fixed_bound=cert.paper_bound)
    return row


def exp_separation(config: ExperimentConfig) -> ExperimentReport:
    """Distance between one fixed model tree per ``n`` and random rivals."""
    config.validate()
    columns = ["n", "trial", "seed", "method", "vardist", "stderr", "gap_to_2",
               "h", "pairs", "selected", "threshold", "bound", "fixed_bound"]
    report = ExperimentReport("separation", columns, provenance=_provenance(config))
    for n in config.n:
        for trial in range(config.trials):
            report.rows.append(run_trial_separation(config, n, trial))
        report.summary[str(n)] = {
            metric: _stats(report.column(metric, n=n))
            for metric in ("vardist", "gap_to_2", "bound", "fixed_bound", "selected")
        }
    return report


def run_trial_empirical_gap(config: ExperimentConfig, n: int, k: int, trial: int) -> dict:
    s = config.seed
    tree = random_tree(config.tree_kind, n, seed=derive_seed(s, n, _T1, trial)) if n >= 3 \
        else Tree([(0, 1)], {0: default_labels(2)[0], 1: default_labels(2)[1]})
    mech = _mechanism(tree, config, derive_seed(s, n, _M1, trial))
    est = empirical_gap(tree, mech, k, derive_seed(s, n, _SITES, trial))
    return {"n": n, "k": k, "trial": trial, "seed": s, "gap": est.estimate}


def exp_empirical_gap(config: ExperimentConfig) -> ExperimentReport:
    """Distance between observed pattern frequencies and the generating model.

    The tree for a given ``(n, trial)`` is the same for every ``k``, so the
    sweep over ``k`` follows one model. Each row's ``azuma`` value bounds the
    chance that the gap moves by 0.05 from its mean: one site changes the
    gap by at most ``2/k``.
    """
    config.validate()
    columns = ["n", "k", "trial", "seed", "gap"]
    report = ExperimentReport("empirical-gap", columns, provenance=_provenance(config))
    for n in config.n:
        per_k = {}
        for k in config.k:
            for trial in range(config.trials):
                report.rows.append(run_trial_empirical_gap(config, n, k, trial))
            per_k[str(k)] = dict(_stats(report.column("gap", n=n, k=k)),
                                 azuma=azuma_bound(2.0 / k, k, 0.05))
        report.summary[str(n)] = per_k
    return report


def _audit_close_pairs(config, report):
    for n in config.n:
        if n < 4:
            continue
        exhaustive = n <= 8
        trees = all_trees(default_labels(n)) if exhaustive else (
            random_tree(config.tree_kind, n, seed=derive_seed(config.seed, n, _T1, i))
            for i in range(config.trials))
        cases = failures = 0
        need = math.ceil(n / 4)
        for tree in trees:
            ps = close_pairs(tree)
            cases += 1
            if pair_set_violations(tree, ps) or len(ps) < need:
                failures += 1
        report.rows.append({"check": "close_pairs", "n": n, "cases": cases,
                            "failures": failures,
                            "detail": "exhaustive" if exhaustive else "random"})


def _audit_chop(config, report):
    cases = failures = 0
    for i in range(config.trials):
        rng = make_rng(derive_seed(config.seed, 0, _T2, i))
        n = int(rng.integers(3, 65))
        q_chop = int(rng.integers(2, 9))
        tree = random_tree(config.tree_kind, n, seed=derive_seed(config.seed, 1, _T2, i))
        cases += 1
        if chop(tree, q_chop).violations(tree):
            failures += 1
    report.rows.append({"check": "chop", "n": "3-64", "cases": cases,
                        "failures": failures, "detail": "q_chop 2-8"})


def tree_key(tree: Tree) -> frozenset:
    return frozenset(tree.split_masks())


def uniformity_pvalue(n: int, draws: int, seed: int, kind: str = "uniform") -> float:
    """Chi-square p-value of ``draws`` generated trees against the uniform law."""
    labels = default_labels(n)
    index = {tree_key(t): i for i, t in enumerate(all_trees(labels))}
    counts = np.zeros(len(index))
    for i in range(draws):
        counts[index[tree_key(random_tree(kind, n, labels, seed=derive_seed(seed, i)))]] += 1
    return float(stats.chisquare(counts).pvalue)


def _audit_uniformity(config, report):
    draws = 15 * 1000
    pvalue = uniformity_pvalue(5, draws, derive_seed(config.seed, 5, _T1))
    report.rows.append({"check": "uniform_generator", "n": 5, "cases": draws,
                        "failures": int(pvalue <= 0.001), "detail": f"chi2 p = {pvalue:.4g}"})


def separability_error(tree: Tree, mech: TransitionMechanism) -> float:
    """Largest gap between a joint agreement probability and the product of
    its pairwise factors, over every subset of the close pairs of ``tree``.
    """
    dist = exact_distribution(tree, mech)
    ps = close_pairs(tree)
    singles = [path_agreement(mech, path_between(tree, a, b)) for a, b in ps.pairs]
    worst = 0.0
    for r in range(2, len(ps) + 1):
        for combo in combinations(range(len(ps)), r):
            mask = agreement_mask(dist.leaf_order, dist.q, [ps.pairs[i] for i in combo])
            joint = event_probability(dist, mask)
            worst = max(worst, abs(joint - math.prod(singles[i] for i in combo)))
    return worst


def _audit_separability(config, report):
    cases = failures = 0
    worst = 0.0
    for i in range(config.trials):
        rng = make_rng(derive_seed(config.seed, 2, _T2, i))
        n = int(rng.integers(4, 11))
        tree = random_tree(config.tree_kind, n, seed=derive_seed(config.seed, 3, _T2, i))
        mech = TransitionMechanism.uniform_random(tree, 0.05, 0.45, rng)
        err = separability_error(tree, mech)
        worst = max(worst, err)
        cases += 1
        failures += err > 1e-9
    report.rows.append({"check": "separability", "n": "4-10", "cases": cases,
                        "failures": failures, "detail": f"max error {worst:.3g}"})


def exp_lemma_audit(config: ExperimentConfig) -> ExperimentReport:
    """Pass/fail counts for the combinatorial and probabilistic invariants."""
    config.validate()
    report = ExperimentReport("lemma-audit", ["check", "n", "cases", "failures", "detail"],
                              provenance=_provenance(config))
    _audit_close_pairs(config, report)
    _audit_chop(config, report)
    _audit_uniformity(config, report)
    _audit_separability(config, report)
    report.summary = {
        "cases": sum(r["cases"] for r in report.rows),
        "failures": sum(r["failures"] for r in report.rows),
        "checks": {r["check"] + f"[{r['n']}]": r["failures"] for r in report.rows},
    }
    return report


RUNNERS = {
    "separation": exp_separation,
    "empirical-gap": exp_empirical_gap,
    "lemma-audit": exp_lemma_audit,
}


def run_experiment(config: ExperimentConfig) -> ExperimentReport:
    config.validate()
    return RUNNERS[config.name](config)
