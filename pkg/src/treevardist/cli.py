"""Command line interface.

Exit codes: 0 success, 1 invalid input or configuration, 2 internal
assertion failure (including a failed audit).
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from .discriminator import ROUTES, vardist_lower_bound
from .experiments import EXPERIMENTS, ExperimentConfig, run_experiment
from .models import FAMILIES, TransitionMechanism
from .patterns import exact_distribution, format_sites, parse_sites, simulate_sites
from .random_trees import TREE_KINDS, derive_seed, make_rng, random_tree
from .tree import parse_newick, write_newick
from .vardist import empirical_gap, empirical_gap_from_sites, vardist_exact, vardist_mc

log = logging.getLogger("treevardist")


def _read_text(value: str) -> str:
    """A literal Newick string, a file path, or ``-`` for stdin."""
    if value == "-":
        return sys.stdin.read()
    if value.strip().endswith(";"):
        return value
    return Path(value).read_text()


def _model_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--family", choices=FAMILIES, default="cfn")
    p.add_argument("--q", type=int, default=2, help="number of states")
    p.add_argument("--param", choices=("p", "t"), default="p",
                   help="read branch values as transition probabilities or lengths")


def _load(value: str, args) -> tuple:
    # a suppressed root joins two branches; merge them on the scale being read
    compose = TransitionMechanism((), args.family, args.q, args.param).compose
    tree = parse_newick(_read_text(value), compose=compose)
    mech = TransitionMechanism.from_annotations(tree, args.family, args.q, args.param)
    return tree, mech


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_gen(args) -> int:
    lines = []
    for i in range(args.count):
        seed = args.seed if args.count == 1 else derive_seed(args.seed, i)
        tree = random_tree(args.kind, args.n, seed=seed)
        if args.p is not None:
            mech = TransitionMechanism.constant(tree, args.p, args.family, args.q)
        else:
            low, high = args.p_range
            rng = make_rng(derive_seed(seed, 1))
            mech = TransitionMechanism.uniform_random(tree, low, high, rng, args.family, args.q)
        lines.append(write_newick(tree.with_annotations(mech.values)) + "\n")
    _emit("".join(lines), args.out)
    return 0


def cmd_simulate(args) -> int:
    tree, mech = _load(args.tree, args)
    sites = simulate_sites(tree, mech, args.k, args.seed)
    header = "# leaves=" + ",".join(tree.labels) + "\n"
    _emit(header + format_sites(sites), args.out)
    return 0


def cmd_vardist(args) -> int:
    t1, m1 = _load(args.t1, args)
    if args.method == "gap":
        if args.sites:
            est = empirical_gap_from_sites(t1, m1, parse_sites(Path(args.sites).read_text()))
        else:
            if args.seed is None:
                raise ValueError("--seed is required unless --sites is given")
            est = empirical_gap(t1, m1, args.samples, args.seed)
    else:
        if args.t2 is None:
            raise ValueError("--t2 is required for exact and mc")
        t2, m2 = _load(args.t2, args)
        if args.method == "exact":
            est = vardist_exact(exact_distribution(t1, m1), exact_distribution(t2, m2))
        else:
            if args.seed is None:
                raise ValueError("--seed is required for mc")
            est = vardist_mc(t1, m1, t2, m2, args.samples, args.seed)
    _emit("method\testimate\tstderr\tsamples\tn\tq\n"
          f"{est.method}\t{est.estimate!r}\t{est.stderr!r}\t{est.samples}\t{t1.n}\t{m1.q}\n",
          args.out)
    return 0


def cmd_certify(args) -> int:
    t1, m1 = _load(args.t1, args)
    t2, m2 = _load(args.t2, args)
    cert = vardist_lower_bound(t1, m1, t2, m2, h=args.h, g=args.g, route=args.route,
                               q_chop=args.q_chop)
    _emit(cert.to_json() + "\n", args.out)
    return 0


def _config_from_args(args, name: str) -> ExperimentConfig:
    overrides = {k: getattr(args, "cfg_" + k) for k in ExperimentConfig.keys()
                 if getattr(args, "cfg_" + k, None) is not None}
    overrides["name"] = name
    text = Path(args.config).read_text() if args.config else ""
    return ExperimentConfig.parse(text, **overrides).validate()


def _run_report(config: ExperimentConfig, out: Optional[str]):
    report = run_experiment(config)
    if out or config.output:
        tsv, js = report.write(out or config.output)
        log.info("wrote %s and %s", tsv, js)
    else:
        sys.stdout.write(report.to_tsv())
        sys.stdout.write(report.to_json())
    return report


def cmd_experiment(args) -> int:
    _run_report(_config_from_args(args, args.name), args.out)
    return 0


def cmd_audit(args) -> int:
    config = _config_from_args(args, "lemma-audit")
    report = _run_report(config, args.out)
    if report.summary["failures"]:
        raise AssertionError(f"audit found {report.summary['failures']} failures")
    return 0


def _config_flags(p: argparse.ArgumentParser, defaults: dict) -> None:
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--out", help="output prefix; writes PREFIX.tsv and PREFIX.json")
    for key in ExperimentConfig.keys():
        if key == "name":
            continue
        p.add_argument("--" + key.replace("_", "-"), dest="cfg_" + key,
                       default=defaults.get(key), metavar=key.upper())


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="treevardist",
        description="Variational distance between pattern distributions on trees.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="random binary tree with branch values")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--kind", choices=TREE_KINDS, default="uniform")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--count", type=int, default=1, help="number of trees, one per line")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--p", type=float, help="constant transition probability")
    group.add_argument("--p-range", type=float, nargs=2, metavar=("F", "G"),
                       default=(0.2, 0.2), help="draw each edge from U[F, G]")
    p.add_argument("--family", choices=FAMILIES, default="cfn")
    p.add_argument("--q", type=int, default=2)
    p.add_argument("--out")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("simulate", help="draw i.i.d. site patterns")
    p.add_argument("--tree", required=True, help="Newick string, file, or -")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    _model_args(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("vardist", help="variational distance of two model trees")
    p.add_argument("--t1", required=True)
    p.add_argument("--t2")
    p.add_argument("--method", choices=("exact", "mc", "gap"), default="exact")
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--seed", type=int)
    p.add_argument("--sites", help="site file for --method gap")
    _model_args(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_vardist)

    p = sub.add_parser("certify", help="certified lower bound on the distance")
    p.add_argument("--t1", required=True)
    p.add_argument("--t2", required=True)
    p.add_argument("--h", type=int)
    p.add_argument("--route", choices=ROUTES, default="greedy")
    p.add_argument("--q-chop", type=int)
    p.add_argument("--g", type=float, help="report the fixed-threshold gap for this g")
    _model_args(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("experiment", help="run an experiment driver")
    p.add_argument("name", choices=EXPERIMENTS)
    _config_flags(p, {})
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("audit", help="combinatorial and probabilistic self-checks")
    _config_flags(p, {"n": "4,5,6,7,8", "trials": "1000"})
    p.set_defaults(func=cmd_audit)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.command in ("experiment", "audit") and args.cfg_seed is None and not args.config:
        parser.error("--seed is required")
    try:
        return args.func(args)
    except AssertionError as exc:
        print(f"internal check failed: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
