"""Command-line interface.

Four subcommands:

``identify``
    Parse a selection diagram, summarise it, check a transport set for
    s-admissibility (printing a witness path when the check fails), or
    enumerate admissible / minimal transport sets.
``transport``
    Estimate a transported average exposure contrast from a CSV dataset,
    with bootstrap uncertainty; optionally run the stratified discrete
    estimator or a positivity diagnostic instead of / alongside it.
``simulate``
    Run the repeated-sampling experiment over a grid of models and
    transport sets and print or save the per-cell summary metrics.
``toy``
    Print the closed-form risks of the built-in binary example under both
    covariate adjustments, optionally next to empirical values from a
    sampled dataset.

Exit status: 0 on success (for ``identify --set``, an admissible set);
1 on a negative admissibility verdict or any runtime error (bad file,
unparseable diagram, failed estimation); 2 on command-line usage errors.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import __version__
from .backend import BACKEND
from .data import DataError, TOY_MODEL, read_csv, sample_toy, write_csv
from .diagram import (DiagramError, SelectionDiagram, TransportSet,
                      eligible_pool, enumerate_s_admissible, find_active_trail,
                      is_s_admissible, minimal_sets, parse_diagram)
from .estimate import (BootstrapError, FitError, PositivityError,
                       bootstrap_estimate, discrete_transport,
                       empirical_tables, positivity_diagnostic)
from .simulate import SimConfig, SimulationError, run_experiment

__all__ = ["main"]

_CONFIG_KEYS = ("models", "transport_sets", "replicates", "n", "n_boot",
                "seed", "workers", "scheme")


# -- small parsing helpers -------------------------------------------------

def _names_arg(text: str) -> tuple[str, ...]:
    """Comma-separated variable names; the empty string is the empty set."""
    return tuple(t.strip() for t in text.split(",") if t.strip())


def _sets_arg(text: str) -> tuple[tuple[str, ...], ...]:
    """Semicolon-separated transport sets of comma-separated names."""
    groups = [g for g in (part.strip() for part in text.split(";")) if g]
    if not groups:
        raise argparse.ArgumentTypeError("no transport sets given")
    return tuple(_names_arg(g) for g in groups)


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _seed_arg(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be in [0, 2**64)")
    return value


def _models_arg(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"models must be integers: {text!r}") from None


def _set_text(names) -> str:
    return "{" + ", ".join(sorted(names)) + "}"


def _emit(payload: dict, as_json: bool, lines) -> None:
    if as_json:
        print(json.dumps(payload, indent=2))
    else:
        for line in lines:
            print(line)


# -- identify --------------------------------------------------------------

def _load_diagram(args) -> SelectionDiagram:
    if args.graph is not None:
        return parse_diagram(args.graph)
    with open(args.diagram, "r", encoding="utf-8") as fh:
        return parse_diagram(fh.read())


def _witness_trail(g: SelectionDiagram, ts, interventional: bool):
    """An open selection-to-outcome path proving non-admissibility."""
    cond = frozenset(ts)
    graph = g
    if interventional:
        graph = g.without_incoming_exposure()
        cond = cond | {g.exposure}
    for s in sorted(g.selection_nodes):
        trail = find_active_trail(graph, [s], [g.outcome], cond)
        if trail is not None:
            return trail
    return None


def _cmd_identify(args) -> int:
    g = _load_diagram(args)
    payload: dict = {}
    lines: list[str] = []

    if args.set is not None:
        ts = TransportSet.of(args.set)
        ok = is_s_admissible(g, ts, interventional=args.interventional)
        witness = None if ok else _witness_trail(g, ts.members,
                                                 args.interventional)
        payload = {
            "transport_set": sorted(ts.members),
            "admissible": ok,
            "interventional": args.interventional,
            "witness": witness,
        }
        verdict = ("s-admissible" if ok else
                   "not s-admissible: open path " + " -> ".join(witness))
        _emit(payload, args.json, [f"transport set {ts}: {verdict}"])
        return 0 if ok else 1

    if args.enumerate or args.minimal:
        kwargs = dict(pool=args.pool, interventional=args.interventional)
        if args.limit is not None:
            kwargs["limit"] = args.limit
        if args.enumerate:
            sets = enumerate_s_admissible(g, **kwargs)
            payload["admissible"] = [sorted(t.members) for t in sets]
            lines.append(f"admissible transport sets ({len(sets)}):")
            lines.extend(f"  {t}" for t in sets)
        if args.minimal:
            sets = minimal_sets(g, **kwargs)
            payload["minimal"] = [sorted(t.members) for t in sets]
            lines.append(f"minimal transport sets ({len(sets)}):")
            lines.extend(f"  {t}" for t in sets)
        _emit(payload, args.json, lines)
        return 0

    payload = {
        "nodes": sorted(g.nodes),
        "selection_nodes": sorted(g.selection_nodes),
        "edges": sorted([a, b] for a, b in g.edges),
        "exposure": g.exposure,
        "outcome": g.outcome,
        "eligible_pool": sorted(eligible_pool(g)),
    }
    lines = [
        "nodes:           " + ", ".join(payload["nodes"]),
        "selection nodes: " + ", ".join(payload["selection_nodes"]),
        "edges:           " + ", ".join(f"{a} -> {b}" for a, b in payload["edges"]),
        "exposure:        " + g.exposure,
        "outcome:         " + g.outcome,
        "eligible pool:   " + ", ".join(payload["eligible_pool"]),
    ]
    _emit(payload, args.json, lines)
    return 0


# -- transport -------------------------------------------------------------

def _cmd_transport(args) -> int:
    ds = read_csv(args.data)
    payload: dict = {}
    lines: list[str] = []

    if args.discrete:
        table, dist = empirical_tables(ds, args.set)
        res = discrete_transport(table, dist, names=args.set)
        payload["discrete"] = {
            "adjustment": sorted(args.set),
            "risk0": res.risk0,
            "risk1": res.risk1,
            "risk_difference": res.risk_difference,
            "risk_ratio": res.risk_ratio,
        }
        lines += [
            f"stratified transport over {_set_text(args.set)}",
            f"  risk(Z=0)        {res.risk0:.6f}",
            f"  risk(Z=1)        {res.risk1:.6f}",
            f"  risk difference  {res.risk_difference:+.6f}",
            f"  risk ratio       {res.risk_ratio:.6f}",
        ]
    else:
        est = bootstrap_estimate(ds, args.set, n_boot=args.boot,
                                 seed=args.seed, scheme=args.scheme,
                                 ci_method=args.ci)
        payload["estimate"] = {
            "phi": est.phi,
            "se": est.se,
            "ci_low": est.ci_low,
            "ci_high": est.ci_high,
            "ci_method": est.ci_method,
            "n_boot": est.n_boot,
            "n_failed": est.n_failed,
            "n_source": est.n_source,
            "n_target": est.n_target,
            "transport_set": sorted(est.transport_set),
            "scheme": est.scheme,
        }
        lines += [
            f"transported contrast over {_set_text(est.transport_set)}",
            f"  phi        {est.phi:.6f}",
            f"  se         {est.se:.6f}",
            f"  95% CI     [{est.ci_low:.6f}, {est.ci_high:.6f}]  ({est.ci_method})",
            f"  bootstrap  {est.n_boot} replicates, {est.n_failed} failed",
            f"  rows       {est.n_source} source, {est.n_target} target",
        ]

    if args.positivity:
        report = positivity_diagnostic(
            ds, covariates=list(args.set) or None, n_bins=args.bins)
        payload["positivity"] = [
            {
                "covariate": o.name,
                "source_range": list(o.source_range),
                "target_range": list(o.target_range),
                "unsupported_mass_z0": o.unsupported_mass_z0,
                "unsupported_mass_z1": o.unsupported_mass_z1,
                "unsupported_mass": o.unsupported_mass,
            }
            for o in report.overlaps
        ]
        lines.append(f"positivity ({report.n_bins} bins):")
        for o in report.overlaps:
            lines.append(
                f"  {o.name}: target mass outside source support "
                f"{o.unsupported_mass:.4f} (z=0 {o.unsupported_mass_z0:.4f}, "
                f"z=1 {o.unsupported_mass_z1:.4f})")

    _emit(payload, args.json, lines)
    return 0


# -- simulate --------------------------------------------------------------

def _load_sim_config(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: invalid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise DataError(f"{path}: config must be a JSON object")
    unknown = sorted(set(raw) - set(_CONFIG_KEYS))
    if unknown:
        raise DataError(f"{path}: unknown config keys: {', '.join(unknown)}")
    out = dict(raw)
    if "models" in out:
        out["models"] = tuple(out["models"])
    if "transport_sets" in out:
        sets = out["transport_sets"]
        if not isinstance(sets, list) or not all(isinstance(t, list) for t in sets):
            raise DataError(f"{path}: transport_sets must be a list of lists")
        out["transport_sets"] = tuple(tuple(t) for t in sets)
    return out


def _resolve_workers(args) -> int | None:
    if args.workers is not None:
        return args.workers
    env = os.environ.get("GTRANSPORT_WORKERS")
    if env:
        try:
            value = int(env)
        except ValueError:
            raise DataError(f"GTRANSPORT_WORKERS must be an integer, got {env!r}") from None
        if value < 1:
            raise DataError(f"GTRANSPORT_WORKERS must be >= 1, got {value}")
        return value
    return None


def _cmd_simulate(args) -> int:
    overrides: dict = {}
    if args.config is not None:
        overrides.update(_load_sim_config(args.config))
    for key, value in (("models", args.models),
                       ("transport_sets", args.sets),
                       ("replicates", args.replicates),
                       ("n", args.n),
                       ("n_boot", args.boot),
                       ("seed", args.seed),
                       ("scheme", args.scheme),
                       ("workers", _resolve_workers(args))):
        if value is not None:
            overrides[key] = value
    config = SimConfig(**overrides)
    report = run_experiment(config)

    if args.out is not None:
        report.to_csv(args.out)
    if args.json:
        payload = {
            "config": {
                "models": list(config.models),
                "transport_sets": [list(t) for t in config.transport_sets],
                "replicates": config.replicates,
                "n": config.n,
                "n_boot": config.n_boot,
                "seed": config.seed,
                "workers": config.workers,
                "scheme": config.scheme,
            },
            "cells": [
                {
                    "model": c.model,
                    "transport_set": list(c.transport_set),
                    "n_replicates": c.n_replicates,
                    "bias": c.bias,
                    "variance": c.variance,
                    "mse": c.mse,
                    "coverage": c.coverage,
                    "mean_se": c.mean_se,
                    "boot_failures": c.boot_failures,
                }
                for c in report.cells
            ],
        }
        print(json.dumps(payload, indent=2))
    else:
        print(report.to_table())
        if args.out is not None:
            print(f"wrote {args.out}")
    return 0


# -- toy -------------------------------------------------------------------

def _toy_rows(label: str, risk0: float, risk1: float):
    rd = risk1 - risk0
    rr = risk1 / risk0 if risk0 != 0 else float("nan")
    return ({"risk0": risk0, "risk1": risk1, "risk_difference": rd,
             "risk_ratio": rr},
            f"  {label:<22} risk(Z=0) {risk0:.6f}  risk(Z=1) {risk1:.6f}  "
            f"RD {rd:+.6f}  RR {rr:.6f}")


def _cmd_toy(args) -> int:
    if args.out is not None and args.sample is None:
        raise DataError("--out requires --sample")
    payload: dict = {"exact": {}}
    lines = ["exact transported risks:"]
    adjustments = (("B", "G"), ("B",))
    for adj in adjustments:
        risk0, risk1 = TOY_MODEL.exact_risks(adj)
        entry, line = _toy_rows("adjust " + _set_text(adj), risk0, risk1)
        entry["adjustment"] = list(adj)
        payload["exact"][",".join(adj)] = entry
        lines.append(line)

    if args.sample is not None:
        ds = sample_toy(args.sample, args.seed)
        payload["sample"] = {"n": args.sample, "seed": args.seed, "empirical": {}}
        lines.append(f"empirical (n={args.sample}, seed={args.seed}):")
        for adj in adjustments:
            table, dist = empirical_tables(ds, adj)
            res = discrete_transport(table, dist, names=adj)
            entry, line = _toy_rows("adjust " + _set_text(adj), res.risk0,
                                    res.risk1)
            entry["adjustment"] = list(adj)
            payload["sample"]["empirical"][",".join(adj)] = entry
            lines.append(line)
        if args.out is not None:
            write_csv(ds, args.out)
            lines.append(f"wrote {args.out}")
            payload["sample"]["out"] = args.out

    _emit(payload, args.json, lines)
    return 0


# -- parser ----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gtransport",
        description="Transport causal effect estimates between populations.")
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__} (backend: {BACKEND})")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("identify",
                       help="selection-diagram queries and admissibility checks")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--diagram", metavar="FILE",
                     help="file containing the diagram description")
    src.add_argument("--graph", metavar="TEXT",
                     help="inline diagram description")
    p.add_argument("--set", type=_names_arg, metavar="A,B",
                   help="check this transport set for s-admissibility")
    p.add_argument("--enumerate", action="store_true",
                   help="list all s-admissible transport sets")
    p.add_argument("--minimal", action="store_true",
                   help="list minimal s-admissible transport sets")
    p.add_argument("--pool", type=_names_arg, metavar="A,B",
                   help="candidate pool for enumeration (default: "
                        "pre-treatment covariates)")
    p.add_argument("--limit", type=_positive_int, metavar="N",
                   help="refuse enumeration over pools larger than N")
    p.add_argument("--interventional", action="store_true",
                   help="check separation with edges into the exposure "
                        "removed, conditioning on the exposure")
    p.add_argument("--json", action="store_true", help="machine-readable output")
    p.set_defaults(func=_cmd_identify)

    p = sub.add_parser("transport",
                       help="estimate a transported exposure contrast from CSV data")
    p.add_argument("--data", required=True, metavar="FILE",
                   help="CSV with columns S, Z, covariates, Y")
    p.add_argument("--set", required=True, type=_names_arg, metavar="A,B",
                   help="transport set (may be empty: --set '')")
    p.add_argument("--boot", type=_positive_int, default=200, metavar="N",
                   help="bootstrap replicates (default 200)")
    p.add_argument("--seed", type=_seed_arg, default=0, metavar="N",
                   help="bootstrap seed (default 0)")
    p.add_argument("--scheme", choices=("full", "treatment"), default="full",
                   help="source-model interaction scheme (default full)")
    p.add_argument("--ci", choices=("wald", "percentile"), default="wald",
                   help="confidence-interval method (default wald)")
    p.add_argument("--discrete", action="store_true",
                   help="stratified estimator for discrete covariates "
                        "instead of the parametric one")
    p.add_argument("--positivity", action="store_true",
                   help="also report target mass outside source support")
    p.add_argument("--bins", type=_positive_int, default=20, metavar="N",
                   help="histogram bins for --positivity (default 20)")
    p.add_argument("--json", action="store_true", help="machine-readable output")
    p.set_defaults(func=_cmd_transport)

    p = sub.add_parser("simulate",
                       help="run the repeated-sampling benchmark experiment")
    p.add_argument("--config", metavar="FILE",
                   help="JSON config; command-line flags override it")
    p.add_argument("--models", type=_models_arg, metavar="1,2,3",
                   help="generator variants to run")
    p.add_argument("--sets", type=_sets_arg, metavar="'A;A,B'",
                   help="semicolon-separated transport sets")
    p.add_argument("--replicates", type=_positive_int, metavar="N")
    p.add_argument("--n", type=_positive_int, metavar="N",
                   help="rows per simulated dataset")
    p.add_argument("--boot", type=_positive_int, metavar="N",
                   help="bootstrap replicates per estimate")
    p.add_argument("--seed", type=_seed_arg, metavar="N", help="master seed")
    p.add_argument("--scheme", choices=("full", "treatment"))
    p.add_argument("--workers", type=_positive_int, metavar="N",
                   help="worker processes (default: GTRANSPORT_WORKERS or 1)")
    p.add_argument("--out", metavar="FILE", help="write cell metrics CSV here")
    p.add_argument("--json", action="store_true", help="machine-readable output")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("toy",
                       help="closed-form binary example, exact and sampled")
    p.add_argument("--sample", type=_positive_int, metavar="N",
                   help="also draw N rows and show empirical risks")
    p.add_argument("--seed", type=_seed_arg, default=0, metavar="N",
                   help="sampling seed (default 0)")
    p.add_argument("--out", metavar="FILE",
                   help="write the sampled dataset CSV here (with --sample)")
    p.add_argument("--json", action="store_true", help="machine-readable output")
    p.set_defaults(func=_cmd_toy)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (DiagramError, DataError, FitError, BootstrapError,
            PositivityError, SimulationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
