"""Command-line entry point ``bregsq``.

Exit status is 0 on success, 2 on invalid input (manifest, arguments, data
files) and 3 on runtime failures.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import coherence as coh
from .assumptions import check_assumptions
from .distributions import affine, parse_distribution, sample as draw, uniform, uniforms
from .errors import BregsqError, DomainError, ManifestError, ParseError, VarianceDiverges
from .experiment import (
    default_workers,
    emit_plot_data,
    load_manifest,
    report_risks,
    run_convergence,
    write_records,
)
from .generators import parse_generator
from .oracle import asymptotic_variance, true_bregman_superquantile, true_quantile

log = logging.getLogger("bregsq")

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 2, 3

DEFAULT_FAMILIES = ["exp", "pareto:0.5", "pareto:1.5", "pareto:2.5", "halfcauchy"]
DEFAULT_GENERATORS = ["identity", "geometric", "harmonic"]


def _fmt(x) -> str:
    if x is None:
        return "-"
    if isinstance(x, float):
        return f"{x:.6g}"
    return str(x)


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(f"not serialisable: {type(o)}")


def _json_safe(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return _json_safe(obj.item())
    return obj


def _dump(obj) -> str:
    return json.dumps(_json_safe(obj), default=_json_default, sort_keys=False)


# ---------------------------------------------------------------- subcommands


def cmd_converge(args) -> int:
    m = load_manifest(args.manifest)
    if args.full:
        m = replace(m, scale=1.0)
    elif args.scale is not None:
        m = replace(m, scale=args.scale)
    if args.seed is not None:
        m = replace(m, master_seed=args.seed)
    out = args.output or m.output
    if out is None:
        raise ManifestError("no output path (set 'output' in the manifest or pass --output)")
    fmt = args.format or m.format
    for target in (out, args.records or m.records):
        # fail before the run, not after it
        if target is not None and not Path(target).resolve().parent.is_dir():
            raise OSError(f"output directory of {target} does not exist")
    cache = None if args.no_cache else (args.oracle_cache or f"{out}.oracle.json")
    res = run_convergence(m, workers=args.workers, oracle_cache=cache)
    emit_plot_data(res.summary, out, fmt)
    if args.records or m.records:
        write_records(res.records, args.records or m.records)
    for meas, ref in res.references.items():
        line = f"{meas}: ref={_fmt(ref['value'])} ({ref['source']})"
        if ref["variance"] is not None:
            line += f" asymptotic variance={_fmt(ref['variance'])}"
        if ref["note"]:
            line += f"; theoretical CI omitted: {ref['note']}"
        print(line)
    failed = sum(1 for r in res.records if r.error)
    print(f"run {m.run_id}: {len(res.records)} estimates ({failed} domain errors), wrote {out}")
    return EXIT_OK


def cmd_oracle(args) -> int:
    d = parse_distribution(args.family)
    g = parse_generator(args.generator)
    alpha = args.alpha
    out = {"distribution": d.name, "generator": g.name, "alpha": alpha, "quantile": true_quantile(d, alpha)}
    out["value"] = true_bregman_superquantile(d, g, alpha)
    try:
        out["asymptotic_variance"] = asymptotic_variance(d, g, alpha) if math.isfinite(out["value"]) else None
    except VarianceDiverges as exc:
        out["asymptotic_variance"] = None
        out["note"] = str(exc)
    if args.json:
        print(_dump(out))
    else:
        for k, v in out.items():
            print(f"{k:20s} {_fmt(v)}")
    return EXIT_OK


def cmd_report(args) -> int:
    alphas = args.alpha or [0.95]
    gens = args.generator or ["geometric", "harmonic"]
    rows, warnings = report_risks(args.csv, alphas, gens, args.level)
    for w in warnings:
        print(f"warning: {w}", file=sys.stderr)
    if args.json:
        print(_dump({"rows": rows, "warnings": warnings}))
        return EXIT_OK
    print(f"{'measure':22s} {'alpha':>6s} {'estimate':>14s} {'ci_low':>14s} {'ci_high':>14s}  note")
    for r in rows:
        note = r["reason"] if r["status"] == "ok" else f"skipped: {r['reason']}"
        print(f"{r['measure']:22s} {r['alpha']:6g} {_fmt(r['point']):>14s} "
              f"{_fmt(r['ci_low']):>14s} {_fmt(r['ci_high']):>14s}  {note}")
    return EXIT_OK


def cmd_assumptions(args) -> int:
    families = args.family or DEFAULT_FAMILIES
    gens = args.generator or DEFAULT_GENERATORS
    reports = []
    for fam in families:
        d = parse_distribution(fam)
        for gname in gens:
            g = parse_generator(gname)
            which = args.which
            rep = check_assumptions(d, None if g.name == "identity" else g, which)
            reports.append(rep)
    if args.json:
        print(_dump([r.as_dict() for r in reports]))
        return EXIT_OK
    print(f"{'distribution':14s} {'generator':12s} {'p(l)':>8s} {'p(L)':>8s}  verdicts")
    for r in reports:
        v = " ".join(f"{h}={r.h_verdicts[h]}" for h in sorted(r.h_verdicts))
        print(f"{r.pair[0]:14s} {r.pair[1]:12s} {_fmt(r.fitted_exponent_l):>8s} {_fmt(r.fitted_exponent_L):>8s}  {v}")
    return EXIT_OK


def _coherence_scenarios(n: int, seed: int):
    """Built-in scenarios as ``(generator, scenario, thunk)`` triples."""
    U, P15, P25 = uniform(), parse_distribution("pareto:1.5"), parse_distribution("pareto:2.5")
    E, E1 = parse_distribution("exp"), parse_distribution("exp@1")

    def pareto_pair(k, s):
        return draw(P15, k, s), draw(P15, k, s + 1)

    def exp_pair(k, s):
        return draw(E, k, s), draw(E, k, s + 1)

    # members of the noisy family share one base sample and one noise draw
    cache = {}

    def shifted_exp_with_noise(h):
        if not cache:
            cache["x"] = draw(E1, n, seed)
            cache["z"] = uniforms(n, seed + 1) - 0.5
        return cache["x"] + h * cache["z"]

    out = []
    rng = np.random.default_rng(seed)
    for gname in ("euclidean", "geometric", "harmonic", "power:-0.5", "exp"):
        g = parse_generator(gname)
        lo = g.domain[0]
        c = float(rng.uniform(0.1, 10.0)) if lo == 0.0 else float(rng.uniform(-10.0, 10.0))
        out.append((g.name, f"constant c={c:.6g}", lambda g=g, c=c: coh.check_constant_invariance(g, c, 0.95)))
    out += [
        ("geometric", "pareto:1.5 lambda=0.5,2,10", lambda: coh.check_homogeneity(parse_generator("geometric"), P15, 0.95)),
        ("power:-0.5", "uniform:0.1:1 lambda=2", lambda: coh.check_homogeneity(parse_generator("power:-0.5"), parse_distribution("uniform:0.1:1"), 0.95, [2.0])),
        ("exp", "uniform lambda=4", lambda: coh.check_homogeneity(parse_generator("exp"), U, 0.95, [4.0])),
        ("exp", "uniform comonotone X'=X", lambda: coh.check_subadditivity_oracle(parse_generator("exp"), U, 0.95)),
        ("euclidean", f"independent exp pair n={n}", lambda: coh.check_subadditivity(parse_generator("euclidean"), exp_pair, 0.95, n, seed)),
        ("geometric", f"independent pareto:1.5 pair n={n}", lambda: coh.check_subadditivity(parse_generator("geometric"), pareto_pair, 0.95, n, seed)),
        ("geometric", "pareto:2.5 <= pareto:1.5", lambda: coh.check_monotonicity(parse_generator("geometric"), P25, P15, 0.95)),
        ("euclidean", "exp <= exp@1", lambda: coh.check_monotonicity(parse_generator("euclidean"), E, E1, 0.95)),
        ("euclidean", "exp + h", lambda: coh.check_closeness(parse_generator("euclidean"), lambda h: affine(E, 1.0, h), 0.95)),
        ("geometric", "pareto:1.5 * (1 + h)", lambda: coh.check_closeness(parse_generator("geometric"), lambda h: affine(P15, 1.0 + h), 0.95)),
        ("harmonic", f"exp@1 + h U(-1/2,1/2) n={n}", lambda: coh.check_closeness(parse_generator("harmonic"), shifted_exp_with_noise, 0.95)),
    ]
    return out


def cmd_coherence(args) -> int:
    wanted = {parse_generator(g).name for g in args.generator} if args.generator else None
    for gname, scenario, thunk in _coherence_scenarios(args.n, args.seed):
        if wanted is not None and gname not in wanted:
            continue
        rep = thunk()
        if args.axiom and rep.axiom not in args.axiom:
            continue
        d = rep.as_dict()
        d["scenario"] = scenario
        print(_dump(d))
    return EXIT_OK


def cmd_sample(args) -> int:
    if not Path(args.output).resolve().parent.is_dir():
        raise OSError(f"output directory of {args.output} does not exist")
    d = parse_distribution(args.family)
    x = draw(d, args.n, args.seed)
    with open(args.output, "w", encoding="utf-8") as fh:
        fh.write("value\n")
        fh.writelines(f"{v!r}\n" for v in x.tolist())
    print(f"wrote {args.n} draws of {d.name} (seed {args.seed}) to {args.output}")
    return EXIT_OK


# ---------------------------------------------------------------- parser


def _positive_int(s):
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _probability(s):
    v = float(s)
    if not 0.0 < v < 1.0:
        raise argparse.ArgumentTypeError("must lie in (0, 1)")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bregsq", description="Bregman superquantiles: estimation, oracle values, checks.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("converge", help="run a seeded convergence study from a manifest")
    c.add_argument("manifest", type=Path)
    c.add_argument("-o", "--output", help="plot-data path (overrides the manifest)")
    c.add_argument("--format", choices=["csv", "json"])
    c.add_argument("--records", help="also write every (n, repetition, measure) estimate to this CSV")
    c.add_argument("--scale", type=float, help="grid scale factor (desk default 0.1)")
    c.add_argument("--full", action="store_true", help="full-size grid, same as --scale 1")
    c.add_argument("--seed", type=int, help="override master_seed")
    c.add_argument("--workers", type=_positive_int, default=None,
                   help=f"parallel jobs (default BREGSQ_WORKERS or {default_workers()})")
    c.add_argument("--oracle-cache", help="JSON sidecar for oracle values (default <output>.oracle.json)")
    c.add_argument("--no-cache", action="store_true", help="do not read or write the oracle sidecar")
    c.set_defaults(func=cmd_converge)

    o = sub.add_parser("oracle", help="quadrature value and CLT variance for a (family, generator) pair")
    o.add_argument("family")
    o.add_argument("generator")
    o.add_argument("alpha", type=_probability)
    o.add_argument("--json", action="store_true")
    o.set_defaults(func=cmd_oracle)

    r = sub.add_parser("report", help="risk report with empirical CIs for a CSV sample")
    r.add_argument("csv", type=Path)
    r.add_argument("--alpha", type=_probability, action="append")
    r.add_argument("--generator", action="append", help="Bregman generator (repeatable); default geometric, harmonic")
    r.add_argument("--level", type=float, default=0.95)
    r.add_argument("--json", action="store_true")
    r.set_defaults(func=cmd_report)

    a = sub.add_parser("assumptions", help="H1-H4 verdicts per (family, generator)")
    a.add_argument("--family", action="append")
    a.add_argument("--generator", action="append")
    a.add_argument("--which", nargs="+", choices=["H1", "H2", "H3", "H4"])
    a.add_argument("--json", action="store_true")
    a.set_defaults(func=cmd_assumptions)

    h = sub.add_parser("coherence", help="axiom checks on the built-in scenarios, one JSON line each")
    h.add_argument("--generator", action="append")
    h.add_argument("--axiom", action="append",
                   choices=["constant_invariance", "homogeneity", "subadditivity", "monotonicity", "closeness"])
    h.add_argument("--n", type=_positive_int, default=100_000)
    h.add_argument("--seed", type=int, default=0)
    h.set_defaults(func=cmd_coherence)

    s = sub.add_parser("sample", help="write seeded draws of a family to a CSV file")
    s.add_argument("family")
    s.add_argument("--n", type=_positive_int, default=100_000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("-o", "--output", required=True)
    s.set_defaults(func=cmd_sample)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INVALID
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ManifestError, ParseError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (BregsqError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
