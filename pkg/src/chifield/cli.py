"""Command line entry point: ``chifield tail|simulate|scan|compare``.

Reports go to ``--out`` (default stdout) as CSV or JSON. Each report carries a
header echoing the resolved configuration, the seed and the tool version;
only the wall-clock line differs between two runs with the same arguments.

Exit codes: 0 success, 2 configuration error, 3 numerical or convergence
error, 4 degenerate data.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import time

import numpy as np

from . import __version__
from .errors import ChiFieldError, ConfigurationError
from .field_model import PATTERNS, load_config
from .mc_sim import SimPlan, empirical_tail
from .special_fn import NuMethod
from .tail_approx import DEFAULT_SAMPLES, METHODS, TailQuery, tail_probability

EXIT_OK = 0
EXIT_CONFIG = 2


def parse_grid(text):
    """Threshold grid from ``"start:stop:step"`` (inclusive), ``"a,b,c"`` or a scalar."""
    text = str(text).strip()
    if not text:
        raise ConfigurationError("threshold grid is empty")
    try:
        if ":" in text:
            parts = [float(v) for v in text.split(":")]
            if len(parts) != 3:
                raise ConfigurationError(f"grid {text!r}: expected start:stop:step")
            start, stop, step = parts
            if step <= 0:
                raise ConfigurationError(f"grid {text!r}: step must be positive")
            count = int(np.floor((stop - start) / step + 1e-9)) + 1
            values = [round(start + i * step, 12) for i in range(max(count, 0))]
        else:
            values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigurationError(f"grid {text!r}: {exc}") from None
    if not values:
        raise ConfigurationError(f"threshold grid {text!r} is empty")
    return values


def _float_list(text):
    return [float(v) for v in str(text).split(",") if v.strip()]


def _spec_config(args):
    """Field config dict from ``--spec`` or the preset/lattice shorthand flags."""
    if args.spec:
        try:
            with open(args.spec) as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigurationError(f"cannot read {args.spec}: {exc}") from None
        try:
            cfg = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(
                f"{args.spec}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}"
            ) from None
        if not isinstance(cfg, dict):
            raise ConfigurationError(f"{args.spec}: config must be a JSON object")
        return cfg
    if not args.preset:
        raise ConfigurationError("give --spec FILE or --preset NAME")
    cfg = {"preset": args.preset}
    try:
        if args.pattern:
            pattern = args.pattern if args.pattern in PATTERNS else _float_list(args.pattern)
            cfg.update(extent=float(args.extent), pattern=pattern)
        else:
            cfg.update(extent=_float_list(args.extent), spacing=_float_list(args.spacing))
    except ValueError as exc:
        raise ConfigurationError(f"lattice flags: {exc}") from None
    return cfg


class Report:
    """Header plus table; serialised deterministically apart from ``wall_clock_seconds``."""

    def __init__(self, command, config, seed):
        self.header = {"tool": "chifield", "version": __version__, "command": command, "seed": seed,
                       "config": config}
        self.columns = []
        self.rows = []
        self.extra = {}
        self.started = time.perf_counter()

    def render(self, fmt):
        wall = round(time.perf_counter() - self.started, 3)
        if fmt == "json":
            doc = dict(self.header)
            doc.update(self.extra)
            doc["rows"] = [dict(zip(self.columns, r)) for r in self.rows]
            doc["wall_clock_seconds"] = wall
            return json.dumps(doc, indent=2) + "\n"
        buf = io.StringIO()
        for key in ("tool", "version", "command", "seed"):
            buf.write(f"# {key}: {self.header[key]}\n")
        buf.write(f"# config: {json.dumps(self.header['config'], sort_keys=True)}\n")
        for key, value in self.extra.items():
            buf.write(f"# {key}: {json.dumps(value, sort_keys=True)}\n")
        buf.write(f"# wall_clock_seconds: {wall}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for r in self.rows:
            w.writerow([_cell(v) for v in r])
        return buf.getvalue()


def _cell(v):
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple)):
        return ";".join(str(x) for x in v)
    return v


def _emit(report, args):
    text = report.render(args.format)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _prob(est, raw):
    return est.prob_raw if raw else est.prob_clamped


def _std_error(est, raw):
    # delta method through the clamp 1 - exp(-x)
    return est.std_error if raw else est.std_error * float(np.exp(-est.prob_raw))


def cmd_tail(args):
    cfg = _spec_config(args)
    spec, lattice = load_config(cfg)
    grid = parse_grid(args.b)
    methods = list(METHODS) if args.method == "all" else [args.method]
    nu_method = NuMethod.parse(args.nu)
    report = Report("tail", {"field": cfg, "b": grid, "methods": methods, "samples": args.samples,
                             "nu": nu_method.variant, "raw": args.raw}, args.seed)
    report.columns = ["b", "method", "prob_raw" if args.raw else "prob", "std_error", "flags"]
    for method in methods:
        for b in grid:
            q = TailQuery(spec, lattice, b, method, samples=args.samples, seed=args.seed,
                          nu_method=nu_method, threads=args.threads)
            est = tail_probability(q)
            report.rows.append([float(b), method, _prob(est, args.raw), _std_error(est, args.raw), list(est.flags)])
    _emit(report, args)


def cmd_simulate(args):
    cfg = _spec_config(args)
    spec, lattice = load_config(cfg)
    grid = parse_grid(args.b)
    plan = SimPlan(spec, lattice, args.replicates, args.seed, grid, args.threads)
    emp = empirical_tail(plan)
    report = Report("simulate", {"field": cfg, "b": list(plan.b_grid), "replicates": plan.replicates},
                    args.seed)
    report.columns = ["b", "count", "prob", "std_error"]
    for row in emp.rows():
        report.rows.append([row["b"], row["count"], row["prob"], row["std_error"]])
    _emit(report, args)


def compare_rows(spec, lattice, grid, replicates, seed, *, samples=DEFAULT_SAMPLES, nu_method=None, threads=1,
                 raw=False):
    """Analytic tails for every method next to the Monte Carlo estimate, one row per ``b``.

    Verdicts compare clamped values with ``empirical - 2 SE``.
    """
    if int(replicates) < 100:
        raise ConfigurationError("compare needs at least 100 replicates")
    plan = SimPlan(spec, lattice, replicates, seed, grid, threads)
    emp = empirical_tail(plan)
    nu_method = NuMethod.parse(nu_method)
    rows = []
    for b, p_emp, se in zip(plan.b_grid, emp.probs, emp.std_errors):
        ests = {
            m: tail_probability(TailQuery(spec, lattice, b, m, samples=samples, seed=seed, nu_method=nu_method,
                                          threads=threads))
            for m in METHODS
        }
        floor = float(p_emp) - 2.0 * float(se)
        rows.append({
            "b": b,
            **{m: _prob(e, raw) for m, e in ests.items()},
            "empirical": float(p_emp),
            "empirical_se": float(se),
            "tube_ok": bool(ests["tube"].prob_clamped >= floor),
            "continuous_ok": bool(ests["continuous"].prob_clamped >= floor),
            "flags": sorted({f for e in ests.values() for f in e.flags}),
        })
    return rows


def cmd_compare(args):
    cfg = _spec_config(args)
    spec, lattice = load_config(cfg)
    grid = parse_grid(args.b)
    nu_method = NuMethod.parse(args.nu)
    report = Report("compare", {"field": cfg, "b": grid, "replicates": args.replicates, "samples": args.samples,
                                "nu": nu_method.variant, "raw": args.raw}, args.seed)
    rows = compare_rows(spec, lattice, grid, args.replicates, args.seed, samples=args.samples,
                        nu_method=nu_method, threads=args.threads, raw=args.raw)
    report.columns = list(rows[0])
    report.rows = [list(r.values()) for r in rows]
    _emit(report, args)


def cmd_scan(args):
    from .genome_scan import GenotypeDataset, MarkerMap, adjusted_pvalue_report, permutation_test, scan

    methods = ["renewal", "tube"] if args.method == "both" else [args.method]
    mm = MarkerMap.from_csv(args.map)
    data = GenotypeDataset.from_csv(mm, args.genotypes, args.design)
    result = scan(data, threads=args.threads)
    config = {"map": args.map, "genotypes": args.genotypes, "design": data.design, "methods": methods,
              "permutations": args.permutations, "samples": args.samples, "top_k": args.top_k,
              "nu": NuMethod.parse(args.nu).variant}
    report = Report("scan", config, args.seed)
    m1, m2 = result.argmax
    report.extra["n_individuals"] = result.n_individuals
    report.extra["n_markers"] = len(mm)
    report.extra["degenerate_tables"] = result.degenerate
    report.extra["global_max"] = {"statistic": result.global_max, "marker1": m1, "marker2": m2}
    report.extra["adjusted_pvalues"] = {
        m: adjusted_pvalue_report(result, None, m, samples=args.samples, seed=args.seed, nu_method=args.nu).to_dict()
        for m in methods
    }
    if args.permutations:
        perm = permutation_test(data, args.permutations, args.seed, threads=args.threads,
                                observed=result.global_max)
        report.extra["permutation"] = perm.to_dict()
    peaks = [p.to_dict() for p in result.peaks(args.top_k)]
    report.columns = list(peaks[0]) if peaks else ["rank", "statistic"]
    report.rows = [list(p.values()) for p in peaks]
    _emit(report, args)


def _global_flags(parser, suppress):
    default = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    g = parser.add_argument_group("global options")
    g.add_argument("--seed", type=int, default=default(0), help="random seed (default 0)")
    g.add_argument("--threads", type=int, default=default(1), help="worker threads (default 1)")
    g.add_argument("--out", default=default(None), help="output path (default stdout)")
    g.add_argument("--format", choices=("csv", "json"), default=default("csv"), help="report format")
    g.add_argument("--raw", action="store_true", default=default(False),
                   help="report unclamped analytic probabilities")


def _field_flags(parser):
    g = parser.add_argument_group("field")
    g.add_argument("--spec", help="JSON field config (preset or rho, plus lattice)")
    g.add_argument("--preset", choices=("f2", "bc"), help="named covariance preset")
    g.add_argument("--extent", default="1", help="rectangle side(s) in Morgans, comma separated")
    g.add_argument("--spacing", default="0.01", help="grid spacing(s) in Morgans, comma separated")
    g.add_argument("--pattern", help="repeating gap cycle in Morgans, comma separated, or a named cycle (I, II); same on all axes")


def build_parser():
    parser = argparse.ArgumentParser(prog="chifield", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"chifield {__version__}")
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("tail", help="analytic tail probabilities over a threshold grid")
    _field_flags(p)
    p.add_argument("--b", required=True, help="thresholds: start:stop:step, a,b,c or a scalar")
    p.add_argument("--method", choices=(*METHODS, "all"), default="renewal")
    p.add_argument("--samples", type=int, default=DEFAULT_SAMPLES, help="sphere quadrature points")
    p.add_argument("--nu", choices=("series", "approx"), default="series")
    _global_flags(p, suppress=True)
    p.set_defaults(func=cmd_tail)

    p = sub.add_parser("simulate", help="Monte Carlo tail of the lattice maximum")
    _field_flags(p)
    p.add_argument("--b", required=True)
    p.add_argument("--replicates", type=int, default=10_000)
    _global_flags(p, suppress=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("compare", help="all analytic methods next to the Monte Carlo oracle")
    _field_flags(p)
    p.add_argument("--b", required=True)
    p.add_argument("--replicates", type=int, default=10_000)
    p.add_argument("--samples", type=int, default=DEFAULT_SAMPLES)
    p.add_argument("--nu", choices=("series", "approx"), default="series")
    _global_flags(p, suppress=True)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("scan", help="two-locus chi-square scan with adjusted p-values")
    p.add_argument("--map", required=True, help="CSV: marker_id,chromosome,position_cM")
    p.add_argument("--genotypes", required=True, help="CSV: individual_id then one column per marker")
    p.add_argument("--design", choices=("f2", "bc"), default="f2")
    p.add_argument("--method", choices=("renewal", "tube", "both"), default="both")
    p.add_argument("--permutations", type=int, default=0)
    p.add_argument("--top-k", type=int, default=20)
    p.add_argument("--samples", type=int, default=DEFAULT_SAMPLES)
    p.add_argument("--nu", choices=("series", "approx"), default="series")
    _global_flags(p, suppress=True)
    p.set_defaults(func=cmd_scan)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except ChiFieldError as exc:
        print(f"chifield: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (ValueError, OSError) as exc:
        print(f"chifield: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
