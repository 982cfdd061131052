"""``cmm-bench``: scaling sweeps, slope fits, fixture generation and self-checks.

Exit codes: 0 success, 2 usage error, 3 failed ``verify``.
"""

import argparse
import logging
import sys

from .bench import SweepSpec, emit_records, fit_slope, group_by_connector, read_records, run_sweep
from .config import CmmConfig
from .errors import CmmError, ParameterError, UsageError
from .fixtures import CONNECTORS, generate_connector_weights, save_bundle
from .verify import run_verify

EXIT_USAGE = 2
EXIT_VERIFY_FAILED = 3


def _int_list(text):
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of integers, got {text!r}")


def _name_list(text):
    return tuple(v.strip() for v in text.split(",") if v.strip())


def _add_shape_flags(p, T_default):
    p.add_argument("--backend", default="diagonal_lti",
                   help="diagonal_lti (alias s4d) or selective_scan (alias mamba)")
    p.add_argument("--T", type=_int_list, default=T_default, help="sequence length(s), comma separated")
    p.add_argument("--G", type=int, default=5, help="number of grids")
    p.add_argument("--D", type=int, default=64, help="text channel width D_t (grids use the same)")
    p.add_argument("--heads", type=int, default=4)
    p.add_argument("--k", type=int, default=4, help="grids retained per token")
    p.add_argument("--seed", type=int, default=0)


def build_parser():
    parser = argparse.ArgumentParser(prog="cmm-bench", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sweep", help="time forward passes over a range of T")
    p.add_argument("--connector", type=_name_list, default=("cmm",),
                   help=f"comma list drawn from {', '.join(CONNECTORS)}")
    _add_shape_flags(p, (256, 512, 1024, 2048, 4096, 8192))
    p.add_argument("--repeats", type=int, default=20)
    p.add_argument("--warmup", type=int, default=3)
    p.add_argument("--jobs", type=int, default=1, help="run sweep points concurrently")
    p.add_argument("--no-interleave", dest="interleave", action="store_false",
                   help="time each point's calls back to back instead of in round-robin")
    p.add_argument("--out", help="output path (default: stdout)")
    p.add_argument("--format", choices=("csv", "jsonl"), default="csv")

    p = sub.add_parser("fit", help="fit log-log slopes to a records file")
    p.add_argument("records", help="CSV or JSON-lines file written by `sweep`")
    p.add_argument("--connector", type=_name_list, default=None)

    p = sub.add_parser("gen-fixtures", help="write a seeded weight bundle")
    p.add_argument("--connector", default="cmm", choices=CONNECTORS)
    _add_shape_flags(p, (16,))
    p.add_argument("--out", required=True, help="bundle path")

    p = sub.add_parser("verify", help="run the invariant suite and ablation matrix")
    p.add_argument("--seed", type=int, default=0)
    return parser


def _print_reports(records, stream):
    for connector, rs in group_by_connector(records).items():
        if len(rs) < 5:
            print(f"{connector}: {len(rs)} points, need 5 to fit a slope", file=stream)
            continue
        rep = fit_slope(rs)
        band = f" band={list(rep.band)} {'PASS' if rep.passed else 'FAIL'}" if rep.band else ""
        print(f"{connector}: slope={rep.slope:.3f} R2={rep.r_squared:.4f} n={rep.n_points}{band}", file=stream)


def cmd_sweep(args):
    spec = SweepSpec(
        connectors=args.connector, T_values=args.T, backend=args.backend, G=args.G,
        D_t=args.D, H=args.heads, k=args.k, repeats=args.repeats, warmup=args.warmup,
        seed=args.seed, jobs=args.jobs, interleave=args.interleave,
    )
    records = run_sweep(spec)
    emit_records(records, args.format, args.out or "/dev/stdout")
    _print_reports(records, sys.stderr)
    return 0


def cmd_fit(args):
    records = read_records(args.records)
    if args.connector:
        records = [r for r in records if r.connector in args.connector]
    _print_reports(records, sys.stdout)
    return 0


def cmd_gen_fixtures(args):
    if len(args.T) != 1:
        raise UsageError("T", "gen-fixtures takes a single sequence length")
    try:
        cfg = CmmConfig(T=args.T[0], G=args.G, D_t=args.D, H=args.heads, k=args.k, backend=args.backend)
    except (ParameterError, ValueError) as exc:
        raise UsageError("config", str(exc)) from None
    w = generate_connector_weights(args.connector, cfg, args.seed)
    save_bundle(w, cfg, args.out, seed=args.seed)
    print(f"wrote {args.connector} bundle to {args.out}")
    return 0


def cmd_verify(args):
    results = run_verify(seed=args.seed)
    for r in results:
        print(r.line())
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return EXIT_VERIFY_FAILED if failed else 0


COMMANDS = {"sweep": cmd_sweep, "fit": cmd_fit, "gen-fixtures": cmd_gen_fixtures, "verify": cmd_verify}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"cmm-bench {args.command}: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (CmmError, OSError) as exc:
        print(f"cmm-bench {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
