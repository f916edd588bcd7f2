"""Command-line entry point: ``hevote bench | vote | certify``.

A failed sign certificate exits with 2; invalid input and usage errors
exit with 1.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .argmax import ARGMAX_METHODS, BoundsViolationError
from .backend import BackendError, BackendParams, CostModel, load_backend_params, make_backend
from .bench import DEFAULT_DIMS, run_bench, speedups, write_csv
from .ensemble import SchemaError, load_logits, run_vote, write_results
from .sign import MIN_GRID, SignConfig, certify

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_CERT_FAILED = 2

log = logging.getLogger("hevote")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _str_list(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def _grid(text: str) -> int:
    try:
        value = int(float(text))
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if value < MIN_GRID:
        raise argparse.ArgumentTypeError(f"grid must be at least {MIN_GRID}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hevote", description="Encrypted argmax voting kernels on a simulated CKKS backend.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    b = sub.add_parser("bench", help="compare secpe and phoenix argmax over window sizes")
    b.add_argument("--dims", type=_int_list, default=list(DEFAULT_DIMS))
    b.add_argument("--method", type=_str_list, default=["secpe", "phoenix"])
    b.add_argument("--backend", choices=["exact", "sim"], default="sim")
    b.add_argument("--seed", type=int, required=True)
    b.add_argument("--out", type=Path, default=Path("results.csv"))
    b.add_argument("--config", type=Path, help="backend parameters (TOML or JSON)")
    b.add_argument("--jobs", type=int, default=1)
    b.add_argument("--no-wall", action="store_true", help="write wall_ms as 0 for reproducible files")

    v = sub.add_parser("vote", help="private aggregate-then-argmax over a logit file")
    v.add_argument("--logits", type=Path, required=True)
    v.add_argument("--config", type=Path, help="backend parameters (TOML or JSON)")
    v.add_argument("--out", type=Path, default=Path("results.jsonl"))
    v.add_argument("--breakdown", type=Path, help="also write the per-phase cost breakdown here")
    v.add_argument("--backend", choices=["exact", "sim"], default="exact")
    v.add_argument("--method", choices=sorted(ARGMAX_METHODS), default="secpe")
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--jobs", type=int, default=1)

    for name in ("certify", "certify-sign"):
        c = sub.add_parser(name, help="measure the sign approximation error over the margin region")
        c.add_argument("--alpha", type=int, default=12)
        c.add_argument("--df", type=int, default=2)
        c.add_argument("--dg", type=int, default=2)
        c.add_argument("--degree", type=int, default=9, help="degree of both f and g")
        c.add_argument("--grid", type=_grid, default=1_000_000)
        c.add_argument("--random", type=int, default=100_000, help="extra uniform random points")
        c.add_argument("--seed", type=int, default=0)
    return parser


def _load_config(path: Path | None) -> tuple[BackendParams, CostModel]:
    if path is None:
        return BackendParams(), CostModel()
    return load_backend_params(path)


def cmd_bench(args) -> int:
    params, costs = _load_config(args.config)
    records = run_bench(
        args.dims,
        args.method,
        args.backend,
        seed=args.seed,
        params=params,
        cost_model=costs,
        n_jobs=args.jobs,
        include_wall=not args.no_wall,
    )
    write_csv(records, args.out)
    for n, ratio in speedups(records).items():
        log.info("n=%d modeled speedup %.2fx", n, ratio)
    print(json.dumps({"out": str(args.out), "rows": len(records)}))
    return EXIT_OK


def cmd_vote(args) -> int:
    params, costs = _load_config(args.config)
    batch = load_logits(args.logits)
    backend = make_backend(args.backend, params, costs, seed=args.seed)
    report = run_vote(batch, backend, method=args.method, n_jobs=args.jobs)
    write_results(report.results, args.out)
    summary = {
        "examples": len(report.results),
        "passes": report.passes,
        "breakdown": report.breakdown.as_dict(),
        "counters": report.counters.as_dict(),
    }
    if args.breakdown is not None:
        args.breakdown.write_text(json.dumps(summary, indent=2) + "\n")
    print(json.dumps(summary))
    return EXIT_OK


def cmd_certify(args) -> int:
    config = SignConfig(alpha=args.alpha, d_f=args.df, d_g=args.dg, deg_f=args.degree, deg_g=args.degree)
    cert = certify(config, args.grid, n_random=args.random, seed=args.seed)
    print(json.dumps(cert.as_dict()))
    return EXIT_OK if cert.passed else EXIT_CERT_FAILED


COMMANDS = {"bench": cmd_bench, "vote": cmd_vote, "certify": cmd_certify, "certify-sign": cmd_certify}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (SchemaError, BoundsViolationError, BackendError, ValueError, OSError) as exc:
        print(f"hevote {args.command}: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
