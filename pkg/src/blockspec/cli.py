"""Command line interface: ``blockspec MODE [options]``.

Exit status is 0 on success, 1 for configuration errors and 2 for
numerical failures (including failed self-test or spectrum checks).
"""

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from .ensembles import Dims
from .errors import ConfigError, NumericalError
from .harness import (
    DEFAULT_CONJECTURE_N,
    MODES,
    RunConfig,
    default_threads,
    emit,
    run,
    theorem_schedule,
)

DEFAULT_REPLICATES = {"theorem": 4, "conjecture": 4, "single": 1, "dependence": 1, "laws-selftest": 1}


def load_schedule(path):
    """Read ``[{"n":.., "p":.., "q":..}, ...]`` (JSON) or a CSV with header ``n,p[,q]``."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read schedule {path}: {exc}") from None
    try:
        if path.suffix.lower() == ".json":
            entries = json.loads(text)
        else:
            entries = list(csv.DictReader(text.splitlines()))
        return [
            Dims(n=int(e["n"]), p=int(e["p"]), q=int(e["q"]) if e.get("q") not in (None, "") else None)
            for e in entries
        ]
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"malformed schedule {path}: {exc}") from None


def _float_list(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated reals, got {text!r}") from None


def _formats(text):
    fmts = [f.strip().lower() for f in text.split(",") if f.strip()]
    bad = set(fmts) - {"json", "csv"}
    if bad:
        raise argparse.ArgumentTypeError(f"unknown format(s): {', '.join(sorted(bad))}")
    return fmts


def build_parser():
    parser = argparse.ArgumentParser(
        prog="blockspec",
        description="Monte Carlo and analytic checks for spectra of block-rescaled covariance matrices.",
    )
    parser.add_argument("mode", choices=MODES)
    parser.add_argument("--n", type=int, help="sample size")
    parser.add_argument("--p", type=int, help="first block size (default n/2 - 1)")
    parser.add_argument("--q", type=int, help="second block size (default p)")
    parser.add_argument("--schedule", help="JSON or CSV file of (n, p[, q]) entries")
    parser.add_argument("--replicates", type=int, help="replicates per cell")
    parser.add_argument("--seed", type=int, default=42)
    parser.add_argument("--kmax", type=int, default=4, help="highest moment compared")
    parser.add_argument("--bins", type=int, default=50)
    parser.add_argument("--c-grid", type=_float_list, help="conjecture grid of c = 2p/n values")
    parser.add_argument("--data", help="dependence mode: d x n CSV of reals, rows are coordinates")
    parser.add_argument("--out", help="output directory; nothing is written without it")
    parser.add_argument("--format", type=_formats, default=["json", "csv"], help="json,csv")
    parser.add_argument("--denominator-doubled", action="store_true",
                        help="divide the Bures coefficient by 2(2 - sqrt 2) min(p, q)")
    parser.add_argument("--free-range", action="store_true",
                        help="histogram over [min, max] eigenvalue instead of [0, 2]")
    parser.add_argument("--no-figures", action="store_true", help="skip PNG figures")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def config_from_args(args):
    if args.mode == "conjecture":
        schedule = []
    elif args.schedule:
        schedule = load_schedule(args.schedule)
    elif args.n is not None and not (args.mode == "dependence" and args.data):
        p = args.p if args.p is not None else args.n // 2 - 1
        schedule = [Dims(n=args.n, p=p, q=args.q)]
    elif args.mode == "theorem":
        schedule = theorem_schedule()
    else:
        schedule = []
    if args.mode in ("single",) and not schedule:
        raise ConfigError("single mode needs --n (and optionally --p, --q)")
    cfg = RunConfig(
        mode=args.mode,
        schedule=schedule,
        replicates=args.replicates or DEFAULT_REPLICATES[args.mode],
        seed=args.seed,
        kmax=args.kmax,
        bins=args.bins,
        denominator_doubled=args.denominator_doubled,
        fixed_range=not args.free_range,
        data=args.data,
        split=args.p,
        conjecture_n=args.n or DEFAULT_CONJECTURE_N,
        threads=default_threads(),
    )
    if args.c_grid is not None:
        cfg.c_grid = args.c_grid
    return cfg.validate()


def summarize(result):
    lines = [f"mode: {result.mode}"]
    for cell in result.cells:
        if "aggregate" in cell:
            agg = cell["aggregate"]
            parts = [f"n={cell['n']} p={cell['p']} q={cell['q']} c={cell['c']:.4f}"]
            for law in ("arcsine", "kesten-mckay"):
                if law in agg:
                    parts.append(f"{law}: median W1={agg[law]['w1']['median']:.4g} "
                                 f"median KS={agg[law]['ks']['median']:.4g}")
            lines.append("  " + " | ".join(parts))
        else:
            lines.append(f"  {cell['source']} rep={cell['replicate']} "
                         f"D={cell['dep_coefficient']:.6g} RV={cell['adjusted_rv']:.6g}")
    for check in result.checks:
        status = "PASS" if check["passed"] else "FAIL"
        lines.append(f"  [{status}] {check['name']}: {check['value']}"
                     + (f" (tol {check['tolerance']})" if check["tolerance"] is not None else ""))
    return "\n".join(lines)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_from_args(args)
        result = run(cfg)
        if args.out:
            emit(result, args.out, formats=args.format, figures=not args.no_figures)
    except ConfigError as exc:
        print(f"blockspec: configuration error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"blockspec: numerical failure: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"blockspec: {exc}", file=sys.stderr)
        return 1
    print(summarize(result))
    return 0 if result.passed else 2


if __name__ == "__main__":
    sys.exit(main())
