"""Command-line interface.

Exit codes: 0 success, 1 check failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import sys

from .harness import RUNNERS, ConfigError, config_from_dict, load_config


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="airynls",
        description=(
            "Spectral simulation and verification lab for the Airy-Schrodinger "
            "equation: trajectories, conserved quantities, smoothed energies, "
            "cutoff-scaling experiments."
        ),
    )
    sub = parser.add_subparsers(dest="command")
    for name, help_text in (
        ("simulate", "integrate an initial-value problem and emit energy traces"),
        ("verify", "run the invariant suites at pinned sizes"),
        ("gauge-check", "evolve-then-gauge against gauge-then-evolve"),
        ("energy-scan", "smoothed-energy increments against the cutoff list"),
        ("rescale-check", "rescaling identities and the smallness certificate"),
        ("exact-residual", "closed-form solution residuals on the grid"),
    ):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", metavar="PATH", help="JSON config document")
        cmd.add_argument("--out", metavar="DIR", help="output directory")
        cmd.add_argument("--seed", type=int, help="random seed")
        cmd.add_argument("--workers", type=int, help="worker budget")
        cmd.add_argument("--k", type=int, dest="modes", help="grid mode count")
        cmd.add_argument("--box-length", type=float, help="periodic box length")
        cmd.add_argument("--n-cutoff", type=float, action="append",
                         help="multiplier cutoff (repeatable for scans)")
        cmd.add_argument("--sobolev-s", type=float, help="multiplier regularity index")
        cmd.add_argument("--no-plots", action="store_true", help="skip SVG output")
        if name == "verify":
            cmd.add_argument("--profile", choices=("default", "quick"),
                             help="check-suite size")
            cmd.add_argument("--self-test-mutation", choices=("delta4-sign",),
                             help="inject a deliberate defect; the suite must fail")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 2

    overrides = {
        "kind": args.command,
        "out_dir": args.out,
        "seed": args.seed,
        "workers": args.workers,
        "modes": args.modes,
        "box_length": args.box_length,
        "cutoffs": args.n_cutoff,
        "sobolev_s": args.sobolev_s,
    }
    if args.no_plots:
        overrides["plots"] = False
    if getattr(args, "profile", None):
        overrides["profile"] = args.profile

    try:
        if args.config:
            cfg = load_config(args.config, overrides)
        else:
            cfg = config_from_dict({"kind": args.command}, overrides)
        if getattr(args, "self_test_mutation", None):
            cfg.mutation = args.self_test_mutation
        code, _ = RUNNERS[cfg.kind](cfg)
        return code
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
