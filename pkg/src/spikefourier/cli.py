"""Command-line interface for the experiment drivers.

Exit codes: 0 success, 2 usage error, 1 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys

from .errors import ToolkitError
from .experiments import (
    run_adversary_demo,
    run_decimate,
    run_figure1,
    run_gap_bound,
    run_scaling,
    run_tables,
)

__all__ = ["cli_main", "main"]


def _common_flags(parser: argparse.ArgumentParser, default_out: str) -> None:
    parser.add_argument("--out", default=default_out, help="output directory")
    parser.add_argument("--seed", type=int, default=0, help="base RNG seed")
    parser.add_argument("--json", action="store_true", help="print the manifest as JSON on stdout")
    parser.add_argument("--jobs", type=int, default=1, help="worker pool size for sweep cells")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spikefourier",
        description="Spike-train Fourier reconstruction experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("tables", help="emit the benchmark pair parameter and moment tables")
    p.add_argument("--h", type=float, default=0.1)
    p.add_argument("--eta", type=float, default=0.05)
    _common_flags(p, "runs/tables")

    p = sub.add_parser("figure1", help="emit the normalized gap curves of the benchmark pairs")
    p.add_argument("--h", type=float, default=0.1)
    p.add_argument("--eta", type=float, default=0.05)
    p.add_argument("--s-max", type=float, default=1.0)
    p.add_argument("--samples", type=int, default=512)
    _common_flags(p, "runs/figure1")

    p = sub.add_parser("gap-bound", help="check the gap envelope on random adversarial pairs")
    p.add_argument("--l", type=int, nargs="+", default=[2, 3])
    p.add_argument("--trials", type=int, default=25)
    p.add_argument("--h", type=float, default=0.1)
    _common_flags(p, "runs/gap_bound")

    p = sub.add_parser("scaling", help="worst-case error scaling sweep with slope fit")
    p.add_argument("--l", type=int, required=True)
    p.add_argument("--bandwidth", "-N", type=float, default=10.0)
    p.add_argument(
        "--epsilons",
        type=float,
        nargs="+",
        default=[1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8, 1e-9],
        help="descending noise ladder",
    )
    p.add_argument("--trials", type=int, default=3)
    _common_flags(p, "runs/scaling")

    p = sub.add_parser("adversary", help="construct one adversarial pair and its gap profile")
    p.add_argument("--l", type=int, default=2)
    p.add_argument("--h", type=float, default=0.1)
    p.add_argument("--eta", type=float, default=0.05)
    p.add_argument("--family", choices=["F1", "F3", "F5"], default=None)
    p.add_argument("--s-max", type=float, default=None)
    p.add_argument("--samples", type=int, default=512)
    _common_flags(p, "runs/adversary")

    p = sub.add_parser("decimate", help="reconstruct a signal JSON from a noisy oracle")
    p.add_argument("--signal", required=True, help="path to a signal JSON file")
    p.add_argument("--epsilon", type=float, default=0.0)
    p.add_argument("--bandwidth", "-N", type=float, default=10.0)
    p.add_argument("--order", type=int, required=True, help="model order d")
    p.add_argument("--node-bound", type=float, required=True, help="a-priori bound max|x_j| <= T")
    p.add_argument("--levels", type=int, default=3)
    p.add_argument("--config", default=None, help="JSON file overriding the solver settings")
    _common_flags(p, "runs/decimate")

    return parser


def cli_main(argv) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(list(argv))
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0

    try:
        if args.command == "tables":
            manifest = run_tables(args.h, args.eta, args.out)
        elif args.command == "figure1":
            manifest = run_figure1(args.h, args.eta, args.s_max, args.samples, args.out)
        elif args.command == "gap-bound":
            manifest = run_gap_bound(args.l, args.trials, args.h, args.seed, args.out)
        elif args.command == "scaling":
            manifest = run_scaling(
                args.l, args.bandwidth, args.epsilons, args.trials, args.seed, args.out,
                jobs=args.jobs,
            )
        elif args.command == "adversary":
            manifest = run_adversary_demo(
                args.l, args.h, args.eta, args.seed, args.out,
                family=args.family, s_max=args.s_max, samples=args.samples,
            )
        elif args.command == "decimate":
            order, node_bound, levels = args.order, args.node_bound, args.levels
            if args.config:
                from .decimation import DecimationConfig

                with open(args.config) as fh:
                    cfg = DecimationConfig.from_json(fh.read())
                order, node_bound, levels = cfg.model_order, cfg.node_bound, cfg.levels
            manifest = run_decimate(
                args.signal, args.epsilon, args.bandwidth, order, node_bound,
                levels, args.seed, args.out,
            )
        else:  # pragma: no cover
            print(f"unknown command {args.command!r}", file=sys.stderr)
            return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ToolkitError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    if args.json:
        print(json.dumps(manifest.to_dict(), indent=2, sort_keys=True))
    else:
        print(f"wrote {len(manifest.outputs)} file(s) to {manifest.spec.output_dir}")
    return 0


def main() -> None:
    sys.exit(cli_main(sys.argv[1:]))


if __name__ == "__main__":
    main()
