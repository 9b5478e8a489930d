"""Command-line entry point.

cgmrf bench <experiment> [--config FILE] [--out DIR] [--seed N]
            [--threads N] [--paper-scale] [--no-figures]
cgmrf plot <results.csv> --out DIR
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cgmrf",
                                description="constrained-GMRF benchmarks")
    sub = p.add_subparsers(dest="command", required=True)

    b = sub.add_parser("bench", help="run a benchmark experiment")
    from .bench import EXPERIMENTS
    b.add_argument("experiment", choices=EXPERIMENTS)
    b.add_argument("--config", type=Path, default=None,
                   help="flat key = value config file")
    b.add_argument("--out", type=Path, default=None, help="output directory")
    b.add_argument("--seed", type=int, default=None)
    b.add_argument("--threads", type=int, default=None)
    b.add_argument("--paper-scale", action="store_true",
                   help="paper-sized grids instead of desk-scale defaults")
    b.add_argument("--no-figures", action="store_true",
                   help="emit CSV data only")

    pl = sub.add_parser("plot", help="re-aggregate and render a results CSV")
    pl.add_argument("results", type=Path)
    pl.add_argument("--out", type=Path, required=True)
    return p


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "bench":
        from .bench import default_config, load_config, run_experiment
        cfg = default_config(args.experiment, paper_scale=args.paper_scale)
        if args.config is not None:
            cfg = load_config(args.config, base=cfg)
        overrides = {}
        if args.out is not None:
            overrides["out_dir"] = str(args.out)
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.threads is not None:
            overrides["threads"] = args.threads
        if args.no_figures:
            overrides["make_figures"] = False
        if overrides:
            cfg = replace(cfg, **overrides)
        res = run_experiment(cfg)
        for name, path in res["paths"].items():
            print(f"{name}: {path}")
        return 0
    if args.command == "plot":
        from .bench import emit_plotdata
        from .bench.figures import render
        from .bench.results import read_results
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        agg = emit_plotdata(args.results, out / "aggregate.csv")
        experiments = {r["experiment"] for r in agg}
        for exp in sorted(experiments):
            fig = render(exp, [r for r in agg if r["experiment"] == exp], out)
            print(f"figure: {fig}")
        print(f"aggregate: {out / 'aggregate.csv'}")
        return 0
    return 2


if __name__ == "__main__":
    sys.exit(main())
