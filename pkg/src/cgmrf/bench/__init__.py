"""Benchmark experiments: desk-scale reproductions of the timing and
regression studies, with CSV outputs, plot-ready aggregates, and rendered
figures."""

from __future__ import annotations

import platform
import sys
from pathlib import Path

from .config import EXPERIMENTS, ExperimentConfig, config_echo, default_config, load_config
from .divfree import run_divfree, test_function
from .hard_timing import run_hard_timing
from .results import (ResultRow, aggregate, emit_plotdata, read_results,
                      write_results)

__all__ = [
    "EXPERIMENTS", "ExperimentConfig", "default_config", "load_config",
    "ResultRow", "run_hard_timing", "run_divfree", "run_experiment",
    "emit_plotdata", "aggregate", "read_results", "write_results",
    "test_function",
]


def _run_meta(cfg: ExperimentConfig) -> str:
    import numpy
    import scipy

    import cgmrf
    lines = [
        f"cgmrf {cgmrf.__version__}",
        f"python {sys.version.split()[0]}",
        f"numpy {numpy.__version__}",
        f"scipy {scipy.__version__}",
        f"hostname {platform.node()}",
        f"platform {platform.platform()}",
        "",
        "# configuration",
        config_echo(cfg),
    ]
    return "\n".join(lines)


def run_experiment(cfg: ExperimentConfig) -> dict:
    """Run one experiment end to end: results.csv, aggregate.csv (plus the
    column description), run-meta.txt, and the rendered figure."""
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if cfg.experiment == "hard-timing":
        rows = run_hard_timing(cfg)
    elif cfg.experiment in ("divfree-rmse", "divfree-timing"):
        rows = run_divfree(cfg)
    else:
        raise ValueError(f"unknown experiment {cfg.experiment!r}")
    results_csv = out / "results.csv"
    write_results(results_csv, rows)
    agg = emit_plotdata(results_csv, out / "aggregate.csv")
    (out / "run-meta.txt").write_text(_run_meta(cfg))
    paths = {"results": results_csv, "aggregate": out / "aggregate.csv",
             "meta": out / "run-meta.txt"}
    if cfg.make_figures:
        from .figures import render
        paths["figure"] = render(cfg.experiment, agg, out)
    return {"rows": rows, "aggregate": agg, "paths": paths}
