"""Result rows, CSV emission, and per-cell aggregation.

Row schema (bit-exact header): experiment,method,size,rep,seconds,value,seed
where `value` carries the quantity being audited alongside the timing: the
log-likelihood for likelihood methods, the max constraint violation for
samplers, the RMSE for regression methods, and nnz(T) for basis rows.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

from ..errors import SchemaMismatch

RESULT_HEADER = ["experiment", "method", "size", "rep", "seconds", "value", "seed"]
AGGREGATE_HEADER = ["experiment", "method", "size", "n_reps",
                    "seconds_mean", "seconds_min", "seconds_max",
                    "value_mean", "value_min", "value_max", "value_sd"]

COLUMN_NOTES = """\
# results.csv columns
# column 1: experiment   experiment id (hard-timing | divfree-rmse | divfree-timing)
# column 2: method       timed method (standard | transformed | dense-cov | krige |
#                        alg3 | basis | unconstrained | constant)
# column 3: size         sweep parameter: k (constraints), n (basis size) or m (observations)
# column 4: rep          repetition index
# column 5: seconds      wall-clock seconds (monotonic timer, median of inner repeats)
# column 6: value        audited value: log-likelihood, RMSE, max|Ax-b|, or nnz(T)
# column 7: seed         master seed of the run
#
# aggregate.csv columns
# column 1: experiment
# column 2: method
# column 3: size
# column 4: n_reps        repetitions aggregated
# column 5: seconds_mean  plain average over repetitions
# column 6: seconds_min   envelope lower edge
# column 7: seconds_max   envelope upper edge
# column 8: value_mean
# column 9: value_min
# column 10: value_max
# column 11: value_sd     sample standard deviation (ddof=1; 0 for a single rep)
"""


@dataclass
class ResultRow:
    experiment: str
    method: str
    size: int
    rep: int
    seconds: float
    value: float
    seed: int

    def __post_init__(self):
        if self.seconds < 0:
            raise ValueError("wall time must be nonnegative")


def write_results(path, rows: list[ResultRow]):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RESULT_HEADER)
        for r in rows:
            w.writerow([r.experiment, r.method, r.size, r.rep,
                        f"{r.seconds:.9f}", f"{r.value:.17g}", r.seed])


def read_results(path) -> list[ResultRow]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != RESULT_HEADER:
            raise SchemaMismatch(f"expected header {RESULT_HEADER}, got {header}")
        rows = []
        for rec in reader:
            rows.append(ResultRow(rec[0], rec[1], int(rec[2]), int(rec[3]),
                                  float(rec[4]), float(rec[5]), int(rec[6])))
    return rows


def aggregate(rows: list[ResultRow]) -> list[dict]:
    """Per (experiment, method, size) cell: mean and min/max envelope for the
    timings, mean/min/max/sd for the audited values."""
    cells: dict[tuple, list[ResultRow]] = {}
    for r in rows:
        cells.setdefault((r.experiment, r.method, r.size), []).append(r)
    out = []
    for (exp, method, size), group in sorted(cells.items()):
        secs = [g.seconds for g in group]
        vals = [g.value for g in group if not math.isnan(g.value)]
        n = len(group)
        vm = sum(vals) / len(vals) if vals else float("nan")
        if len(vals) > 1:
            sd = math.sqrt(sum((v - vm) ** 2 for v in vals) / (len(vals) - 1))
        else:
            sd = 0.0
        out.append({
            "experiment": exp, "method": method, "size": size, "n_reps": n,
            "seconds_mean": sum(secs) / n, "seconds_min": min(secs),
            "seconds_max": max(secs),
            "value_mean": vm,
            "value_min": min(vals) if vals else float("nan"),
            "value_max": max(vals) if vals else float("nan"),
            "value_sd": sd,
        })
    return out


def write_aggregate(path, agg: list[dict]):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(AGGREGATE_HEADER)
        for rec in agg:
            w.writerow([rec["experiment"], rec["method"], rec["size"], rec["n_reps"],
                        f"{rec['seconds_mean']:.9f}", f"{rec['seconds_min']:.9f}",
                        f"{rec['seconds_max']:.9f}", f"{rec['value_mean']:.17g}",
                        f"{rec['value_min']:.17g}", f"{rec['value_max']:.17g}",
                        f"{rec['value_sd']:.17g}"])


def emit_plotdata(results_csv, out_csv, columns_path=None) -> list[dict]:
    """Aggregate a results CSV into the long-format plot-ready CSV and drop a
    gnuplot-style column description next to it."""
    rows = read_results(results_csv)
    agg = aggregate(rows)
    write_aggregate(out_csv, agg)
    if columns_path is None:
        columns_path = Path(out_csv).with_suffix(".columns.txt")
    Path(columns_path).write_text(COLUMN_NOTES)
    return agg
