"""Render the benchmark figures from aggregated results.

One PNG per experiment, written alongside the CSV output: timing curves
with min/max envelopes for the hard-constraint study, RMSE curves with a
95% pointwise band for the regression study.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

_STYLE = {
    "standard": dict(color="tab:blue", label="standard (kriging route)"),
    "transformed": dict(color="tab:red", label="transformed basis"),
    "dense-cov": dict(color="black", label="dense covariance"),
    "krige": dict(color="tab:blue", label="conditioning by kriging"),
    "alg3": dict(color="tab:red", label="transformed sampler"),
    "unconstrained": dict(color="tab:green", label="unconstrained"),
    "constant": dict(color="tab:blue", label="constant predictor"),
}


def _cells(agg, methods):
    out = {}
    for rec in agg:
        if rec["method"] in methods:
            out.setdefault(rec["method"], []).append(rec)
    for recs in out.values():
        recs.sort(key=lambda r: r["size"])
    return out


def _time_panel(ax, agg, methods, xlabel):
    for method, recs in _cells(agg, methods).items():
        x = [r["size"] for r in recs]
        mean = [r["seconds_mean"] for r in recs]
        lo = [r["seconds_min"] for r in recs]
        hi = [r["seconds_max"] for r in recs]
        st = _STYLE[method]
        ax.plot(x, mean, "o-", color=st["color"], label=st["label"])
        ax.fill_between(x, lo, hi, color=st["color"], alpha=0.2, linewidth=0)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel("seconds")
    ax.legend(fontsize=8)
    ax.grid(True, which="both", alpha=0.3)


def render_hard_timing(agg, out_path):
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.6))
    _time_panel(axes[0], agg, ("standard", "transformed", "dense-cov"),
                "number of constraints k")
    axes[0].set_title("one likelihood evaluation")
    _time_panel(axes[1], agg, ("krige", "alg3"), "number of constraints k")
    axes[1].set_title("one conditional sample")
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)


def render_divfree_rmse(agg, out_path):
    fig, ax = plt.subplots(figsize=(5.5, 3.8))
    for method, recs in _cells(
            agg, ("transformed", "dense-cov", "constant", "unconstrained")).items():
        x = [r["size"] for r in recs]
        mean = [r["value_mean"] for r in recs]
        st = _STYLE[method]
        ax.plot(x, mean, "o-", color=st["color"], label=st["label"])
        if method == "transformed":
            band = [1.96 * r["value_sd"] / max(r["n_reps"], 1) ** 0.5
                    for r in recs]
            lo = [m - b for m, b in zip(mean, band)]
            hi = [m + b for m, b in zip(mean, band)]
            ax.fill_between(x, lo, hi, color=st["color"], alpha=0.2, linewidth=0)
    ax.set_xlabel("basis functions n (per component)")
    ax.set_ylabel("RMSE")
    ax.legend(fontsize=8)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)


def render_divfree_timing(agg, out_path):
    fig, ax = plt.subplots(figsize=(5.5, 3.8))
    _time_panel(ax, agg, ("transformed", "dense-cov"),
                "number of observations m")
    ax.set_title("prediction time")
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)


def render(experiment: str, agg, out_dir) -> Path:
    out_dir = Path(out_dir)
    out_path = out_dir / f"fig_{experiment}.png"
    if experiment == "hard-timing":
        render_hard_timing(agg, out_path)
    elif experiment == "divfree-rmse":
        render_divfree_rmse(agg, out_path)
    elif experiment == "divfree-timing":
        render_divfree_timing(agg, out_path)
    else:
        raise ValueError(f"no figure recipe for {experiment!r}")
    return out_path
