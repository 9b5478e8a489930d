"""Experiment configuration: defaults per experiment plus a flat key=value
config-file override layer."""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from pathlib import Path

EXPERIMENTS = ("hard-timing", "divfree-rmse", "divfree-timing")


@dataclass
class ExperimentConfig:
    experiment: str
    out_dir: str = "bench-out"
    seed: int = 20240517
    repetitions: int = 10
    inner_repeats: int = 3
    threads: int = 1
    paper_scale: bool = False
    make_figures: bool = True

    # hard-timing
    mesh_nx: int = 60
    k_grid: tuple = (50, 200, 800, 2000)
    kappa2_range: tuple = (1.0, 2.0)
    phi_range: tuple = (1.0, 2.0)
    sim_kappa2: float = 0.5
    sim_phi: float = 1.0
    alpha: int = 2

    # divergence-free regression
    n_grid: tuple = (400, 900, 1600, 2500)
    m_grid: tuple = (100, 400, 800, 1600)
    n_fixed: int = 3600
    n_obs: int = 50
    pred_grid: int = 20
    domain: tuple = (0.0, 4.0, 0.0, 4.0)
    extension: tuple = (-2.0, 6.0, -2.0, 6.0)
    test_a: float = 0.01
    noise_level: float = 1e-4
    noise_is_sd: bool = True          # interpret 1e-4 as sd (else variance)
    f_variant: str = "divfree"        # "divfree" | "verbatim"
    divfree_alpha: int = 4
    stride: int = 3
    fit_maxiter: int = 120
    include_unconstrained: bool = False

    def noise_var(self) -> float:
        return self.noise_level ** 2 if self.noise_is_sd else self.noise_level


_PAPER_OVERRIDES = {
    "hard-timing": dict(mesh_nx=100, k_grid=(50, 200, 800, 2000, 5000, 10000)),
    "divfree-rmse": dict(n_grid=(400, 900, 1600, 2500, 3600), repetitions=50),
    "divfree-timing": dict(m_grid=(50, 200, 600, 1200, 2400)),
}


def default_config(experiment: str, paper_scale: bool = False) -> ExperimentConfig:
    if experiment not in EXPERIMENTS:
        raise ValueError(f"unknown experiment {experiment!r}; choose from {EXPERIMENTS}")
    cfg = ExperimentConfig(experiment=experiment)
    if paper_scale:
        cfg = replace(cfg, paper_scale=True, **_PAPER_OVERRIDES.get(experiment, {}))
    return cfg


def _parse_value(raw: str, kind):
    raw = raw.strip()
    if kind is bool:
        return raw.lower() in ("1", "true", "yes", "on")
    if kind is int:
        return int(raw)
    if kind is float:
        return float(raw)
    if kind is tuple:
        toks = [t for t in raw.replace(",", " ").split() if t]
        vals = [float(t) for t in toks]
        return tuple(int(v) if v == int(v) else v for v in vals)
    return raw


def load_config(path, base: ExperimentConfig | None = None) -> ExperimentConfig:
    """Flat key = value text file; '#' starts a comment; lists are
    comma-separated."""
    text = Path(path).read_text()
    overrides = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value'")
        key, raw = line.split("=", 1)
        overrides[key.strip().replace("-", "_")] = raw
    if base is None:
        exp = overrides.pop("experiment", "").strip()
        base = default_config(exp)
    typed = {}
    by_name = {f.name: f for f in fields(ExperimentConfig)}
    for key, raw in overrides.items():
        if key == "experiment":
            continue
        if key not in by_name:
            raise ValueError(f"unknown config key {key!r}")
        current = getattr(base, key)
        typed[key] = _parse_value(raw, type(current))
    return replace(base, **typed)


def config_echo(cfg: ExperimentConfig) -> str:
    lines = [f"{f.name} = {getattr(cfg, f.name)}" for f in fields(cfg)]
    return "\n".join(lines) + "\n"
