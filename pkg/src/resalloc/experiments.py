"""Multi-seed experiments on random quadratic instances.

Reproduces the numerical study setup: ``n`` producers with costs
``alpha_k x + mu x^2 / 2``, a demand of ``C`` and random linear coefficients.
Every (method, mu, seed) cell runs independently, so cells execute on a
thread pool and are merged back in a fixed key order before anything is
written. Output bytes therefore do not depend on thread scheduling.
"""

from __future__ import annotations

import csv
import json
import math
import os
import platform
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .certificates import theorem2_bounds
from .errors import InvalidInputError
from .model import QuadraticCost, ScalarInstance
from .solvers import METHODS, SolverConfig, solve

__all__ = [
    "GENERATOR",
    "ExperimentSpec",
    "MetricSeries",
    "ExperimentResult",
    "generate_instance",
    "run_experiment",
    "sweep_mu",
    "emit_plots",
    "log_points",
    "METRICS",
]

GENERATOR = "numpy.random.Philox"
METRICS = ("dual_value", "infeasibility", "duality_gap")
_FILE_STEM = {m: f"{m}_log" for m in METRICS}


@dataclass(frozen=True)
class ExperimentSpec:
    """Experiment constants.

    ``mu`` is either one modulus or a sweep list. ``alpha_dist`` selects
    uniform on ``[alpha_lo, alpha_hi]`` or a normal with ``alpha_mean`` and
    ``alpha_sd`` truncated to the same interval. ``eps`` is only used by
    subgradient cells, which are always capped at ``N`` iterations; when it
    is unset they target the composite method's guaranteed gap after ``N``
    iterations.
    """

    n: int = 100
    C: float = 10000.0
    alpha_dist: str = "uniform"
    alpha_lo: float = 100.0
    alpha_hi: float = 400.0
    alpha_mean: float = 250.0
    alpha_sd: float = 50.0
    mu: float | tuple = 2.0
    seeds: tuple = tuple(range(20))
    methods: tuple = ("composite", "accelerated")
    N: int = 1000
    record_cadence: Optional[int] = None
    eps: Optional[float] = None
    name: str = "resalloc"
    workers: Optional[int] = None

    def __post_init__(self):
        mu = self.mu
        if isinstance(mu, (list, tuple, np.ndarray)):
            object.__setattr__(self, "mu", tuple(float(v) for v in mu))
        else:
            object.__setattr__(self, "mu", float(mu))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        object.__setattr__(self, "methods", tuple(self.methods))

    @property
    def mus(self) -> tuple:
        return self.mu if isinstance(self.mu, tuple) else (self.mu,)

    @property
    def is_sweep(self) -> bool:
        return isinstance(self.mu, tuple)

    def check(self) -> None:
        if int(self.n) != self.n or self.n < 1:
            raise InvalidInputError(f"n must be a positive integer, got {self.n!r}")
        if not (math.isfinite(self.C) and self.C > 0):
            raise InvalidInputError("C must be positive")
        if not self.mus or not all(math.isfinite(m) and m > 0 for m in self.mus):
            raise InvalidInputError("mu must be a nonempty list of positive values")
        if not self.seeds:
            raise InvalidInputError("seeds must be nonempty")
        if any(s < 0 for s in self.seeds):
            raise InvalidInputError("seeds must be nonnegative")
        if not self.methods or any(m not in METHODS for m in self.methods):
            raise InvalidInputError(f"methods must be a nonempty subset of {METHODS}")
        if int(self.N) != self.N or self.N < 1:
            raise InvalidInputError("N must be a positive integer")
        lo, hi = self.alpha_lo, self.alpha_hi
        if not (math.isfinite(lo) and math.isfinite(hi) and 0 <= lo <= hi):
            raise InvalidInputError("alpha bounds must satisfy 0 <= lo <= hi")
        if self.alpha_dist == "normal":
            if not (math.isfinite(self.alpha_sd) and self.alpha_sd > 0):
                raise InvalidInputError("alpha_sd must be positive")
            if not math.isfinite(self.alpha_mean):
                raise InvalidInputError("alpha_mean must be finite")
            if lo == hi:
                raise InvalidInputError("truncated normal needs alpha_lo < alpha_hi")
        elif self.alpha_dist != "uniform":
            raise InvalidInputError(f"unknown alpha distribution {self.alpha_dist!r}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mu"] = list(self.mus) if self.is_sweep else self.mu
        d["seeds"] = list(self.seeds)
        d["methods"] = list(self.methods)
        return d


def _rng(spec: ExperimentSpec, seed: int) -> np.random.Generator:
    # counter-based stream keyed on (seed, experiment name)
    key = zlib.crc32(spec.name.encode("utf-8"))
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), key])))


def _draw_alpha(spec: ExperimentSpec, rng: np.random.Generator) -> np.ndarray:
    n, lo, hi = spec.n, spec.alpha_lo, spec.alpha_hi
    if spec.alpha_dist == "uniform":
        return rng.uniform(lo, hi, size=n)
    out = np.empty(0)
    while out.size < n:
        draw = rng.normal(spec.alpha_mean, spec.alpha_sd, size=2 * n)
        out = np.concatenate([out, draw[(draw >= lo) & (draw <= hi)]])
    return out[:n]


def generate_instance(spec: ExperimentSpec, seed: int, mu: Optional[float] = None) -> ScalarInstance:
    """Random quadratic instance for one seed.

    The linear coefficients depend only on ``(spec, seed)``, so every modulus
    of a sweep sees the same producers. ``mu`` defaults to the spec's single
    modulus.
    """
    spec.check()
    if mu is None:
        if spec.is_sweep:
            raise InvalidInputError("spec holds a mu sweep; pass mu explicitly")
        mu = spec.mu
    mu = float(mu)
    if not (math.isfinite(mu) and mu > 0):
        raise InvalidInputError("mu must be positive")
    alpha = _draw_alpha(spec, _rng(spec, seed))
    meta = {
        "seed": int(seed),
        "generator": GENERATOR,
        "experiment": spec.name,
        "alpha_dist": spec.alpha_dist,
    }
    costs = tuple(QuadraticCost(float(a), mu) for a in alpha)
    return ScalarInstance(costs, spec.C, meta)


@dataclass(frozen=True)
class MetricSeries:
    """Recorded metrics of one cell, or the cross-seed mean (``seed=None``)."""

    method: str
    mu: float
    seed: Optional[int]
    iterations: np.ndarray
    dual_value: np.ndarray
    infeasibility: np.ndarray
    duality_gap: np.ndarray

    def metric(self, name: str) -> np.ndarray:
        if name not in METRICS:
            raise KeyError(name)
        return getattr(self, name)

    def final(self, name: str) -> float:
        return float(self.metric(name)[-1])


@dataclass
class ExperimentResult:
    spec: ExperimentSpec
    cells: dict = field(default_factory=dict)
    failures: dict = field(default_factory=dict)
    means: dict = field(default_factory=dict)

    @property
    def succeeded(self) -> int:
        return len(self.cells)

    def summary(self) -> list[dict]:
        """Final mean metrics per (mu, method); ``abs_gap`` is ``|f(x) + phi(p)|``."""
        rows = []
        for mu in self.spec.mus:
            for method in self.spec.methods:
                s = self.means.get((method, mu))
                ok = sum(1 for (m, u, _) in self.cells if m == method and u == mu)
                row = {"mu": mu, "method": method, "runs": ok}
                if s is not None:
                    finals = [c.final("duality_gap") for (m, u, _), c in self.cells.items()
                              if m == method and u == mu]
                    row.update(
                        dual_value=s.final("dual_value"),
                        infeasibility=s.final("infeasibility"),
                        duality_gap=s.final("duality_gap"),
                        abs_gap=float(np.mean(np.abs(finals))),
                    )
                rows.append(row)
        return rows


def _run_cell(spec: ExperimentSpec, method: str, mu: float, seed: int) -> MetricSeries:
    inst = generate_instance(spec, seed, mu)
    eps = spec.eps
    if method == "subgradient" and eps is None:
        # aim at the accuracy the composite method guarantees after N steps
        eps = theorem2_bounds(inst, spec.N)["gap_bound"]
    cfg = SolverConfig(method=method, iterations=spec.N, eps=eps,
                       record_cadence=spec.record_cadence)
    run = solve(inst, cfg)
    return MetricSeries(
        method=method, mu=mu, seed=seed, iterations=run.iterations,
        dual_value=run.series("dual_value"),
        infeasibility=run.series("infeasibility"),
        duality_gap=run.series("duality_gap"),
    )


def _mean_series(group: Sequence[MetricSeries]) -> MetricSeries:
    first = group[0]
    stack = {m: np.mean(np.stack([g.metric(m) for g in group]), axis=0) for m in METRICS}
    return MetricSeries(first.method, first.mu, None, first.iterations.copy(), **stack)


def run_experiment(spec: ExperimentSpec) -> ExperimentResult:
    """Run every (method, mu, seed) cell and average across seeds.

    A cell whose solver raises is recorded in ``failures`` with the error
    message; the remaining cells still run.
    """
    spec.check()
    keys = [(method, mu, seed) for mu in spec.mus for method in spec.methods for seed in spec.seeds]
    workers = spec.workers or min(8, os.cpu_count() or 1)

    def work(key):
        try:
            return key, _run_cell(spec, *key), None
        except Exception as exc:  # a failed cell must not abort the others
            return key, None, f"{type(exc).__name__}: {exc}"

    with ThreadPoolExecutor(max_workers=workers) as pool:
        done = list(pool.map(work, keys))

    result = ExperimentResult(spec)
    for key, series, err in done:  # pool.map keeps submission order
        if err is None:
            result.cells[key] = series
        else:
            result.failures[key] = err
    for mu in spec.mus:
        for method in spec.methods:
            group = [result.cells[(method, mu, s)] for s in spec.seeds if (method, mu, s) in result.cells]
            if group:
                result.means[(method, mu)] = _mean_series(group)
    return result


def sweep_mu(spec: ExperimentSpec) -> ExperimentResult:
    """Run the experiment for each modulus in ``spec.mu``; see :meth:`ExperimentResult.summary`."""
    if not spec.mus:
        raise InvalidInputError("mu list must be nonempty")
    return run_experiment(spec)


# --- output ------------------------------------------------------------------


def _fmt(v) -> str:
    return repr(float(v))


def _mu_tag(mu: float) -> str:
    return f"{mu:g}"


def versions() -> dict:
    from . import __version__

    return {"resalloc": __version__, "numpy": np.__version__, "python": platform.python_version()}


def write_sidecar(path: Path, payload: dict) -> Path:
    side = path.with_name(path.name + ".meta.json")
    side.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return side


def _write_csv(path: Path, header: list, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def log_points(iterations, values):
    """Points drawable on a log axis: magnitudes, minus zeros and non-finite values."""
    y = np.abs(np.asarray(values, dtype=float))
    keep = np.isfinite(y) & (y > 0)
    return np.asarray(iterations)[keep], y[keep]


def _render_svg(path: Path, iterations, columns: dict, title: str) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    for label, values in columns.items():
        ax.plot(*log_points(iterations, values), label=label)
    ax.set_yscale("log")
    ax.set_xlabel("iteration")
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def emit_plots(result: ExperimentResult, path, svg: bool = False) -> list[Path]:
    """Write one CSV per metric (and optionally an SVG), plus run metadata.

    Columns are ``iteration`` and one mean series per method. Sweeps get one
    file per modulus, suffixed ``_mu<mu>``. ``final_metrics.csv`` lists the
    last recorded values of every cell, failed cells included, and
    ``experiment.meta.json`` records the spec, seeds, generator and versions.
    """
    if not result.means:
        raise InvalidInputError("no successful cells to write")
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise InvalidInputError(f"cannot create output directory {out}: {exc}") from None
    spec = result.spec
    written: list[Path] = []
    for mu in spec.mus:
        suffix = f"_mu{_mu_tag(mu)}" if spec.is_sweep else ""
        series = [(m, result.means[(m, mu)]) for m in spec.methods if (m, mu) in result.means]
        if not series:
            continue
        iters = series[0][1].iterations
        for metric in METRICS:
            f = out / f"{_FILE_STEM[metric]}{suffix}.csv"
            cols = [s.metric(metric) for _, s in series]
            rows = ([str(int(t))] + [_fmt(c[i]) for c in cols] for i, t in enumerate(iters))
            _write_csv(f, ["iteration"] + [m for m, _ in series], rows)
            written.append(f)
            if svg:
                g = f.with_suffix(".svg")
                label = metric.replace("_", " ")
                title = f"{label}, mean of {len(spec.seeds)} runs" + (f", mu={_mu_tag(mu)}" if suffix else "")
                _render_svg(g, iters, {m: s.metric(metric) for m, s in series}, title)
                written.append(g)

    f = out / "final_metrics.csv"
    rows = []
    for mu in spec.mus:
        for method in spec.methods:
            for seed in spec.seeds:
                key = (method, mu, seed)
                if key in result.cells:
                    c = result.cells[key]
                    rows.append([method, _fmt(mu), seed, "ok"] + [_fmt(c.final(m)) for m in METRICS] + [""])
                else:
                    rows.append([method, _fmt(mu), seed, "failed", "", "", "", result.failures.get(key, "")])
    _write_csv(f, ["method", "mu", "seed", "status", *METRICS, "error"], rows)
    written.append(f)

    meta = {
        "spec": spec.to_dict(),
        "seeds": list(spec.seeds),
        "generator": GENERATOR,
        "versions": versions(),
        "files": [p.name for p in written],
        "failed_cells": [
            {"method": k[0], "mu": k[1], "seed": k[2], "error": v} for k, v in sorted(result.failures.items())
        ],
    }
    meta_path = out / "experiment.meta.json"
    meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    written.append(meta_path)
    return written
