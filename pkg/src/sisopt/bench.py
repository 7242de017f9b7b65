"""Benchmark harness: generated instances x methods -> optimality-gap table.

For every cell ``(N, nu)`` and run index an instance is generated with a
seed derived from the cell key, every requested method is run on it, and gaps
are measured against the best relaxation lower bound from the same run.
"""

from __future__ import annotations

import csv
import hashlib
import io
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import TextIO

import numpy as np

from .exceptions import ParseError, SisOptError
from .local_search import RgmConfig, rgm, scp
from .netmodel import default_dmax, generate_scale_free
from .relaxation import solve_pr1, solve_pr2

__all__ = [
    "ExperimentConfig",
    "BenchRow",
    "parse_config",
    "read_config",
    "cell_seed",
    "run_method",
    "run_experiment",
    "rows_to_csv",
    "CSV_HEADER",
]

METHODS = ("pr1", "pr2", "rgm", "scp-m", "scp-exp")
RELAXATIONS = ("pr1", "pr2")
CSV_HEADER = ["method", "N", "E", "nu", "opt_gap", "iters_outer", "iters_inner", "runtime_ms"]


@dataclass
class ExperimentConfig:
    sizes: list = field(default_factory=lambda: [100])
    nu_values: list = field(default_factory=lambda: [1.0])
    runs_per_cell: int = 1
    seed_base: int = 0
    methods: list = field(default_factory=lambda: ["pr2", "rgm"])
    tol: float = 1e-9  # relaxation duality-gap tolerance
    power: float = 1.5
    dmin: int = 2
    dmax: int | None = None  # None: ceil(3 ln N)
    timing: bool = False  # runtimes break byte-for-byte reproducibility, so they are opt-in
    workers: int = 1

    def __post_init__(self):
        if self.runs_per_cell < 1:
            raise ValueError("runs_per_cell must be at least 1")
        if not self.methods:
            raise ValueError("at least one method is required")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ValueError(f"unknown methods {bad}; choose from {', '.join(METHODS)}")
        if not self.sizes or not self.nu_values:
            raise ValueError("sizes and nu lists must be nonempty")


def _split(value):
    return [v for v in value.replace(",", " ").split() if v]


def parse_config(stream: TextIO | str) -> ExperimentConfig:
    """Parse a line-oriented ``key value`` config; ``#`` starts a comment."""
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    kw = {}
    keys = {
        "sizes": ("sizes", lambda v: [int(x) for x in _split(v)]),
        "nu": ("nu_values", lambda v: [float(x) for x in _split(v)]),
        "runs": ("runs_per_cell", int),
        "seed": ("seed_base", int),
        "methods": ("methods", _split),
        "tol": ("tol", float),
        "power": ("power", float),
        "dmin": ("dmin", int),
        "dmax": ("dmax", lambda v: None if v.strip() == "auto" else int(v)),
        "timing": ("timing", lambda v: {"true": True, "false": False}[v.strip().lower()]),
        "workers": ("workers", int),
    }
    for lineno, raw in enumerate(stream, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, _, value = line.partition(" ")
        if key not in keys:
            raise ParseError(f"unknown config key {key!r}", line=lineno)
        name, conv = keys[key]
        try:
            kw[name] = conv(value.strip())
        except (ValueError, KeyError):
            raise ParseError(f"bad value for {key}: {value.strip()!r}", line=lineno) from None
    try:
        return ExperimentConfig(**kw)
    except ValueError as exc:
        raise ParseError(str(exc)) from None


def read_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh)


def cell_seed(seed_base: int, n: int, nu: float, run: int) -> int:
    """``seed_base XOR blake2b("N:nu:run")`` truncated to 64 bits; stable across machines."""
    digest = hashlib.blake2b(f"{n}:{nu!r}:{run}".encode(), digest_size=8).digest()
    return (int(seed_base) ^ int.from_bytes(digest, "little")) & 0xFFFFFFFFFFFFFFFF


@dataclass
class BenchRow:
    method: str
    N: int
    E: float
    nu: float
    opt_gap: float | None  # None marks a failed cell
    iters_outer: float
    iters_inner: float
    runtime_ms: float | None


@dataclass
class MethodOutcome:
    value: float  # feasible objective (relaxations: recovered upper bound)
    lower_bound: float | None
    iters_outer: int
    iters_inner: int
    runtime_ms: float


def run_method(instance, method: str, tol: float = 1e-9) -> MethodOutcome:
    t0 = time.perf_counter()
    if method == "pr1":
        r = solve_pr1(instance, tol=tol)
        out = MethodOutcome(r.upper_bound, r.lower_bound, r.iters, r.newton_iters, 0.0)
    elif method == "pr2":
        r = solve_pr2(instance, tol=tol)
        out = MethodOutcome(r.upper_bound, r.lower_bound, r.iters, r.newton_iters, 0.0)
    elif method == "rgm":
        r = rgm(instance, RgmConfig())
        out = MethodOutcome(r.objective, None, r.iters[0], r.iters[1], 0.0)
    elif method in ("scp-m", "scp-exp"):
        r = scp(instance, backend="mmatrix" if method == "scp-m" else "expcone")
        out = MethodOutcome(r.objective, None, r.iters[0], r.iters[1], 0.0)
    else:
        raise ValueError(f"unknown method {method!r}")
    out.runtime_ms = (time.perf_counter() - t0) * 1e3
    return out


def _run_cell(args):
    """One (N, nu, run) cell: returns ``{method: MethodOutcome | None}`` and the edge count."""
    cfg, n, nu, run = args
    seed = cell_seed(cfg.seed_base, n, nu, run)
    dmax = cfg.dmax if cfg.dmax is not None else default_dmax(n)
    inst = generate_scale_free(n, power=cfg.power, dmin=cfg.dmin, dmax=dmax, seed=seed, nu=nu)
    outcomes = {}
    for method in cfg.methods:
        try:
            outcomes[method] = run_method(inst, method, tol=cfg.tol)
        except (SisOptError, ValueError, np.linalg.LinAlgError):
            outcomes[method] = None
    return inst.n_edges, outcomes


def run_experiment(cfg: ExperimentConfig) -> list:
    """Run every cell and average each method's gap over the runs.

    ``opt_gap = (f - f_R) / f_R`` where ``f_R`` is the smallest relaxation lower
    bound found on the same instance; relaxation rows use their recovered
    feasible value as ``f``. Cells with no relaxation available, or whose method
    failed in any run, are reported with a failure marker.
    """
    tasks = [(cfg, n, nu, run) for n in cfg.sizes for nu in cfg.nu_values for run in range(cfg.runs_per_cell)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_run_cell, tasks))
    else:
        results = [_run_cell(t) for t in tasks]

    by_cell = {}
    for (_, n, nu, _run), res in zip(tasks, results):
        by_cell.setdefault((n, nu), []).append(res)

    rows = []
    for n in cfg.sizes:
        for nu in cfg.nu_values:
            cell = by_cell[(n, nu)]
            for method in cfg.methods:
                gaps, outer, inner, rt, edges = [], [], [], [], []
                failed = False
                for n_edges, outcomes in cell:
                    edges.append(n_edges)
                    out = outcomes.get(method)
                    bounds = [outcomes[m].lower_bound for m in RELAXATIONS if outcomes.get(m) is not None]
                    if out is None or not bounds:
                        failed = True
                        continue
                    f_R = min(bounds)
                    gaps.append((out.value - f_R) / abs(f_R))
                    outer.append(out.iters_outer)
                    inner.append(out.iters_inner)
                    rt.append(out.runtime_ms)
                rows.append(
                    BenchRow(
                        method=method,
                        N=n,
                        E=float(np.mean(edges)),
                        nu=nu,
                        opt_gap=None if failed else float(np.mean(gaps)),
                        iters_outer=float(np.mean(outer)) if outer else float("nan"),
                        iters_inner=float(np.mean(inner)) if inner else float("nan"),
                        runtime_ms=float(np.mean(rt)) if (cfg.timing and rt) else None,
                    )
                )
    return rows


def rows_to_csv(rows, stream: TextIO | None = None) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for r in rows:
        writer.writerow(
            [
                r.method,
                r.N,
                f"{r.E:g}",
                f"{r.nu:g}",
                "FAILED" if r.opt_gap is None else f"{r.opt_gap:.6e}",
                f"{r.iters_outer:g}",
                f"{r.iters_inner:g}",
                "NA" if r.runtime_ms is None else f"{r.runtime_ms:.3f}",
            ]
        )
    text = buf.getvalue()
    if stream is not None:
        stream.write(text)
    return text
