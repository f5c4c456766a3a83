"""Convergence studies, order fits and time-series summaries."""
from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import partial
from typing import NamedTuple

import numpy as np

from .geometry import ellipse, manifold_distance
from .records import CSV_COLUMNS, DiagnosticsRecord, read_records, write_records
from .scheme import SchemeConfig, evolve, steps_for

__all__ = [
    "CSV_COLUMNS",
    "ConvergenceRow",
    "ConvergenceTable",
    "DiagnosticsRecord",
    "IterationStats",
    "convergence_study",
    "iteration_stats",
    "order_fit",
    "plateau_variation",
    "read_records",
    "run_checkpoints",
    "write_records",
]

DEFAULT_REFERENCE = {"h_e": 2.0**-7, "tau_e": 2.0**-14}


class ConvergenceRow(NamedTuple):
    h: float
    tau: float
    error: float
    order: float  # nan on the coarsest row


class ConvergenceTable:
    """Errors at one evaluation time for a sequence of meshes halving in size."""

    def __init__(self, h, tau, errors, t_eval=None):
        h = [float(v) for v in h]
        if len(h) != len(tau) or len(h) != len(errors):
            raise ValueError("h, tau and errors must have equal lengths")
        for a, b in zip(h, h[1:]):
            if not math.isclose(b, a / 2, rel_tol=1e-12):
                raise ValueError(f"mesh sizes must halve from row to row, got {a} then {b}")
        self.t_eval = t_eval
        orders = [math.nan]
        for e0, e1 in zip(errors, errors[1:]):
            orders.append(math.log2(e0 / e1) if e0 > 0 and e1 > 0 else math.nan)
        self.rows = [ConvergenceRow(*r) for r in zip(h, map(float, tau), map(float, errors), orders)]

    def __len__(self):
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    @property
    def h(self):
        return np.array([r.h for r in self.rows])

    @property
    def errors(self):
        return np.array([r.error for r in self.rows])

    def order(self):
        return order_fit(self)

    def to_csv(self, path_or_file):
        own = not hasattr(path_or_file, "write")
        fh = open(path_or_file, "w", newline="") if own else path_or_file
        try:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["h", "tau", "error", "order"])
            for r in self.rows:
                order = "" if math.isnan(r.order) else f"{r.order:.17g}"
                w.writerow([f"{r.h:.17g}", f"{r.tau:.17g}", f"{r.error:.17g}", order])
        finally:
            if own:
                fh.close()


def order_fit(table, errors=None):
    """Least-squares slope of ``log e`` against ``log h``.

    Accepts a :class:`ConvergenceTable` or two sequences ``(h, errors)``.
    """
    if errors is None:
        h, e = table.h, table.errors
    else:
        h, e = np.asarray(table, dtype=float), np.asarray(errors, dtype=float)
    if h.size < 3:
        raise ValueError("order fit needs at least 3 rows")
    if np.any(e <= 0) or np.any(h <= 0):
        raise ValueError("errors and mesh sizes must be positive")
    slope, _ = np.polyfit(np.log(h), np.log(e), 1)
    return float(slope)


class IterationStats(NamedTuple):
    min: int
    median: float
    max: int


def iteration_stats(records):
    """Order statistics of Newton iteration counts, skipping the initial record."""
    its = [r.newton_iters for r in records if r.step > 0] if records and hasattr(records[0], "step") else list(records)
    if not its:
        raise ValueError("no iteration counts")
    return IterationStats(int(min(its)), float(np.median(its)), int(max(its)))


def plateau_variation(records, fraction=0.2):
    """``(max R - min R) / mean R`` of the mesh ratio over the final ``fraction`` of a run."""
    R = np.array([r.mesh_ratio for r in records])
    tail = R[int(math.floor((1.0 - fraction) * len(R))) :]
    return float((tail.max() - tail.min()) / tail.mean())


def run_checkpoints(aniso, N, tau, times, *, shape=None, stabilizer="auto", newton_tol=1e-12):
    """Evolve the initial shape with ``N`` nodes and return vertices at each time in ``times``."""
    shape = shape or partial(ellipse, 2.0, 0.5)
    steps = {steps_for(tau, t): t for t in times}
    out = {}

    def grab(rec, state):
        if rec.step in steps:
            out[steps[rec.step]] = state.curve.vertices

    cfg = SchemeConfig(tau=tau, newton_tol=newton_tol, stabilizer=stabilizer)
    evolve(shape(N), cfg, aniso, n_steps=max(steps), on_record=grab)
    return out


def _mesh_nodes(h):
    N = round(1.0 / h)
    if not math.isclose(N * h, 1.0, rel_tol=1e-12):
        raise ValueError(f"h={h} is not 1/N for an integer N")
    return N


def convergence_study(aniso, t_eval, h_list, reference=None, *, shape=None, stabilizer="auto", workers=1):
    """Spatial convergence against a fine reference run, with ``tau = h^2`` per coarse run.

    ``t_eval`` may be a number or a sequence; a sequence returns a dict of tables keyed by time.
    """
    ref = dict(DEFAULT_REFERENCE, **(reference or {}))
    times = [float(t_eval)] if np.isscalar(t_eval) else [float(t) for t in t_eval]
    h_list = [float(h) for h in h_list]
    jobs = [(ref["h_e"], ref["tau_e"])] + [(h, h * h) for h in h_list]
    for _, tau in jobs:
        for t in times:
            steps_for(tau, t)  # every time must be a whole number of steps
    run = partial(run_checkpoints, aniso, times=times, shape=shape, stabilizer=stabilizer)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(run, _mesh_nodes(h), tau) for h, tau in jobs]
            results = [f.result() for f in futures]
    else:
        results = [run(_mesh_nodes(h), tau) for h, tau in jobs]
    reference_run, coarse = results[0], results[1:]
    tables = {}
    for t in times:
        errors = [manifold_distance(c[t], reference_run[t]) for c in coarse]
        tables[t] = ConvergenceTable(h_list, [h * h for h in h_list], errors, t_eval=t)
    return tables[times[0]] if np.isscalar(t_eval) else tables
