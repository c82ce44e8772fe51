"""Mechanism-versus-agent sweeps over random environments, with CSV persistence."""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .agents import best_response, naive_plan
from .instances import GeneratorParams, gen_random
from .myopic import solve_myopic
from .optimal import SolveConfig, solve_optimal

log = logging.getLogger(__name__)

COMBOS = ("naive/naive", "naive/patient", "naive/myopic", "patient/patient", "myopic/myopic")
AXES = ("eta", "horizon", "state_action_size")
CSV_HEADER = ("eta", "T", "S", "A", "combo", "seed", "raw", "normalized")


@dataclass(frozen=True)
class ResultRow:
    eta: float
    T: int
    S: int
    A: int
    combo: str
    seed: int
    raw: float
    normalized: float

    @property
    def failed(self) -> bool:
        return math.isnan(self.raw)


@dataclass(frozen=True)
class ExperimentSpec:
    axis: str = "eta"
    values: tuple = (-1.0, -0.5, 0.0, 0.5, 1.0)
    T: int = 2
    size: int = 2
    eta: float = 0.0
    num_seeds: int = 10
    base_seed: int = 0
    combos: tuple = COMBOS
    tie_rule: str = "truthful-first"
    lp_backend: str = "simplex"

    def __post_init__(self):
        if self.axis not in AXES:
            raise ValueError(f"axis must be one of {AXES}")
        if self.num_seeds < 1:
            raise ValueError("num_seeds must be at least 1")
        unknown = set(self.combos) - set(COMBOS)
        if unknown:
            raise ValueError(f"unknown combos {sorted(unknown)}")
        for v in self.values:
            self.cell_params(v)  # range checks

    def cell_params(self, value) -> tuple:
        """``(eta, T, S, A)`` for one axis value."""
        eta, T, size = self.eta, self.T, self.size
        if self.axis == "eta":
            eta = float(value)
        elif self.axis == "horizon":
            T = int(value)
        else:
            size = int(value)
        if not -1.0 <= eta <= 1.0 or T < 1 or size < 1:
            raise ValueError(f"axis value {value!r} out of range for {self.axis}")
        return eta, T, size, size


def cell_seed(base_seed: int, axis_index: int, seed_index: int) -> int:
    """Independent 64-bit generator seed for one (axis value, repetition) cell."""
    ss = np.random.SeedSequence([base_seed, axis_index, seed_index])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def run_cell(eta, T, S, A, seed, combos=COMBOS, tie_rule="truthful-first", lp_backend="simplex") -> list:
    """All requested combos on one generated environment."""
    env = gen_random(GeneratorParams(T, S, A, eta, seed))
    naive_mech, naive_value = naive_plan(env)
    raws = {}
    for combo in combos:
        try:
            if combo == "naive/naive":
                raws[combo] = naive_value
            elif combo == "naive/patient":
                raws[combo] = best_response(env, naive_mech, "patient", 1.0, tie_rule).principal_value
            elif combo == "naive/myopic":
                raws[combo] = best_response(env, naive_mech, "myopic", 0.0, tie_rule).principal_value
            elif combo == "patient/patient":
                raws[combo] = solve_optimal(env, SolveConfig(lp_backend=lp_backend)).value
            else:
                raws[combo] = solve_myopic(env, SolveConfig(lp_backend=lp_backend)).value
        except Exception as exc:  # a failed cell must not stop the sweep
            log.error("cell eta=%s T=%s S=%s seed=%s combo=%s failed: %s", eta, T, S, seed, combo, exc)
            raws[combo] = math.nan
    norm = naive_value if naive_value > 0 else math.nan
    return [ResultRow(float(eta), T, S, A, c, seed, float(raws[c]), float(raws[c] / norm)) for c in combos]


def _run_cell_args(args):
    return run_cell(*args)


def run_experiment(spec: ExperimentSpec, workers: int = 1) -> list:
    """Rows in canonical order: axis value, then combo, then seed index."""
    jobs, keys = [], []
    for ai, value in enumerate(spec.values):
        eta, T, S, A = spec.cell_params(value)
        for si in range(spec.num_seeds):
            jobs.append((eta, T, S, A, cell_seed(spec.base_seed, ai, si), spec.combos, spec.tie_rule, spec.lp_backend))
            keys.append((ai, si))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_cell_args, jobs))
    else:
        results = [_run_cell_args(j) for j in jobs]
    order = {c: k for k, c in enumerate(spec.combos)}
    tagged = [((ai, order[r.combo], si), r) for (ai, si), rows in zip(keys, results) for r in rows]
    tagged.sort(key=lambda t: t[0])
    return [r for _, r in tagged]


def axis_value(row: ResultRow, axis: str):
    return {"eta": row.eta, "horizon": row.T, "state_action_size": row.S}[axis]


@dataclass
class SummaryPoint:
    mean: float
    low: float
    high: float
    count: int


def summarize(rows, axis: str, normalize_after_mean: bool = False) -> dict:
    """``{combo: {axis value: SummaryPoint}}`` over seeds.

    By default each seed is normalized by its own naive value before
    averaging; ``normalize_after_mean`` divides the mean raw value by the
    mean naive value instead (whiskers stay per-seed ratios).
    """
    groups: dict = {}
    naive: dict = {}
    for r in rows:
        x = axis_value(r, axis)
        groups.setdefault(r.combo, {}).setdefault(x, []).append(r)
        if r.combo == "naive/naive":
            naive.setdefault(x, []).append(r.raw)
    out: dict = {}
    for combo, by_x in groups.items():
        out[combo] = {}
        for x, rs in sorted(by_x.items()):
            ratios = np.array([r.normalized for r in rs])
            if normalize_after_mean:
                if x not in naive:
                    raise ValueError("normalize-after-mean needs naive/naive rows")
                mean = float(np.mean([r.raw for r in rs]) / np.mean(naive[x]))
            else:
                mean = float(np.mean(ratios))
            out[combo][x] = SummaryPoint(mean, float(np.min(ratios)), float(np.max(ratios)), len(rs))
    return out


# ---------------------------------------------------------------------------
# CSV


def _fmt(v) -> str:
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def write_csv(rows, path) -> None:
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_HEADER)
            for r in rows:
                w.writerow([_fmt(r.eta), r.T, r.S, r.A, r.combo, r.seed, _fmt(r.raw), _fmt(r.normalized)])
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc}") from exc


def read_csv(path) -> list:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise OSError(f"cannot read results from {path}: {exc}") from exc
    lines = text.splitlines()
    if not lines or tuple(lines[0].split(",")) != CSV_HEADER:
        raise ValueError(f"{path}: line 1: expected header {','.join(CSV_HEADER)}")
    rows = []
    for lineno, fields in enumerate(csv.reader(lines[1:]), start=2):
        if not fields:
            continue
        if len(fields) != len(CSV_HEADER):
            raise ValueError(f"{path}: line {lineno}: expected {len(CSV_HEADER)} fields, got {len(fields)}")
        try:
            eta, T, S, A, combo, seed, raw, norm = fields
            rows.append(ResultRow(float(eta), int(T), int(S), int(A), combo, int(seed), float(raw), float(norm)))
        except ValueError as exc:
            raise ValueError(f"{path}: line {lineno}: {exc}") from None
    return rows
