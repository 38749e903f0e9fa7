"""Experiment harness: success-rate sweeps, error tables, rate analysis.

Trials are seeded from ``(base_seed, cell index, trial index)`` through
``numpy.random.SeedSequence``, so results do not depend on the number of
workers or the order trials run in. Per-trial rows are sorted before
aggregation, which keeps the summation order fixed.
"""
from __future__ import annotations

import csv
import dataclasses
import enum
import json
import math
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import problems
from .baselines import BaselineConfig, htp_solve, iht_solve
from .solver import DirectionKind, SolverConfig, Status, solve

CSV_COLUMNS = ("kind", "n", "m", "s", "solver", "trials", "success_rate", "mean_error",
               "mean_time", "mean_iters", "median_time", "mean_loss")

KINDS = ("gaussian", "dct", "logistic-independent", "logistic-ar")
CS_KINDS = ("gaussian", "dct")


@dataclass
class SweepSpec:
    problem_kind: str
    grid: list
    trials: int
    solvers: list = field(default_factory=lambda: ["nhtp"])
    base_seed: int = 0
    parallelism: int = 1
    solver_options: dict = field(default_factory=dict)
    keep_trials: bool = True

    def __post_init__(self):
        if self.problem_kind not in KINDS:
            raise ValueError(f"unknown problem kind {self.problem_kind!r}")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not self.grid:
            raise ValueError("grid must be non-empty")
        unknown = set(self.solvers) - set(SOLVERS)
        if unknown or not self.solvers:
            raise ValueError(f"unknown solvers: {sorted(unknown)}")
        if self.parallelism < 1:
            raise ValueError("parallelism must be >= 1")
        self.grid = [dict(c) for c in self.grid]
        for cell in self.grid:
            for key in ("n", "m") + (("s",) if self.problem_kind != "logistic-independent"
                                     else ()):
                if key not in cell:
                    raise ValueError(f"grid cell {cell} lacks {key!r}")
            if "s" not in cell:
                raise ValueError("every cell needs a solver sparsity 's'")


@dataclass
class TrialRow:
    cell: int
    trial: int
    solver: str
    seed: int
    success: bool | None
    error: float
    loss: float
    time: float
    iters: int
    status: str
    cert_grad_norm: float
    cert_violation: float
    cert_passed: bool
    monotone: bool
    contained: bool
    newton_unit_tail: bool


@dataclass
class CellResult:
    kind: str
    n: int
    m: int
    s: int
    solver: str
    trials: int
    success_rate: float
    mean_error: float
    mean_time: float
    mean_iters: float
    median_time: float
    mean_loss: float
    params: dict = field(default_factory=dict)

    def row(self, omit_timing: bool = False) -> dict:
        out = {c: getattr(self, c) for c in CSV_COLUMNS}
        if omit_timing:
            out["mean_time"] = out["median_time"] = math.nan
        return out


@dataclass
class SweepResult:
    cells: list
    trials: list = field(default_factory=list)


class RateClass(str, enum.Enum):
    QUADRATIC = "quadratic"
    SUPERLINEAR = "superlinear"
    LINEAR = "linear"
    INCONCLUSIVE = "inconclusive"


@dataclass
class RateFit:
    window: list
    exponent: float
    constant: float
    classification: RateClass


# --- seeding & solver registry ---------------------------------------------

def trial_seed(base_seed: int, cell: int, trial: int) -> int:
    ss = np.random.SeedSequence([int(base_seed), int(cell), int(trial)])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def make_instance(kind: str, cell: dict, seed: int):
    n, m = int(cell["n"]), int(cell["m"])
    if kind == "gaussian":
        return problems.gen_gaussian_cs(n, m, int(cell["s"]), seed)
    if kind == "dct":
        return problems.gen_dct_cs(n, m, int(cell["s"]), seed)
    if kind == "logistic-independent":
        return problems.gen_logistic_independent(n, m, seed)
    return problems.gen_logistic_correlated(n, m, int(cell.get("s_true", cell["s"])),
                                            float(cell.get("theta", 0.5)), seed)


def _run_nhtp(instance, s, opts):
    return solve(instance.objective, SolverConfig(s=s, **opts))


def _iht_default_step(obj):
    if isinstance(obj, problems.LogisticObjective):
        import scipy.sparse.linalg as spla
        A = obj.A
        norm2 = spla.svds(A, k=1, return_singular_vectors=False)[0] ** 2 if obj.is_sparse \
            else np.linalg.norm(A, 2) ** 2
        return 1.0 / (norm2 / (4.0 * obj.m) + 2.0 * obj.mu)
    return 0.5


def _run_iht(instance, s, opts):
    opts = dict(opts)
    step = opts.pop("step_size", None) or _iht_default_step(instance.objective)
    return iht_solve(instance.objective, BaselineConfig(s=s, step_size=step, **opts))


def _run_htp(instance, s, opts):
    opts = dict(opts)
    opts.setdefault("step_size", 0.9)
    return htp_solve(instance.objective, BaselineConfig(s=s, **opts))


SOLVERS = {"nhtp": _run_nhtp, "iht": _run_iht, "htp": _run_htp}


def trace_checks(trace) -> tuple[bool, bool, bool]:
    """``(monotone, contained, newton_unit_tail)`` for a solver trace.

    ``newton_unit_tail``: every step after the last support change used the
    Newton direction with unit step.
    """
    f = [rec.f_val for rec in trace]
    monotone = all(b <= a for a, b in zip(f, f[1:]))
    contained = all(rec.next_outside_support in (None, 0) for rec in trace)
    last_change = max((i for i, rec in enumerate(trace) if rec.support_changed), default=0)
    tail = [rec for rec in trace[last_change:] if rec.direction_kind is not None]
    unit = all(rec.direction_kind is DirectionKind.NEWTON and rec.alpha == 1.0 for rec in tail)
    return monotone, contained, unit


def _run_trial(args) -> list:
    kind, cell_idx, cell, trial, base_seed, solvers, solver_options = args
    seed = trial_seed(base_seed, cell_idx, trial)
    instance = make_instance(kind, cell, seed)
    rows = []
    for name in solvers:
        try:
            rep = SOLVERS[name](instance, int(cell["s"]), solver_options.get(name, {}))
        except Exception as exc:  # solver failure counts as non-success
            rows.append(TrialRow(cell_idx, trial, name, seed, False if instance.x_star is not None
                                 else None, math.nan, math.nan, 0.0, 0, f"error: {exc}",
                                 math.nan, math.nan, False, True, True, False))
            continue
        x = rep.x_final
        if instance.x_star is not None and kind in CS_KINDS:
            err = float(np.linalg.norm(x - instance.x_star))
            ok = problems.recovery_success(x, instance.x_star)
        else:
            err, ok = math.nan, None
        loss = rep.trace[-1].f_val if rep.trace else instance.objective.value(x)
        mono, cont, unit = trace_checks(rep.trace)
        c = rep.certificate
        rows.append(TrialRow(cell_idx, trial, name, seed, ok, err, float(loss), rep.wall_time,
                             rep.iterations, rep.status.value, c.grad_on_support_norm,
                             c.offsupport_violation, c.passed, mono, cont, unit))
    return rows


def _mean(vals):
    vals = [v for v in vals if not math.isnan(v)]
    return math.fsum(vals) / len(vals) if vals else math.nan


def _aggregate(spec: SweepSpec, rows: list) -> list:
    rows = sorted(rows, key=lambda r: (r.cell, spec.solvers.index(r.solver), r.trial))
    out = []
    for ci, cell in enumerate(spec.grid):
        for name in spec.solvers:
            rs = [r for r in rows if r.cell == ci and r.solver == name]
            succ = [r.success for r in rs if r.success is not None]
            times = [r.time for r in rs]
            out.append(CellResult(
                kind=spec.problem_kind, n=int(cell["n"]), m=int(cell["m"]), s=int(cell["s"]),
                solver=name, trials=len(rs),
                success_rate=sum(succ) / len(rs) if succ else math.nan,
                mean_error=_mean([r.error for r in rs]),
                mean_time=_mean(times), mean_iters=_mean([float(r.iters) for r in rs]),
                median_time=statistics.median(times) if times else math.nan,
                mean_loss=_mean([r.loss for r in rs]),
                params={k: v for k, v in cell.items() if k not in ("n", "m", "s")}))
    return out


def run_sweep(spec: SweepSpec) -> SweepResult:
    jobs = [(spec.problem_kind, ci, cell, t, spec.base_seed, list(spec.solvers),
             spec.solver_options)
            for ci, cell in enumerate(spec.grid) for t in range(spec.trials)]
    if spec.parallelism > 1:
        with ProcessPoolExecutor(max_workers=spec.parallelism) as pool:
            chunks = list(pool.map(_run_trial, jobs, chunksize=max(1, len(jobs) // (4 * spec.parallelism))))
    else:
        chunks = [_run_trial(job) for job in jobs]
    rows = [r for chunk in chunks for r in chunk]
    rows.sort(key=lambda r: (r.cell, spec.solvers.index(r.solver), r.trial))
    return SweepResult(_aggregate(spec, rows), rows if spec.keep_trials else [])


def run_error_table(spec: SweepSpec) -> SweepResult:
    if spec.problem_kind not in CS_KINDS:
        raise ValueError("error tables need a compressed-sensing problem kind")
    return run_sweep(spec)


# --- rate analysis -----------------------------------------------------------

RATE_UPPER = 1e-2
RATE_FLOOR = 1e-14


def analyze_rate(trace, max_window: int = 6, min_points: int = 3) -> RateFit:
    """Fit ``log r_{k+1} = log C + p log r_k`` on the terminal residuals.

    Only the last contiguous run of residuals in ``(1e-14, 1e-2]`` is used,
    truncated to its final ``max_window`` entries.
    """
    r = [rec.residual_norm if hasattr(rec, "residual_norm") else float(rec) for rec in trace]
    inside = [RATE_FLOOR < v <= RATE_UPPER for v in r]
    end = max((i for i, ok in enumerate(inside) if ok), default=-1)
    if end < 0:
        return RateFit([], math.nan, math.nan, RateClass.INCONCLUSIVE)
    start = end
    while start > 0 and inside[start - 1]:
        start -= 1
    window = r[max(start, end + 1 - max_window): end + 1]
    if len(window) < min_points:
        return RateFit(window, math.nan, math.nan, RateClass.INCONCLUSIVE)
    lx = np.log(window[:-1])
    ly = np.log(window[1:])
    p, logc = np.polyfit(lx, ly, 1)
    if p >= 1.7:
        cls = RateClass.QUADRATIC
    elif p >= 1.15:
        cls = RateClass.SUPERLINEAR
    elif p >= 0.85 and logc < 0:
        cls = RateClass.LINEAR
    else:
        cls = RateClass.INCONCLUSIVE
    return RateFit(window, float(p), float(math.exp(logc)), cls)


# --- export ------------------------------------------------------------------

def _fmt(v):
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def export(result: SweepResult, fmt: str, path, omit_timing: bool = False) -> None:
    path = Path(path)
    rows = [c.row(omit_timing) for c in result.cells]
    try:
        if fmt.lower() == "csv":
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(CSV_COLUMNS)
                for row in rows:
                    w.writerow([_fmt(row[c]) for c in CSV_COLUMNS])
        elif fmt.lower() == "json":
            data = {"columns": list(CSV_COLUMNS),
                    "rows": [{k: (None if isinstance(v, float) and math.isnan(v) else v)
                              for k, v in row.items()} for row in rows]}
            path.write_text(json.dumps(data, indent=2) + "\n")
        else:
            raise ValueError(f"unknown export format {fmt!r}")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def load_json_result(path) -> list:
    data = json.loads(Path(path).read_text())
    return [{k: (math.nan if v is None else v) for k, v in row.items()} for row in data["rows"]]


def export_plot_data(result: SweepResult, path, x_axis: str = "s",
                     metric: str = "success_rate") -> None:
    """Write ``x_axis`` plus one column of ``metric`` per solver."""
    solvers = list(dict.fromkeys(c.solver for c in result.cells))
    table: dict = {}
    for c in result.cells:
        x = c.params.get(x_axis, getattr(c, x_axis, None))
        if x_axis == "ratio":
            x = c.m / c.n
        table.setdefault(x, {})[c.solver] = getattr(c, metric)
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([x_axis] + solvers)
            for x in table:
                w.writerow([_fmt(x)] + [_fmt(table[x].get(sv, math.nan)) for sv in solvers])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


# --- presets -------------------------------------------------------------------

def preset(name: str, full_scale: bool = False, trials: int | None = None,
           base_seed: int = 2020, parallelism: int = 1) -> tuple[SweepSpec, str, str]:
    """``(spec, plot x-axis, plot metric)`` for a named experiment."""
    if name == "fig1-desk":
        grid = [dict(n=256, m=64, s=s) for s in range(6, 37, 2)]
        spec = SweepSpec("gaussian", grid, trials or (500 if full_scale else 100),
                         ["nhtp", "iht", "htp"], base_seed, parallelism)
        return spec, "s", "success_rate"
    if name == "fig2-desk":
        n, s = 256, math.ceil(0.05 * 256)
        grid = [dict(n=n, m=math.ceil(r * n), s=s, ratio=r)
                for r in np.round(np.arange(0.10, 0.301, 0.02), 2).tolist()]
        spec = SweepSpec("gaussian", grid, trials or (500 if full_scale else 100),
                         ["nhtp", "iht", "htp"], base_seed, parallelism)
        return spec, "ratio", "success_rate"
    if name == "table2-desk":
        if full_scale:
            grid = [dict(n=n, m=math.ceil(n / 4), s=math.ceil(f * n))
                    for f in (0.01, 0.05) for n in range(5000, 25001, 5000)]
        else:
            grid = [dict(n=2048, m=512, s=20)]
        spec = SweepSpec("dct", grid, trials or (50 if full_scale else 10),
                         ["nhtp", "iht", "htp"], base_seed, parallelism)
        return spec, "n", "mean_error"
    if name == "table3-desk":
        if full_scale:
            grid = [dict(n=n, m=math.ceil(n / 5), s=math.ceil(f * n))
                    for f in (0.01, 0.05) for n in range(10000, 40001, 10000)]
        else:
            grid = [dict(n=1000, m=200, s=50)]
        spec = SweepSpec("logistic-independent", grid, trials or (50 if full_scale else 10),
                         ["nhtp", "iht"], base_seed, parallelism)
        return spec, "n", "mean_loss"
    raise ValueError(f"unknown preset {name!r}")


PRESETS = ("fig1-desk", "fig2-desk", "table2-desk", "table3-desk")


def spec_to_dict(spec: SweepSpec) -> dict:
    return dataclasses.asdict(spec)


def status_counts(result: SweepResult, solver: str = "nhtp") -> dict:
    counts = {s.value: 0 for s in Status}
    for r in result.trials:
        if r.solver == solver:
            counts[r.status] = counts.get(r.status, 0) + 1
    return counts
