"""Acceptance criteria 1-8. Each test prints one PASS/FAIL line; the lines are
also collected into a summary section at the end of the pytest report."""
import time

import numpy as np
import pytest

from conftest import canonical_projection, fd_grad, lu_newton, record_acceptance, rel_coord_err
from nhtp import bench, problems
from nhtp.bench import RateClass
from nhtp.objectives import CsObjective, LogisticObjective
from nhtp.solver import SolverConfig, SolverState, newton_direction, solve
from nhtp.sparse_core import hard_threshold


@pytest.fixture(scope="module")
def fig1():
    spec, _, _ = bench.preset("fig1-desk")
    t0 = time.perf_counter()
    result = bench.run_sweep(spec)
    return result, time.perf_counter() - t0


@pytest.fixture(scope="module")
def table2():
    spec, _, _ = bench.preset("table2-desk")
    t0 = time.perf_counter()
    result = bench.run_error_table(spec)
    return result, time.perf_counter() - t0


@pytest.fixture(scope="module")
def rate_runs():
    runs = []
    for t in range(10):
        inst = problems.gen_gaussian_cs(512, 256, 10, bench.trial_seed(2020, 0, t))
        runs.append(solve(inst.objective, SolverConfig(s=10)))
    return runs


def _rates(result, solver):
    return {c.s: c.success_rate for c in result.cells if c.solver == solver}


def test_criterion_1_success_rates(fig1):
    result, seconds = fig1
    nhtp, iht = _rates(result, "nhtp"), _rates(result, "iht")
    low = min(nhtp[s] for s in nhtp if s <= 12)
    ordering = [s for s in nhtp if nhtp[s] < iht[s] - 0.05]
    ok = low >= 0.95 and nhtp[22] >= 0.80 and not ordering and seconds < 180
    record_acceptance(1, ok, f"min rate s<=12 {low:.2f} (>=0.95), s=22 {nhtp[22]:.2f} (>=0.80), "
                             f"cells below IHT-0.05 {ordering}, {seconds:.0f}s (<180s)")
    assert ok


def test_criterion_2_dct_accuracy(table2):
    result, seconds = table2
    cell = next(c for c in result.cells if c.solver == "nhtp")
    ok = cell.mean_error <= 1e-10 and seconds < 60
    record_acceptance(2, ok, f"mean error {cell.mean_error:.2e} (<=1e-10), {seconds:.1f}s (<60s)")
    assert ok


def test_criterion_3_quadratic_rate(rate_runs):
    fits = [bench.analyze_rate(r.trace) for r in rate_runs]
    quadratic = sum(f.classification is RateClass.QUADRATIC for f in fits)
    tails = sum(bench.trace_checks(r.trace)[2] for r in rate_runs)
    windows = [len(f.window) for f in fits]
    ok = quadratic >= 8 and tails == 10
    record_acceptance(3, ok, f"quadratic fits {quadratic}/10 (>=8, window sizes {windows}), "
                             f"unit Newton tail {tails}/10 (10)")
    assert ok


def test_criterion_4_certificates(fig1):
    result, _ = fig1
    rows = [t for t in result.trials if t.solver == "nhtp" and t.status == "stationary"]
    bad = [t for t in rows if not (t.cert_grad_norm <= 1e-6 and t.cert_violation <= 1e-6)]
    worst = max(max(t.cert_grad_norm, t.cert_violation) for t in rows)
    ok = bool(rows) and not bad
    record_acceptance(4, ok, f"{len(rows)} stationary runs, {len(bad)} failing, "
                             f"worst component {worst:.1e} (<=1e-6)")
    assert ok


def test_criterion_5_htp_tail():
    worst, compared = 0.0, 0
    for t in range(10):
        inst = problems.gen_gaussian_cs(256, 64, 10, bench.trial_seed(2020, 1, t))
        obj = inst.objective
        steps = []
        solve(obj, SolverConfig(s=10),
              callback=lambda st, d, rec, xn: steps.append((st.T.copy(), rec, xn)))
        started = False
        for T, rec, x_next in steps:
            started = started or (rec.alpha == 1.0 and rec.direction_kind.value == "newton")
            if started:
                worst = max(worst, float(np.max(np.abs(x_next - obj.restricted_minimize(T)))))
                compared += 1
    ok = compared > 0 and worst <= 1e-8
    record_acceptance(5, ok, f"{compared} tail steps, max |x - argmin_T| {worst:.1e} (<=1e-8)")
    assert ok


def test_criterion_6_monotone_and_contained(fig1, table2, rate_runs):
    rows = [t for res, _ in (fig1, table2) for t in res.trials if t.solver == "nhtp"]
    errors = [t for t in rows if t.status.startswith("error")]
    violations = sum(not (t.monotone and t.contained) for t in rows)
    for rep in rate_runs:
        mono, cont, _ = bench.trace_checks(rep.trace)
        violations += not (mono and cont)
    total = len(rows) + len(rate_runs)
    ok = violations == 0 and not errors
    record_acceptance(6, ok, f"{total} runs, {violations} with a violation, "
                             f"{len(errors)} solver errors (0)")
    assert ok


def test_criterion_7_oracles():
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    thr_bad = 0
    for _ in range(200):
        n = int(rng.integers(1, 11))
        s = int(rng.integers(1, n + 1))
        x = rng.integers(-3, 4, n).astype(float) if rng.uniform() < 0.5 else rng.standard_normal(n)
        thr_bad += not np.array_equal(hard_threshold(x, s).vector, canonical_projection(x, s)[1])
    g_err = h_err = nt_err = 0.0
    for _ in range(20):
        A = rng.standard_normal((6, 8))
        cs = CsObjective(A, rng.standard_normal(6))
        lg = LogisticObjective(rng.standard_normal((10, 8)), (rng.uniform(size=10) < 0.5) * 1.0,
                               mu=1e-2)
        for obj in (cs, lg):
            x = rng.standard_normal(8)
            idx = np.arange(8)
            g_err = max(g_err, rel_coord_err(obj.gradient(x), fd_grad(obj.value, x)))
            H_fd = np.column_stack([fd_grad(lambda z: obj.gradient(z)[i], x) for i in idx])
            rows = np.sort(rng.choice(8, 3, replace=False))
            cols = np.sort(rng.choice(8, 5, replace=False))
            h_err = max(h_err, rel_coord_err(obj.hessian_submatrix(x, rows, cols),
                                             H_fd[np.ix_(rows, cols)]))
            xs = x * (rng.uniform(size=8) < 0.5)
            T = np.sort(rng.choice(8, 3, replace=False))
            grad = obj.gradient(xs)
            J = np.setdiff1d(np.flatnonzero(xs), T)
            st = SolverState(xs, T, np.flatnonzero(xs), J, 1.0, 1e-4, 0, obj.value(xs), grad)
            d = newton_direction(obj, st).d
            ref = lu_newton(obj.hessian_submatrix(xs, idx, idx), grad, xs, T)
            nt_err = max(nt_err, float(np.max(np.abs(d - ref)) / max(1.0, np.max(np.abs(ref)))))
    seconds = time.perf_counter() - t0
    ok = thr_bad == 0 and g_err < 1e-5 and h_err < 1e-4 and nt_err <= 1e-10 and seconds < 30
    record_acceptance(7, ok, f"threshold mismatches {thr_bad}/200, grad {g_err:.1e} (<1e-5), "
                             f"hessian {h_err:.1e} (<1e-4), newton {nt_err:.1e} (<=1e-10), "
                             f"{seconds:.1f}s (<30s)")
    assert ok


def test_criterion_8_logistic():
    spec, _, _ = bench.preset("table3-desk")
    result = bench.run_sweep(spec)
    nhtp = {t.trial: t.loss for t in result.trials if t.solver == "nhtp"}
    iht = {t.trial: t.loss for t in result.trials if t.solver == "iht"}
    above = [t for t in nhtp if nhtp[t] > 1e-4]
    worse = [t for t in nhtp if nhtp[t] > iht[t]]
    ok = len(nhtp) == 10 and not above and not worse
    record_acceptance(8, ok, f"max NHTP loss {max(nhtp.values()):.2e} (<=1e-4), "
                             f"min IHT loss {min(iht.values()):.2e}, trials above {above}, "
                             f"worse than IHT {worse}")
    assert ok
