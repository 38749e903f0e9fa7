import csv
import math

import numpy as np
import pytest

from nhtp import bench
from nhtp.bench import RateClass, SweepResult, SweepSpec, analyze_rate


def _small_spec(**kw):
    base = dict(problem_kind="gaussian", grid=[dict(n=64, m=32, s=3), dict(n=64, m=32, s=6)],
                trials=3, solvers=["nhtp", "htp"], base_seed=11)
    base.update(kw)
    return SweepSpec(**base)


def _strip_timing(result):
    rows = []
    for c in result.cells:
        row = c.row(omit_timing=True)
        rows.append(row)
    trials = [(t.cell, t.trial, t.solver, t.seed, t.success, t.error, t.loss, t.iters, t.status)
              for t in result.trials]
    return rows, trials


def test_spec_validation():
    with pytest.raises(ValueError):
        _small_spec(trials=0)
    with pytest.raises(ValueError):
        _small_spec(grid=[])
    with pytest.raises(ValueError):
        _small_spec(solvers=["nope"])
    with pytest.raises(ValueError):
        _small_spec(problem_kind="nope")


def test_trial_seeds_are_distinct_and_stable():
    seeds = {bench.trial_seed(0, c, t) for c in range(5) for t in range(20)}
    assert len(seeds) == 100
    assert bench.trial_seed(3, 1, 2) == bench.trial_seed(3, 1, 2)


def test_sweep_rates_are_exact_fractions():
    res = bench.run_sweep(_small_spec())
    assert len(res.cells) == 4
    for c in res.cells:
        rows = [t for t in res.trials if t.solver == c.solver and t.cell == (0 if c.s == 3 else 1)]
        assert c.success_rate == sum(t.success for t in rows) / len(rows)
        assert 0.0 <= c.success_rate <= 1.0


def test_sweep_determinism_across_workers():
    one = bench.run_sweep(_small_spec(trials=1, parallelism=1))
    again = bench.run_sweep(_small_spec(trials=1, parallelism=1))
    many = bench.run_sweep(_small_spec(trials=1, parallelism=8))
    assert _strip_timing(one) == _strip_timing(again) == _strip_timing(many)


def test_solver_failure_counts_as_non_success(monkeypatch):
    def boom(instance, s, opts):
        raise RuntimeError("injected")
    monkeypatch.setitem(bench.SOLVERS, "htp", boom)
    res = bench.run_sweep(_small_spec())
    htp = [c for c in res.cells if c.solver == "htp"]
    assert all(c.success_rate == 0.0 for c in htp)
    assert all(t.status.startswith("error") for t in res.trials if t.solver == "htp")


def test_mock_solver_returning_planted_signal_has_zero_error(monkeypatch):
    from nhtp.solver import SolverConfig, solve

    def oracle(instance, s, opts):
        rep = solve(instance.objective, SolverConfig(s=s, max_iters=0))
        rep.x_final = instance.x_star.copy()
        return rep
    monkeypatch.setitem(bench.SOLVERS, "htp", oracle)
    res = bench.run_error_table(_small_spec(problem_kind="dct"))
    assert all(c.mean_error == 0.0 and c.success_rate == 1.0
               for c in res.cells if c.solver == "htp")
    with pytest.raises(ValueError):
        bench.run_error_table(SweepSpec("logistic-independent", [dict(n=20, m=10, s=2)], 1))


def test_logistic_sweep_reports_loss():
    res = bench.run_sweep(SweepSpec("logistic-independent", [dict(n=60, m=30, s=5)], 2,
                                    ["nhtp", "iht"]))
    assert all(math.isnan(c.success_rate) and c.mean_loss < math.log(2) for c in res.cells)


def test_success_rate_non_increasing_in_s():
    spec = SweepSpec("gaussian", [dict(n=128, m=48, s=s) for s in (4, 8, 12, 16)], 100,
                     ["nhtp"], base_seed=5)
    rates = [c.success_rate for c in bench.run_sweep(spec).cells]
    assert all(b <= a + 0.1 for a, b in zip(rates, rates[1:]))


def test_export_csv_json_and_plot(tmp_path):
    res = bench.run_sweep(_small_spec())
    bench.export(res, "csv", tmp_path / "r.csv")
    with open(tmp_path / "r.csv") as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0][:10]) == ("kind", "n", "m", "s", "solver", "trials", "success_rate",
                                   "mean_error", "mean_time", "mean_iters")
    assert len(rows) == 2 * 2 + 1
    bench.export(res, "json", tmp_path / "r.json")
    back = bench.load_json_result(tmp_path / "r.json")
    one = res.cells[0].row()
    assert back[0].keys() == one.keys()
    for k, v in one.items():
        if isinstance(v, float) and math.isnan(v):
            assert math.isnan(back[0][k])
        else:
            assert back[0][k] == v
    bench.export_plot_data(res, tmp_path / "p.csv", "s", "success_rate")
    plot = list(csv.reader(open(tmp_path / "p.csv")))
    assert plot[0] == ["s", "nhtp", "htp"] and len(plot) == 3


def test_export_empty_and_errors(tmp_path):
    bench.export(SweepResult([]), "csv", tmp_path / "e.csv")
    assert (tmp_path / "e.csv").read_text().count("\n") == 1
    with pytest.raises(OSError, match="missing"):
        bench.export(SweepResult([]), "csv", tmp_path / "missing" / "x.csv")
    with pytest.raises(ValueError):
        bench.export(SweepResult([]), "xml", tmp_path / "x")


def test_analyze_rate_synthetic():
    quad = analyze_rate([10.0 ** -(2 ** k) for k in range(6)])
    assert quad.classification is RateClass.QUADRATIC and abs(quad.exponent - 2) <= 0.15
    lin = analyze_rate([0.5 ** k for k in range(60)])
    assert lin.classification is RateClass.LINEAR and abs(lin.exponent - 1) <= 0.15
    sup = analyze_rate([10.0 ** -(1.5 ** k) for k in range(4, 12)])
    assert sup.classification is RateClass.SUPERLINEAR and abs(sup.exponent - 1.5) <= 0.15
    assert analyze_rate([1.0, 1e-3]).classification is RateClass.INCONCLUSIVE
    assert analyze_rate([]).classification is RateClass.INCONCLUSIVE
    assert all(1e-14 < r <= 1e-2 for r in lin.window)


def test_analyze_rate_on_records():
    from nhtp.solver import IterationRecord
    recs = [IterationRecord(k, None, None, 0.0, 10.0 ** -(2 ** k), 0.0, False, 1.0)
            for k in range(6)]
    assert analyze_rate(recs).classification is RateClass.QUADRATIC


def test_presets():
    for name in bench.PRESETS:
        spec, x_axis, metric = bench.preset(name)
        assert spec.trials >= 1 and spec.grid
        assert max(c["n"] for c in spec.grid) <= 2048
    spec, _, _ = bench.preset("fig1-desk")
    assert [c["s"] for c in spec.grid] == list(range(6, 37, 2)) and spec.trials == 100
    big, _, _ = bench.preset("table2-desk", full_scale=True)
    assert max(c["n"] for c in big.grid) == 25000
    with pytest.raises(ValueError):
        bench.preset("nope")


def test_trace_checks():
    from nhtp.solver import DirectionKind, IterationRecord
    mk = lambda k, kind, a, f, ch: IterationRecord(k, kind, a, f, 0.0, 0.0, ch, 1.0,
                                                   next_outside_support=0)
    tr = [mk(0, DirectionKind.GRADIENT, 0.5, 3.0, True), mk(1, DirectionKind.NEWTON, 1.0, 2.0, True),
          mk(2, DirectionKind.NEWTON, 1.0, 1.0, False), mk(3, None, None, 0.5, False)]
    assert bench.trace_checks(tr) == (True, True, True)
    tr[2] = mk(2, DirectionKind.NEWTON, 0.5, 2.5, False)
    assert bench.trace_checks(tr) == (False, True, False)


def test_quadratic_rate_on_logistic_traces():
    # Least squares converges in one exact step once T settles, leaving no fit
    # window; logistic loss keeps a genuine quadratic tail.
    from nhtp import problems
    from nhtp.solver import SolverConfig, solve
    for seed in range(4):
        inst = problems.gen_logistic_correlated(200, 100, 5, 0.5, seed, mu=1e-2)
        fit = analyze_rate(solve(inst.objective, SolverConfig(s=5, tol=1e-12)).trace)
        assert fit.classification is RateClass.QUADRATIC and abs(fit.exponent - 2) <= 0.15
