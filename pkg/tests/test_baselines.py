import logging

import numpy as np
import pytest

from nhtp import problems
from nhtp.baselines import BaselineConfig, htp_solve, iht_solve
from nhtp.objectives import CsObjective
from nhtp.solver import SolverConfig, Status, solve
from nhtp.sparse_core import hard_threshold


def test_config_validation():
    with pytest.raises(ValueError):
        BaselineConfig(s=2, step_size=0.0)
    with pytest.raises(ValueError):
        BaselineConfig(s=0)


def test_iht_fixed_point_does_not_move(rng):
    A = rng.standard_normal((20, 30))
    x = np.zeros(30)
    x[[1, 2]] = [3.0, -2.0]
    rep = iht_solve(CsObjective(A, A @ x), BaselineConfig(s=2, step_size=0.1), x0=x)
    assert rep.iterations == 0 and rep.status is Status.STATIONARY
    np.testing.assert_array_equal(rep.x_final, x)


def test_iht_orthonormal_one_step(rng):
    Q, _ = np.linalg.qr(rng.standard_normal((16, 16)))
    b = rng.standard_normal(16)
    rep = iht_solve(CsObjective(Q, b), BaselineConfig(s=4, step_size=1.0))
    np.testing.assert_allclose(rep.x_final, hard_threshold(Q.T @ b, 4).vector, atol=1e-12)
    assert rep.iterations == 1


def test_iht_iterates_are_s_sparse():
    inst = problems.gen_gaussian_cs(256, 64, 8, 4)
    rep = iht_solve(inst.objective, BaselineConfig(s=8, max_iters=50))
    assert all(len(r.support) == 8 for r in rep.trace)
    assert np.count_nonzero(rep.x_final) <= 8


def test_iht_divergence_is_reported():
    inst = problems.gen_gaussian_cs(64, 32, 4, 0)
    rep = iht_solve(inst.objective, BaselineConfig(s=4, step_size=10.0))
    assert not rep.certificate.passed and "non-finite" in rep.message


def test_htp_from_true_support_stops_after_one_solve():
    inst = problems.gen_gaussian_cs(256, 64, 5, 2)
    x0 = np.zeros(256)
    T = np.flatnonzero(inst.x_star)
    x0[T] = 1e-3 * np.sign(inst.x_star[T]) + inst.x_star[T]
    rep = htp_solve(inst.objective, BaselineConfig(s=5, step_size=0.9), x0=x0)
    assert rep.status is Status.STATIONARY and rep.iterations == 1
    np.testing.assert_allclose(rep.x_final, inst.x_star, atol=1e-12)


def test_htp_recovers_most_seeds():
    wins = sum(problems.recovery_success(
        htp_solve(inst.objective, BaselineConfig(s=12, step_size=0.9)).x_final, inst.x_star)
        for inst in (problems.gen_gaussian_cs(256, 64, 12, 100 + t) for t in range(20)))
    assert wins >= 15


def test_htp_rejects_logistic():
    inst = problems.gen_logistic_independent(10, 6, 0)
    with pytest.raises(TypeError):
        htp_solve(inst.objective, BaselineConfig(s=2))


def test_htp_cycle_is_logged(caplog):
    # Search seeds for a cycling run; generic instances rarely cycle, so accept none.
    with caplog.at_level(logging.WARNING, logger="nhtp.baselines"):
        for seed in range(40):
            inst = problems.gen_gaussian_cs(64, 20, 9, seed)
            rep = htp_solve(inst.objective, BaselineConfig(s=9, step_size=2.0, max_iters=200))
            if rep.message:
                assert "cycle" in rep.message
                assert any("cycle" in r.message for r in caplog.records)
                break


def test_htp_matches_nhtp_tail():
    for seed in range(5):
        inst = problems.gen_gaussian_cs(256, 64, 8, seed)
        obj = inst.objective
        pairs = []

        def cb(state, direction, rec, x_next):
            pairs.append((state.T.copy(), x_next, rec.alpha, direction.kind.value))

        solve(obj, SolverConfig(s=8), callback=cb)
        for T, x_next, alpha, kind in pairs:
            if alpha == 1.0 and kind == "newton":
                np.testing.assert_allclose(x_next, obj.restricted_minimize(T), atol=1e-8)


def test_nhtp_beats_iht_sweep():
    rates = {}
    for name in ("nhtp", "iht"):
        ok = 0
        for t in range(30):
            inst = problems.gen_gaussian_cs(256, 64, 14, 500 + t)
            if name == "nhtp":
                x = solve(inst.objective, SolverConfig(s=14)).x_final
            else:
                x = iht_solve(inst.objective, BaselineConfig(s=14, step_size=0.5)).x_final
            ok += problems.recovery_success(x, inst.x_star)
        rates[name] = ok / 30
    assert 0 < rates["iht"] < rates["nhtp"]
