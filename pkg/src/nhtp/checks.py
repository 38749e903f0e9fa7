"""Installation self-checks: derivative, thresholding, Newton and stationarity
oracles. Each check returns a :class:`CheckResult`; ``run_checks`` drives them.
"""
from __future__ import annotations

import itertools
import time
from dataclasses import dataclass

import numpy as np

from .objectives import CsObjective, LogisticObjective, fd_gradient, fd_hessian
from .problems import gen_gaussian_cs, make_rng
from .solver import SolverConfig, SolverState, newton_direction, solve, update_gamma
from .sparse_core import hard_threshold


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""
    seconds: float = 0.0


def brute_force_threshold(x, s):
    """Best s-subset by exhaustive search; ties go to the lexicographically
    smallest index tuple."""
    x = np.asarray(x, dtype=float)
    best, best_val = None, -1.0
    for S in itertools.combinations(range(x.size), s):
        val = float(np.sum(x[list(S)] ** 2))
        if val > best_val:
            best, best_val = S, val
    z = np.zeros_like(x)
    z[list(best)] = x[list(best)]
    return z, np.array(best)


def _random_small_vector(rng, n):
    # Coarse integer grid forces frequent magnitude ties.
    if rng.uniform() < 0.5:
        return rng.integers(-3, 4, size=n).astype(float)
    return rng.standard_normal(n)


def check_hard_threshold(cases: int = 200, seed: int = 0) -> CheckResult:
    rng = make_rng(seed, "check-threshold")
    for c in range(cases):
        n = int(rng.integers(1, 11))
        s = int(rng.integers(1, n + 1))
        x = _random_small_vector(rng, n)
        z, S = brute_force_threshold(x, s)
        got = hard_threshold(x, s)
        if not (np.array_equal(got.vector, z) and np.array_equal(np.sort(got.support), S)):
            return CheckResult("hard_threshold_oracle", False, f"case {c}: x={x.tolist()}, s={s}")
    return CheckResult("hard_threshold_oracle", True, f"{cases} cases")


def small_objectives(rng, n: int = 8, m: int = 6):
    """One random CS and one random logistic objective of dimension ``n``."""
    A = rng.standard_normal((m, n))
    cs = CsObjective(A, rng.standard_normal(m))
    labels = (rng.uniform(size=m) < 0.5).astype(float)
    logit = LogisticObjective(rng.standard_normal((m, n)), labels, mu=1e-2)
    return cs, logit


def _rel(a, b):
    return float(np.linalg.norm(a - b) / max(1.0, np.linalg.norm(b)))


def check_gradient(obj, cases: int = 20, seed: int = 0, rtol: float = 1e-5,
                   name: str = "gradient_fd") -> CheckResult:
    rng = make_rng(seed, "check-gradient")
    worst = 0.0
    for _ in range(cases):
        x = rng.standard_normal(obj.n)
        worst = max(worst, _rel(obj.gradient(x), fd_gradient(obj, x)))
    return CheckResult(name, worst < rtol, f"max rel err {worst:.2e}")


def check_hessian(obj, cases: int = 20, seed: int = 0, rtol: float = 1e-4,
                  name: str = "hessian_fd") -> CheckResult:
    rng = make_rng(seed, "check-hessian")
    worst = 0.0
    for _ in range(cases):
        x = rng.standard_normal(obj.n)
        k = int(rng.integers(1, obj.n + 1))
        rows = np.sort(rng.choice(obj.n, size=k, replace=False))
        cols = np.sort(rng.choice(obj.n, size=int(rng.integers(1, obj.n + 1)), replace=False))
        H = fd_hessian(obj, x)
        worst = max(worst, _rel(obj.hessian_submatrix(x, rows, cols), H[np.ix_(rows, cols)]))
    return CheckResult(name, worst < rtol, f"max rel err {worst:.2e}")


def dense_newton_oracle(obj, x, T):
    """Solve the full Jacobian system of ``F(x; T) = (grad_T f, x_{T^c})`` by LU."""
    n = obj.n
    Tc = np.setdiff1d(np.arange(n), T)
    H = _full_hessian(obj, x)
    F = np.concatenate([obj.gradient(x)[T], x[Tc]])
    Jac = np.zeros((n, n))
    Jac[: T.size, : T.size] = H[np.ix_(T, T)]
    Jac[: T.size, T.size:] = H[np.ix_(T, Tc)]
    Jac[T.size:, T.size:] = np.eye(Tc.size)
    sol = np.linalg.solve(Jac, -F)
    d = np.empty(n)
    d[T], d[Tc] = sol[: T.size], sol[T.size:]
    return d


def _full_hessian(obj, x):
    idx = np.arange(obj.n)
    return obj.hessian_submatrix(x, idx, idx)


def check_newton(cases: int = 20, seed: int = 0, rtol: float = 1e-10) -> CheckResult:
    rng = make_rng(seed, "check-newton")
    worst = 0.0
    for _ in range(cases):
        for obj in small_objectives(rng):
            s = int(rng.integers(1, 5))
            x = rng.standard_normal(obj.n) * (rng.uniform(size=obj.n) < 0.6)
            grad = obj.gradient(x)
            T = np.sort(rng.choice(obj.n, size=s, replace=False))
            T_prev = np.flatnonzero(x)
            J = np.union1d(np.setdiff1d(T_prev, T), np.setdiff1d(np.flatnonzero(x), T))
            state = SolverState(x, T, T_prev, J, 1.0, update_gamma(x, T, SolverConfig(s=s)), 0,
                                obj.value(x), grad)
            d = newton_direction(obj, state).d
            worst = max(worst, _rel(d, dense_newton_oracle(obj, x, T)))
    return CheckResult("newton_dense_oracle", worst < rtol, f"max rel err {worst:.2e}")


def check_newton_closed_form(cases: int = 10, seed: int = 0) -> CheckResult:
    """For least squares a unit Newton step lands on the restricted minimiser."""
    rng = make_rng(seed, "check-closed-form")
    worst = 0.0
    for _ in range(cases):
        obj = CsObjective(rng.standard_normal((12, 10)), rng.standard_normal(12))
        T = np.sort(rng.choice(10, size=4, replace=False))
        x = rng.standard_normal(10)
        J = np.setdiff1d(np.flatnonzero(x), T)
        state = SolverState(x, T, np.flatnonzero(x), J, 1.0, 1e-4, 0, obj.value(x),
                            obj.gradient(x))
        d = newton_direction(obj, state).d
        z = np.zeros(10)
        z[T] = (x + d)[T]
        worst = max(worst, _rel(z, obj.restricted_minimize(T)))
    return CheckResult("newton_closed_form", worst < 1e-10, f"max rel err {worst:.2e}")


def check_stationarity(trials: int = 5, seed: int = 0) -> CheckResult:
    """Stationary exits must be fixed points of ``P_s(x - eta grad f(x))``."""
    for t in range(trials):
        inst = gen_gaussian_cs(64, 32, 4, seed + t)
        rep = solve(inst.objective, SolverConfig(s=4))
        if rep.status.value != "stationary" or not rep.certificate.passed:
            return CheckResult("stationarity_certificate", False, f"trial {t}: {rep.status}")
        x = rep.x_final
        y = hard_threshold(x - rep.certificate.eta_used * inst.objective.gradient(x), 4).vector
        if np.linalg.norm(y - x) > 1e-6:
            return CheckResult("stationarity_certificate", False,
                               f"trial {t}: ||P_s(x - eta g) - x|| = {np.linalg.norm(y - x):.2e}")
    return CheckResult("stationarity_certificate", True, f"{trials} solves")


def run_checks(quick: bool = False, seed: int = 0) -> list:
    rng = make_rng(seed, "check-objectives")
    cs, logit = small_objectives(rng)
    jobs = [
        lambda: check_hard_threshold(seed=seed),
        lambda: check_gradient(cs, seed=seed, name="gradient_fd_cs"),
        lambda: check_gradient(logit, seed=seed, name="gradient_fd_logistic"),
        lambda: check_hessian(cs, seed=seed, name="hessian_fd_cs"),
        lambda: check_hessian(logit, seed=seed, name="hessian_fd_logistic"),
        lambda: check_newton(seed=seed),
        lambda: check_newton_closed_form(seed=seed),
    ]
    if not quick:
        jobs.append(lambda: check_stationarity(seed=seed))
    out = []
    for job in jobs:
        t0 = time.perf_counter()
        res = job()
        res.seconds = time.perf_counter() - t0
        out.append(res)
    return out
