"""Comparison solvers: iterative hard thresholding and HTP.

Both return the same :class:`~nhtp.solver.SolveReport` as the main solver so
traces and sweeps can treat every solver alike.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass

import numpy as np

from .objectives import CsObjective, Objective
from .solver import (DirectionKind, IterationRecord, SolveReport, StationarityCertificate, Status,
                     certify_stationarity, tolerance)
from .sparse_core import best_s_support, hard_threshold

log = logging.getLogger(__name__)


@dataclass
class BaselineConfig:
    s: int
    step_size: float = 0.5
    max_iters: int = 1000
    tol: float = 1e-10

    def __post_init__(self):
        if int(self.s) < 1:
            raise ValueError("s must be >= 1")
        self.s = int(self.s)
        if self.step_size <= 0:
            raise ValueError("step_size must be positive")
        if self.max_iters < 0 or self.tol < 0:
            raise ValueError("max_iters and tol must be non-negative")


def _record(obj, k, x, g, T, eta, f, T_prev, alpha):
    tol_value, residual = tolerance(obj, x, T, eta, g)
    return IterationRecord(k, DirectionKind.GRADIENT if alpha is not None else None,
                           alpha, f, residual, tol_value,
                           not np.array_equal(T, T_prev), eta, support=tuple(T.tolist()))


def iht_solve(obj: Objective, config: BaselineConfig, x0=None) -> SolveReport:
    """``x <- P_s(x - eta * grad f(x))`` until the step falls below ``tol``.

    A step size above the curvature bound can diverge; the run then stops at
    the first non-finite objective value with a failed certificate.
    """
    # Divergent runs overflow by design; silence the floating-point noise.
    with np.errstate(over="ignore", invalid="ignore"):
        return _iht_loop(obj, config, x0)


def _iht_loop(obj, config, x0):
    t0 = time.perf_counter()
    eta, s = config.step_size, config.s
    x = np.zeros(obj.n) if x0 is None else hard_threshold(x0, s).vector
    trace = []
    status = Status.MAX_ITERS
    message = ""
    T_prev = np.flatnonzero(x)
    k = 0
    while True:
        f, g = obj.value_and_gradient(x)
        if not np.isfinite(f):
            trace.append(IterationRecord(k, None, None, f, np.inf, np.inf, False, eta))
            message = f"objective became non-finite at iteration {k}"
            break
        th = hard_threshold(x - eta * g, s)
        step = float(np.linalg.norm(th.vector - x))
        done = step < config.tol
        if done or k >= config.max_iters:
            trace.append(_record(obj, k, x, g, th.support, eta, f, T_prev, None))
            if done:
                status = Status.STATIONARY
            break
        trace.append(_record(obj, k, x, g, th.support, eta, f, T_prev, eta))
        x, T_prev = th.vector, th.support
        k += 1
    if np.all(np.isfinite(x)):
        cert = certify_stationarity(obj, x, eta, 1e-6, s)
    else:
        cert = StationarityCertificate(np.inf, np.inf, eta, False)
    return SolveReport(x_final=x, certificate=cert, trace=trace, status=status,
                       wall_time=time.perf_counter() - t0, iterations=k, eta_final=eta,
                       message=message)


def htp_solve(obj: CsObjective, config: BaselineConfig, x0=None) -> SolveReport:
    """Alternate best-s support selection with least squares on that support.

    Stops as soon as the support repeats. A return to an older support is a
    cycle; it is logged and ends the run.
    """
    if not getattr(obj, "has_closed_form_restricted_minimizer", False):
        raise TypeError("HTP needs an objective with a closed-form restricted minimiser")
    t0 = time.perf_counter()
    eta, s = config.step_size, config.s
    x = np.zeros(obj.n) if x0 is None else np.array(x0, dtype=float)
    trace = []
    status = Status.MAX_ITERS
    message = ""
    T_prev = None
    seen = set()
    k = 0
    while True:
        f, g = obj.value_and_gradient(x)
        T = best_s_support(x - eta * g, s)
        repeat = T_prev is not None and np.array_equal(T, T_prev)
        if repeat or k >= config.max_iters:
            trace.append(_record(obj, k, x, g, T, eta, f, T_prev, None))
            if repeat:
                status = Status.STATIONARY
            break
        key = T.tobytes()
        if key in seen:
            message = f"support cycle detected at iteration {k}"
            log.warning("HTP: %s", message)
            trace.append(_record(obj, k, x, g, T, eta, f, T_prev, None))
            break
        seen.add(key)
        trace.append(_record(obj, k, x, g, T, eta, f, T_prev, 1.0))
        x = obj.restricted_minimize(T)
        T_prev = T
        k += 1
    cert = certify_stationarity(obj, x, eta, 1e-6, s)
    return SolveReport(x_final=x, certificate=cert, trace=trace, status=status,
                       wall_time=time.perf_counter() - t0, iterations=k, eta_final=eta,
                       message=message)
