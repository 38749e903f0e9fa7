"""Newton hard-thresholding pursuit.

Minimises a smooth ``f`` subject to ``||x||_0 <= s``. Each iteration picks
the best-s support ``T`` of ``x - eta * grad f(x)``, tries a restricted
Newton step on ``T`` (falling back to the restricted gradient when the
Newton step fails the descent test), and takes an Armijo step that keeps
the next iterate supported on ``T``.
"""
from __future__ import annotations

import collections
import csv
import dataclasses
import enum
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np
import scipy.linalg as sla

from .objectives import Objective
from .sparse_core import best_s_support, complement, sth_largest_abs, top_s_indices

# |x_{T^c}|_inf at or below this counts as "x vanishes off T".
ZERO_OFF_SUPPORT = 1e-15
NEWTON_RESIDUAL_RTOL = 1e-10


class DirectionKind(str, enum.Enum):
    NEWTON = "newton"
    GRADIENT = "gradient"


class Status(str, enum.Enum):
    STATIONARY = "stationary"
    F_CHANGE_STALLED = "f_change_stalled"
    MAX_ITERS = "max_iters"


class SolveFailure(RuntimeError):
    """The Newton system could not be solved reliably."""


class LineSearchFailure(RuntimeError):
    """No admissible step within the backtracking budget."""


@dataclass
class SolverConfig:
    s: int
    sigma: float = 5e-5
    beta: float = 0.5
    gamma_small: float = 1e-10
    gamma_large: float = 1e-4
    eta0: float | str = "auto"
    tol: float = 1e-6
    f_change_tol: float = 1e-6
    max_iters: int = 2000
    max_backtracks: int = 50
    eta_adaptive: bool = True
    trace_limit: int | None = None
    eta_backoff: float = 1.0 / 1.05
    max_eta_backoffs: int = 1000

    def __post_init__(self):
        if int(self.s) < 1:
            raise ValueError("s must be >= 1")
        self.s = int(self.s)
        if not 0.0 < self.sigma < 0.5:
            raise ValueError("sigma must lie in (0, 1/2)")
        if not 0.0 < self.beta < 1.0:
            raise ValueError("beta must lie in (0, 1)")
        if self.gamma_small <= 0 or self.gamma_large <= 0:
            raise ValueError("gamma values must be positive")
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.max_iters < 0 or self.max_backtracks < 0:
            raise ValueError("iteration limits must be non-negative")
        if self.eta0 != "auto":
            self.eta0 = float(self.eta0)
            if self.eta0 <= 0:
                raise ValueError("eta0 must be positive")
        if not 0.0 < self.eta_backoff < 1.0:
            raise ValueError("eta_backoff must lie in (0, 1)")
        if self.max_eta_backoffs < 0:
            raise ValueError("max_eta_backoffs must be non-negative")
        if self.trace_limit is not None and self.trace_limit < 1:
            raise ValueError("trace_limit must be >= 1 or None")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_mapping(cls, data: Mapping[str, object]) -> "SolverConfig":
        """Build from a flat key/value mapping; values may be strings."""
        fields = {f.name: f for f in dataclasses.fields(cls)}
        unknown = set(data) - set(fields)
        if unknown:
            raise ValueError(f"unknown solver config keys: {sorted(unknown)}")
        kw = {}
        for key, raw in data.items():
            kw[key] = _coerce(key, raw)
        return cls(**kw)


def _coerce(key, raw):
    if not isinstance(raw, str):
        return raw
    text = raw.strip()
    if key == "eta_adaptive":
        if text.lower() in {"1", "true", "yes", "on"}:
            return True
        if text.lower() in {"0", "false", "no", "off"}:
            return False
        raise ValueError(f"{key}: expected a boolean, got {raw!r}")
    if key == "eta0" and text == "auto":
        return text
    if key == "trace_limit" and text.lower() in {"", "none"}:
        return None
    if key in {"s", "max_iters", "max_backtracks", "trace_limit", "max_eta_backoffs"}:
        return int(text)
    return float(text)


@dataclass
class SolverState:
    x: np.ndarray
    T: np.ndarray
    T_prev: np.ndarray
    J: np.ndarray
    eta: float
    gamma: float
    k: int
    f_val: float
    grad: np.ndarray

    @property
    def T_c(self) -> np.ndarray:
        return complement(self.T, self.x.size)


@dataclass
class Direction:
    kind: DirectionKind
    d: np.ndarray
    d_on_T: np.ndarray
    descent_value: float
    # Newton system residual ||H d_T - rhs|| / (1 + ||rhs||); 0 for gradient.
    system_residual: float = 0.0


@dataclass
class IterationRecord:
    """State at iterate ``k`` and the step taken from it.

    The terminal record (the iterate the run stops at) has no direction and
    ``alpha`` is None.
    """

    k: int
    direction_kind: DirectionKind | None
    alpha: float | None
    f_val: float
    residual_norm: float
    tol_value: float
    support_changed: bool
    eta: float
    gamma: float | None = None
    support: tuple = ()
    step_norm: float | None = None
    direction_norm: float | None = None
    next_outside_support: int | None = None
    eta_backoffs: int = 0


@dataclass
class StationarityCertificate:
    grad_on_support_norm: float
    offsupport_violation: float
    eta_used: float
    passed: bool


@dataclass
class SolveReport:
    x_final: np.ndarray
    certificate: StationarityCertificate
    trace: list
    status: Status
    wall_time: float
    iterations: int
    eta_final: float
    message: str = ""

    def direction_counts(self) -> dict:
        counts = collections.Counter(rec.direction_kind for rec in self.trace
                                     if rec.direction_kind is not None)
        return {kind.value: counts.get(kind, 0) for kind in DirectionKind}


TRACE_COLUMNS = ("k", "kind", "alpha", "f", "residual", "tol")


def trace_rows(trace):
    for rec in trace:
        yield (rec.k, rec.direction_kind.value if rec.direction_kind else "",
               "" if rec.alpha is None else repr(rec.alpha),
               repr(rec.f_val), repr(rec.residual_norm), repr(rec.tol_value))


def write_trace_csv(trace, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_COLUMNS)
        w.writerows(trace_rows(trace))


# --- schedules -------------------------------------------------------------

def initial_point(obj: Objective) -> np.ndarray:
    """Zero unless the gradient vanishes there, in which case all-ones."""
    zero = np.zeros(obj.n)
    g0 = obj.gradient(zero)
    if np.max(np.abs(g0), initial=0.0) > ZERO_OFF_SUPPORT:
        return zero
    return np.ones(obj.n)


def eta_initial(n: int, s: int) -> float:
    if n < 2:
        raise ValueError("n must be >= 2")
    return 10.0 * (1.0 + s / n) / min(10.0, math.log(n))


def update_eta(k: int, eta: float, residual: float) -> float:
    """Shrink or grow ``eta`` by 1.05 every tenth iteration (k >= 10)."""
    if k < 10 or k % 10:
        return eta
    if residual > k ** -2.0:
        return eta / 1.05
    return 1.05 * eta


def update_gamma(x: np.ndarray, T: np.ndarray, config: SolverConfig) -> float:
    off = np.delete(x, T)
    if off.size == 0 or np.max(np.abs(off)) <= ZERO_OFF_SUPPORT:
        return config.gamma_small
    return config.gamma_large


# --- directions ------------------------------------------------------------

def _full_descent(state: SolverState, d: np.ndarray) -> float:
    return float(state.grad @ d)


def newton_direction(obj: Objective, state: SolverState) -> Direction:
    """Restricted Newton step: ``H d_T = G x_J - grad_T``, ``d_{T^c} = -x_{T^c}``.

    Raises :class:`SolveFailure` if ``H`` is not numerically positive
    definite or the solve residual is too large.
    """
    x, T, J = state.x, state.T, state.J
    H = obj.hessian_submatrix(x, T, T)
    rhs = -state.grad[T]
    if J.size:
        rhs = rhs + obj.hessian_submatrix(x, T, J) @ x[J]
    if not np.all(np.isfinite(H)) or not np.all(np.isfinite(rhs)):
        raise SolveFailure("non-finite Newton system")
    try:
        factor = sla.cho_factor(H, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise SolveFailure(f"Hessian block not positive definite: {exc}") from exc
    d_T = sla.cho_solve(factor, rhs, check_finite=False)
    res = float(np.linalg.norm(H @ d_T - rhs)) / (1.0 + float(np.linalg.norm(rhs)))
    if not np.isfinite(res) or res > NEWTON_RESIDUAL_RTOL:
        raise SolveFailure(f"Newton residual {res:.3e} too large")
    d = -x.copy()
    d[T] = d_T
    return Direction(DirectionKind.NEWTON, d, d_T, _full_descent(state, d), res)


def gradient_direction(state: SolverState) -> Direction:
    d = -state.x.copy()
    d_T = -state.grad[state.T]
    d[state.T] = d_T
    return Direction(DirectionKind.GRADIENT, d, d_T, _full_descent(state, d))


def check_descent_condition(direction: Direction, state: SolverState) -> bool:
    """<grad_T f, d_T> <= -gamma ||d||^2 + ||x_{T^c}||^2 / (4 eta)."""
    lhs = float(state.grad[state.T] @ direction.d_on_T)
    off = np.delete(state.x, state.T)
    rhs = -state.gamma * float(direction.d @ direction.d) + float(off @ off) / (4.0 * state.eta)
    return lhs <= rhs


def choose_direction(obj: Objective, state: SolverState) -> Direction:
    try:
        dn = newton_direction(obj, state)
    except SolveFailure:
        return gradient_direction(state)
    if check_descent_condition(dn, state) and dn.descent_value <= 0.0:
        return dn
    return gradient_direction(state)


def armijo_search(obj: Objective, state: SolverState, direction: Direction,
                  sigma: float, beta: float, max_backtracks: int):
    """Backtrack ``alpha = beta**l`` until sufficient decrease holds.

    The trial point equals ``x_T + alpha * d_T`` on ``T`` and zero elsewhere.
    Returns ``(alpha, x_next, f_next)``.
    """
    T = state.T
    x_T = state.x[T]
    # Never accept an increase, even if the slope is not negative.
    slope = min(direction.descent_value, 0.0)
    alpha = 1.0
    for _ in range(max_backtracks + 1):
        trial_T = x_T + alpha * direction.d_on_T
        f_trial = obj.value_on_support(trial_T, T)
        if f_trial <= state.f_val + sigma * alpha * slope:
            x_next = np.zeros_like(state.x)
            x_next[T] = trial_T
            return alpha, x_next, f_trial
        alpha *= beta
    raise LineSearchFailure(
        f"Armijo search failed after {max_backtracks} backtracks")


# --- stationarity ----------------------------------------------------------

def tolerance(obj: Objective, x: np.ndarray, T: np.ndarray, eta: float,
              grad: np.ndarray | None = None):
    """Return ``(tol_value, residual_norm)`` for iterate ``x`` on support ``T``."""
    g = obj.gradient(x) if grad is None else grad
    off = np.ones(x.size, dtype=bool)
    off[T] = False
    g_T = g[T]
    x_off = x[off]
    residual = math.sqrt(float(g_T @ g_T) + float(x_off @ x_off))
    x_s = sth_largest_abs(x, T.size) if T.size else 0.0
    viol = 0.0
    if off.any():
        viol = max(float(np.max(np.abs(g[off]))) - x_s / eta, 0.0)
    return residual + viol, residual


def certify_stationarity(obj: Objective, x, eta: float, tol: float, s: int,
                         grad: np.ndarray | None = None) -> StationarityCertificate:
    """Check ``grad_G f = 0`` and ``|grad_{G^c} f|_inf <= x_(s)/eta`` to ``tol``,
    with ``G`` the support of ``x`` completed to ``s`` indices."""
    x = np.asarray(x, dtype=float)
    g = obj.gradient(x) if grad is None else grad
    G = top_s_indices(x, s)
    on = float(np.linalg.norm(g[G]))
    off = np.ones(x.size, dtype=bool)
    off[G] = False
    viol = 0.0
    if off.any():
        viol = max(float(np.max(np.abs(g[off]))) - sth_largest_abs(x, s) / eta, 0.0)
    return StationarityCertificate(on, viol, eta, on <= tol and viol <= tol)


# --- main loop -------------------------------------------------------------

def solve(obj: Objective, config: SolverConfig, x0: np.ndarray | None = None,
          callback: Callable | None = None) -> SolveReport:
    """Run the solver until the tolerance, f-change, or iteration test fires.

    When no admissible Armijo step exists for the support picked at the
    current ``eta``, the support is re-picked with ``eta`` shrunk by
    ``config.eta_backoff`` (for that iteration only) until a step is found.
    Small enough ``eta`` always admits one, so monotone decrease is kept.

    ``callback(state, direction, record, x_next)`` is invoked after every
    accepted step, before the iterate is advanced.
    """
    t0 = time.perf_counter()
    n, s = obj.n, config.s
    if s > n:
        raise ValueError(f"s = {s} exceeds dimension n = {n}")
    x = initial_point(obj) if x0 is None else np.array(x0, dtype=float)
    eta = eta_initial(n, s) if config.eta0 == "auto" else float(config.eta0)
    f_val, grad = obj.value_and_gradient(x)
    T_prev = np.flatnonzero(x)
    trace = collections.deque(maxlen=config.trace_limit)
    status = Status.MAX_ITERS
    message = ""
    stalled = False
    cert = None
    k = 0
    eta_try, backoffs = eta, 0
    failed: set = set()
    newton_cache: dict = {}
    while True:
        T = best_s_support(x - eta_try * grad, s)
        tol_value, residual = tolerance(obj, x, T, eta_try, grad)
        changed = not np.array_equal(T, T_prev)
        if tol_value <= config.tol:
            cert = certify_stationarity(obj, x, eta_try, config.tol, s, grad)
            if cert.passed:
                status = Status.STATIONARY
        if status is Status.STATIONARY or stalled or k >= config.max_iters:
            if status is not Status.STATIONARY:
                status = Status.F_CHANGE_STALLED if stalled else Status.MAX_ITERS
            trace.append(IterationRecord(k, None, None, f_val, residual, tol_value,
                                         changed, eta_try, support=tuple(T.tolist())))
            break
        J = np.union1d(np.setdiff1d(T_prev, T), np.setdiff1d(np.flatnonzero(x), T))
        state = SolverState(x, T, T_prev, J, eta_try, update_gamma(x, T, config), k,
                            f_val, grad)
        key = T.tobytes()
        if key not in newton_cache:
            try:
                newton_cache[key] = newton_direction(obj, state)
            except SolveFailure:
                newton_cache[key] = None
        dn = newton_cache[key]
        if dn is not None and dn.descent_value <= 0.0 and check_descent_condition(dn, state):
            direction = dn
        else:
            direction = gradient_direction(state)
        try:
            if (key, direction.kind) in failed:
                raise LineSearchFailure("support already rejected at a larger eta")
            alpha, x_next, f_next = armijo_search(obj, state, direction, config.sigma,
                                                  config.beta, config.max_backtracks)
        except LineSearchFailure as exc:
            failed.add((key, direction.kind))
            if backoffs < config.max_eta_backoffs:
                backoffs += 1
                eta_try *= config.eta_backoff
                continue
            message = f"{exc}; eta backoff budget exhausted"
            trace.append(IterationRecord(k, None, None, f_val, residual, tol_value,
                                         changed, eta_try, support=tuple(T.tolist())))
            break
        outside = int(np.count_nonzero(np.delete(x_next, T)))
        rec = IterationRecord(k, direction.kind, alpha, f_val, residual, tol_value, changed,
                              eta_try, gamma=state.gamma, support=tuple(T.tolist()),
                              step_norm=float(np.linalg.norm(x_next - x)),
                              direction_norm=float(np.linalg.norm(direction.d)),
                              next_outside_support=outside, eta_backoffs=backoffs)
        trace.append(rec)
        if callback is not None:
            callback(state, direction, rec, x_next)
        stalled = abs(f_next - f_val) < config.f_change_tol * (1.0 + abs(f_val))
        if config.eta_adaptive:
            eta = update_eta(k, eta, residual)
        x, T_prev, f_val = x_next, T, f_next
        grad = obj.gradient(x)
        k += 1
        eta_try, backoffs = eta, 0
        failed.clear()
        newton_cache.clear()
    if cert is None or status is not Status.STATIONARY:
        cert = certify_stationarity(obj, x, eta_try, config.tol, s, grad)
    return SolveReport(x_final=x, certificate=cert, trace=list(trace), status=status,
                       wall_time=time.perf_counter() - t0, iterations=k, eta_final=eta,
                       message=message)


# --- theoretical constants -------------------------------------------------

@dataclass(frozen=True)
class DiagnosticConstants:
    """Step-size and descent constants implied by restricted curvature bounds.

    These are diagnostics only; the practical schedule never consults them.
    """

    m2s: float
    M2s: float
    gamma: float
    sigma: float
    beta: float
    alpha_bar: float
    eta_bar: float
    delta2s: float = field(init=False)
    mu2s: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "delta2s", max(1.0 - self.m2s, self.M2s - 1.0))
        object.__setattr__(self, "mu2s", self.M2s / self.m2s if self.m2s > 0 else math.inf)

    def rho(self, eta: float) -> float:
        return min((2.0 * self.gamma - eta * self.M2s ** 2) / 2.0, (2.0 - eta) / 2.0)

    @classmethod
    def compute(cls, m2s: float, M2s: float, gamma: float, sigma: float,
                beta: float) -> "DiagnosticConstants":
        alpha_bar = min((1.0 - 2.0 * sigma) / (M2s / gamma - sigma), 1.0)
        eta_bar = min(gamma * alpha_bar * beta / M2s ** 2, alpha_bar * beta, 1.0 / (4.0 * M2s))
        return cls(m2s, M2s, gamma, sigma, beta, alpha_bar, eta_bar)


def cs_preset(m2s: float, M2s: float, s: int, w: float = 0.5, **overrides) -> SolverConfig:
    """Fixed parameters under which the Newton step is always accepted for CS.

    The restricted isometry constant is taken as the larger deviation of the
    curvature bounds from 1, so ``m = 1 - delta`` and ``M = 1 + delta``.
    """
    if not 0.0 < w < 1.0:
        raise ValueError("w must lie in (0, 1)")
    delta = max(1.0 - m2s, M2s - 1.0)
    if not 0.0 < delta < 1.0:
        raise ValueError(f"restricted isometry constant {delta:.3g} outside (0, 1)")
    m, M = 1.0 - delta, 1.0 + delta
    mu = M / m
    kw = dict(s=s, beta=0.25, sigma=(1.0 - w) / (2.0 - w / mu), gamma_small=m,
              gamma_large=m, eta0=w / (8.0 * mu ** 2), eta_adaptive=False)
    kw.update(overrides)
    return SolverConfig(**kw)
