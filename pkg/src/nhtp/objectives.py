"""Smooth objectives with restricted Hessian blocks.

Two reference instances are provided: compressed-sensing least squares
``0.5 * ||Ax - b||^2`` and l2-regularised logistic loss. Both expose
``value``, ``gradient`` and ``hessian_block`` and are immutable after
construction, so a single instance may be shared across concurrent runs.
"""
from __future__ import annotations

import abc
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.special import expit


class RankDeficient(np.linalg.LinAlgError):
    """Restricted normal equations are numerically singular."""


@dataclass(frozen=True)
class HessianBlock:
    rows: np.ndarray
    cols: np.ndarray
    matrix: np.ndarray


class Objective(abc.ABC):
    n: int
    has_closed_form_restricted_minimizer = False

    @abc.abstractmethod
    def value(self, x: np.ndarray) -> float: ...

    @abc.abstractmethod
    def gradient(self, x: np.ndarray) -> np.ndarray: ...

    @abc.abstractmethod
    def hessian_submatrix(self, x: np.ndarray, rows: np.ndarray,
                          cols: np.ndarray) -> np.ndarray: ...

    def value_and_gradient(self, x):
        return self.value(x), self.gradient(x)

    def value_on_support(self, x_t: np.ndarray, support: np.ndarray) -> float:
        """f at the vector equal to ``x_t`` on ``support`` and zero elsewhere."""
        z = np.zeros(self.n)
        z[support] = x_t
        return self.value(z)

    def hessian_block(self, x, rows, cols) -> HessianBlock:
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        return HessianBlock(rows, cols, self.hessian_submatrix(x, rows, cols))

    def _check_x(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n,):
            raise ValueError(f"expected a vector of length {self.n}, got shape {x.shape}")
        return x


class CsObjective(Objective):
    """f(x) = 0.5 * ||A x - b||^2."""

    has_closed_form_restricted_minimizer = True

    def __init__(self, A, b):
        A = np.asarray(A, dtype=float)
        b = np.asarray(b, dtype=float)
        if A.ndim != 2 or b.shape != (A.shape[0],):
            raise ValueError("A must be m x n and b of length m")
        # Column-major so column slicing A[:, T] is contiguous.
        self.A = np.asfortranarray(A)
        self.b = b
        self.m, self.n = A.shape
        self.A.setflags(write=False)
        self.b.setflags(write=False)

    def residual(self, x):
        return self.A @ self._check_x(x) - self.b

    def value(self, x):
        r = self.residual(x)
        return 0.5 * float(r @ r)

    def gradient(self, x):
        return self.A.T @ self.residual(x)

    def value_and_gradient(self, x):
        r = self.residual(x)
        return 0.5 * float(r @ r), self.A.T @ r

    def value_on_support(self, x_t, support):
        r = self.A[:, support] @ x_t - self.b
        return 0.5 * float(r @ r)

    def hessian_submatrix(self, x, rows, cols):
        return self.A[:, rows].T @ self.A[:, cols]

    def restricted_minimize(self, support) -> np.ndarray:
        """argmin ||b - A z|| over z with supp(z) inside ``support``.

        Normal equations via Cholesky; falls back to pivoted QR when the
        factorisation fails or a pivot is tiny, and raises
        :class:`RankDeficient` if the columns are numerically dependent.
        """
        support = np.asarray(support, dtype=np.int64)
        z = np.zeros(self.n)
        if support.size == 0:
            return z
        if support.size > self.m:
            raise RankDeficient(f"|T| = {support.size} exceeds m = {self.m}")
        At = self.A[:, support]
        G = At.T @ At
        rhs = At.T @ self.b
        thresh = 1e-12 * float(np.max(np.diag(G)))
        try:
            c, low = sla.cho_factor(G, lower=True, check_finite=False)
            if np.min(np.diag(c)) ** 2 < thresh:
                raise np.linalg.LinAlgError("tiny pivot")
            z[support] = sla.cho_solve((c, low), rhs, check_finite=False)
            return z
        except np.linalg.LinAlgError:
            pass
        Q, R, perm = sla.qr(At, mode="economic", pivoting=True)
        if abs(R[-1, -1]) ** 2 < thresh:
            raise RankDeficient("A[:, T] is numerically rank deficient")
        coef = sla.solve_triangular(R, Q.T @ self.b)
        z[support[perm]] = coef
        return z


class LogisticObjective(Objective):
    """Mean logistic loss plus ``mu * ||x||^2``; labels in {0, 1}.

    ``features`` may be a dense array or any scipy sparse matrix (stored
    as CSR internally).
    """

    def __init__(self, features, labels, mu: float | None = None):
        if sp.issparse(features):
            self.A = sp.csr_matrix(features, dtype=float)
            self._A_csc = self.A.tocsc()
        else:
            self.A = np.asarray(features, dtype=float)
            self._A_csc = None
        labels = np.asarray(labels, dtype=float)
        self.m, self.n = self.A.shape
        if labels.shape != (self.m,):
            raise ValueError("labels length must match number of rows")
        if not np.all((labels == 0) | (labels == 1)):
            raise ValueError("labels must be 0 or 1")
        if self.m == 0:
            raise ValueError("logistic objective needs at least one sample")
        self.b = labels
        self.mu = 1e-6 / self.m if mu is None else float(mu)
        if self.mu <= 0:
            raise ValueError("mu must be positive")

    @property
    def is_sparse(self) -> bool:
        return self._A_csc is not None

    def scores(self, x):
        return self.A @ self._check_x(x)

    def _value_from_scores(self, z, x):
        return float(np.mean(np.logaddexp(0.0, z) - self.b * z) + self.mu * (x @ x))

    def value(self, x):
        x = self._check_x(x)
        return self._value_from_scores(self.A @ x, x)

    def gradient(self, x):
        x = self._check_x(x)
        q = expit(self.A @ x) - self.b
        return self.A.T @ q / self.m + 2.0 * self.mu * x

    def value_and_gradient(self, x):
        x = self._check_x(x)
        z = self.A @ x
        q = expit(z) - self.b
        return self._value_from_scores(z, x), self.A.T @ q / self.m + 2.0 * self.mu * x

    def _columns(self, idx):
        if self.is_sparse:
            return self._A_csc[:, idx]
        return self.A[:, idx]

    def value_on_support(self, x_t, support):
        z = self._columns(support) @ x_t
        return float(np.mean(np.logaddexp(0.0, z) - self.b * z) + self.mu * (x_t @ x_t))

    def hessian_submatrix(self, x, rows, cols):
        p = expit(self.A @ self._check_x(x))
        w = p * (1.0 - p) / self.m
        Ar = self._columns(rows)
        Ac = self._columns(cols)
        if self.is_sparse:
            H = np.asarray((Ar.T @ sp.diags(w) @ Ac).todense())
        else:
            H = Ar.T @ (w[:, None] * Ac)
        H += 2.0 * self.mu * (rows[:, None] == cols[None, :])
        return H


def fd_gradient(obj: Objective, x, h: float = 1e-6) -> np.ndarray:
    """Central finite-difference gradient."""
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (obj.value(x + e) - obj.value(x - e)) / (2 * h)
    return g


def fd_hessian(obj: Objective, x, h: float = 1e-5) -> np.ndarray:
    """Central finite differences of the analytic gradient, symmetrised."""
    x = np.asarray(x, dtype=float)
    n = x.size
    H = np.empty((n, n))
    for j in range(n):
        e = np.zeros(n)
        e[j] = h
        H[:, j] = (obj.gradient(x + e) - obj.gradient(x - e)) / (2 * h)
    return 0.5 * (H + H.T)


def estimate_regularity(obj: CsObjective, s: int, trials: int, seed: int = 0):
    """Monte-Carlo estimates ``(m2s_est, M2s_est)`` of the restricted
    extreme curvatures of ``A^T A`` over 2s-column supports.

    Each trial draws a random support of size ``min(2s, n)`` and takes the
    exact extreme eigenvalues of the corresponding Gram block. The results
    are sample estimates: the true m_2s is never above ``m2s_est`` and the
    true M_2s never below ``M2s_est``. They are not certificates.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    k = min(2 * int(s), obj.n)
    lo, hi = np.inf, -np.inf
    for _ in range(trials):
        S = np.sort(rng.choice(obj.n, size=k, replace=False))
        At = obj.A[:, S]
        ev = np.linalg.eigvalsh(At.T @ At)
        lo = min(lo, float(ev[0]))
        hi = max(hi, float(ev[-1]))
    return max(lo, 0.0), hi
