"""Synthetic problem generators, LIBSVM ingestion, and the success test.

Every generator is a pure function of its dimensions and seed. Randomness
comes from numpy's counter-based Philox bit generator keyed by a
``SeedSequence`` built from ``(seed, stream tag)``, so instances can be
generated in any order or in parallel and remain bit-identical.
"""
from __future__ import annotations

import json
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .objectives import CsObjective, LogisticObjective


class ParseError(ValueError):
    def __init__(self, message, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class LabelError(ParseError):
    pass


def make_rng(seed: int, stream: str = "") -> np.random.Generator:
    """Philox generator for ``(seed, stream)``; streams are independent."""
    key = [int(seed) & 0xFFFFFFFFFFFFFFFF, zlib.crc32(stream.encode())]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(key)))


@dataclass(frozen=True)
class CsInstance:
    objective: CsObjective
    x_star: np.ndarray
    seed: int
    kind: str = "gaussian"

    @property
    def A(self):
        return self.objective.A

    @property
    def b(self):
        return self.objective.b


@dataclass(frozen=True)
class LogisticInstance:
    objective: LogisticObjective
    x_star: np.ndarray | None
    seed: int | None
    kind: str = "logistic"


def _planted_signal(rng, n, s):
    x = np.zeros(n)
    support = rng.permutation(n)[:s]
    vals = rng.standard_normal(s)
    while np.any(vals == 0.0):
        zero = vals == 0.0
        vals[zero] = rng.standard_normal(int(zero.sum()))
    x[support] = vals
    return x


def _check_dims(n, m, s):
    if not (1 <= s <= m <= n):
        raise ValueError(f"need 1 <= s <= m <= n, got n={n}, m={m}, s={s}")


def _normalise_columns(A):
    # Fortran order up front so b = A x* uses the same layout the objective stores.
    return np.asfortranarray(A / np.linalg.norm(A, axis=0))


def gen_gaussian_cs(n: int, m: int, s: int, seed: int) -> CsInstance:
    """Column-normalised Gaussian A, planted s-sparse x*, and b = A x*."""
    _check_dims(n, m, s)
    A = _normalise_columns(make_rng(seed, "gaussian-matrix").standard_normal((m, n)))
    x_star = _planted_signal(make_rng(seed, "signal"), n, s)
    return CsInstance(CsObjective(A, A @ x_star), x_star, seed, "gaussian")


def dct_matrix(n: int, m: int, seed: int) -> np.ndarray:
    """Unnormalised partial DCT rows ``cos(2 pi j psi_i)``, ``j = 0..n-1``."""
    psi = make_rng(seed, "dct-rows").uniform(0.0, 1.0, size=m)
    return np.cos(2.0 * np.pi * np.outer(psi, np.arange(n)))


def gen_dct_cs(n: int, m: int, s: int, seed: int) -> CsInstance:
    _check_dims(n, m, s)
    A = _normalise_columns(dct_matrix(n, m, seed))
    x_star = _planted_signal(make_rng(seed, "signal"), n, s)
    return CsInstance(CsObjective(A, A @ x_star), x_star, seed, "dct")


def gen_logistic_independent(n: int, m: int, seed: int,
                             mu: float | None = None) -> LogisticInstance:
    """Two-cluster features ``a_i = y_i v_i 1 + w_i``.

    A random half ``I`` of the samples gets label 0 and ``y_i = -1``; the
    rest get label 1 and ``y_i = +1``.
    """
    if m < 2:
        raise ValueError("m must be >= 2")
    rng = make_rng(seed, "logistic-independent")
    perm = rng.permutation(m)
    labels = np.ones(m)
    labels[perm[: m // 2]] = 0.0
    y = 2.0 * labels - 1.0
    v = rng.standard_normal(m)
    W = rng.standard_normal((m, n))
    features = (y * v)[:, None] + W
    return LogisticInstance(LogisticObjective(features, labels, mu), None, seed,
                            "logistic-independent")


def ar_features(n: int, m: int, theta: float, rng) -> np.ndarray:
    """Rows from ``a_{j+1} = theta a_j + sqrt(1 - theta^2) v_j``, ``a_1 ~ N(0,1)``."""
    A = np.empty((m, n))
    A[:, 0] = rng.standard_normal(m)
    innov = rng.standard_normal((m, n - 1)) * np.sqrt(1.0 - theta ** 2)
    for j in range(n - 1):
        A[:, j + 1] = theta * A[:, j] + innov[:, j]
    return A


def gen_logistic_correlated(n: int, m: int, s: int, theta: float, seed: int,
                            mu: float | None = None) -> LogisticInstance:
    if not 0.0 <= theta <= 1.0:
        raise ValueError("theta must lie in [0, 1]")
    if not 1 <= s <= n:
        raise ValueError("need 1 <= s <= n")
    x_star = _planted_signal(make_rng(seed, "signal"), n, s)
    features = ar_features(n, m, theta, make_rng(seed, "ar-features"))
    # Pr{label = 0 | a} = 1 / (1 + exp(<a, x*>)), so Pr{label = 1} = sigmoid.
    p1 = 1.0 / (1.0 + np.exp(-(features @ x_star)))
    labels = (make_rng(seed, "labels").uniform(size=m) < p1).astype(float)
    return LogisticInstance(LogisticObjective(features, labels, mu), x_star, seed,
                            "logistic-ar")


def recovery_success(x, x_star) -> bool:
    x_star = np.asarray(x_star, dtype=float)
    ref = np.linalg.norm(x_star)
    if ref == 0.0:
        raise ValueError("recovery_success is undefined for x_star = 0")
    return bool(np.linalg.norm(np.asarray(x, dtype=float) - x_star) < 0.01 * ref)


# --- LIBSVM ------------------------------------------------------------------

def parse_libsvm(lines, n_features: int | None = None):
    """Parse LIBSVM text into ``(csr_matrix, labels)``; labels -1 map to 0."""
    data, indices, indptr, labels = [], [], [0], []
    max_idx = 0
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            label = float(parts[0])
        except ValueError:
            raise ParseError(f"bad label {parts[0]!r}", lineno) from None
        if label not in (-1.0, 0.0, 1.0):
            raise LabelError(f"label {parts[0]!r} not in {{-1, 0, 1}}", lineno)
        labels.append(1.0 if label == 1.0 else 0.0)
        last = 0
        for tok in parts[1:]:
            idx_text, sep, val_text = tok.partition(":")
            try:
                idx = int(idx_text)
                val = float(val_text)
            except ValueError:
                raise ParseError(f"bad feature token {tok!r}", lineno) from None
            if not sep or idx < 1:
                raise ParseError(f"bad feature token {tok!r}", lineno)
            if idx <= last:
                raise ParseError("feature indices must be increasing", lineno)
            last = idx
            indices.append(idx - 1)
            data.append(val)
        max_idx = max(max_idx, last)
        indptr.append(len(indices))
    if not labels:
        raise ParseError("no samples found")
    n = max_idx if n_features is None else int(n_features)
    if max_idx > n:
        raise ParseError(f"feature index {max_idx} exceeds n_features = {n}")
    X = sp.csr_matrix((np.asarray(data, dtype=float), np.asarray(indices, dtype=np.int64),
                       np.asarray(indptr, dtype=np.int64)), shape=(len(labels), n))
    return X, np.asarray(labels)


def load_libsvm(path, n_features: int | None = None, mu: float | None = None) -> LogisticInstance:
    with open(path) as fh:
        X, y = parse_libsvm(fh, n_features)
    return LogisticInstance(LogisticObjective(X, y, mu), None, None, "libsvm")


def dump_libsvm(features, labels, path) -> None:
    """Write features (dense or sparse) and 0/1 labels in LIBSVM format."""
    X = sp.csr_matrix(features)
    with open(path, "w") as fh:
        for i in range(X.shape[0]):
            row = X.getrow(i)
            toks = [f"{j + 1}:{float(v)!r}" for j, v in sorted(zip(row.indices, row.data)) if v != 0]
            fh.write(" ".join([str(int(labels[i]))] + toks) + "\n")


# --- instance container -----------------------------------------------------

GENERATORS = {
    "gaussian": lambda p: gen_gaussian_cs(p["n"], p["m"], p["s"], p["seed"]),
    "dct": lambda p: gen_dct_cs(p["n"], p["m"], p["s"], p["seed"]),
    "logistic-independent": lambda p: gen_logistic_independent(p["n"], p["m"], p["seed"]),
    "logistic-ar": lambda p: gen_logistic_correlated(p["n"], p["m"], p["s"],
                                                     p["theta"], p["seed"]),
}


def save_instance(instance, path, **params) -> None:
    """Save to ``.npz`` with the generator parameters embedded as JSON."""
    obj = instance.objective
    meta = dict(params, kind=instance.kind, seed=instance.seed)
    if isinstance(obj, LogisticObjective):
        meta["mu"] = obj.mu
    arrays = {"A": np.asarray(obj.A.todense()) if hasattr(obj.A, "todense") else obj.A,
              "b": obj.b, "meta": np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)}
    if instance.x_star is not None:
        arrays["x_star"] = instance.x_star
    np.savez(Path(path), **arrays)


def load_instance(path):
    with np.load(Path(path)) as z:
        meta = json.loads(z["meta"].tobytes().decode())
        A, b = z["A"], z["b"]
        x_star = z["x_star"] if "x_star" in z.files else None
    if meta["kind"] in ("gaussian", "dct"):
        return CsInstance(CsObjective(A, b), x_star, meta["seed"], meta["kind"]), meta
    return LogisticInstance(LogisticObjective(A, b, meta.get("mu")), x_star, meta["seed"], meta["kind"]), meta
