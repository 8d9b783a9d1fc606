"""Soft-margin SVM trained by sequential minimal optimization.

The solver is the classic two-heuristic SMO: an outer loop alternating
between all samples and the non-bound subset, and an inner second-choice
step picking the partner with the largest error gap.  Kernel matrices are
precomputed; cohort-scale problems are tiny.

One-against-all multiclass stacks one binary model per class and predicts
the class with the maximal decision value.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import NoConvergence, SingleClass

SMO_EPS = 1e-12


@dataclass(frozen=True)
class Kernel:
    name: str                 # "linear" | "rbf"
    gamma: float = None       # rbf only

    def __post_init__(self):
        if self.name not in ("linear", "rbf"):
            raise ValueError(f"unknown kernel {self.name!r}")
        if self.name == "rbf" and (self.gamma is None or self.gamma <= 0):
            raise ValueError("rbf kernel needs gamma > 0")

    def matrix(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        a = np.atleast_2d(np.asarray(a, dtype=np.float64))
        b = np.atleast_2d(np.asarray(b, dtype=np.float64))
        if self.name == "linear":
            return a @ b.T
        d2 = (np.sum(a * a, axis=1)[:, None] + np.sum(b * b, axis=1)[None, :]
              - 2.0 * (a @ b.T))
        return np.exp(-self.gamma * np.maximum(d2, 0.0))


@dataclass(frozen=True)
class SmoResult:
    alphas: np.ndarray
    bias: float
    passes: int


def smo_solve(K: np.ndarray, y: np.ndarray, C: float, tol: float = 1e-3,
              max_passes: int = 10_000, seed: int = 0) -> SmoResult:
    """Maximize the dual on a precomputed kernel matrix.

    Returns the full alpha vector so callers can check the KKT conditions;
    raises NoConvergence if the outer loop exceeds ``max_passes`` sweeps.
    """
    n = len(y)
    y = np.asarray(y, dtype=np.float64)
    alphas = np.zeros(n)
    state = {"b": 0.0}
    errors = -y.copy()          # decision(x_i) - y_i at alpha = 0, b = 0
    rng = np.random.default_rng(seed)

    def take_step(i1: int, i2: int) -> bool:
        nonlocal errors
        if i1 == i2:
            return False
        a1, a2 = alphas[i1], alphas[i2]
        y1, y2 = y[i1], y[i2]
        e1, e2 = errors[i1], errors[i2]
        s = y1 * y2
        if y1 != y2:
            lo, hi = max(0.0, a2 - a1), min(C, C + a2 - a1)
        else:
            lo, hi = max(0.0, a1 + a2 - C), min(C, a1 + a2)
        if lo >= hi:
            return False
        k11, k12, k22 = K[i1, i1], K[i1, i2], K[i2, i2]
        eta = k11 + k22 - 2.0 * k12
        if eta > 0:
            a2_new = a2 + y2 * (e1 - e2) / eta
            a2_new = min(max(a2_new, lo), hi)
        else:
            # flat or concave along this pair: test both interval ends
            f1 = y1 * (e1 + state["b"]) - a1 * k11 - s * a2 * k12
            f2 = y2 * (e2 + state["b"]) - s * a1 * k12 - a2 * k22
            l1 = a1 + s * (a2 - lo)
            h1 = a1 + s * (a2 - hi)
            obj_lo = (l1 * f1 + lo * f2 + 0.5 * l1 * l1 * k11
                      + 0.5 * lo * lo * k22 + s * lo * l1 * k12)
            obj_hi = (h1 * f1 + hi * f2 + 0.5 * h1 * h1 * k11
                      + 0.5 * hi * hi * k22 + s * hi * h1 * k12)
            if obj_lo < obj_hi - SMO_EPS:
                a2_new = lo
            elif obj_lo > obj_hi + SMO_EPS:
                a2_new = hi
            else:
                return False
        if abs(a2_new - a2) < SMO_EPS * (a2_new + a2 + SMO_EPS):
            return False
        a1_new = a1 + s * (a2 - a2_new)
        d1 = y1 * (a1_new - a1)
        d2 = y2 * (a2_new - a2)
        b_old = state["b"]
        b1 = b_old - e1 - d1 * k11 - d2 * k12
        b2 = b_old - e2 - d1 * k12 - d2 * k22
        if 0.0 < a1_new < C:
            b_new = b1
        elif 0.0 < a2_new < C:
            b_new = b2
        else:
            b_new = 0.5 * (b1 + b2)
        alphas[i1], alphas[i2] = a1_new, a2_new
        errors += d1 * K[i1] + d2 * K[i2] + (b_new - b_old)
        state["b"] = b_new
        return True

    def examine(i2: int) -> int:
        y2, a2, e2 = y[i2], alphas[i2], errors[i2]
        r2 = e2 * y2
        if not ((r2 < -tol and a2 < C) or (r2 > tol and a2 > 0)):
            return 0
        non_bound = np.flatnonzero((alphas > 0) & (alphas < C))
        if len(non_bound) > 1:
            gaps = np.abs(errors[non_bound] - e2)
            if take_step(int(non_bound[np.argmax(gaps)]), i2):
                return 1
        start = int(rng.integers(n))
        for k in range(len(non_bound)):
            if take_step(int(non_bound[(start + k) % len(non_bound)]), i2):
                return 1
        start = int(rng.integers(n))
        for k in range(n):
            if take_step((start + k) % n, i2):
                return 1
        return 0

    passes = 0
    examine_all = True
    while True:
        changed = 0
        indices = range(n) if examine_all \
            else np.flatnonzero((alphas > 0) & (alphas < C))
        for i in indices:
            changed += examine(int(i))
        passes += 1
        if examine_all:
            examine_all = False
            if changed == 0:
                break
        elif changed == 0:
            examine_all = True
        if passes > max_passes:
            raise NoConvergence(f"SMO did not settle within {max_passes} sweeps")
    return SmoResult(alphas, state["b"], passes)


@dataclass(frozen=True)
class SvmModel:
    kernel: Kernel
    support_vectors: np.ndarray   # (m, d) standardized feature rows
    duals: np.ndarray             # alpha_i * y_i per support vector
    bias: float
    C: float

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if len(self.support_vectors) == 0:
            return np.full(len(X), self.bias)
        return self.kernel.matrix(X, self.support_vectors) @ self.duals + self.bias

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.where(self.decision_function(X) >= 0.0, 1, -1)

    def to_json(self) -> str:
        return json.dumps({
            "type": "svm",
            "kernel": self.kernel.name,
            "gamma": self.kernel.gamma,
            "C": self.C,
            "bias": self.bias,
            "support_vectors": self.support_vectors.tolist(),
            "duals": self.duals.tolist(),
        }, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "SvmModel":
        d = json.loads(text)
        return cls(Kernel(d["kernel"], d["gamma"]),
                   np.asarray(d["support_vectors"], dtype=np.float64),
                   np.asarray(d["duals"], dtype=np.float64),
                   float(d["bias"]), float(d["C"]))


def train_svm_binary(X: np.ndarray, y: np.ndarray, kernel: Kernel,
                     C: float = 1.0, tol: float = 1e-3,
                     max_passes: int = 10_000, seed: int = 0) -> SvmModel:
    """Fit one binary model; ``y`` must contain both -1 and +1."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if set(np.unique(y)) != {-1.0, 1.0}:
        raise SingleClass("binary training needs both -1 and +1 labels")
    K = kernel.matrix(X, X)
    res = smo_solve(K, y, C, tol=tol, max_passes=max_passes, seed=seed)
    keep = res.alphas > 1e-10
    return SvmModel(kernel, X[keep].copy(), (res.alphas * y)[keep],
                    res.bias, C)


@dataclass(frozen=True)
class OvaSvm:
    classes: tuple                # sorted class values (grades)
    models: tuple                 # SvmModel per class, same order
    prevalence: tuple             # training count per class, same order

    def decision_matrix(self, X: np.ndarray) -> np.ndarray:
        return np.column_stack([m.decision_function(X) for m in self.models])

    def predict(self, X: np.ndarray) -> np.ndarray:
        dec = self.decision_matrix(X)
        out = np.empty(len(dec), dtype=np.int64)
        for i, row in enumerate(dec):
            # ties fall to the more prevalent training class, then the
            # lower class value
            best = max(zip(row, self.prevalence, [-c for c in self.classes],
                           self.classes))
            out[i] = best[3]
        return out


def train_ova(X: np.ndarray, classes: np.ndarray, kernel: Kernel,
              C: float = 1.0, tol: float = 1e-3, seed: int = 0) -> OvaSvm:
    """One binary model per distinct class value (class vs rest)."""
    X = np.asarray(X, dtype=np.float64)
    classes = np.asarray(classes)
    values = sorted(np.unique(classes).tolist())
    if len(values) < 2:
        raise SingleClass("one-against-all needs at least two classes")
    counts, models = [], []
    for v in values:
        n_v = int(np.sum(classes == v))
        if n_v < 2:
            raise SingleClass(f"class {v} has only {n_v} sample(s)")
        y = np.where(classes == v, 1.0, -1.0)
        models.append(train_svm_binary(X, y, kernel, C=C, tol=tol, seed=seed))
        counts.append(n_v)
    return OvaSvm(tuple(values), tuple(models), tuple(counts))
