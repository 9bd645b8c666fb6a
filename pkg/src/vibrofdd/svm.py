"""Gaussian-kernel SVM: SMO dual solver and ECOC multiclass wrapper."""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DimMismatch, NoConvergence, SingleClass
from .parallel import pmap

DEFAULT_C = 300.0
DEFAULT_SCALE = 23.12
DEFAULT_TOL = 1e-3
ALPHA_EPS = 1e-8

OVA = "one-vs-all"
OVO = "one-vs-one"


@dataclass(frozen=True)
class KernelSpec:
    scale: float = DEFAULT_SCALE
    kind: str = "gaussian"

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError("kernel scale must be positive")
        if self.kind != "gaussian":
            raise ValueError(f"unsupported kernel {self.kind!r}")


def gaussian_kernel(u, v, s: float) -> float:
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape:
        raise DimMismatch(f"kernel arguments differ in shape: {u.shape} vs {v.shape}")
    if not s > 0:
        raise ValueError("kernel scale must be positive")
    d = u - v
    return float(np.exp(-np.dot(d.ravel(), d.ravel()) / (s * s)))


def gram(a, b, s: float) -> np.ndarray:
    """Kernel matrix between the rows of ``a`` and ``b``."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    if a.shape[1] != b.shape[1]:
        raise DimMismatch(f"feature dimensions differ: {a.shape[1]} vs {b.shape[1]}")
    sq = (
        np.sum(a * a, axis=1)[:, None]
        + np.sum(b * b, axis=1)[None, :]
        - 2.0 * a @ b.T
    )
    return np.exp(-np.maximum(sq, 0.0) / (s * s))


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, x) -> "Standardizer":
        x = np.asarray(x, dtype=float)
        std = x.std(axis=0, ddof=1) if len(x) > 1 else np.ones(x.shape[1])
        std = np.where(std > 0, std, 1.0)
        return cls(x.mean(axis=0), std)

    def apply(self, x) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.mean) / self.std


@dataclass(frozen=True)
class BinarySvm:
    support_vectors: np.ndarray
    dual_coefs: np.ndarray  # alpha_i * y_i
    bias: float
    kernel: KernelSpec
    box_constraint: float
    standardizer: Standardizer | None = None
    converged: bool = True
    iterations: int = 0

    @property
    def n_features(self) -> int:
        return self.support_vectors.shape[1]

    def decision_function(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.n_features:
            raise DimMismatch(f"expected {self.n_features} features, got {x.shape[1]}")
        if self.standardizer is not None:
            x = self.standardizer.apply(x)
        if len(self.dual_coefs) == 0:
            return np.full(len(x), self.bias)
        return gram(x, self.support_vectors, self.kernel.scale) @ self.dual_coefs + self.bias


def decision(model: BinarySvm, x) -> float:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise DimMismatch("decision() takes a single sample; use decision_function for batches")
    return float(model.decision_function(x[None, :])[0])


def dual_objective(alpha, y, k) -> float:
    ay = np.asarray(alpha) * np.asarray(y)
    return float(np.sum(alpha) - 0.5 * ay @ k @ ay)


@dataclass
class SmoResult:
    alpha: np.ndarray
    bias: float
    converged: bool
    iterations: int
    gap: float


def _snap(a: float, c: float) -> float:
    # values within rounding of a bound are set exactly on it, otherwise a
    # multiplier one ulp below C stays selectable forever
    eps = 1e-12 * c
    if a <= eps:
        return 0.0
    if a >= c - eps:
        return c
    return a


def smo_solve(k: np.ndarray, y: np.ndarray, c: float, tol: float = DEFAULT_TOL,
              max_iter: int | None = None) -> SmoResult:
    """Solve the soft-margin dual for a precomputed kernel matrix.

    Each step picks the maximal violating pair: the index in the "up" set
    with the largest ``y_t - f_t`` and the index in the "low" set with the
    smallest, and optimizes that pair analytically. Terminates once the
    gap between the two is at most ``tol``.
    """
    n = len(y)
    y = np.asarray(y, dtype=float)
    if max_iter is None:
        max_iter = 10 * n * n
    alpha = np.zeros(n)
    f = np.zeros(n)  # sum_j alpha_j y_j K_tj, without bias
    pos = y > 0
    diag = np.diag(k)
    it = 0
    gap = np.inf
    while True:
        v = y - f
        up = np.where(pos, alpha < c, alpha > 0)
        low = np.where(pos, alpha > 0, alpha < c)
        vu = np.where(up, v, -np.inf)
        vl = np.where(low, v, np.inf)
        i = int(np.argmax(vu))
        j = int(np.argmin(vl))
        gap = vu[i] - vl[j]
        if gap <= tol or it >= max_iter:
            break
        it += 1
        yi, yj = y[i], y[j]
        ai, aj = alpha[i], alpha[j]
        if yi != yj:
            lo, hi = max(0.0, aj - ai), min(c, c + aj - ai)
        else:
            lo, hi = max(0.0, ai + aj - c), min(c, ai + aj)
        eta = max(diag[i] + diag[j] - 2.0 * k[i, j], 1e-12)
        # E_t = f_t - y_t = -v_t
        aj_new = min(max(aj + yj * (v[j] - v[i]) / eta, lo), hi)
        ai_new = ai + yi * yj * (aj - aj_new)
        ai_new, aj_new = _snap(ai_new, c), _snap(aj_new, c)
        di, dj = ai_new - ai, aj_new - aj
        if di == 0.0 and dj == 0.0:
            break
        alpha[i], alpha[j] = ai_new, aj_new
        f += (di * yi) * k[:, i] + (dj * yj) * k[:, j]

    v = y - f
    free = (alpha > ALPHA_EPS) & (alpha < c - ALPHA_EPS)
    if np.any(free):
        bias = float(np.mean(v[free]))
    else:
        up = np.where(pos, alpha < c, alpha > 0)
        low = np.where(pos, alpha > 0, alpha < c)
        hi_b = np.min(v[low]) if np.any(low) else np.max(v[up])
        lo_b = np.max(v[up]) if np.any(up) else hi_b
        bias = float(0.5 * (hi_b + lo_b))
    return SmoResult(alpha, bias, bool(gap <= tol), it, float(gap))


def smo_train(x, y, c: float = DEFAULT_C, kernel: KernelSpec = KernelSpec(),
              tol: float = DEFAULT_TOL, max_passes: int | None = None,
              standardizer: Standardizer | None = None) -> BinarySvm:
    """Train a binary Gaussian-kernel SVM on labels in {-1, +1}.

    ``max_passes`` caps the work at ``max_passes * n`` pair updates
    (default ``10 * n`` passes). A model that hits the cap is still
    returned with ``converged=False`` and a :class:`NoConvergence` warning.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim != 2 or len(x) != len(y):
        raise DimMismatch("x must be n x D with one label per row")
    if not c > 0:
        raise ValueError("box constraint must be positive")
    if not (np.any(y > 0) and np.any(y < 0)):
        raise SingleClass("both +1 and -1 labels are required")
    xs = standardizer.apply(x) if standardizer is not None else x
    n = len(y)
    passes = 10 * n if max_passes is None else max_passes
    k = gram(xs, xs, kernel.scale)
    res = smo_solve(k, y, c, tol, max_iter=passes * n)
    if not res.converged:
        warnings.warn(
            f"SMO stopped after {res.iterations} updates with KKT gap {res.gap:.3g} > {tol}",
            NoConvergence,
            stacklevel=2,
        )
    keep = res.alpha > ALPHA_EPS
    return BinarySvm(
        support_vectors=xs[keep].copy(),
        dual_coefs=res.alpha[keep] * y[keep],
        bias=res.bias,
        kernel=kernel,
        box_constraint=float(c),
        standardizer=standardizer,
        converged=res.converged,
        iterations=res.iterations,
    )


# -- multiclass ---------------------------------------------------------------


def coding_matrix(n_classes: int, scheme: str = OVA) -> np.ndarray:
    if scheme == OVA:
        return 2.0 * np.eye(n_classes) - 1.0
    if scheme == OVO:
        pairs = list(itertools.combinations(range(n_classes), 2))
        m = np.zeros((n_classes, len(pairs)))
        for l, (a, b) in enumerate(pairs):
            m[a, l] = 1.0
            m[b, l] = -1.0
        return m
    raise ValueError(f"unknown coding scheme {scheme!r}")


def hinge_losses(coding: np.ndarray, scores: np.ndarray) -> np.ndarray:
    """Per-class hinge binary loss averaged over the learners a class uses.

    ``scores`` is n x L; returns n x C. Zero coding entries are ignored.
    """
    scores = np.atleast_2d(scores)
    weight = np.abs(coding)
    per = np.maximum(0.0, 1.0 - coding[None, :, :] * scores[:, None, :])
    return np.sum(per * weight[None], axis=2) / np.sum(weight, axis=1)[None, :]


@dataclass(frozen=True)
class MulticlassSvm:
    learners: list[BinarySvm]
    coding: np.ndarray
    classes: tuple[int, ...] = (0, 1, 2)
    standardizer: Standardizer | None = None
    scheme: str = OVA

    @property
    def n_features(self) -> int:
        return self.learners[0].n_features

    @property
    def box_constraint(self) -> float:
        return self.learners[0].box_constraint

    @property
    def kernel(self) -> KernelSpec:
        return self.learners[0].kernel

    def scores(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.n_features:
            raise DimMismatch(f"expected {self.n_features} features, got {x.shape[1]}")
        if self.standardizer is not None:
            x = self.standardizer.apply(x)
        return np.column_stack([m.decision_function(x) for m in self.learners])

    def losses(self, x) -> np.ndarray:
        return hinge_losses(self.coding, self.scores(x))

    def predict(self, x) -> np.ndarray:
        # argmin returns the first minimum, i.e. the lowest class code on ties
        idx = np.argmin(self.losses(x), axis=1)
        return np.asarray(self.classes)[idx]


def _train_learner(args):
    x, y, c, kernel, tol, max_passes = args
    return smo_train(x, y, c, kernel, tol, max_passes)


def ova_train(x, labels, c: float = DEFAULT_C, kernel: KernelSpec = KernelSpec(),
              standardize: bool = False, scheme: str = OVA, tol: float = DEFAULT_TOL,
              max_passes: int | None = None, classes=None) -> MulticlassSvm:
    """Train one binary learner per coding-matrix column.

    With the default one-vs-all scheme, learner ``l`` separates class ``l``
    (+1) from the rest (-1) over all rows. The one-vs-one scheme trains on
    the two classes of each pair only.
    """
    x = np.asarray(x, dtype=float)
    labels = np.asarray(labels, dtype=int)
    if classes is None:
        classes = tuple(range(int(labels.max()) + 1)) if len(labels) else ()
    classes = tuple(int(c_) for c_ in classes)
    present = np.unique(labels)
    if len(present) < 2:
        raise SingleClass(f"need at least two classes, got {present.tolist()}")
    std = Standardizer.fit(x) if standardize else None
    xs = std.apply(x) if std is not None else x
    coding = coding_matrix(len(classes), scheme)
    jobs = []
    for l in range(coding.shape[1]):
        code = coding[np.searchsorted(classes, labels), l]
        rows = code != 0
        jobs.append((xs[rows], code[rows], c, kernel, tol, max_passes))
    learners = pmap(_train_learner, jobs)
    return MulticlassSvm(learners, coding, classes, std, scheme)


def ova_predict(model: MulticlassSvm, x) -> tuple[int, np.ndarray]:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise DimMismatch("ova_predict() takes a single sample")
    losses = model.losses(x[None, :])[0]
    return int(model.classes[int(np.argmin(losses))]), losses
