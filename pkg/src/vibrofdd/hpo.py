"""Bayesian optimization of SVM hyperparameters against k-fold CV error."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.stats import norm, qmc

from .errors import ClassTooSmall, ObjectiveFailure
from .svm import OVA, OVO, KernelSpec, ova_train

N_INITIAL = 4
N_CANDIDATES = 512
LENGTH_SCALE = 0.2
NOISE = 1e-4
DEFAULT_FOLDS = 5
DEFAULT_ITERATIONS = 30


# -- search space -------------------------------------------------------------


@dataclass(frozen=True)
class Real:
    name: str
    low: float
    high: float
    log: bool = False

    def __post_init__(self):
        if not self.low < self.high:
            raise ValueError(f"{self.name}: empty range")
        if self.log and self.low <= 0:
            raise ValueError(f"{self.name}: log-scaled bounds must be positive")

    @property
    def width(self) -> int:
        return 1

    def to_unit(self, value: float) -> np.ndarray:
        if self.log:
            u = (math.log(value) - math.log(self.low)) / (math.log(self.high) - math.log(self.low))
        else:
            u = (value - self.low) / (self.high - self.low)
        return np.array([u])

    def from_unit(self, u: float) -> float:
        u = min(max(float(u), 0.0), 1.0)
        if self.log:
            return math.exp(math.log(self.low) + u * (math.log(self.high) - math.log(self.low)))
        return self.low + u * (self.high - self.low)


@dataclass(frozen=True)
class Categorical:
    name: str
    choices: tuple

    @property
    def width(self) -> int:
        return len(self.choices)

    def to_unit(self, value) -> np.ndarray:
        v = np.zeros(len(self.choices))
        v[self.choices.index(value)] = 1.0
        return v

    def from_unit(self, u: float):
        return self.choices[min(int(float(u) * len(self.choices)), len(self.choices) - 1)]


@dataclass(frozen=True)
class SearchSpace:
    dims: tuple

    @classmethod
    def svm_default(cls) -> "SearchSpace":
        return cls((
            Real("box_constraint", 1e-3, 1e3, log=True),
            Real("kernel_scale", 1e-3, 1e3, log=True),
            Categorical("standardize", (False, True)),
            Categorical("coding", (OVA, OVO)),
        ))

    @property
    def names(self) -> list[str]:
        return [d.name for d in self.dims]

    def sample(self, u: np.ndarray) -> dict[str, Any]:
        """Map one point of the unit cube (one coordinate per dim) to params."""
        return {d.name: d.from_unit(ui) for d, ui in zip(self.dims, u)}

    def encode(self, params: dict[str, Any]) -> np.ndarray:
        return np.concatenate([d.to_unit(params[d.name]) for d in self.dims])

    def contains(self, params: dict[str, Any]) -> bool:
        for d in self.dims:
            v = params[d.name]
            if isinstance(d, Real):
                if not d.low * (1 - 1e-12) <= v <= d.high * (1 + 1e-12):
                    return False
            elif v not in d.choices:
                return False
        return True


# -- trace --------------------------------------------------------------------


@dataclass
class TraceStep:
    iteration: int
    params: dict[str, Any]
    error: float
    best: float
    source: str  # "initial" or "ei"
    expected_improvement: float = float("nan")
    predicted_mean: float = float("nan")
    predicted_std: float = float("nan")
    failed: bool = False


@dataclass
class TuneTrace:
    steps: list[TraceStep] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.steps)

    @property
    def running_best(self) -> list[float]:
        return [s.best for s in self.steps]

    def to_csv(self, names: Sequence[str]) -> str:
        head = ["iteration", *names, "observed_error", "running_best", "source", "expected_improvement"]
        lines = [",".join(head)]
        for s in self.steps:
            vals = [str(s.iteration)] + [_fmt(s.params[n]) for n in names]
            vals += [repr(float(s.error)), repr(float(s.best)), s.source, repr(float(s.expected_improvement))]
            lines.append(",".join(vals))
        return "\n".join(lines) + "\n"


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


# -- Gaussian process ---------------------------------------------------------


class GaussianProcess:
    """Zero-mean GP on standardized targets with a fixed SE kernel."""

    def __init__(self, length_scale: float = LENGTH_SCALE, noise: float = NOISE):
        self.length_scale = length_scale
        self.noise = noise

    def _k(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        sq = np.sum((a[:, None, :] - b[None, :, :]) ** 2, axis=2)
        return np.exp(-0.5 * sq / self.length_scale**2)

    def fit(self, x: np.ndarray, y: np.ndarray) -> "GaussianProcess":
        self.x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        self.y_mean = float(y.mean())
        sd = float(y.std())
        self.y_std = sd if sd > 0 else 1.0
        z = (y - self.y_mean) / self.y_std
        k = self._k(self.x, self.x) + self.noise * np.eye(len(self.x))
        self.chol = cho_factor(k, lower=True)
        self.alpha = cho_solve(self.chol, z)
        return self

    def predict(self, xq: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        ks = self._k(np.asarray(xq, dtype=float), self.x)
        mean = ks @ self.alpha
        v = cho_solve(self.chol, ks.T)
        var = np.maximum(1.0 - np.sum(ks * v.T, axis=1), 1e-12)
        return self.y_mean + self.y_std * mean, self.y_std * np.sqrt(var)


def expected_improvement(mean: np.ndarray, std: np.ndarray, best: float) -> np.ndarray:
    """EI for minimization."""
    z = (best - mean) / std
    return (best - mean) * norm.cdf(z) + std * norm.pdf(z)


# -- optimizer ----------------------------------------------------------------


def _evaluate(objective, params) -> tuple[float, bool]:
    try:
        return float(objective(params)), False
    except Exception as exc:  # noqa: BLE001 - any objective failure is scored, not raised
        warnings.warn(f"objective failed at {params}: {exc}", ObjectiveFailure, stacklevel=3)
        return 1.0, True


def bayes_opt(objective: Callable[[dict], float], space: SearchSpace, n_iter: int = DEFAULT_ITERATIONS,
              seed: int = 0) -> tuple[dict, TuneTrace]:
    """Minimize ``objective`` over ``space``.

    The first four points come from a scrambled Halton sequence; each later
    point is the best of 512 random candidates under Expected Improvement
    of a GP fit to everything seen so far.
    """
    if n_iter < 5:
        raise ValueError("n_iter must be at least 5")
    ss = np.random.SeedSequence(seed)
    init_seed, cand_seed = ss.spawn(2)
    rng = np.random.Generator(np.random.PCG64(cand_seed))
    n_dims = len(space.dims)
    halton = qmc.Halton(d=n_dims, scramble=True, seed=np.random.Generator(np.random.PCG64(init_seed)))
    initial = halton.random(min(N_INITIAL, n_iter))

    trace = TuneTrace()
    xs: list[np.ndarray] = []
    ys: list[float] = []
    best = math.inf
    best_params: dict | None = None
    gp = GaussianProcess()

    for it in range(n_iter):
        ei = mu = sd = float("nan")
        if it < len(initial):
            params = space.sample(initial[it])
            source = "initial"
        else:
            gp.fit(np.array(xs), np.array(ys))
            cands = [space.sample(u) for u in rng.random((N_CANDIDATES, n_dims))]
            enc = np.array([space.encode(p) for p in cands])
            m, s = gp.predict(enc)
            scores = expected_improvement(m, s, best)
            k = int(np.argmax(scores))
            params, ei, mu, sd = cands[k], float(scores[k]), float(m[k]), float(s[k])
            source = "ei"
        err, failed = _evaluate(objective, params)
        xs.append(space.encode(params))
        ys.append(err)
        if err < best:
            best, best_params = err, params
        trace.steps.append(TraceStep(it + 1, params, err, best, source, ei, mu, sd, failed))
    return best_params, trace


def random_search(objective, space: SearchSpace, n_iter: int, seed: int = 0) -> tuple[dict, TuneTrace]:
    """Uniform random search baseline with the same trace format."""
    rng = np.random.Generator(np.random.PCG64(seed))
    trace = TuneTrace()
    best, best_params = math.inf, None
    for it in range(n_iter):
        params = space.sample(rng.random(len(space.dims)))
        err, failed = _evaluate(objective, params)
        if err < best:
            best, best_params = err, params
        trace.steps.append(TraceStep(it + 1, params, err, best, "random", failed=failed))
    return best_params, trace


# -- cross-validation ---------------------------------------------------------


def stratified_folds(labels, k_folds: int, seed: int) -> np.ndarray:
    """Fold index per sample; each class is shuffled then dealt round-robin."""
    labels = np.asarray(labels)
    folds = np.empty(len(labels), dtype=int)
    rng = np.random.Generator(np.random.PCG64(seed))
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        if len(idx) < k_folds:
            raise ClassTooSmall(f"class {c} has {len(idx)} samples, fewer than {k_folds} folds")
        idx = idx[rng.permutation(len(idx))]
        folds[idx] = np.arange(len(idx)) % k_folds
    return folds


@dataclass(frozen=True)
class SvmParams:
    box_constraint: float = 300.0
    kernel_scale: float = 23.12
    standardize: bool = False
    coding: str = OVA

    @classmethod
    def from_dict(cls, d: dict) -> "SvmParams":
        return cls(float(d["box_constraint"]), float(d["kernel_scale"]), bool(d["standardize"]), str(d["coding"]))

    def as_dict(self) -> dict:
        return {"box_constraint": self.box_constraint, "kernel_scale": self.kernel_scale,
                "standardize": self.standardize, "coding": self.coding}

    def train(self, x, labels, classes=(0, 1, 2), max_passes: int | None = None):
        return ova_train(x, labels, self.box_constraint, KernelSpec(self.kernel_scale),
                         standardize=self.standardize, scheme=self.coding, classes=classes,
                         max_passes=max_passes)


def cv_error(x, labels, params, k_folds: int = DEFAULT_FOLDS, seed: int = 0,
             classes=(0, 1, 2), max_passes: int | None = None) -> float:
    """Mean misclassification fraction over stratified folds."""
    if k_folds < 2:
        raise ValueError("k_folds must be at least 2")
    if isinstance(params, dict):
        params = SvmParams.from_dict(params)
    x = np.asarray(x, dtype=float)
    labels = np.asarray(labels, dtype=int)
    folds = stratified_folds(labels, k_folds, seed)
    errors = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", category=RuntimeWarning)
        for f in range(k_folds):
            test = folds == f
            model = params.train(x[~test], labels[~test], classes, max_passes)
            errors.append(float(np.mean(model.predict(x[test]) != labels[test])))
    return float(np.mean(errors))


def tune_svm(x, labels, n_iter: int = DEFAULT_ITERATIONS, seed: int = 0, k_folds: int = DEFAULT_FOLDS,
             space: SearchSpace | None = None, classes=(0, 1, 2), max_passes: int | None = None):
    """Bayesian-optimize SVM hyperparameters, then refit on all rows.

    Returns ``(model, best_params, trace)``.
    """
    space = space or SearchSpace.svm_default()
    cv_seed = int(np.random.SeedSequence([seed, 1]).generate_state(1)[0])

    def objective(p):
        return cv_error(x, labels, p, k_folds, cv_seed, classes, max_passes)

    best, trace = bayes_opt(objective, space, n_iter, seed)
    params = SvmParams.from_dict(best)
    model = params.train(x, labels, classes)
    return model, params, trace
