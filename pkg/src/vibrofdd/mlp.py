"""Two-hidden-layer ReLU/softmax network trained with L-BFGS."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DimMismatch, LineSearchFailure, SingleClass
from .svm import Standardizer

HIDDEN = (25, 25)
N_CLASSES = 3


@dataclass
class MlpModel:
    """Layer sizes plus per-layer ``(W, b)`` with ``W`` shaped (fan_in, fan_out)."""

    sizes: tuple[int, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    standardizer: Standardizer | None = None
    iterations: int = 0
    converged: bool = True
    loss_history: list[float] = field(default_factory=list)

    @property
    def n_features(self) -> int:
        return self.sizes[0]

    @classmethod
    def zeros(cls, n_features: int, hidden=HIDDEN, n_classes: int = N_CLASSES) -> "MlpModel":
        sizes = (n_features, *hidden, n_classes)
        return cls(
            sizes,
            [np.zeros((a, b)) for a, b in zip(sizes[:-1], sizes[1:])],
            [np.zeros(b) for b in sizes[1:]],
        )

    @classmethod
    def glorot(cls, n_features: int, rng: np.random.Generator, hidden=HIDDEN,
               n_classes: int = N_CLASSES) -> "MlpModel":
        model = cls.zeros(n_features, hidden, n_classes)
        for w in model.weights:
            limit = np.sqrt(6.0 / (w.shape[0] + w.shape[1]))
            w[...] = rng.uniform(-limit, limit, size=w.shape)
        return model

    # flat parameter view, layer by layer: W (row-major) then b
    def get_params(self) -> np.ndarray:
        return np.concatenate([p.ravel() for w, b in zip(self.weights, self.biases) for p in (w, b)])

    def set_params(self, theta: np.ndarray) -> None:
        pos = 0
        for w, b in zip(self.weights, self.biases):
            w[...] = theta[pos:pos + w.size].reshape(w.shape)
            pos += w.size
            b[...] = theta[pos:pos + b.size]
            pos += b.size

    def with_params(self, theta: np.ndarray) -> "MlpModel":
        m = MlpModel(self.sizes, [w.copy() for w in self.weights], [b.copy() for b in self.biases],
                     self.standardizer)
        m.set_params(theta)
        return m

    def _prepare(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.n_features:
            raise DimMismatch(f"expected {self.n_features} features, got {x.shape[1]}")
        if self.standardizer is not None:
            x = self.standardizer.apply(x)
        return x

    def predict_proba(self, x) -> np.ndarray:
        # exp underflows once logits differ by ~745; keep outputs positive
        return np.maximum(_forward(self, self._prepare(x))[0][-1], _TINY)

    def predict(self, x) -> np.ndarray:
        return np.argmax(self.predict_proba(x), axis=1)


_TINY = np.finfo(float).tiny


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _forward(model: MlpModel, x: np.ndarray):
    acts = [x]
    pre = []
    h = x
    last = len(model.weights) - 1
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = h @ w + b
        pre.append(z)
        h = _softmax(z) if i == last else np.maximum(z, 0.0)
        acts.append(h)
    return acts, pre


def forward(model: MlpModel, x) -> np.ndarray:
    """Class probabilities for a single sample."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise DimMismatch("forward() takes a single sample; use predict_proba for batches")
    return model.predict_proba(x[None, :])[0]


def _log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.sum(np.exp(z), axis=1, keepdims=True))


def loss_and_grad(model: MlpModel, x, labels) -> tuple[float, np.ndarray]:
    """Mean cross-entropy and its exact gradient as a flat parameter vector.

    Inputs are used as given (no standardizer is applied here).
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    labels = np.asarray(labels, dtype=int)
    if x.shape[1] != model.n_features:
        raise DimMismatch(f"expected {model.n_features} features, got {x.shape[1]}")
    n = len(x)
    if n == 0 or len(labels) != n:
        raise DimMismatch("need a non-empty batch with one label per row")
    acts, pre = _forward(model, x)
    logp = _log_softmax(pre[-1])
    loss = -float(np.mean(logp[np.arange(n), labels]))

    delta = acts[-1].copy()
    delta[np.arange(n), labels] -= 1.0
    delta /= n
    grads = []
    for i in range(len(model.weights) - 1, -1, -1):
        gw = acts[i].T @ delta
        gb = delta.sum(axis=0)
        grads.append((gw, gb))
        if i > 0:
            delta = (delta @ model.weights[i].T) * (pre[i - 1] > 0)
    grads.reverse()
    return loss, np.concatenate([p.ravel() for gw, gb in grads for p in (gw, gb)])


@dataclass
class LbfgsResult:
    theta: np.ndarray
    loss: float
    iterations: int
    converged: bool
    line_search_failed: bool
    history: list[float]


def lbfgs(fun, theta0: np.ndarray, max_iter: int = 200, history: int = 10,
          grad_tol: float = 1e-5, loss_tol: float = 1e-9, c1: float = 1e-4,
          max_backtracks: int = 40) -> LbfgsResult:
    """Minimize ``fun(theta) -> (value, grad)`` by L-BFGS.

    Search directions come from the two-loop recursion over the last
    ``history`` curvature pairs; step lengths from Armijo backtracking
    starting at 1 (the very first step is scaled to unit length).
    """
    theta = theta0.copy()
    f, g = fun(theta)
    hist = [f]
    s_list: list[np.ndarray] = []
    y_list: list[np.ndarray] = []
    it = 0
    failed = False
    converged = bool(np.max(np.abs(g)) < grad_tol)
    while it < max_iter and not converged:
        q = g.copy()
        rhos = [1.0 / float(y @ s) for s, y in zip(s_list, y_list)]
        alphas = []
        for s, y, rho in zip(reversed(s_list), reversed(y_list), reversed(rhos)):
            a = rho * float(s @ q)
            alphas.append(a)
            q -= a * y
        if s_list:
            gamma = float(s_list[-1] @ y_list[-1]) / float(y_list[-1] @ y_list[-1])
            q *= gamma
        else:
            q /= max(np.linalg.norm(g), 1e-12)
        for (s, y, rho), a in zip(zip(s_list, y_list, rhos), reversed(alphas)):
            b = rho * float(y @ q)
            q += (a - b) * s
        d = -q
        slope = float(g @ d)
        if slope >= 0:
            # not a descent direction: restart from steepest descent
            s_list.clear()
            y_list.clear()
            d = -g / max(np.linalg.norm(g), 1e-12)
            slope = float(g @ d)

        step = 1.0
        for _ in range(max_backtracks):
            theta_new = theta + step * d
            f_new, g_new = fun(theta_new)
            if np.isfinite(f_new) and f_new <= f + c1 * step * slope:
                break
            step *= 0.5
        else:
            failed = True
            break

        it += 1
        s_vec = theta_new - theta
        y_vec = g_new - g
        if float(s_vec @ y_vec) > 1e-10 * float(np.linalg.norm(s_vec) * np.linalg.norm(y_vec)):
            s_list.append(s_vec)
            y_list.append(y_vec)
            if len(s_list) > history:
                s_list.pop(0)
                y_list.pop(0)
        change = f - f_new
        theta, f, g = theta_new, f_new, g_new
        hist.append(f)
        if np.max(np.abs(g)) < grad_tol or abs(change) < loss_tol:
            converged = True
    return LbfgsResult(theta, f, it, converged, failed, hist)


def lbfgs_train(x, labels, max_iter: int = 200, seed: int = 0, standardize: bool = False,
                hidden=HIDDEN, n_classes: int = N_CLASSES) -> MlpModel:
    """Fit the network by full-batch L-BFGS on mean cross-entropy."""
    x = np.asarray(x, dtype=float)
    labels = np.asarray(labels, dtype=int)
    if len(x) == 0:
        raise DimMismatch("empty training set")
    if len(np.unique(labels)) < 2:
        raise SingleClass("need at least two classes")
    std = Standardizer.fit(x) if standardize else None
    xs = std.apply(x) if std is not None else x
    rng = np.random.Generator(np.random.PCG64(seed))
    model = MlpModel.glorot(x.shape[1], rng, hidden, n_classes)
    model.standardizer = std

    def fun(theta):
        return loss_and_grad(model.with_params(theta), xs, labels)

    res = lbfgs(fun, model.get_params(), max_iter=max_iter)
    if res.line_search_failed:
        warnings.warn("L-BFGS line search failed; returning best parameters so far",
                      LineSearchFailure, stacklevel=2)
    model.set_params(res.theta)
    model.iterations = res.iterations
    model.converged = res.converged
    model.loss_history = res.history
    return model


def predict(model: MlpModel, x) -> int:
    return int(np.argmax(forward(model, x)))
