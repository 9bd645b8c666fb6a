"""PCA backed by a Jacobi eigensolver."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DimMismatch, RankTooLow

DEFAULT_COMPONENTS = 18
RANK_EPS = 1e-12


def _round_robin(n: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Pairings covering every (p, q) once per sweep, disjoint within a round."""
    players = list(range(n)) + ([-1] if n % 2 else [])
    m = len(players)
    rounds = []
    for _ in range(m - 1):
        pairs = [(players[i], players[m - 1 - i]) for i in range(m // 2)]
        pairs = [(min(a, b), max(a, b)) for a, b in pairs if a >= 0 and b >= 0]
        if pairs:
            p, q = np.array(pairs).T
            rounds.append((p, q))
        players = [players[0], players[-1]] + players[1:-1]
    return rounds


def jacobi_eigh(a: np.ndarray, tol: float = 1e-12, max_sweeps: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decompose a symmetric matrix by cyclic Jacobi rotations.

    Rotations are applied in round-robin order, so each round updates
    ``n // 2`` disjoint index pairs at once. Stops when the off-diagonal
    Frobenius norm drops below ``tol`` times the matrix norm.

    Returns eigenvalues (descending) and eigenvectors as columns.
    """
    a = np.array(a, dtype=float)
    n = a.shape[0]
    if a.shape != (n, n):
        raise DimMismatch("matrix must be square")
    v = np.eye(n)
    scale = max(np.linalg.norm(a), np.finfo(float).tiny)
    rounds = _round_robin(n)

    mask = ~np.eye(n, dtype=bool)

    def off(m):
        # direct sum; subtracting the diagonal from the total cancels badly
        return np.sqrt(np.sum(m[mask] ** 2))

    for _ in range(max_sweeps):
        if off(a) <= tol * scale:
            break
        for p, q in rounds:
            apq = a[p, q]
            app = a[p, p]
            aqq = a[q, q]
            nz = apq != 0.0
            with np.errstate(over="ignore", divide="ignore"):
                # theta -> inf gives t -> 0, the correct limit
                theta = np.where(nz, (aqq - app) / (2.0 * np.where(nz, apq, 1.0)), 0.0)
                t = np.where(nz, np.sign(theta) / (np.abs(theta) + np.sqrt(1.0 + theta * theta)), 0.0)
            t = np.where(nz & (theta == 0.0), 1.0, t)
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = t * c
            # a <- J^T a J, rows then columns
            rp, rq = a[p, :].copy(), a[q, :].copy()
            a[p, :] = c[:, None] * rp - s[:, None] * rq
            a[q, :] = s[:, None] * rp + c[:, None] * rq
            cp, cq = a[:, p].copy(), a[:, q].copy()
            a[:, p] = cp * c - cq * s
            a[:, q] = cp * s + cq * c
            a[p, q] = 0.0
            a[q, p] = 0.0
            vp, vq = v[:, p].copy(), v[:, q].copy()
            v[:, p] = vp * c - vq * s
            v[:, q] = vp * s + vq * c

    w = np.diag(a).copy()
    order = np.argsort(-w, kind="stable")
    return w[order], v[:, order]


def _fix_signs(components: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(components), axis=1)
    signs = np.sign(components[np.arange(len(components)), idx])
    signs[signs == 0] = 1.0
    return components * signs[:, None]


@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray
    components: np.ndarray  # K x D
    explained_variance: np.ndarray

    @property
    def n_components(self) -> int:
        return self.components.shape[0]

    @property
    def n_features(self) -> int:
        return self.components.shape[1]

    def transform(self, x) -> np.ndarray:
        return transform(self, x)

    def inverse_transform(self, z) -> np.ndarray:
        return inverse_transform(self, z)


def _eigen(xc: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Covariance eigenpairs of centered data; vectors as columns (D x r)."""
    n, d = xc.shape
    if d <= n:
        cov = xc.T @ xc / (n - 1)
        return jacobi_eigh(cov)
    # Wide data: diagonalize the n x n Gram matrix and map back.
    gram = xc @ xc.T / (n - 1)
    w, u = jacobi_eigh(gram)
    keep = w > RANK_EPS * max(w[0], 1.0)
    vecs = np.zeros((d, n))
    vecs[:, keep] = xc.T @ u[:, keep] / np.sqrt(w[keep] * (n - 1))
    return w, vecs


def fit(x, k: int = DEFAULT_COMPONENTS) -> PcaModel:
    x = np.asarray(x, dtype=float)
    n, d = x.shape
    if n < 2:
        raise ValueError("PCA needs at least two samples")
    if k < 1 or k > min(n, d):
        raise RankTooLow(k, min(n, d))
    mean = x.mean(axis=0)
    w, vecs = _eigen(x - mean)
    rank = int(np.sum(w > RANK_EPS * max(w[0], 1.0)))
    if k > rank:
        raise RankTooLow(k, rank)
    components = _fix_signs(vecs[:, :k].T)
    return PcaModel(mean, components, np.maximum(w[:k], 0.0))


def available_rank(x) -> int:
    x = np.asarray(x, dtype=float)
    w, _ = _eigen(x - x.mean(axis=0))
    return int(np.sum(w > RANK_EPS * max(w[0], 1.0)))


def fit_clamped(x, k: int = DEFAULT_COMPONENTS) -> PcaModel:
    """Like :func:`fit`, but reduce ``k`` to the data rank with a warning."""
    try:
        return fit(x, k)
    except RankTooLow as exc:
        rank = min(exc.rank, available_rank(x))
        if rank < 1:
            raise
        warnings.warn(f"PCA components clamped from {k} to rank {rank}", stacklevel=2)
        return fit(x, rank)


def transform(model: PcaModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[1] != model.n_features:
        raise DimMismatch(f"expected {model.n_features} columns, got shape {x.shape}")
    return (x - model.mean) @ model.components.T


def inverse_transform(model: PcaModel, z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if z.ndim != 2 or z.shape[1] != model.n_components:
        raise DimMismatch(f"expected {model.n_components} columns, got shape {z.shape}")
    return z @ model.components + model.mean
