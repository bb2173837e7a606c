"""Correlation tables, principal-axis factor analysis, k-means and classical MDS."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .._parallel import child_rng
from ..metrics import pearson


def standardize(X, ddof: int = 1) -> np.ndarray:
    """Columns to mean 0, sd 1 (constant columns become 0)."""
    X = np.asarray(X, dtype=np.float64)
    mu = X.mean(axis=0)
    sd = X.std(axis=0, ddof=ddof)
    sd = np.where(sd > 0, sd, 1.0)
    return (X - mu) / sd


def pearson_table(features, attributes, feature_ids=None, attribute_ids=None, min_pairs: int = 3) -> list[tuple]:
    """Pairwise-complete Pearson r between each feature and attribute over
    state-years. ``features`` and ``attributes`` are DataFrames keyed by
    (state, year); rows are (feature, attribute, r, r^2, n)."""
    merged = features.merge(attributes, on=["state", "year"], how="inner")
    feature_ids = list(feature_ids or [c for c in features.columns if c not in ("state", "year")])
    attribute_ids = list(attribute_ids or [c for c in attributes.columns if c not in ("state", "year")])
    out = []
    for f in feature_ids:
        x = merged[f].to_numpy(dtype=np.float64)
        for a in attribute_ids:
            y = merged[a].to_numpy(dtype=np.float64)
            ok = np.isfinite(x) & np.isfinite(y)
            n = int(ok.sum())
            r = pearson(x[ok], y[ok]) if n >= min_pairs else float("nan")
            out.append((f, a, r, r * r if not math.isnan(r) else float("nan"), n))
    return out


# ---------------------------------------------------------------------- factor analysis


@dataclass
class FactorLoadings:
    n_factors: int
    loadings: np.ndarray  # variables x factors
    communalities: np.ndarray
    eigenvalues: np.ndarray
    iterations: int
    converged: bool
    max_abs_residual: float
    heywood: bool = False

    def groups(self) -> list[int]:
        """Index of the factor with the largest |loading| for each variable."""
        return [int(i) for i in np.argmax(np.abs(self.loadings), axis=1)]


def _nearest_correlation(R: np.ndarray) -> np.ndarray:
    """Clip negative eigenvalues and rescale to unit diagonal."""
    w, V = np.linalg.eigh((R + R.T) / 2)
    if w.min() >= 0:
        return (R + R.T) / 2
    w = np.clip(w, 1e-10, None)
    A = (V * w) @ V.T
    d = np.sqrt(np.diag(A))
    return A / np.outer(d, d)


def factor_analysis(R, n_factors: int = 2, max_iter: int = 100, tol: float = 1e-6) -> FactorLoadings:
    """Unrotated principal-axis factoring with squared-multiple-correlation
    starting communalities. Each factor is signed so its largest-magnitude
    loading is positive."""
    R = np.asarray(R, dtype=np.float64)
    p = R.shape[0]
    if R.shape != (p, p) or not np.allclose(R, R.T, atol=1e-10):
        raise ValueError("correlation matrix must be square and symmetric")
    if not 1 <= n_factors < p:
        raise ValueError("n_factors must be between 1 and p - 1")
    R = _nearest_correlation(R)
    try:
        h = 1.0 - 1.0 / np.diag(np.linalg.inv(R))
    except np.linalg.LinAlgError:
        h = np.max(np.abs(R - np.eye(p)), axis=1)
    h = np.clip(h, 0.0, 1.0)
    converged = False
    it = 0
    heywood = False
    for it in range(1, max_iter + 1):
        Rr = R.copy()
        np.fill_diagonal(Rr, h)
        w, V = np.linalg.eigh(Rr)
        top = np.argsort(w)[::-1][:n_factors]
        lam = np.clip(w[top], 0.0, None)
        L = V[:, top] * np.sqrt(lam)
        h_new = (L ** 2).sum(axis=1)
        if (h_new > 1).any():
            heywood = True
            h_new = np.minimum(h_new, 1.0)
        delta = np.abs(h_new - h).max()
        h = h_new
        if delta < tol:
            converged = True
            break
    norms = np.sqrt((L ** 2).sum(axis=1))
    if (norms > 1).any():
        # Heywood case: cap each offending variable's communality at 1
        heywood = True
        L = L / np.maximum(norms, 1.0)[:, None]
    for k in range(n_factors):
        j = np.argmax(np.abs(L[:, k]))
        if L[j, k] < 0:
            L[:, k] = -L[:, k]
    resid = R - L @ L.T
    np.fill_diagonal(resid, 0.0)
    return FactorLoadings(n_factors, L, (L ** 2).sum(axis=1), lam, it, converged,
                          float(np.abs(resid).max()), heywood)


# ---------------------------------------------------------------------- k-means


@dataclass
class KMeansResult:
    labels: np.ndarray
    centroids: np.ndarray
    sse: float
    nearest: np.ndarray  # row index of the point closest to each centroid
    sse_trace: list

    def nearest_names(self, names) -> list:
        return [names[i] for i in self.nearest]


def _sq_dist(X, C):
    return ((X[:, None, :] - C[None, :, :]) ** 2).sum(axis=2)


def _kmeanspp(X, k, rng):
    n = len(X)
    centers = [int(rng.integers(n))]
    d2 = ((X - X[centers[0]]) ** 2).sum(axis=1)
    for _ in range(1, k):
        tot = d2.sum()
        if tot <= 0:
            nxt = int(rng.integers(n))
        else:
            nxt = int(np.searchsorted(np.cumsum(d2), rng.random() * tot, side="right"))
            nxt = min(nxt, n - 1)
        centers.append(nxt)
        d2 = np.minimum(d2, ((X - X[nxt]) ** 2).sum(axis=1))
    return X[centers].copy()


def _lloyd(X, C, max_iter, tol):
    trace = []
    labels = np.zeros(len(X), dtype=np.int64)
    for _ in range(max_iter):
        D = _sq_dist(X, C)
        labels = np.argmin(D, axis=1)
        trace.append(float(D[np.arange(len(X)), labels].sum()))
        newC = C.copy()
        for j in range(len(C)):
            m = labels == j
            if m.any():
                newC[j] = X[m].mean(axis=0)
            else:
                # re-seed an empty cluster at the point farthest from its centroid
                far = int(np.argmax(D[np.arange(len(X)), labels]))
                newC[j] = X[far]
                labels[far] = j
        shift = np.abs(newC - C).max()
        C = newC
        if shift <= tol:
            break
    D = _sq_dist(X, C)
    labels = np.argmin(D, axis=1)
    sse = float(D[np.arange(len(X)), labels].sum())
    trace.append(sse)
    return labels, C, sse, trace


def kmeans(X, k: int, seed: int = 0, n_restarts: int = 10, max_iter: int = 300, tol: float = 1e-10) -> KMeansResult:
    """Lloyd's algorithm from k-means++ starts; best of ``n_restarts`` by SSE.

    Rows are processed in lexicographic order so the result does not depend on
    input row order; clusters are numbered by their first member in that order.
    """
    X = np.asarray(X, dtype=np.float64)
    n = len(X)
    if not 1 <= k <= n:
        raise ValueError("k must be between 1 and the number of points")
    order = np.lexsort(X.T[::-1])
    Xs = X[order]
    best = None
    for r in range(n_restarts):
        rng = child_rng(seed, r)
        res = _lloyd(Xs, _kmeanspp(Xs, k, rng), max_iter, tol)
        if best is None or res[2] < best[2] - 1e-12:
            best = res
    labels_s, C, sse, trace = best
    # canonical cluster numbering
    first = {}
    for lab in labels_s:
        first.setdefault(int(lab), len(first))
    for j in range(k):
        first.setdefault(j, len(first))
    perm = np.array([first[j] for j in range(k)])
    labels_s = perm[labels_s]
    C2 = np.empty_like(C)
    C2[perm] = C
    labels = np.empty(n, dtype=np.int64)
    labels[order] = labels_s
    D = _sq_dist(X, C2)
    nearest = np.array([int(np.flatnonzero(D[:, j] == D[:, j].min())[0]) for j in range(k)])
    return KMeansResult(labels, C2, sse, nearest, trace)


# ---------------------------------------------------------------------- MDS


@dataclass
class MdsResult:
    coords: np.ndarray
    eigenvalues: np.ndarray
    reduced: bool  # fewer than ``dim`` positive eigenvalues


def classical_mds(D, dim: int = 2) -> MdsResult:
    D = np.asarray(D, dtype=np.float64)
    n = D.shape[0]
    if D.shape != (n, n) or not np.allclose(D, D.T, atol=1e-9) or np.abs(np.diag(D)).max(initial=0) > 1e-12:
        raise ValueError("distance matrix must be square, symmetric, zero-diagonal")
    J = np.eye(n) - 1.0 / n
    B = -0.5 * J @ (D ** 2) @ J
    w, V = np.linalg.eigh((B + B.T) / 2)
    idx = np.argsort(w)[::-1]
    w, V = w[idx], V[:, idx]
    pos = w > max(w[0], 0) * 1e-10 if n else np.zeros(0, bool)
    k = int(min(dim, pos.sum()))
    X = V[:, :k] * np.sqrt(w[:k])
    for j in range(k):
        nz = np.flatnonzero(np.abs(X[:, j]) > 1e-12)
        if len(nz) and X[nz[0], j] < 0:
            X[:, j] = -X[:, j]
    return MdsResult(X, w[:dim], k < dim)


def euclidean_distances(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    return np.sqrt(np.maximum(_sq_dist(X, X), 0.0))


# ---------------------------------------------------------------------- triad groups

TRIAD_FA_IDS = tuple(f"T{i}" for i in range(4, 17))


@dataclass
class TriadGroups:
    names: list  # triad columns used
    loadings: FactorLoadings
    members: list  # per factor: the triad columns it claims by max |loading|
    scores: np.ndarray  # rows x factors: mean standardized proportion of each group


def triad_groups(frame, n_factors: int = 2, ids=TRIAD_FA_IDS) -> TriadGroups:
    """Factor the correlation matrix of triad proportions (state-year rows),
    group triads by their largest loading and score each row by the mean of
    its standardized group members."""
    cols = [c for c in ids if c in frame.columns]
    X = frame[cols].to_numpy(dtype=np.float64)
    if not np.isfinite(X).all():
        raise ValueError("triad proportions contain missing values")
    keep = X.std(axis=0) > 0
    cols = [c for c, k in zip(cols, keep) if k]
    X = X[:, keep]
    if len(cols) <= n_factors:
        raise ValueError("too few varying triad columns for the factor model")
    Z = standardize(X)
    fl = factor_analysis(np.corrcoef(Z, rowvar=False), n_factors)
    g = np.array(fl.groups())
    members = [[c for c, gi in zip(cols, g) if gi == k] for k in range(n_factors)]
    scores = np.column_stack([Z[:, g == k].mean(axis=1) if (g == k).any() else np.zeros(len(Z))
                              for k in range(n_factors)])
    return TriadGroups(cols, fl, members, scores)
