"""Pure-Python/numpy versions of the hot kernels.

These mirror ``_kernels.pyx`` routine for routine and are used when the
compiled extension is unavailable (or ``GBPLL_PURE_PYTHON=1`` is set).
"""
import numpy as np

_CHUNK = 256


def farthest_pairs(X):
    """Return (max squared distance, array of (i, j) pairs i < j attaining it)."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    n = X.shape[0]
    best = -1.0
    pairs = []
    for start in range(0, n, _CHUNK):
        stop = min(start + _CHUNK, n)
        diff = X[start:stop, None, :] - X[None, :, :]
        d2 = np.einsum("ijk,ijk->ij", diff, diff)
        rows = np.arange(start, stop)[:, None]
        cols = np.arange(n)[None, :]
        d2 = np.where(cols > rows, d2, -1.0)
        m = d2.max() if d2.size else -1.0
        if m > best:
            best = m
            pairs = []
        if m == best and m >= 0.0:
            ii, jj = np.nonzero(d2 == best)
            pairs.extend(zip((ii + start).tolist(), jj.tolist()))
    return max(best, 0.0), np.asarray(pairs, dtype=np.int64).reshape(-1, 2)


def lloyd2(X, c0, c1, max_iter):
    """Two-cluster Lloyd iterations from the given initial centers.

    Returns (labels as uint8, iterations run, ok) where ok is False if a
    cluster emptied.
    """
    X = np.asarray(X, dtype=np.float64)
    centers = np.stack([np.asarray(c0, dtype=np.float64), np.asarray(c1, dtype=np.float64)])
    labels = None
    it = 0
    for it in range(1, max_iter + 1):
        d0 = ((X - centers[0]) ** 2).sum(axis=1)
        d1 = ((X - centers[1]) ** 2).sum(axis=1)
        new = (d1 < d0).astype(np.uint8)
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        n1 = int(labels.sum())
        if n1 == 0 or n1 == len(labels):
            return labels, it, False
        centers[0] = X[labels == 0].mean(axis=0)
        centers[1] = X[labels == 1].mean(axis=0)
    return labels, it, True


def nnls_gram(G, b, max_iter, tol):
    """Lawson-Hanson active set on the normal equations.

    Minimises ``w'Gw - 2b'w`` over ``w >= 0``; ``G`` must be symmetric PSD.
    Stops once every inactive coordinate has gradient ``2(Gw - b)_j >= -tol``.
    """
    G = np.asarray(G, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    n = b.shape[0]
    w = np.zeros(n)
    if n == 0:
        return w
    passive = np.zeros(n, dtype=bool)
    blocked = np.zeros(n, dtype=bool)
    diag_scale = max(float(np.max(np.diag(G))), 1e-300)

    for _ in range(max_iter):
        grad = 2.0 * (G @ w - b)
        cand = ~passive & ~blocked
        if not cand.any():
            break
        scores = np.where(cand, -grad, -np.inf)
        t = int(np.argmax(scores))
        if scores[t] <= tol:
            break
        passive[t] = True
        while True:
            idx = np.flatnonzero(passive)
            z = _solve_spd(G[np.ix_(idx, idx)], b[idx], diag_scale)
            if z is None:
                # column t is numerically dependent on the passive set
                passive[t] = False
                blocked[t] = True
                w[t] = 0.0
                break
            if np.all(z > 0.0):
                w[:] = 0.0
                w[idx] = z
                break
            neg = z <= 0.0
            wi = w[idx]
            den = wi[neg] - z[neg]
            alpha = np.min(np.where(den > 0.0, wi[neg] / np.where(den > 0.0, den, 1.0), 0.0))
            w[idx] = wi + alpha * (z - wi)
            drop = idx[w[idx] <= 1e-15]
            w[drop] = 0.0
            passive[drop] = False
            if not passive.any():
                break
    return np.maximum(w, 0.0)


def _solve_spd(A, rhs, diag_scale):
    try:
        L = np.linalg.cholesky(A)
    except np.linalg.LinAlgError:
        return None
    if np.min(np.diag(L)) ** 2 <= 1e-13 * diag_scale:
        return None
    y = np.linalg.solve(L, rhs)
    return np.linalg.solve(L.T, y)
