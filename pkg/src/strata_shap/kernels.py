"""Hot numeric kernels: regularized logistic Newton solves and subset draws.

Every kernel exists twice, a numba ``_nb`` version written as explicit loops
and a vectorized ``_np`` version. The public wrappers dispatch on
``strata_shap._accel.USE_NUMBA``. Both versions implement the same algorithm
and agree to rounding; subset draws agree exactly.

The logistic objective is

    J(w) = mean_r [ softplus(x_r . w) - y_r (x_r . w) ] + lam * ||w||^2

over rows ``x_r`` that already carry a trailing bias column of ones.
"""

import math

import numpy as np

from . import _accel
from ._accel import njit, prange

ARMIJO = 1e-4
MIN_STEP = 1e-12


# ---------------------------------------------------------------- numba path


@njit(cache=True)
def _softplus(z):
    if z > 0.0:
        return z + math.log1p(math.exp(-z))
    return math.log1p(math.exp(z))


@njit(cache=True)
def _sigmoid(z):
    if z >= 0.0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


@njit(cache=True)
def _objective_nb(X, y, w, lam):
    k, p = X.shape
    total = 0.0
    for r in range(k):
        z = 0.0
        for j in range(p):
            z += X[r, j] * w[j]
        total += _softplus(z) - y[r] * z
    reg = 0.0
    for j in range(p):
        reg += w[j] * w[j]
    return total / k + lam * reg


@njit(cache=True)
def _mean_logloss_nb(X, y, w):
    k, p = X.shape
    total = 0.0
    hits = 0
    for r in range(k):
        z = 0.0
        for j in range(p):
            z += X[r, j] * w[j]
        total += _softplus(z) - y[r] * z
        if (z > 0.0) == (y[r] > 0.5):
            hits += 1
    return total / k, hits / k


@njit(cache=True)
def _fit_nb(X, y, lam, tol, max_iter):
    k, p = X.shape
    w = np.zeros(p)
    resid = np.empty(k)
    curv = np.empty(k)
    g = np.empty(p)
    dual = k < p
    if dual:
        gram = np.empty((k, k))
        for a in range(k):
            for b in range(a, k):
                acc = 0.0
                for j in range(p):
                    acc += X[a, j] * X[b, j]
                gram[a, b] = acc
                gram[b, a] = acc
    f = _objective_nb(X, y, w, lam)
    it = 0
    gnorm = np.inf
    while True:
        for r in range(k):
            z = 0.0
            for j in range(p):
                z += X[r, j] * w[j]
            mu = _sigmoid(z)
            resid[r] = mu - y[r]
            curv[r] = mu * (1.0 - mu)
        gsq = 0.0
        for j in range(p):
            acc = 0.0
            for r in range(k):
                acc += X[r, j] * resid[r]
            g[j] = acc / k + 2.0 * lam * w[j]
            gsq += g[j] * g[j]
        gnorm = math.sqrt(gsq)
        if gnorm <= tol or it >= max_iter:
            break

        if dual:
            # Woodbury: H^-1 g = (g - X^T s B^-1 s X g) / (2 lam),
            # B = 2 lam k I + diag(s) X X^T diag(s), s = sqrt(curv)
            sq = np.sqrt(curv)
            B = np.empty((k, k))
            for a in range(k):
                for b in range(k):
                    B[a, b] = sq[a] * gram[a, b] * sq[b]
                B[a, a] += 2.0 * lam * k
            u = np.empty(k)
            for r in range(k):
                acc = 0.0
                for j in range(p):
                    acc += X[r, j] * g[j]
                u[r] = sq[r] * acc
            t = np.linalg.solve(B, u)
            d = np.empty(p)
            for j in range(p):
                acc = 0.0
                for r in range(k):
                    acc += X[r, j] * sq[r] * t[r]
                d[j] = (g[j] - acc) / (2.0 * lam)
        else:
            H = np.zeros((p, p))
            for r in range(k):
                c = curv[r] / k
                for a in range(p):
                    xa = X[r, a] * c
                    for b in range(a, p):
                        H[a, b] += xa * X[r, b]
            for a in range(p):
                H[a, a] += 2.0 * lam
                for b in range(a + 1, p):
                    H[b, a] = H[a, b]
            d = np.linalg.solve(H, g)

        slope = 0.0
        for j in range(p):
            slope += g[j] * d[j]
        step = 1.0
        w_new = np.empty(p)
        while True:
            for j in range(p):
                w_new[j] = w[j] - step * d[j]
            f_new = _objective_nb(X, y, w_new, lam)
            if f_new <= f - ARMIJO * step * slope or step < MIN_STEP:
                break
            step *= 0.5
        w[:] = w_new
        f = f_new
        it += 1
    return w, it, gnorm


@njit(parallel=True, cache=True)
def _fit_batch_nb(Xb, y, flat, offsets, lam, tol, max_iter, Xh, yh):
    n_models = offsets.size - 1
    p = Xb.shape[1]
    W = np.zeros((n_models, p))
    iters = np.zeros(n_models, dtype=np.int64)
    gnorm = np.zeros(n_models)
    train_loss = np.zeros(n_models)
    held_loss = np.full(n_models, np.nan)
    held_acc = np.full(n_models, np.nan)
    for b in prange(n_models):
        lo = offsets[b]
        hi = offsets[b + 1]
        k = hi - lo
        X = np.empty((k, p))
        yy = np.empty(k)
        for r in range(k):
            src = flat[lo + r]
            yy[r] = y[src]
            for j in range(p):
                X[r, j] = Xb[src, j]
        w, it, gn = _fit_nb(X, yy, lam, tol, max_iter)
        W[b] = w
        iters[b] = it
        gnorm[b] = gn
        train_loss[b] = _mean_logloss_nb(X, yy, w)[0]
        if Xh.shape[0] > 0:
            loss, acc = _mean_logloss_nb(Xh, yh, w)
            held_loss[b] = loss
            held_acc[b] = acc
    return W, iters, gnorm, train_loss, held_loss, held_acc


@njit(cache=True)
def _draw_subsets_nb(perm, jumps):
    n_draws, k = jumps.shape
    out = np.empty((n_draws, k), dtype=np.int64)
    for d in range(n_draws):
        for t in range(k):
            j = jumps[d, t]
            tmp = perm[t]
            perm[t] = perm[j]
            perm[j] = tmp
            out[d, t] = perm[t]
        for t in range(k - 1, -1, -1):
            j = jumps[d, t]
            tmp = perm[t]
            perm[t] = perm[j]
            perm[j] = tmp
    return out


# ---------------------------------------------------------------- numpy path


def _softplus_np(z):
    return np.logaddexp(0.0, z)


def _sigmoid_np(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    e = np.exp(z[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _objective_np(X, y, w, lam):
    z = X @ w
    return float(np.mean(_softplus_np(z) - y * z) + lam * (w @ w))


def _mean_logloss_np(X, y, w):
    z = X @ w
    return float(np.mean(_softplus_np(z) - y * z)), float(np.mean((z > 0) == (y > 0.5)))


def _fit_np(X, y, lam, tol, max_iter):
    k, p = X.shape
    w = np.zeros(p)
    dual = k < p
    gram = X @ X.T if dual else None
    f = _objective_np(X, y, w, lam)
    it = 0
    while True:
        mu = _sigmoid_np(X @ w)
        g = X.T @ (mu - y) / k + 2.0 * lam * w
        gnorm = float(np.sqrt(g @ g))
        if gnorm <= tol or it >= max_iter:
            break
        curv = mu * (1.0 - mu)
        if dual:
            sq = np.sqrt(curv)
            B = sq[:, None] * gram * sq[None, :] + 2.0 * lam * k * np.eye(k)
            t = np.linalg.solve(B, sq * (X @ g))
            d = (g - X.T @ (sq * t)) / (2.0 * lam)
        else:
            H = (X.T * (curv / k)) @ X + 2.0 * lam * np.eye(p)
            d = np.linalg.solve(H, g)
        slope = float(g @ d)
        step = 1.0
        while True:
            w_new = w - step * d
            f_new = _objective_np(X, y, w_new, lam)
            if f_new <= f - ARMIJO * step * slope or step < MIN_STEP:
                break
            step *= 0.5
        w, f = w_new, f_new
        it += 1
    return w, it, gnorm


def _fit_batch_np(Xb, y, flat, offsets, lam, tol, max_iter, Xh, yh):
    n_models = offsets.size - 1
    p = Xb.shape[1]
    W = np.zeros((n_models, p))
    iters = np.zeros(n_models, dtype=np.int64)
    gnorm = np.zeros(n_models)
    train_loss = np.zeros(n_models)
    held_loss = np.full(n_models, np.nan)
    held_acc = np.full(n_models, np.nan)
    for b in range(n_models):
        idx = flat[offsets[b]:offsets[b + 1]]
        X, yy = Xb[idx], y[idx]
        W[b], iters[b], gnorm[b] = _fit_np(X, yy, lam, tol, max_iter)
        train_loss[b] = _mean_logloss_np(X, yy, W[b])[0]
        if Xh.shape[0] > 0:
            held_loss[b], held_acc[b] = _mean_logloss_np(Xh, yh, W[b])
    return W, iters, gnorm, train_loss, held_loss, held_acc


def _draw_subsets_np(perm, jumps):
    n_draws, k = jumps.shape
    out = np.empty((n_draws, k), dtype=np.int64)
    for d in range(n_draws):
        row = jumps[d]
        for t in range(k):
            j = row[t]
            perm[t], perm[j] = perm[j], perm[t]
            out[d, t] = perm[t]
        for t in range(k - 1, -1, -1):
            j = row[t]
            perm[t], perm[j] = perm[j], perm[t]
    return out


# ---------------------------------------------------------------- dispatch


def add_bias(X):
    X = np.asarray(X, dtype=np.float64)
    return np.hstack([X, np.ones((X.shape[0], 1))])


def fit_logreg(Xb, y, lam, tol=1e-6, max_iter=10_000):
    """Newton solve on one design matrix with bias column. Returns (w, iters, gnorm)."""
    Xb = np.ascontiguousarray(Xb, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    if _accel.USE_NUMBA:
        w, it, gn = _fit_nb(Xb, y, float(lam), float(tol), int(max_iter))
        return w, int(it), float(gn)
    return _fit_np(Xb, y, float(lam), float(tol), int(max_iter))


def fit_logreg_batch(Xb, y, flat, offsets, lam, tol=1e-6, max_iter=10_000, Xh=None, yh=None):
    """Fit one model per index block ``flat[offsets[b]:offsets[b+1]]``.

    Returns ``(W, iters, gnorm, train_loss, heldout_loss, heldout_acc)``; the
    heldout columns are NaN when no heldout matrix is given.
    """
    Xb = np.ascontiguousarray(Xb, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    flat = np.ascontiguousarray(flat, dtype=np.int64)
    offsets = np.ascontiguousarray(offsets, dtype=np.int64)
    if Xh is None:
        Xh = np.zeros((0, Xb.shape[1]))
        yh = np.zeros(0)
    Xh = np.ascontiguousarray(Xh, dtype=np.float64)
    yh = np.ascontiguousarray(yh, dtype=np.float64)
    impl = _fit_batch_nb if _accel.USE_NUMBA else _fit_batch_np
    return impl(Xb, y, flat, offsets, float(lam), float(tol), int(max_iter), Xh, yh)


def draw_subsets(pool_size, k, n_draws, rng):
    """Draw ``n_draws`` independent size-``k`` subsets of ``range(pool_size)``.

    Partial Fisher-Yates: step ``t`` swaps position ``t`` with a uniform
    position in ``[t, pool_size)``. Rows come back unsorted.
    """
    if n_draws == 0 or k == 0:
        return np.zeros((n_draws, k), dtype=np.int64)
    jumps = rng.integers(np.arange(k), pool_size, size=(n_draws, k), dtype=np.int64)
    perm = np.arange(pool_size, dtype=np.int64)
    impl = _draw_subsets_nb if _accel.USE_NUMBA else _draw_subsets_np
    return impl(perm, jumps)


def objective(Xb, y, w, lam):
    return _objective_np(np.asarray(Xb, float), np.asarray(y, float), np.asarray(w, float), lam)


def mean_logloss(Xb, y, w):
    """(average log loss, accuracy) of weights ``w`` on rows ``Xb``."""
    return _mean_logloss_np(np.asarray(Xb, float), np.asarray(y, float), np.asarray(w, float))
