"""Numba kernels for covariance-form cyclic coordinate descent.

The lasso objective is written through the Gram quantities
``G = X^T X / S``, ``c = X^T y / S`` and ``yy = y^T y / S``::

    F(b) = yy - 2 c^T b + b^T G b + lam * ||b||_1

which equals ``S^-1 ||y - X b||^2 + lam ||b||_1``.  The kernels keep
``q = c - G b`` up to date, so each KKT check costs O(P).
"""
import numpy as np
from numba import njit


@njit(cache=True)
def _soft(z, thr):
    if z > thr:
        return z - thr
    if z < -thr:
        return z + thr
    return 0.0


@njit(cache=True)
def kkt_violation(q, b, lam):
    worst = 0.0
    for j in range(b.shape[0]):
        g = -2.0 * q[j]
        if b[j] > 0.0:
            v = abs(g + lam)
        elif b[j] < 0.0:
            v = abs(g - lam)
        else:
            v = abs(g) - lam
            if v < 0.0:
                v = 0.0
        if v > worst:
            worst = v
    return worst


@njit(cache=True)
def objective(yy, c, q, b, lam):
    # b^T G b = b^T c - b^T q
    val = yy
    l1 = 0.0
    for j in range(b.shape[0]):
        val -= c[j] * b[j] + q[j] * b[j]
        l1 += abs(b[j])
    return val + lam * l1


@njit(cache=True)
def _chol_solve(L, rhs):
    A = rhs.shape[0]
    w = rhs.copy()
    for u in range(A):
        for v in range(u):
            w[u] -= L[u, v] * w[v]
        w[u] /= L[u, u]
    for u in range(A - 1, -1, -1):
        for v in range(u + 1, A):
            w[u] -= L[v, u] * w[v]
        w[u] /= L[u, u]
    return w


@njit(cache=True)
def _pattern_step(G, c, b, half):
    """Move ``b`` toward the solution of the stationarity equations on its
    current support and signs.

    Inside one orthant the objective is a convex quadratic minimized at that
    solution, so the step stops where the first coordinate reaches zero (and
    drops it) or lands on the solution itself.  Returns False when the
    support block is singular or empty and ``b`` was left unchanged.
    """
    idx = np.flatnonzero(b)
    A = idx.shape[0]
    if A == 0:
        return False
    GA = np.empty((A, A))
    rhs = np.empty(A)
    for u in range(A):
        rhs[u] = c[idx[u]] - half * np.sign(b[idx[u]])
        for v in range(A):
            GA[u, v] = G[idx[u], idx[v]]
    try:
        L = np.linalg.cholesky(GA)
    except Exception:  # singular support block
        return False
    sol = _chol_solve(L, rhs)
    step = 1.0
    hit = -1
    for u in range(A):
        if not np.isfinite(sol[u]):
            return False
        old = b[idx[u]]
        if np.sign(sol[u]) != np.sign(old):
            frac = old / (old - sol[u])
            if frac < step:
                step = frac
                hit = u
    for u in range(A):
        b[idx[u]] += step * (sol[u] - b[idx[u]])
    if hit >= 0:
        b[idx[hit]] = 0.0
        return _pattern_step(G, c, b, half) or True
    return True


@njit(cache=True)
def cd_gram(G, c, yy, lam, b, tol, max_iter, history):
    """Run cyclic sweeps in place on ``b``.

    When the support and signs survive two sweeps unchanged (checked at most
    every five sweeps) an active-set step toward the solution on that
    pattern replaces the next sweep, which removes the slow tail of plain
    coordinate descent near saturation.

    Returns (sweeps, kkt, converged).  When ``history`` has length
    ``max_iter + 1`` the objective before the first sweep and after each
    sweep is written into it.
    """
    P = b.shape[0]
    q = c - G @ b
    record = history.shape[0] > 0
    if record:
        history[0] = objective(yy, c, q, b, lam)
    half = 0.5 * lam
    kkt = kkt_violation(q, b, lam)
    if kkt <= tol:
        return 0, kkt, True
    stable = 0
    next_try = 0
    for sweep in range(1, max_iter + 1):
        if stable >= 2 and sweep >= next_try:
            next_try = sweep + 5
            stable = 0
            before = objective(yy, c, q, b, lam)
            saved = b.copy()
            if _pattern_step(G, c, b, half):
                q = c - G @ b
                if objective(yy, c, q, b, lam) > before:
                    # ill-conditioned support block: undo and back off
                    b[:] = saved
                    q = c - G @ b
                    next_try = sweep + 50
        else:
            changed = False
            for j in range(P):
                gjj = G[j, j]
                if gjj <= 0.0:
                    continue
                old = b[j]
                new = _soft(q[j] + gjj * old, half) / gjj
                if new != old:
                    if np.sign(new) != np.sign(old):
                        changed = True
                    delta = new - old
                    b[j] = new
                    for r in range(P):
                        q[r] -= delta * G[j, r]  # G symmetric; row access is contiguous
            stable = 0 if changed else stable + 1
        if record:
            history[sweep] = objective(yy, c, q, b, lam)
        kkt = kkt_violation(q, b, lam)
        if kkt <= tol:
            # refresh q to shed accumulated rounding before accepting
            q = c - G @ b
            kkt = kkt_violation(q, b, lam)
            if kkt <= tol:
                return sweep, kkt, True
    q = c - G @ b
    return max_iter, kkt_violation(q, b, lam), False


@njit(cache=True)
def path_gram(G, c, yy, lams, tol, max_iter):
    """Warm-started solutions along ``lams`` (any order); rows follow ``lams``."""
    P = c.shape[0]
    L = lams.shape[0]
    out = np.zeros((L, P))
    flags = np.zeros(L, dtype=np.bool_)
    b = np.zeros(P)
    empty = np.zeros(0)
    for i in range(L):
        _, _, ok = cd_gram(G, c, yy, lams[i], b, tol, max_iter, empty)
        out[i] = b
        flags[i] = ok
    return out, flags
