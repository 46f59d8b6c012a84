"""Least squares, lasso, scaled lasso, nodewise lasso and K-fold CV.

The lasso objective is ``S^-1 ||y - X b||^2 + lam ||b||_1`` where ``S`` is the
problem's ``sample_scale`` (the row count unless overridden).  Columns are
never standardized here.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import linalg, stats

from . import _cd

DEFAULT_TOL = 1e-7
DEFAULT_MAX_ITER = 10_000


class RankDeficientError(ValueError):
    pass


class ScaledLassoError(RuntimeError):
    pass


@dataclass(frozen=True)
class LinearProblem:
    design: np.ndarray
    response: np.ndarray
    sample_scale: float | None = None

    def __post_init__(self):
        X = np.ascontiguousarray(self.design, dtype=float)
        y = np.ascontiguousarray(self.response, dtype=float).ravel()
        if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
            raise ValueError(f"design must be a non-empty matrix, got shape {X.shape}")
        if len(y) != X.shape[0]:
            raise ValueError(f"response length {len(y)} does not match {X.shape[0]} rows")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise ValueError("design and response must be finite")
        object.__setattr__(self, "design", X)
        object.__setattr__(self, "response", y)
        S = X.shape[0] if self.sample_scale is None else float(self.sample_scale)
        if S <= 0:
            raise ValueError("sample_scale must be positive")
        object.__setattr__(self, "sample_scale", float(S))

    @property
    def N(self) -> int:
        return self.design.shape[0]

    @property
    def P(self) -> int:
        return self.design.shape[1]

    @cached_property
    def gram(self) -> np.ndarray:
        X = self.design
        return np.ascontiguousarray(X.T @ X / self.sample_scale)

    @cached_property
    def xty(self) -> np.ndarray:
        return self.design.T @ self.response / self.sample_scale

    @cached_property
    def yy(self) -> float:
        return float(self.response @ self.response / self.sample_scale)

    def subset(self, rows) -> "LinearProblem":
        return LinearProblem(self.design[rows], self.response[rows])


@dataclass(frozen=True)
class LassoSolution:
    coefficients: np.ndarray
    lam: float
    objective: float
    kkt_violation: float
    converged: bool
    n_sweeps: int
    history: np.ndarray | None = field(default=None, repr=False)


def ols(p: LinearProblem) -> np.ndarray:
    """Least-squares coefficients; raises on rank deficiency."""
    coef, _, rank, sv = linalg.lstsq(p.design, p.response, lapack_driver="gelsd")
    tol = max(p.N, p.P) * np.finfo(float).eps * (sv[0] if len(sv) else 0.0)
    rank = int(np.sum(sv > tol)) if len(sv) else 0
    if rank < p.P:
        raise RankDeficientError(
            f"design is rank deficient: rank {rank} for {p.P} columns ({p.P - rank} deficient)")
    return coef


def lambda_max(p: LinearProblem) -> float:
    """Smallest penalty with the all-zero solution."""
    return float(2.0 * np.max(np.abs(p.xty)))


def lambda_grid(p: LinearProblem, n_lambda: int = 30, ratio: float | None = None) -> np.ndarray:
    """Log-spaced decreasing grid from ``lambda_max`` down to ``ratio * lambda_max``."""
    top = lambda_max(p)
    if top == 0.0:
        return np.zeros(1)
    if ratio is None:
        ratio = 1e-3 if p.N > p.P else 1e-2
    return np.geomspace(top, top * ratio, n_lambda)


def _objective_from_coef(p: LinearProblem, b: np.ndarray, lam: float) -> float:
    r = p.response - p.design @ b
    return float(r @ r / p.sample_scale + lam * np.abs(b).sum())


def lasso(p: LinearProblem, lam: float, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
          init: np.ndarray | None = None, record_history: bool = False) -> LassoSolution:
    """Cyclic coordinate descent in natural column order.

    Stops once the largest KKT subgradient violation is below ``tol``; after
    ``max_iter`` sweeps the solution is returned with ``converged=False``.
    """
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    b = np.zeros(p.P) if init is None else np.array(init, dtype=float)
    hist = np.zeros(max_iter + 1) if record_history else np.zeros(0)
    sweeps, kkt, ok = _cd.cd_gram(p.gram, p.xty, p.yy, float(lam), b, float(tol), int(max_iter), hist)
    return LassoSolution(
        coefficients=b,
        lam=float(lam),
        objective=_objective_from_coef(p, b, lam),
        kkt_violation=float(kkt),
        converged=bool(ok),
        n_sweeps=int(sweeps),
        history=hist[: sweeps + 1] if record_history else None,
    )


def lasso_path(p: LinearProblem, lams, tol: float = DEFAULT_TOL,
               max_iter: int = DEFAULT_MAX_ITER) -> np.ndarray:
    """Coefficient rows for each penalty in ``lams`` (warm-started in the given order)."""
    lams = np.asarray(lams, dtype=float)
    coefs, _ = _cd.path_gram(p.gram, p.xty, p.yy, lams, float(tol), int(max_iter))
    return coefs


# -- scaled lasso --------------------------------------------------------------


@dataclass(frozen=True)
class ScaledLassoResult:
    coefficients: np.ndarray
    noise_sd: float
    lam: float
    lambda0: float
    rounds: int

    def __iter__(self):
        yield self.coefficients
        yield self.noise_sd


def universal_lambda0(N: int, P: int) -> float:
    return float(np.sqrt(2.0 * np.log(max(P, 2)) / N))


def quantile_lambda0(N: int, P: int) -> float:
    """Sun-Zhang quantile penalty level (the ``scalreg`` default)."""
    if P == 1:
        return float(np.sqrt(2.0 / N) * 0.5)
    L, old = 0.1, 0.0
    while abs(L - old) > 1e-3:
        k = L**4 + 2 * L**2
        old = L
        L = 0.5 * (-stats.norm.ppf(min(k / P, 0.99)) + old)
    return float(np.sqrt(2.0 / N) * L)


def scaled_lasso(p: LinearProblem, lambda0: float | None = None, max_rounds: int = 100,
                 rel_tol: float = 1e-8) -> ScaledLassoResult:
    """Joint estimate of coefficients and noise level.

    Alternates a lasso fit at penalty ``2 * sigma * lambda0`` with
    ``sigma = ||y - X b|| / sqrt(N)`` until sigma^2 moves by less than
    ``rel_tol`` relative, or ``max_rounds`` rounds.  The returned coefficients
    are refit at the penalty implied by the returned sigma.
    """
    if p.N < 2:
        raise ValueError("scaled lasso needs at least two rows")
    if lambda0 is None:
        lambda0 = quantile_lambda0(p.N, p.P)
    sigma0 = np.sqrt(p.yy * p.sample_scale / p.N)
    if sigma0 == 0.0:
        raise ScaledLassoError("noise level collapsed to zero: response is identically zero")
    sigma = sigma0
    b = np.zeros(p.P)
    rounds = 0

    def fit(sig, init):
        lam = 2.0 * sig * lambda0
        tol = max(min(DEFAULT_TOL, 1e-3 * lam), 1e-13)
        return lasso(p, lam, tol=tol, init=init).coefficients, lam

    for rounds in range(1, max_rounds + 1):
        b, _ = fit(sigma, b)
        r = p.response - p.design @ b
        new = np.sqrt(r @ r / p.N)
        if new == 0.0:
            raise ScaledLassoError("noise level collapsed to zero")
        done = abs(new * new - sigma * sigma) <= rel_tol * sigma * sigma or new <= 1e-10 * sigma0
        sigma = new
        if done:
            break
    b, lam = fit(sigma, b)
    return ScaledLassoResult(b, float(sigma), float(lam), float(lambda0), rounds)


# -- nodewise lasso ------------------------------------------------------------


@dataclass(frozen=True)
class NodewiseResult:
    theta: np.ndarray  # rows not requested are left as NaN
    tau2: np.ndarray
    violation: float
    rows: np.ndarray
    nu: np.ndarray


def _node_problem(G: np.ndarray, j: int):
    keep = np.r_[0:j, j + 1:G.shape[0]]
    Gs = np.ascontiguousarray(G[np.ix_(keep, keep)])
    c = np.ascontiguousarray(G[keep, j])
    return keep, Gs, c, float(G[j, j])


def nodewise_lasso(X: np.ndarray, nu, rows=None, tol: float = DEFAULT_TOL,
                   max_iter: int = DEFAULT_MAX_ITER) -> NodewiseResult:
    """Relaxed inverse of ``X^T X / n`` from per-column lasso regressions.

    Node ``j`` minimizes ``n^-1 ||X_j - X_{-j} g||^2 + 2 nu_j ||g||_1`` and
    ``tau_j^2 = ||X_j - X_{-j} g||^2 / n + nu_j ||g||_1``; row j of theta is
    ``(1, -g) / tau_j^2`` placed back in column order.
    """
    X = np.asarray(X, dtype=float)
    n, P = X.shape
    if P < 2:
        raise ValueError("nodewise lasso needs at least two columns")
    nu = np.broadcast_to(np.asarray(nu, dtype=float), (P,)).copy()
    rows = np.arange(P) if rows is None else np.atleast_1d(np.asarray(rows, dtype=int))
    G = np.ascontiguousarray(X.T @ X / n)
    theta = np.full((P, P), np.nan)
    tau2 = np.full(P, np.nan)
    empty = np.zeros(0)
    for j in rows:
        keep, Gs, c, yy = _node_problem(G, j)
        g = np.zeros(P - 1)
        _cd.cd_gram(Gs, c, yy, 2.0 * nu[j], g, tol, max_iter, empty)
        rss = yy - 2.0 * c @ g + g @ Gs @ g
        t2 = rss + nu[j] * np.abs(g).sum()
        if not t2 > 1e-14 * max(yy, 1e-300):
            raise ValueError(f"node regression {j} has zero residual variance")
        row = np.zeros(P)
        row[j] = 1.0
        row[keep] = -g
        theta[j] = row / t2
        tau2[j] = t2
    resid = np.eye(P)[rows] - theta[rows] @ G
    return NodewiseResult(theta, tau2, float(np.max(np.abs(resid))), rows, nu)


def select_nu_cv(X: np.ndarray, n_nu: int = 15, nodes=None, folds: int = 5, rng_seed=0,
                 max_nodes: int = 10) -> float:
    """Single nodewise penalty chosen by CV pooled over a subset of nodes."""
    X = np.asarray(X, dtype=float)
    n, P = X.shape
    if nodes is None:
        nodes = np.unique(np.linspace(0, P - 1, min(P, max_nodes)).astype(int))
    G = X.T @ X / n
    top = max(np.max(np.abs(np.delete(G[j], j))) for j in nodes)
    if top == 0.0:
        return 0.0
    grid = np.geomspace(top, top * 1e-2, n_nu)
    total = np.zeros(n_nu)
    for j in nodes:
        prob = LinearProblem(np.delete(X, j, axis=1), X[:, j])
        res = kfold_cv(prob, 2.0 * grid, folds=folds, rng_seed=rng_seed)
        total += res.errors
    best = np.flatnonzero(total == total.min())
    return float(grid[best].max())


# -- K-fold cross-validation ----------------------------------------------------


@dataclass(frozen=True)
class CVResult:
    lam: float
    lambdas: np.ndarray
    errors: np.ndarray
    fold_errors: np.ndarray

    @property
    def index(self) -> int:
        return int(np.flatnonzero(self.lambdas == self.lam)[0])


def fold_assignment(N: int, folds: int, rng_seed=0, groups=None) -> np.ndarray:
    """Fold label per row; rows sharing a group always share a fold."""
    rng = np.random.default_rng(rng_seed)
    if groups is None:
        out = np.empty(N, dtype=int)
        out[rng.permutation(N)] = np.arange(N) % folds
        return out
    groups = np.asarray(groups)
    uniq, inv = np.unique(groups, return_inverse=True)
    if len(uniq) < folds:
        raise ValueError(f"{len(uniq)} groups cannot fill {folds} folds")
    lab = np.empty(len(uniq), dtype=int)
    lab[rng.permutation(len(uniq))] = np.arange(len(uniq)) % folds
    return lab[inv]


def pick_min(lambdas: np.ndarray, errors: np.ndarray) -> float:
    """Minimizer of the curve; exact ties go to the larger penalty."""
    best = np.flatnonzero(errors == np.min(errors))
    return float(np.max(lambdas[best]))


def kfold_cv(p: LinearProblem, lambda_grid, folds: int = 5, rng_seed=0, groups=None,
             tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> CVResult:
    """Average held-out squared error over a penalty grid."""
    if folds < 2:
        raise ValueError("need at least two folds")
    if p.N < folds:
        raise ValueError(f"{p.N} rows cannot fill {folds} folds")
    lambdas = np.atleast_1d(np.asarray(lambda_grid, dtype=float))
    order = np.argsort(-lambdas, kind="stable")
    lab = fold_assignment(p.N, folds, rng_seed, groups)
    fold_err = np.zeros((folds, len(lambdas)))
    for f in range(folds):
        test = lab == f
        train = p.subset(~test)
        coefs = lasso_path(train, lambdas[order], tol, max_iter)
        resid = p.response[test][:, None] - p.design[test] @ coefs.T
        fold_err[f, order] = np.mean(resid * resid, axis=0)
    errors = fold_err.mean(axis=0)
    return CVResult(pick_min(lambdas, errors), lambdas, errors, fold_err)
