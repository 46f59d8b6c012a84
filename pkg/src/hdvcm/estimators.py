"""Estimation pipelines for the varying-coefficient model

    y_i(t) = x_i^T beta(t) + z_i(t)^T gamma(t) + xi_i(t) + eps_i(t).

* gamma: difference consecutive order statistics closer than ``h`` so that
  the smooth part ``x_i^T beta + xi_i`` (nearly) cancels, then regress the
  differenced responses on the differenced basis-times-covariate design Psi.
* beta: average responses against each basis function per individual
  (frequency projection) and solve one regression per frequency on X.
* two-stage: gamma first, then beta from the residuals ``y - z^T gamma_hat``.

Psi columns are k-major: column ``(k - 1) * q + l`` holds frequency ``k`` of
coordinate ``l`` (0-based), so a fitted vector reshapes to a K x q matrix.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import regress
from .basis import CoefficientExpansion, SQRT2, eval_expansion, trig_matrix
from .regress import LinearProblem
from .sampling import (DifferencePlan, PairScheme, TimeDesign, TimeScheme,
                       build_difference_plan, whitening_matrix)


class EmptyPlanError(ValueError):
    pass


@dataclass(frozen=True)
class TheoryParams:
    """Theory-side constants.  Only ``sigma_eps``, ``sigma_daleth2``, ``t``
    and the delta rule (``alpha``, ``delta_c``) enter computations."""

    alpha: float = 2.0
    R: float | None = None
    sigma_eps: float = 1.0
    sigma_daleth2: tuple | None = None
    g_envelope: float | None = None
    t: float = 2.0
    delta_c: float | None = None


@dataclass(frozen=True)
class LongitudinalDataset:
    """Per-individual data in observation order.

    ``x`` is n x p, ``z[i]`` is m_i x q and ``y[i]`` has length m_i.  Either
    ``p`` or ``q`` may be zero.
    """

    times: TimeDesign
    x: np.ndarray
    z: tuple
    y: tuple

    def __post_init__(self):
        n = self.times.n
        x = np.asarray(self.x, dtype=float)
        if x.ndim == 1 and x.size == 0:
            x = np.zeros((n, 0))
        if x.ndim != 2 or x.shape[0] != n:
            raise ValueError(f"x must be {n} x p, got shape {x.shape}")
        counts = self.times.counts
        y = tuple(np.asarray(v, dtype=float).ravel() for v in self.y)
        if len(y) != n or any(len(v) != c for v, c in zip(y, counts)):
            raise ValueError("y must hold one response per sampling time")
        if len(self.z) == 0:
            z = tuple(np.zeros((c, 0)) for c in counts)
        else:
            z = tuple(np.asarray(v, dtype=float).reshape(c, -1) for v, c in zip(self.z, counts))
        if len(z) != n or len({v.shape[1] for v in z}) != 1:
            raise ValueError("z must hold an m_i x q block per individual with a common q")
        for arr in (x, *y, *z):
            if not np.all(np.isfinite(arr)):
                raise ValueError("dataset entries must be finite")
            arr.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "z", z)

    @property
    def n(self) -> int:
        return self.times.n

    @property
    def p(self) -> int:
        return self.x.shape[1]

    @property
    def q(self) -> int:
        return self.z[0].shape[1]


# -- differenced model (gamma) -------------------------------------------------


@dataclass(frozen=True)
class DifferencedModel:
    plan: DifferencePlan
    Psi: np.ndarray
    ydiff: np.ndarray
    K_gamma: int
    q: int
    whitened: bool

    @property
    def N(self) -> int:
        return self.plan.N

    @property
    def individuals(self) -> np.ndarray:
        return self.plan.pairs[:, 0]

    def problem(self) -> LinearProblem:
        return LinearProblem(self.Psi, self.ydiff)


def _pair_rows(d: LongitudinalDataset, plan: DifferencePlan):
    """Observation indices (within each individual) of the lower and upper
    member of every pair."""
    lo = np.empty(plan.N, dtype=int)
    up = np.empty(plan.N, dtype=int)
    for r, (i, j) in enumerate(plan.pairs):
        o = d.times.order[i]
        lo[r], up[r] = o[j], o[j + 1]
    return lo, up


def difference_design(d: LongitudinalDataset, plan: DifferencePlan, K_gamma: int):
    """Unwhitened (Psi, ydiff) for a plan."""
    q = d.q
    lo, up = _pair_rows(d, plan)
    ids = plan.pairs[:, 0]
    t_lo = np.array([d.times.times[i][j] for i, j in zip(ids, lo)])
    t_up = np.array([d.times.times[i][j] for i, j in zip(ids, up)])
    z_lo = np.array([d.z[i][j] for i, j in zip(ids, lo)]).reshape(plan.N, q)
    z_up = np.array([d.z[i][j] for i, j in zip(ids, up)]).reshape(plan.N, q)
    y_lo = np.array([d.y[i][j] for i, j in zip(ids, lo)])
    y_up = np.array([d.y[i][j] for i, j in zip(ids, up)])
    P_lo, P_up = trig_matrix(t_lo, K_gamma), trig_matrix(t_up, K_gamma)
    Psi = (P_up[:, :, None] * z_up[:, None, :] - P_lo[:, :, None] * z_lo[:, None, :])
    return Psi.reshape(plan.N, K_gamma * q), y_up - y_lo


def build_differenced_model(d: LongitudinalDataset, h: float, K_gamma: int, scheme="A",
                            whiten: bool = False) -> DifferencedModel:
    """Differenced regression for gamma.

    Rows follow (individual, pair index).  With ``whiten`` and the
    overlapping scheme both Psi and ydiff are premultiplied blockwise by the
    whitening matrices; ``whiten`` has no effect under the paired scheme.
    """
    if d.q < 1:
        raise ValueError("differenced model needs q >= 1 time-varying covariates")
    if K_gamma < 1:
        raise ValueError("K_gamma must be >= 1")
    plan = build_difference_plan(d.times, h, scheme)
    if plan.N == 0:
        raise EmptyPlanError(f"no consecutive sampling times closer than h={h}; increase h")
    Psi, ydiff = difference_design(d, plan, K_gamma)
    whitened = bool(whiten and plan.scheme is PairScheme.OVERLAPPING)
    if whitened:
        for i, sl in plan.individual_slices().items():
            B = whitening_matrix_block(plan, sl)
            Psi[sl] = B @ Psi[sl]
            ydiff[sl] = B @ ydiff[sl]
    return DifferencedModel(plan, Psi, ydiff, int(K_gamma), d.q, whitened)


def whitening_matrix_block(plan: DifferencePlan, sl: slice) -> np.ndarray:
    sub = DifferencePlan(plan.scheme, plan.h, plan.pairs[sl])
    return next(iter(whitening_matrix(sub).values()))


def lambda0_differenced(dm: DifferencedModel, sg_eps: float, t: float) -> float:
    """Theory penalty level 2 s sqrt(max_j ||Psi_j||^2 / N) sqrt((t^2 + 2 log(qK)) / N)."""
    N = dm.N
    colmax = float(np.max(np.sum(dm.Psi * dm.Psi, axis=0)))
    return float(2.0 * sg_eps * np.sqrt(colmax / N)
                 * np.sqrt((t * t + 2.0 * np.log(dm.Psi.shape[1])) / N))


# -- results -------------------------------------------------------------------


@dataclass(frozen=True)
class FitResult:
    gamma_hat: CoefficientExpansion | None = None
    beta_hat: CoefficientExpansion | None = None
    gamma_lambda: float | None = None
    beta_lambdas: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)


def _solve(prob: LinearProblem, mode: str, lam, rng_seed, groups, n_lambda: int,
           folds: int, tol: float):
    """Returns (coefficients, lambda used, converged flag)."""
    mode = mode.lower()
    if mode == "ld":
        return regress.ols(prob), 0.0, True
    if mode != "hd":
        raise ValueError(f"mode must be 'ld' or 'hd', got {mode!r}")
    if isinstance(lam, str):
        if lam != "cv":
            raise ValueError(f"unknown lambda rule {lam!r}")
        grid = regress.lambda_grid(prob, n_lambda)
        lam = regress.kfold_cv(prob, grid, folds=folds, rng_seed=rng_seed, groups=groups, tol=tol).lam
    sol = regress.lasso(prob, float(lam), tol=tol)
    return sol.coefficients, float(lam), sol.converged


def fit_gamma(dm: DifferencedModel, mode: str = "hd", lam="cv", tol: float = regress.DEFAULT_TOL,
              rng_seed=0, n_lambda: int = 30, folds: int = 5, theory=None) -> FitResult:
    """Estimate gamma's Fourier coefficients from a differenced model.

    ``lam`` is a number, ``"cv"`` (folds grouped by individual) or
    ``"theory"`` (twice ``lambda0_differenced`` with the differenced noise
    level sqrt(2) * sigma_eps and ``t`` from ``theory``).
    """
    prob = dm.problem()
    if isinstance(lam, str) and lam == "theory":
        th = theory if theory is not None else TheoryParams()
        lam = 2.0 * lambda0_differenced(dm, SQRT2 * th.sigma_eps, th.t)
    coef, lam_used, ok = _solve(prob, mode, lam, rng_seed, dm.individuals, n_lambda, folds, tol)
    gamma = CoefficientExpansion(coef.reshape(dm.K_gamma, dm.q))
    diag = {"N": dm.N, "K_gamma": dm.K_gamma, "h": dm.plan.h, "scheme": dm.plan.scheme.value,
            "whitened": dm.whitened, "gamma_converged": bool(ok), "gamma_mode": mode}
    return FitResult(gamma_hat=gamma, gamma_lambda=lam_used, diagnostics=diag)


# -- frequency projection (beta) ---------------------------------------------


@dataclass(frozen=True)
class ProjectedModel:
    """Per-frequency responses ``yproj[i, k-1] = m_i^-1 sum_j r_ij phi_k(t_ij)``.

    ``responses`` are the values that were projected (raw y or residuals);
    they are kept for time-domain cross-validation.
    """

    K_beta: int
    yproj: np.ndarray
    X: np.ndarray
    scheme: TimeScheme
    times: TimeDesign
    responses: tuple

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def problem(self, k: int) -> LinearProblem:
        return LinearProblem(self.X, self.yproj[:, k - 1])

    def truncate(self, K: int) -> "ProjectedModel":
        if K > self.K_beta:
            raise ValueError(f"cannot extend {self.K_beta} projected frequencies to {K}")
        return ProjectedModel(K, self.yproj[:, :K], self.X, self.scheme, self.times, self.responses)


def residual_responses(d: LongitudinalDataset, gamma_hat: CoefficientExpansion | None) -> tuple:
    if gamma_hat is None:
        return d.y
    if gamma_hat.d != d.q:
        raise ValueError(f"gamma_hat has {gamma_hat.d} columns for q={d.q}")
    return tuple(y - np.sum(z * eval_expansion(gamma_hat, t), axis=1)
                 for y, z, t in zip(d.y, d.z, d.times.times))


def project_frequencies(d: LongitudinalDataset, K_beta: int,
                        gamma_hat: CoefficientExpansion | None = None) -> ProjectedModel:
    """Frequency-domain responses from raw y, or from y - z^T gamma_hat."""
    if K_beta < 1:
        raise ValueError("K_beta must be >= 1")
    if d.times.scheme is TimeScheme.COMMON and K_beta > d.times.m - 1:
        raise ValueError(f"common grid with m={d.times.m} allows K_beta <= {d.times.m - 1}, got {K_beta}")
    resp = residual_responses(d, gamma_hat)
    yproj = np.empty((d.n, K_beta))
    for i, (r, t) in enumerate(zip(resp, d.times.times)):
        yproj[i] = r @ trig_matrix(t, K_beta) / len(t)
    return ProjectedModel(int(K_beta), yproj, d.x, d.times.scheme, d.times, resp)


def common_grid_c(sg_daleth2, m: int, K: int) -> np.ndarray:
    """Variance factors c_1..c_K for the common grid; ``sg_daleth2[k-1]`` is
    the tail parameter of frequency k (zero beyond its stored length)."""
    s = np.asarray(sg_daleth2, dtype=float)
    L = len(s)

    def at(idx):
        return s[idx - 1] if 1 <= idx <= L else 0.0

    out = np.zeros(K)
    for k in range(1, K + 1):
        acc = at(k)
        for r in range(1, L // (2 * m) + 2):
            base = 2 * r * m
            if k == 1:
                acc += SQRT2 * at(base)
            elif k % 2 == 0:
                acc += at(base + k) + at(base - k)
            else:
                acc += at(base + k) + at(base + 2 - k)
        out[k - 1] = acc
    return out


def lambda0_projected(pm: ProjectedModel, proxies, t: float) -> np.ndarray:
    """Theory penalty levels per frequency.

    ``proxies`` holds sigma^2_{zeta,i,k}: a scalar, a length-K vector (same
    for every individual) or an n x K matrix.
    """
    n, K = pm.n, pm.K_beta
    s2 = np.broadcast_to(np.asarray(proxies, dtype=float), (K,)) if np.ndim(proxies) <= 1 else np.asarray(proxies)
    s2 = np.broadcast_to(s2, (n, K))
    if np.any(s2 < 0):
        raise ValueError("variance proxies must be nonnegative")
    x2 = pm.X * pm.X
    scale = np.sqrt(np.max(x2.T @ s2 / n, axis=0))
    return scale * np.sqrt((t * t + 2.0 * np.log(pm.p)) / n)


def lambda0_projected_common(pm: ProjectedModel, sg_daleth2, sg_eps: float, t: float) -> np.ndarray:
    """Common-grid penalty levels sqrt(c_k + sigma_eps^2 / m) sqrt((t^2 + 2 log p) / n)."""
    m = pm.times.m
    c = common_grid_c(sg_daleth2, m, pm.K_beta)
    return np.sqrt(c + sg_eps**2 / m) * np.sqrt((t * t + 2.0 * np.log(pm.p)) / pm.n)


def theory_lambdas(pm: ProjectedModel, theory=None) -> np.ndarray:
    """2 * lambda0_k with variance proxies from the scaled lasso per frequency,
    or from the supplied tail parameters on a common grid."""
    th = theory if theory is not None else TheoryParams()
    if pm.times.scheme is TimeScheme.COMMON and th.sigma_daleth2 is not None:
        return 2.0 * lambda0_projected_common(pm, th.sigma_daleth2, th.sigma_eps, th.t)
    proxies = np.array([regress.scaled_lasso(pm.problem(k)).noise_sd ** 2
                        for k in range(1, pm.K_beta + 1)])
    return 2.0 * lambda0_projected(pm, proxies, th.t)


def fit_beta(pm: ProjectedModel, mode: str = "hd", lambdas="cv", tol: float = regress.DEFAULT_TOL,
             rng_seed=0, n_lambda: int = 30, folds: int = 5, theory=None,
             order=None) -> FitResult:
    """One regression per frequency k = 1..K_beta; frequencies above K_beta are zero.

    ``lambdas`` is a number, a length-K sequence, ``"cv"`` or ``"theory"``.
    ``order`` optionally permutes the order the frequency problems are
    solved in (they are independent).
    """
    K = pm.K_beta
    if isinstance(lambdas, str) and lambdas == "theory":
        lambdas = theory_lambdas(pm, theory)
    if isinstance(lambdas, str):
        lam_k = [lambdas] * K
    else:
        lam_k = list(np.broadcast_to(np.asarray(lambdas, dtype=float), (K,)))
    coefs = np.zeros((K, pm.p))
    used = np.zeros(K)
    flags = np.zeros(K, dtype=bool)
    for k in (range(1, K + 1) if order is None else order):
        coefs[k - 1], used[k - 1], flags[k - 1] = _solve(
            pm.problem(k), mode, lam_k[k - 1], rng_seed, None, n_lambda, folds, tol)
    diag = {"n": pm.n, "K_beta": K, "beta_converged": flags, "beta_mode": mode,
            "time_scheme": pm.scheme.value}
    return FitResult(beta_hat=CoefficientExpansion(coefs), beta_lambdas=used, diagnostics=diag)


# -- cross-validation over truncation levels and bandwidths -------------------


@dataclass(frozen=True)
class BetaCV:
    K_beta: int
    lambdas: np.ndarray  # chosen lambda per frequency 1..max K
    K_grid: np.ndarray
    K_errors: np.ndarray


def cv_beta(pm: ProjectedModel, K_grid=None, n_lambda: int = 30, folds: int = 5, rng_seed=0,
            tol: float = regress.DEFAULT_TOL) -> BetaCV:
    """Choose per-frequency lambdas and then K_beta by K-fold CV over individuals.

    Each frequency's penalty minimizes its own held-out projected error.  K is
    then chosen by the held-out time-domain error
    ``sum_j (r_ij - x_i^T beta_K(t_ij))^2`` using the fold fits at the chosen
    penalties (ties go to the smaller K).
    """
    Kmax = pm.K_beta
    K_grid = np.arange(1, Kmax + 1) if K_grid is None else np.asarray(sorted(set(int(k) for k in K_grid)))
    if K_grid.max() > Kmax or K_grid.min() < 1:
        raise ValueError(f"K grid must lie in 1..{Kmax}")
    lab = regress.fold_assignment(pm.n, folds, rng_seed)
    fold_coefs = np.zeros((folds, Kmax, pm.p))
    chosen = np.zeros(Kmax)
    for k in range(1, Kmax + 1):
        prob = pm.problem(k)
        grid = regress.lambda_grid(prob, n_lambda)
        order = np.argsort(-grid, kind="stable")
        errs = np.zeros((folds, len(grid)))
        paths = []
        for f in range(folds):
            test = lab == f
            path = regress.lasso_path(prob.subset(~test), grid[order], tol)
            resid = prob.response[test][:, None] - prob.design[test] @ path.T
            errs[f, order] = np.mean(resid * resid, axis=0)
            paths.append((order, path))
        chosen[k - 1] = regress.pick_min(grid, errs.mean(axis=0))
        idx = int(np.flatnonzero(grid[order] == chosen[k - 1])[0])
        for f, (_, path) in enumerate(paths):
            fold_coefs[f, k - 1] = path[idx]
    # time-domain held-out error for each truncation level
    sse = np.zeros(Kmax)
    count = 0
    for i in range(pm.n):
        t = pm.times.times[i]
        Phi = trig_matrix(t, Kmax)
        contrib = Phi * (fold_coefs[lab[i]] @ pm.X[i])[None, :]
        pred = np.cumsum(contrib, axis=1)
        r = pm.responses[i][:, None] - pred
        sse += np.sum(r * r, axis=0)
        count += len(t)
    errors = sse[K_grid - 1] / count
    best = int(K_grid[np.flatnonzero(errors == errors.min())[0]])
    return BetaCV(best, chosen, K_grid, errors)


def default_h_grid(td: TimeDesign, quantiles=(0.5, 0.75, 0.9, 1.0)) -> np.ndarray:
    """Bandwidths just above quantiles of all consecutive sorted gaps."""
    gaps = np.concatenate([np.diff(td.sorted_times(i)) for i in range(td.n)])
    if len(gaps) == 0:
        raise ValueError("no individual has two sampling times")
    h = np.quantile(gaps, quantiles) * (1.0 + 1e-9) + 1e-15
    return np.unique(h)


@dataclass(frozen=True)
class GammaCV:
    h: float
    K_gamma: int
    lam: float
    table: np.ndarray  # rows (h, K, lambda, error)


def cv_gamma(d: LongitudinalDataset, h_grid=None, K_grid=(2, 4, 6, 8), scheme="A",
             whiten: bool = False, n_lambda: int = 20, folds: int = 5, rng_seed=0,
             tol: float = regress.DEFAULT_TOL) -> GammaCV:
    """Joint CV over (h, K_gamma, lambda) with folds grouped by individual.

    Held-out error is always measured on the unwhitened rows of the
    smallest-bandwidth plan so that every h is scored on the same pairs.
    """
    h_grid = default_h_grid(d.times) if h_grid is None else np.sort(np.asarray(h_grid, dtype=float))
    lab_ind = regress.fold_assignment(d.n, folds, rng_seed)
    eval_plan = None
    for h in h_grid:
        plan = build_difference_plan(d.times, h, scheme)
        if plan.N:
            eval_plan = plan
            break
    if eval_plan is None:
        raise EmptyPlanError("no bandwidth in the grid retains any pair")
    rows = []
    for K in K_grid:
        Psi_e, y_e = difference_design(d, eval_plan, K)
        lab_e = lab_ind[eval_plan.pairs[:, 0]]
        for h in h_grid:
            try:
                dm = build_differenced_model(d, h, K, scheme, whiten)
            except EmptyPlanError:
                continue
            prob = dm.problem()
            grid = regress.lambda_grid(prob, n_lambda)
            order = np.argsort(-grid, kind="stable")
            lab = lab_ind[dm.individuals]
            sse = np.zeros(len(grid))
            for f in range(folds):
                train = lab != f
                if not np.any(train):
                    continue
                path = regress.lasso_path(prob.subset(train), grid[order], tol)
                test = lab_e == f
                resid = y_e[test][:, None] - Psi_e[test] @ path.T
                sse[order] += np.sum(resid * resid, axis=0)
            err = sse / len(y_e)
            for lam, e in zip(grid, err):
                rows.append((h, K, lam, e))
    table = np.array(rows)
    best = np.flatnonzero(table[:, 3] == table[:, 3].min())
    # ties: larger lambda, then smaller K
    b = best[np.lexsort((table[best, 1], -table[best, 2]))[0]]
    return GammaCV(float(table[b, 0]), int(table[b, 1]), float(table[b, 2]), table)


# -- two-stage -----------------------------------------------------------------


def two_stage_fit(d: LongitudinalDataset, h: float | None, K_gamma: int | None, K_beta: int,
                  gamma_mode: str = "hd", beta_mode: str = "hd", gamma_lambda="cv",
                  beta_lambdas="cv", scheme="A", whiten: bool = False, rng_seed=0,
                  theory=None) -> FitResult:
    """Gamma from the differenced model, then beta from the projected residuals.

    With q = 0 only beta is fitted; with p = 0 only gamma.  Stage 2 reuses
    all the data.
    """
    if d.q == 0 and d.p == 0:
        raise ValueError("dataset has neither time-invariant nor time-varying covariates")
    gamma_fit = None
    diag: dict = {}
    if d.q > 0:
        dm = build_differenced_model(d, h, K_gamma, scheme, whiten)
        gamma_fit = fit_gamma(dm, gamma_mode, gamma_lambda, rng_seed=rng_seed, theory=theory)
        diag.update(gamma_fit.diagnostics)
        if d.p == 0:
            return gamma_fit
    gamma_hat = None if gamma_fit is None else gamma_fit.gamma_hat
    pm = project_frequencies(d, K_beta, gamma_hat)
    beta_fit = fit_beta(pm, beta_mode, beta_lambdas, rng_seed=rng_seed, theory=theory)
    diag.update(beta_fit.diagnostics)
    diag["stage2_residuals"] = gamma_hat is not None
    return FitResult(gamma_hat=gamma_hat, beta_hat=beta_fit.beta_hat,
                     gamma_lambda=None if gamma_fit is None else gamma_fit.gamma_lambda,
                     beta_lambdas=beta_fit.beta_lambdas, diagnostics=diag)

