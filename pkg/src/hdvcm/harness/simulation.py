"""Data-generating processes, replication loop and metrics."""
from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .. import regress
from ..basis import (CoefficientExpansion, bspline_matrix, clamped_knots, eval_expansion,
                     ise_between, trig_matrix)
from ..estimators import (LongitudinalDataset, build_differenced_model, cv_beta, cv_gamma,
                          default_h_grid, fit_beta, fit_gamma, project_frequencies)
from ..inference import (band_grid, choose_delta, debias_coordinate, fourier_box_band,
                         simultaneous_intervals)
from ..sampling import generate_times
from .config import SimConfig

TRIG_ROWS = 30
DECAY = 2.1
SIGNAL = 4.0
SPLINE_DEGREE = 2
SPLINE_KNOTS = clamped_knots(SPLINE_DEGREE)
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(200)
GL_T = 0.5 * (_GL_NODES + 1.0)
GL_W = 0.5 * _GL_WEIGHTS


def trig_weights(K: int = TRIG_ROWS) -> np.ndarray:
    """Decay ((k+1)/2)^-2.1 for odd k and ((k+2)/2)^-2.1 for even k."""
    k = np.arange(1, K + 1)
    return np.where(k % 2 == 1, (k + 1) / 2.0, (k + 2) / 2.0) ** -DECAY


def spline_gram() -> np.ndarray:
    B = bspline_matrix(SPLINE_DEGREE, SPLINE_KNOTS, GL_T)
    return B.T @ (GL_W[:, None] * B)


def project_to_trig(f: Callable, d: int, K: int = TRIG_ROWS) -> CoefficientExpansion:
    """Best K-term trigonometric approximation (Gauss-Legendre projection)."""
    vals = np.asarray(f(GL_T)).reshape(len(GL_T), d)
    return CoefficientExpansion(trig_matrix(GL_T, K).T @ (GL_W[:, None] * vals))


@dataclass(frozen=True)
class Truth:
    """True coefficient functions of one replication.

    ``beta`` / ``gamma`` are trigonometric expansions (for spline truths, the
    30-term trigonometric approximation); ``beta_fn`` / ``gamma_fn`` evaluate
    the exact functions as ``len(t) x d`` arrays.
    """

    basis: str
    beta: CoefficientExpansion | None
    gamma: CoefficientExpansion | None
    beta_fn: Callable | None = field(repr=False, default=None)
    gamma_fn: Callable | None = field(repr=False, default=None)
    effect_scale: float = 0.0

    def random_effect_basis(self, t) -> np.ndarray:
        if self.basis == "trig":
            return trig_matrix(t, TRIG_ROWS) * trig_weights()[None, :]
        return bspline_matrix(SPLINE_DEGREE, SPLINE_KNOTS, t)


def _coefficient_function(basis: str, dim: int, active: int, rng) -> tuple:
    """(trig expansion, exact evaluator) for ``active`` nonzero coordinates
    out of ``dim``, rescaled so that sum_l int f_l^2 = 4."""
    if dim == 0:
        return None, None
    if basis == "trig":
        C = np.zeros((TRIG_ROWS, dim))
        C[:, :active] = rng.uniform(-1.0, 1.0, (TRIG_ROWS, active)) * trig_weights()[:, None]
        total = float(np.sum(C * C))
        if total > 0:
            C *= math.sqrt(SIGNAL / total)
        exp = CoefficientExpansion(C)
        return exp, exp.__call__
    S = np.zeros((3, dim))
    S[:, :active] = rng.uniform(-1.0, 1.0, (3, active))
    total = float(np.sum(S * (spline_gram() @ S)))
    if total > 0:
        S *= math.sqrt(SIGNAL / total)

    def fn(t, S=S):
        return bspline_matrix(SPLINE_DEGREE, SPLINE_KNOTS, np.atleast_1d(t)) @ S

    return project_to_trig(fn, dim), fn


def _streams(seed: int, rep: int):
    truth_ss, data_ss = np.random.SeedSequence([int(seed), int(rep)]).spawn(2)
    return np.random.default_rng(truth_ss), np.random.default_rng(data_ss)


def generate_truth(cfg: SimConfig, rep: int = 0) -> Truth:
    """Coefficient functions for replication ``rep``.

    The random-effect scale makes the time-averaged variance of xi_i equal
    to one (coefficients U(-1, 1) times the basis weights).
    """
    rng, _ = _streams(cfg.rng_seed, rep)
    beta, beta_fn = _coefficient_function(cfg.basis, cfg.p, cfg.s_beta, rng)
    gamma, gamma_fn = _coefficient_function(cfg.basis, cfg.q, cfg.s_gamma, rng)
    if cfg.basis == "trig":
        mean_var = np.sum(trig_weights() ** 2) / 3.0
    else:
        mean_var = np.trace(spline_gram()) / 3.0
    scale = 1.0 / math.sqrt(mean_var) if cfg.random_effects else 0.0
    return Truth(cfg.basis, beta, gamma, beta_fn, gamma_fn, scale)


def simulate_dataset(cfg: SimConfig, truth: Truth, rep: int = 0) -> LongitudinalDataset:
    """One dataset: x ~ N(0, I_p), z ~ N(0, I_q), eps ~ N(0, noise_sd^2) and a
    fresh random effect per individual."""
    _, rng = _streams(cfg.rng_seed, rep)
    n, m, p, q = cfg.n, cfg.m, cfg.p, cfg.q
    td = generate_times(cfg.times, n, m, rng)
    x = rng.standard_normal((n, p))
    nre = TRIG_ROWS if truth.basis == "trig" else 3
    ys, zs = [], []
    for i in range(n):
        t = td.times[i]
        z = rng.standard_normal((m, q))
        eps = rng.standard_normal(m) * cfg.noise_sd
        coef = rng.uniform(-1.0, 1.0, nre) * truth.effect_scale
        y = eps + truth.random_effect_basis(t) @ coef
        if p:
            y = y + truth.beta_fn(t) @ x[i]
        if q:
            y = y + np.sum(z * truth.gamma_fn(t), axis=1)
        ys.append(y)
        zs.append(z)
    return LongitudinalDataset(td, x, zs, ys)


# -- one replication -------------------------------------------------------------


def raw_ise(est: CoefficientExpansion, fn: Callable) -> float:
    """Integrated squared error against the exact function (Gauss-Legendre)."""
    diff = eval_expansion(est, GL_T) - np.asarray(fn(GL_T)).reshape(len(GL_T), est.d)
    return float(GL_W @ np.sum(diff * diff, axis=1))


def _fit_gamma_stage(cfg: SimConfig, d: LongitudinalDataset, rec: dict):
    if cfg.mode == "ld":
        h = cfg.h if cfg.h > 0 else float(default_h_grid(d.times, cfg.h_quantiles)[-1])
        K = max(cfg.K_gamma_grid)
        dm = build_differenced_model(d, h, K, cfg.pair_scheme, cfg.whiten)
        fit = fit_gamma(dm, "ld")
    else:
        hg = [cfg.h] if cfg.h > 0 else default_h_grid(d.times, cfg.h_quantiles)
        cv = cv_gamma(d, hg, cfg.K_gamma_grid, cfg.pair_scheme, cfg.whiten,
                      n_lambda=cfg.n_lambda, folds=cfg.folds, rng_seed=cfg.rng_seed)
        h, K = cv.h, cv.K_gamma
        dm = build_differenced_model(d, h, K, cfg.pair_scheme, cfg.whiten)
        fit = fit_gamma(dm, "hd", cv.lam)
    rec.update(h=h, K_gamma=K, lambda_gamma=fit.gamma_lambda)
    return fit.gamma_hat


def _fit_beta_stage(cfg: SimConfig, d: LongitudinalDataset, gamma_hat, rec: dict):
    grid = cfg.k_beta_grid
    if cfg.mode == "ld":
        K = max(grid)
        pm = project_frequencies(d, K, gamma_hat)
        fit = fit_beta(pm, "ld")
        Sigma = pm.X.T @ pm.X / pm.n
        theta = np.linalg.inv(Sigma)[cfg.coord]
        nu = 0.0
    else:
        pm_full = project_frequencies(d, max(grid), gamma_hat)
        cv = cv_beta(pm_full, grid, n_lambda=cfg.n_lambda, folds=cfg.folds, rng_seed=cfg.rng_seed)
        K = cv.K_beta
        pm = pm_full.truncate(K)
        fit = fit_beta(pm, "hd", cv.lambdas[:K])
        if pm.p == 1:
            theta = np.array([1.0 / (pm.X[:, 0] @ pm.X[:, 0] / pm.n)])
            nu = 0.0
        else:
            nu = regress.select_nu_cv(pm.X, nodes=[cfg.coord], folds=cfg.folds, rng_seed=cfg.rng_seed)
            theta = regress.nodewise_lasso(pm.X, nu, rows=[cfg.coord])
    ds = debias_coordinate(pm, fit, theta, cfg.coord)
    iv = simultaneous_intervals(ds, cfg.tau)
    rec.update(K_beta=K, nu=nu)
    return fit.beta_hat, fourier_box_band(iv, 0.0, cfg.tau, center=ds.debiased)


def run_replication(cfg: SimConfig, rep: int) -> dict:
    truth = generate_truth(cfg, rep)
    d = simulate_dataset(cfg, truth, rep)
    rec = {"rep": rep}
    gamma_hat = None
    if cfg.q > 0:
        gamma_hat = _fit_gamma_stage(cfg, d, rec)
        rec["loss_gamma"] = ise_between(gamma_hat, truth.gamma)
        rec["loss_gamma_raw"] = raw_ise(gamma_hat, truth.gamma_fn)
    if cfg.p > 0:
        beta_hat, band = _fit_beta_stage(cfg, d, gamma_hat, rec)
        rec["loss_beta"] = ise_between(beta_hat, truth.beta)
        rec["loss_beta_raw"] = raw_ise(beta_hat, truth.beta_fn)
        t = band_grid(cfg.band_points)
        target = truth.beta_fn(t)[:, cfg.coord]
        lo, hi = band.bounds(t)
        K = rec["K_beta"]
        delta = choose_delta(max(K, 2), cfg.alpha, cfg.delta_c) if cfg.delta_c >= 0 else 0.0
        rec["delta"] = delta
        rec["required_delta"] = float(max(np.max(lo - target), np.max(target - hi), 0.0))
        rec["covered"] = bool(np.all((lo - delta <= target) & (target <= hi + delta)))
        rec["length"] = float(np.max(hi - lo) + 2.0 * delta)
    return rec


# -- reports ------------------------------------------------------------------------

REP_COLUMNS = ["rep", "status", "loss_beta", "loss_beta_raw", "loss_gamma", "loss_gamma_raw",
               "covered", "length", "required_delta", "delta", "K_beta", "K_gamma", "h",
               "lambda_gamma", "nu", "message"]


@dataclass(frozen=True)
class MetricsReport:
    configured: int
    completed: int
    failed: int
    average_loss_beta: float
    average_loss_gamma: float
    average_loss_beta_raw: float
    average_loss_gamma_raw: float
    average_coverage: float
    average_length: float
    reps: list = field(repr=False, default_factory=list)

    def rows(self) -> list:
        names = ["configured", "completed", "failed", "average_loss_beta", "average_loss_gamma",
                 "average_loss_beta_raw", "average_loss_gamma_raw", "average_coverage",
                 "average_length"]
        return [(k, getattr(self, k)) for k in names]

    def column(self, name: str) -> np.ndarray:
        return np.array([r.get(name, np.nan) for r in self.reps if r["status"] == "ok"], dtype=float)


def _mean(vals) -> float:
    vals = [v for v in vals if v is not None and not (isinstance(v, float) and math.isnan(v))]
    return float(np.mean(vals)) if vals else math.nan


def run_simulation(cfg: SimConfig, progress: Callable | None = None) -> MetricsReport:
    """All replications in rep order.  A failing replication is recorded with
    its error message and excluded from the averages."""
    reps = []
    for r in range(cfg.replications):
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                rec = run_replication(cfg, r)
            rec["status"] = "ok"
        except Exception as exc:  # recorded, never silent
            rec = {"rep": r, "status": "failed", "message": f"{type(exc).__name__}: {exc}"}
        reps.append(rec)
        if progress is not None:
            progress(rec)
    ok = [r for r in reps if r["status"] == "ok"]
    return MetricsReport(
        configured=cfg.replications,
        completed=len(ok),
        failed=len(reps) - len(ok),
        average_loss_beta=_mean([r.get("loss_beta") for r in ok]),
        average_loss_gamma=_mean([r.get("loss_gamma") for r in ok]),
        average_loss_beta_raw=_mean([r.get("loss_beta_raw") for r in ok]),
        average_loss_gamma_raw=_mean([r.get("loss_gamma_raw") for r in ok]),
        average_coverage=_mean([float(r["covered"]) for r in ok if "covered" in r]),
        average_length=_mean([r.get("length") for r in ok]),
        reps=reps,
    )


def fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def metrics_csv(report: MetricsReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["metric", "value"])
    for k, v in report.rows():
        w.writerow([k, fmt(v)])
    return buf.getvalue()


def reps_csv(report: MetricsReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REP_COLUMNS)
    for r in report.reps:
        w.writerow([fmt(r.get(c)) for c in REP_COLUMNS])
    return buf.getvalue()


def tune_delta_c(cfg: SimConfig, holdout_seed: int, replications: int | None = None,
                 level: float | None = None) -> float:
    """Constant c such that delta = c K^-alpha log K would have covered a
    ``level`` fraction (default 1 - tau) of held-out replications."""
    level = 1.0 - cfg.tau if level is None else level
    reps = cfg.replications if replications is None else replications
    rep = run_simulation(cfg.replace(rng_seed=holdout_seed, replications=reps, delta_c=-1.0))
    ok = [r for r in rep.reps if r["status"] == "ok"]
    if not ok:
        raise RuntimeError("no held-out replication completed")
    needed = np.array([r["required_delta"] / choose_delta(max(r["K_beta"], 2), cfg.alpha, 1.0)
                       for r in ok])
    return float(np.quantile(needed, level))
