"""Fit, band and CV drivers shared by the CLI."""
from __future__ import annotations

import numpy as np

from .. import regress
from ..estimators import (FitResult, LongitudinalDataset, build_differenced_model, cv_beta,
                          cv_gamma, default_h_grid, fit_beta, fit_gamma, project_frequencies)
from ..inference import (BandResult, debias_coordinate, fourier_box_band, gamma_grid_intervals,
                         simultaneous_intervals, sinc_grid_band)
from ..sampling import TimeScheme


def _k_beta_cap(d: LongitudinalDataset, K_beta_max: int) -> int:
    if d.times.scheme is TimeScheme.COMMON:
        return min(K_beta_max, d.times.m - 1)
    return K_beta_max


def fit_dataset(d: LongitudinalDataset, K_beta: int = 0, K_gamma: int = 0, h: float = 0.0,
                mode: str = "hd", scheme: str = "A", whiten: bool = False, rng_seed=0,
                K_beta_max: int = 20, K_gamma_grid=(2, 4, 6, 8), n_lambda: int = 30,
                folds: int = 5) -> FitResult:
    """Two-stage fit; zero K or h means 'choose by cross-validation'."""
    diag: dict = {}
    gamma_hat = gamma_lam = None
    if d.q > 0:
        if mode == "ld":
            hh = h if h > 0 else float(default_h_grid(d.times)[-1])
            KK = K_gamma if K_gamma > 0 else max(K_gamma_grid)
            gf = fit_gamma(build_differenced_model(d, hh, KK, scheme, whiten), "ld")
        else:
            hg = [h] if h > 0 else None
            kg = [K_gamma] if K_gamma > 0 else K_gamma_grid
            cv = cv_gamma(d, hg, kg, scheme, whiten, n_lambda=n_lambda, folds=folds, rng_seed=rng_seed)
            gf = fit_gamma(build_differenced_model(d, cv.h, cv.K_gamma, scheme, whiten), "hd", cv.lam)
        gamma_hat, gamma_lam = gf.gamma_hat, gf.gamma_lambda
        diag.update(gf.diagnostics)
    beta_hat = lams = None
    if d.p > 0:
        if K_beta > 0:
            pm = project_frequencies(d, K_beta, gamma_hat)
            bf = fit_beta(pm, mode, "cv", rng_seed=rng_seed, n_lambda=n_lambda, folds=folds)
        else:
            pm_full = project_frequencies(d, _k_beta_cap(d, K_beta_max), gamma_hat)
            if mode == "ld":
                bf = fit_beta(pm_full, "ld")
            else:
                cv = cv_beta(pm_full, n_lambda=n_lambda, folds=folds, rng_seed=rng_seed)
                bf = fit_beta(pm_full.truncate(cv.K_beta), "hd", cv.lambdas[:cv.K_beta])
        beta_hat, lams = bf.beta_hat, bf.beta_lambdas
        diag.update(bf.diagnostics)
    return FitResult(gamma_hat, beta_hat, gamma_lam, lams, diag)


def beta_band(d: LongitudinalDataset, fit: FitResult, coord: int = 0, tau: float = 0.05,
              delta: float = 0.0, rng_seed=0) -> BandResult:
    pm = project_frequencies(d, fit.beta_hat.K, fit.gamma_hat)
    if pm.p == 1:
        theta = np.array([1.0 / (pm.X[:, 0] @ pm.X[:, 0] / pm.n)])
    else:
        nu = regress.select_nu_cv(pm.X, nodes=[coord], rng_seed=rng_seed)
        theta = regress.nodewise_lasso(pm.X, nu, rows=[coord])
    ds = debias_coordinate(pm, fit, theta, coord)
    return fourier_box_band(simultaneous_intervals(ds, tau), delta, tau, center=ds.debiased)


def gamma_band(d: LongitudinalDataset, fit: FitResult, coord: int = 0, tau: float = 0.05,
               delta: float = 0.0, scheme: str = "A", whiten: bool = False, rng_seed=0) -> BandResult:
    h = fit.diagnostics.get("h")
    if h is None:
        raise ValueError("fit does not record the bandwidth h")
    dm = build_differenced_model(d, float(h), fit.gamma_hat.K, scheme, whiten)
    gi = gamma_grid_intervals(dm, fit, tau, coord=coord, rng_seed=rng_seed)
    return sinc_grid_band(gi.intervals, delta, tau, center=gi.centers)


def cv_report(d: LongitudinalDataset, K_beta_max: int = 20, K_gamma_grid=(2, 4, 6, 8),
              scheme: str = "A", whiten: bool = False, rng_seed=0, n_lambda: int = 30,
              folds: int = 5) -> list:
    """Rows (target, h, K, lambda, cv_error) over the searched grids."""
    rows = []
    if d.q > 0:
        cv = cv_gamma(d, None, K_gamma_grid, scheme, whiten, n_lambda=n_lambda, folds=folds,
                      rng_seed=rng_seed)
        rows += [("gamma", h, int(K), lam, err) for h, K, lam, err in cv.table]
    if d.p > 0:
        gamma_hat = None
        if d.q > 0:
            gamma_hat = fit_gamma(build_differenced_model(d, cv.h, cv.K_gamma, scheme, whiten),
                                  "hd", cv.lam).gamma_hat
        pm = project_frequencies(d, _k_beta_cap(d, K_beta_max), gamma_hat)
        cb = cv_beta(pm, n_lambda=n_lambda, folds=folds, rng_seed=rng_seed)
        rows += [("beta", np.nan, int(K), cb.lambdas[K - 1], err) for K, err in zip(cb.K_grid, cb.K_errors)]
    return rows
