"""Debiased lasso, Bonferroni intervals and simultaneous bands.

For a time-invariant coefficient beta_c(t) = sum_k beth_{k,c} phi_k(t), each
frequency's lasso fit is debiased with the nodewise relaxed inverse,
Bonferroni intervals [a_k, b_k] are formed, and the band is the range of
sum_k c_k phi_k(t) over the box a <= c <= b (closed form by sign split).

For a time-varying coefficient gamma_c, debiased interval estimates at the
grid j / (2K), j = 1..2K, are interpolated through sinc kernels in the same
box fashion.
"""
from __future__ import annotations

import csv
import enum
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import regress
from .basis import sinc_kernel, trig_matrix
from .estimators import DifferencedModel, FitResult, ProjectedModel


def bonferroni_z(tau: float, count: int) -> float:
    """Upper tau / (2 count) standard Gaussian quantile."""
    if not 0.0 < tau < 1.0:
        raise ValueError("tau must lie in (0, 1)")
    return float(stats.norm.isf(tau / (2.0 * count)))


# -- debiasing -------------------------------------------------------------------


@dataclass(frozen=True)
class DebiasState:
    """Debiased values of one coordinate across frequencies 1..K.

    ``omega = theta^T Sigma_hat theta`` is the variance factor of the
    correction; ``W`` and ``Delta`` are the exact decomposition terms and are
    only available when the truth is supplied.
    """

    coord: int
    theta_row: np.ndarray
    estimates: np.ndarray
    debiased: np.ndarray
    noise_scales: np.ndarray
    n: int
    omega: float
    delta_bound: np.ndarray
    W: np.ndarray | None = None
    Delta: np.ndarray | None = None

    def __post_init__(self):
        if not (np.all(np.isfinite(self.debiased)) and np.all(np.isfinite(self.noise_scales))):
            raise ValueError("debiased values and noise scales must be finite")
        if np.any(self.noise_scales <= 0):
            raise ValueError("noise scales must be positive")

    @property
    def K(self) -> int:
        return len(self.debiased)

    def standard_errors(self, include_loading_variance: bool = False) -> np.ndarray:
        f = np.sqrt(self.omega) if include_loading_variance else 1.0
        return f * self.noise_scales / np.sqrt(self.n)


def estimate_noise_scales(pm: ProjectedModel, lambda0=None) -> np.ndarray:
    """Scaled-lasso noise level of every frequency problem."""
    return np.array([regress.scaled_lasso(pm.problem(k), lambda0).noise_sd
                     for k in range(1, pm.K_beta + 1)])


def _theta_row(theta, coord: int, p: int) -> np.ndarray:
    """Row ``coord`` from a NodewiseResult, a p x p matrix or a length-p row."""
    if isinstance(theta, regress.NodewiseResult):
        if coord not in set(theta.rows.tolist()):
            raise ValueError(f"nodewise result lacks row {coord}")
        return theta.theta[coord]
    theta = np.asarray(theta, dtype=float)
    if theta.ndim == 2:
        return theta[coord]
    if theta.shape != (p,):
        raise ValueError(f"theta row must have length {p}")
    return theta


def debias_coordinate(pm: ProjectedModel, fit: FitResult, theta, coord: int = 0,
                      noise_scales=None, truth=None, tol: float = regress.DEFAULT_TOL) -> DebiasState:
    """One-step correction ``b_k[c] + theta^T X^T (y_k - X b_k) / n`` per frequency.

    ``delta_bound[k]`` is sqrt(n) / sigma_k * |e_c - Sigma theta|_inf * |b_k - b_k(2 lam)|_1,
    the fit at twice the penalty standing in for the unknown truth.  With
    ``truth`` (a K' x p coefficient matrix or expansion) the exact W_k and
    Delta_k are also recorded.
    """
    if fit.beta_hat is None or fit.beta_hat.K < pm.K_beta:
        raise ValueError("fit must hold beta coefficients for every projected frequency")
    n, p, K = pm.n, pm.p, pm.K_beta
    row = _theta_row(theta, coord, p)
    X = pm.X
    Sigma = X.T @ X / n
    e = np.zeros(p)
    e[coord] = 1.0
    viol = float(np.max(np.abs(e - Sigma @ row)))
    omega = float(row @ Sigma @ row)
    B = fit.beta_hat.coeffs[:K]
    lams = np.zeros(K) if fit.beta_lambdas is None else np.asarray(fit.beta_lambdas, dtype=float)
    sig = estimate_noise_scales(pm) if noise_scales is None else np.asarray(noise_scales, dtype=float)
    deb = np.empty(K)
    bound = np.zeros(K)
    for k in range(K):
        y = pm.yproj[:, k]
        resid = y - X @ B[k]
        deb[k] = B[k, coord] + row @ (X.T @ resid) / n
        if viol > 0 and lams[k] > 0:
            b2 = regress.lasso(pm.problem(k + 1), 2.0 * lams[k], tol=tol, init=B[k]).coefficients
            bound[k] = np.sqrt(n) / sig[k] * viol * np.abs(B[k] - b2).sum()
    W = Delta = None
    if truth is not None:
        T = truth.padded(K)[:K] if hasattr(truth, "padded") else np.asarray(truth, dtype=float)[:K]
        M = e - Sigma @ row  # row of I - Theta Sigma
        W = np.empty(K)
        Delta = np.empty(K)
        for k in range(K):
            zeta = pm.yproj[:, k] - X @ T[k]
            W[k] = row @ (X.T @ zeta) / (np.sqrt(n) * sig[k])
            Delta[k] = np.sqrt(n) / sig[k] * (M @ (B[k] - T[k]))
    return DebiasState(coord, row, B[:, coord].copy(), deb, sig, n, omega, bound, W, Delta)


def simultaneous_intervals(ds: DebiasState, tau: float = 0.05,
                           include_loading_variance: bool = False) -> np.ndarray:
    """Bonferroni intervals ``debiased -/+ z_{tau/(2K)} sigma_k / sqrt(n)`` as a K x 2 array."""
    z = bonferroni_z(tau, ds.K)
    half = z * ds.standard_errors(include_loading_variance)
    return np.column_stack([ds.debiased - half, ds.debiased + half])


# -- bands -------------------------------------------------------------------------


class BandKind(str, enum.Enum):
    FOURIER_BOX = "FourierBox"
    SINC_GRID = "SincGrid"


def _box_range(a: np.ndarray, b: np.ndarray, F: np.ndarray):
    """Min and max of F @ c over a <= c <= b, row by row of F.

    The optimum sits at the vertex picked coordinatewise by the sign of F,
    which gives l = sum(a F+ - b F-) and u = sum(b F+ - a F-).
    """
    up = F >= 0
    lo_vertex = np.where(up, a[None, :], b[None, :])
    hi_vertex = np.where(up, b[None, :], a[None, :])
    return np.sum(F * lo_vertex, axis=1), np.sum(F * hi_vertex, axis=1)


@dataclass(frozen=True)
class BandResult:
    lower: np.ndarray  # a_k
    upper: np.ndarray  # b_k
    delta: float
    kind: BandKind
    tau: float | None = None
    center: np.ndarray | None = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        a = np.asarray(self.lower, dtype=float).ravel()
        b = np.asarray(self.upper, dtype=float).ravel()
        if a.shape != b.shape or a.size == 0:
            raise ValueError("need matching, non-empty interval bounds")
        if np.any(a > b):
            raise ValueError("interval lower bounds must not exceed upper bounds")
        if not self.delta >= 0:
            raise ValueError("delta must be nonnegative")
        center = 0.5 * (a + b) if self.center is None else np.asarray(self.center, dtype=float).ravel()
        object.__setattr__(self, "lower", a)
        object.__setattr__(self, "upper", b)
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "kind", BandKind(self.kind))

    @property
    def size(self) -> int:
        return len(self.lower)

    def kernel(self, t) -> np.ndarray:
        """Matrix of basis (or sinc) values, one row per time."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if self.kind is BandKind.FOURIER_BOX:
            return trig_matrix(t, self.size)
        G = self.size
        return sinc_kernel(G * t[:, None] - np.arange(1, G + 1)[None, :])

    def bounds(self, t):
        """(l(t), u(t)) before the delta enlargement."""
        return _box_range(self.lower, self.upper, self.kernel(t))

    def __call__(self, t):
        """(l_delta(t), u_delta(t))."""
        lo, hi = self.bounds(t)
        return lo - self.delta, hi + self.delta

    def estimate(self, t) -> np.ndarray:
        return self.kernel(t) @ self.center

    def width(self, t) -> np.ndarray:
        lo, hi = self(t)
        return hi - lo

    def with_delta(self, delta: float) -> "BandResult":
        return BandResult(self.lower, self.upper, delta, self.kind, self.tau, self.center, self.meta)


def fourier_box_band(intervals, delta: float = 0.0, tau: float | None = None, center=None) -> BandResult:
    """Band for sum_k c_k phi_k(t) over the box of per-frequency intervals (K x 2)."""
    iv = np.asarray(intervals, dtype=float).reshape(-1, 2)
    return BandResult(iv[:, 0], iv[:, 1], float(delta), BandKind.FOURIER_BOX, tau, center)


def sinc_grid_band(grid_intervals, delta: float = 0.0, tau: float | None = None, center=None) -> BandResult:
    """Band through sinc interpolation of interval values at j / G, j = 1..G."""
    iv = np.asarray(grid_intervals, dtype=float).reshape(-1, 2)
    return BandResult(iv[:, 0], iv[:, 1], float(delta), BandKind.SINC_GRID, tau, center)


def choose_delta(K: int, alpha: float, c: float) -> float:
    """Bias enlargement c * K^-alpha * log K."""
    if K < 2:
        raise ValueError("K must be >= 2")
    if alpha < 2:
        raise ValueError("alpha must be >= 2")
    if c < 0:
        raise ValueError("c must be nonnegative")
    return float(c * K ** (-alpha) * np.log(K))


def delta_for(K: int, theory=None) -> float:
    """Delta from theory constants; zero, with a warning, when none are set."""
    if theory is None or theory.delta_c is None or K < 2:
        warnings.warn("no delta constant supplied: band is not enlarged for truncation bias",
                      RuntimeWarning, stacklevel=2)
        return 0.0
    return choose_delta(K, theory.alpha, theory.delta_c)


def band_grid(points: int = 512) -> np.ndarray:
    """Uniform midpoints (i + 1/2) / points in (0, 1)."""
    return (np.arange(points) + 0.5) / points


def write_band_csv(path, band: BandResult, t=None):
    t = band_grid() if t is None else np.asarray(t, dtype=float)
    lo, hi = band.bounds(t)
    est = band.estimate(t)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "l", "u", "l_delta", "u_delta", "estimate"])
        for row in zip(t, lo, hi, lo - band.delta, hi + band.delta, est):
            w.writerow([f"{v:.17g}" for v in row])


# -- gamma intervals on a time grid -----------------------------------------------


@dataclass(frozen=True)
class GammaGridIntervals:
    tstar: np.ndarray
    intervals: np.ndarray  # G x 2
    centers: np.ndarray
    plug_in: np.ndarray
    scales: np.ndarray
    noise_sd: float
    nu: float


def gamma_grid_intervals(dm: DifferencedModel, fit, tau: float = 0.05, tstar=None,
                         coord: int = 0, nu: float | None = None, rng_seed=0,
                         noise_sd: float | None = None) -> GammaGridIntervals:
    """Debiased linear-functional intervals for gamma_coord at grid times.

    For a time t*, the loading a(t*) puts phi_k(t*) on column (k-1) q + coord
    of Psi.  The estimate a^T g is corrected by u^T Psi^T (ydiff - Psi g) / N
    with u = Theta^T a built from the nodewise rows of those K columns, and
    the scale is sigma sqrt(u^T Sigma u / N) with sigma from the scaled lasso.
    Default grid: j / (2K), j = 1..2K.
    """
    K, q = dm.K_gamma, dm.q
    g = (fit.gamma_hat.coeffs.ravel() if isinstance(fit, FitResult) else np.asarray(fit, dtype=float).ravel())
    if g.shape != (K * q,):
        raise ValueError(f"gamma coefficients must have {K * q} entries")
    tstar = np.arange(1, 2 * K + 1) / (2.0 * K) if tstar is None else np.atleast_1d(np.asarray(tstar, dtype=float))
    cols = np.arange(K) * q + coord
    Psi, N = dm.Psi, dm.N
    P = Psi.shape[1]
    if P == 1:
        Theta = np.array([[1.0 / (Psi[:, 0] @ Psi[:, 0] / N)]])
        nu = 0.0 if nu is None else nu
    else:
        if nu is None:
            nu = regress.select_nu_cv(Psi, nodes=cols, rng_seed=rng_seed)
        Theta = regress.nodewise_lasso(Psi, nu, rows=cols).theta[cols]
    if noise_sd is None:
        noise_sd = regress.scaled_lasso(dm.problem()).noise_sd
    resid = dm.ydiff - Psi @ g
    score = Psi.T @ resid / N
    A = trig_matrix(tstar, K)  # G x K loadings on the coordinate's columns
    U = A @ Theta  # G x P
    plug = A @ g[cols]
    centers = plug + U @ score
    PU = Psi @ U.T
    scales = noise_sd * np.sqrt(np.sum(PU * PU, axis=0) / N) / np.sqrt(N)
    z = bonferroni_z(tau, len(tstar))
    iv = np.column_stack([centers - z * scales, centers + z * scales])
    return GammaGridIntervals(tstar, iv, centers, plug, scales, float(noise_sd), float(nu))
