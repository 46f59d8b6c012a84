import itertools
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import synthetic
from hdvcm import estimators as est
from hdvcm import inference as inf
from hdvcm import regress
from hdvcm.basis import eval_expansion, sinc_kernel, trig_matrix
from hdvcm.estimators import FitResult, ProjectedModel
from hdvcm.basis import CoefficientExpansion
from hdvcm.sampling import TimeScheme

SQ2 = math.sqrt(2.0)


def linear_model(X, y):
    """Single-frequency projected model wrapping an ordinary regression."""
    return ProjectedModel(1, np.asarray(y, dtype=float)[:, None], X, TimeScheme.RANDOM, None, ())


def vertex_oracle(a, b, F):
    """Brute-force min / max of F @ c over all 2^K box vertices."""
    K = len(a)
    lo = np.full(F.shape[0], np.inf)
    hi = np.full(F.shape[0], -np.inf)
    for bits in itertools.product((0, 1), repeat=K):
        c = np.where(np.array(bits) == 1, b, a)
        v = np.sum(F * c[None, :], axis=1)
        lo = np.minimum(lo, v)
        hi = np.maximum(hi, v)
    return lo, hi


# -- Bonferroni --------------------------------------------------------------------


def test_bonferroni_table_value():
    assert inf.bonferroni_z(0.05, 1) == pytest.approx(1.959964, abs=1e-6)


def test_bonferroni_monotone_in_tau():
    zs = [inf.bonferroni_z(t, 5) for t in (0.01, 0.1, 0.5, 0.9, 0.999)]
    assert all(np.diff(zs) < 0)
    assert inf.bonferroni_z(0.999, 5) == pytest.approx(float(inf.stats.norm.isf(0.999 / 10)))
    with pytest.raises(ValueError):
        inf.bonferroni_z(1.0, 3)


def make_state(deb, sig, n=100):
    K = len(deb)
    return inf.DebiasState(0, np.ones(1), np.zeros(K), np.asarray(deb, float), np.asarray(sig, float), n,
                           1.0, np.zeros(K))


def test_intervals_half_width():
    iv = inf.simultaneous_intervals(make_state([0.3], [2.0], n=400), 0.05)
    assert (iv[0, 1] - iv[0, 0]) / 2 == pytest.approx(1.959964 * 2.0 / 20, abs=1e-7)
    iv = inf.simultaneous_intervals(make_state([0.1, -0.5, 2.0], [1.5, 1.5, 1.5]), 0.1)
    np.testing.assert_allclose(np.diff(iv, axis=1).ravel(), np.diff(iv[:1], axis=1)[0, 0], rtol=1e-14)
    np.testing.assert_allclose(iv.mean(axis=1), [0.1, -0.5, 2.0], atol=1e-14)


def test_state_validation():
    with pytest.raises(ValueError):
        make_state([0.1], [0.0])
    with pytest.raises(ValueError):
        make_state([np.nan], [1.0])


# -- debiasing ----------------------------------------------------------------------


def test_debias_identity_case():
    rng = np.random.default_rng(0)
    Q, _ = np.linalg.qr(rng.standard_normal((50, 4)))
    X = np.sqrt(50) * Q
    y = X @ np.array([2.0, 0.0, -1.0, 0.5]) + rng.standard_normal(50)
    pm = linear_model(X, y)
    fit = est.fit_beta(pm, "hd", 0.3)
    ds = inf.debias_coordinate(pm, fit, np.eye(4), coord=2, noise_scales=[1.0])
    resid = y - X @ fit.beta_hat.coeffs[0]
    assert ds.debiased[0] == pytest.approx(fit.beta_hat.coeffs[0, 2] + X[:, 2] @ resid / 50, abs=1e-12)
    # Sigma_hat equals I up to the rounding of the QR factor
    assert ds.delta_bound[0] <= 1e-12


def test_debias_unpenalized_is_ols():
    rng = np.random.default_rng(1)
    Q, _ = np.linalg.qr(rng.standard_normal((30, 5)))
    X = np.sqrt(30) * Q
    y = rng.standard_normal(30)
    pm = linear_model(X, y)
    fit = est.fit_beta(pm, "hd", 0.0)
    ds = inf.debias_coordinate(pm, fit, np.eye(5), coord=1, noise_scales=[1.0])
    assert ds.debiased[0] == pytest.approx(regress.ols(pm.problem(1))[1], abs=1e-10)


def test_debias_bias_monte_carlo():
    n, p, reps = 300, 60, 200
    b0 = np.zeros(p)
    b0[:3] = [1.0, -1.0, 0.5]
    rng = np.random.default_rng(2)
    err = []
    for _ in range(reps):
        X = rng.standard_normal((n, p))
        y = X @ b0 + rng.standard_normal(n)
        pm = linear_model(X, y)
        lam = 2 * 2 * math.sqrt(2 * math.log(p) / n)
        fit = est.fit_beta(pm, "hd", lam)
        nw = regress.nodewise_lasso(X, math.sqrt(math.log(p) / n), rows=[0])
        ds = inf.debias_coordinate(pm, fit, nw, coord=0, noise_scales=[1.0])
        err.append(ds.debiased[0] - b0[0])
    err = np.array(err)
    se = err.std(ddof=1) / math.sqrt(reps)
    assert abs(err.mean()) <= se
    # the uncorrected lasso estimate is visibly shrunk
    assert fit.beta_hat.coeffs[0, 0] < b0[0]


def test_debias_exact_decomposition():
    d, beta, _ = synthetic(n=120, m=10, p=8, q=0, K_beta=3, seed=3, noise=0.5)
    pm = est.project_frequencies(d, 3)
    fit = est.fit_beta(pm, "hd", 0.05)
    nw = regress.nodewise_lasso(pm.X, 0.05, rows=[0])
    sig = np.array([0.2, 0.3, 0.4])
    ds = inf.debias_coordinate(pm, fit, nw, coord=0, noise_scales=sig, truth=beta)
    standardized = np.sqrt(pm.n) * (ds.debiased - beta.coeffs[:3, 0]) / sig
    np.testing.assert_allclose(standardized, ds.W + ds.Delta, atol=1e-10)


def test_debias_missing_fit():
    d, _, _ = synthetic(n=20, m=10, p=3, q=0, seed=4)
    pm = est.project_frequencies(d, 4)
    short = FitResult(beta_hat=CoefficientExpansion(np.zeros((2, 3))))
    with pytest.raises(ValueError):
        inf.debias_coordinate(pm, short, np.eye(3), noise_scales=np.ones(4))


def test_noise_scales_examples():
    d, _, _ = synthetic(n=60, m=10, p=3, q=0, K_beta=3, seed=5)
    assert np.all(inf.estimate_noise_scales(est.project_frequencies(d, 3)) <= 1e-6)
    rng = np.random.default_rng(6)
    X = rng.standard_normal((1000, 3))
    pm = linear_model(X, 2.0 * rng.standard_normal(1000))
    s = inf.estimate_noise_scales(pm)
    assert abs(s[0] / 2 - 1) <= 0.15
    scaled = linear_model(X, 3.0 * pm.yproj[:, 0])
    assert inf.estimate_noise_scales(scaled)[0] == pytest.approx(3 * s[0], rel=1e-5)


# -- bands --------------------------------------------------------------------------


def test_box_band_examples():
    band = inf.fourier_box_band([[-1.0, 2.0]])
    lo, hi = band(np.array([0.1, 0.7]))
    np.testing.assert_array_equal(lo, -1.0)
    np.testing.assert_array_equal(hi, 2.0)
    band = inf.fourier_box_band([[0.0, 0.0], [0.0, 1.0]])
    lo, hi = band(0.0)
    assert hi[0] == pytest.approx(SQ2) and lo[0] == 0.0


def test_sinc_band_interpolates_at_grid():
    rng = np.random.default_rng(7)
    a = rng.standard_normal(6)
    b = a + rng.uniform(0, 1, 6)
    band = inf.sinc_grid_band(np.c_[a, b])
    lo, hi = band(np.arange(1, 7) / 6)
    np.testing.assert_allclose(lo, a, atol=1e-14)
    np.testing.assert_allclose(hi, b, atol=1e-14)


def test_sinc_band_degenerate_is_interpolant():
    c = np.array([0.5, -1.0, 2.0, 0.3])
    band = inf.sinc_grid_band(np.c_[c, c])
    t = np.linspace(0.01, 0.99, 50)
    want = np.array([sum(c[j - 1] * sinc_kernel(4 * s - j) for j in range(1, 5)) for s in t])
    lo, hi = band(t)
    np.testing.assert_allclose(lo, want, atol=1e-13)
    np.testing.assert_allclose(hi, want, atol=1e-13)


@pytest.mark.parametrize("K", [1, 3, 6, 10])
@pytest.mark.parametrize("kind", ["box", "sinc"])
def test_bands_equal_vertex_brute_force(K, kind):
    rng = np.random.default_rng(K)
    a = rng.standard_normal(K)
    b = a + rng.uniform(0, 2, K)
    t = rng.uniform(0, 1, 1000)
    band = (inf.fourier_box_band if kind == "box" else inf.sinc_grid_band)(np.c_[a, b])
    lo, hi = band.bounds(t)
    olo, ohi = vertex_oracle(a, b, band.kernel(t))
    assert np.array_equal(lo, olo)
    assert np.array_equal(hi, ohi)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 12), st.floats(0, 1), st.integers(0, 10_000))
def test_width_identity(K, delta, seed):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal(K)
    b = a + rng.uniform(0, 2, K)
    t = rng.uniform(0, 1, 100)
    band = inf.fourier_box_band(np.c_[a, b], delta)
    want = np.abs(trig_matrix(t, K)) @ (b - a) + 2 * delta
    np.testing.assert_allclose(band.width(t), want, atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 10), st.booleans(), st.integers(0, 10_000))
def test_band_sandwich_and_center(K, sinc, seed):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal(K)
    b = a + rng.uniform(0, 2, K)
    band = (inf.sinc_grid_band if sinc else inf.fourier_box_band)(np.c_[a, b], 0.0)
    t = rng.uniform(0, 1, 60)
    lo, hi = band(t)
    F = band.kernel(t)
    for _ in range(10):
        v = F @ rng.uniform(a, b)
        assert np.all(lo <= v + 1e-12) and np.all(v <= hi + 1e-12)
    est_t = band.estimate(t)
    assert np.all(lo <= est_t + 1e-12) and np.all(est_t <= hi + 1e-12)


@settings(max_examples=30, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1), st.integers(0, 1000))
def test_band_monotone_in_delta(d1, d2, seed):
    d1, d2 = sorted((d1, d2))
    rng = np.random.default_rng(seed)
    a = rng.standard_normal(4)
    band = inf.fourier_box_band(np.c_[a, a + 1])
    t = rng.uniform(0, 1, 30)
    l1, u1 = band.with_delta(d1)(t)
    l2, u2 = band.with_delta(d2)(t)
    assert np.all(l2 <= l1) and np.all(u1 <= u2)


def test_band_validation():
    with pytest.raises(ValueError):
        inf.fourier_box_band([[1.0, 0.0]])
    with pytest.raises(ValueError):
        inf.fourier_box_band([[0.0, 1.0]], delta=-0.1)


def test_band_csv(tmp_path):
    band = inf.fourier_box_band([[0.0, 1.0], [-0.5, 0.5]], 0.1)
    path = tmp_path / "band.csv"
    inf.write_band_csv(path, band, inf.band_grid(8))
    lines = path.read_text().splitlines()
    assert lines[0] == "t,l,u,l_delta,u_delta,estimate"
    assert len(lines) == 9
    row = [float(v) for v in lines[1].split(",")]
    assert row[0] == 0.0625
    assert row[3] == pytest.approx(row[1] - 0.1) and row[4] == pytest.approx(row[2] + 0.1)


def test_band_grid():
    g = inf.band_grid(512)
    assert len(g) == 512 and g[0] > 0 and g[-1] < 1


# -- delta ------------------------------------------------------------------------------


def test_choose_delta_examples():
    assert inf.choose_delta(10, 2, 0) == 0.0
    assert inf.choose_delta(10, 2, 1) == pytest.approx(0.0230259, abs=1e-7)
    assert inf.choose_delta(7, 3, 2.0) == pytest.approx(2 * inf.choose_delta(7, 3, 1.0))
    for bad in ((1, 2, 1), (5, 1.5, 1), (5, 2, -1)):
        with pytest.raises(ValueError):
            inf.choose_delta(*bad)


def test_delta_default_warns():
    with pytest.warns(RuntimeWarning):
        assert inf.delta_for(8) == 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert inf.delta_for(8, est.TheoryParams(delta_c=1.0)) == inf.choose_delta(8, 2.0, 1.0)


# -- gamma grid intervals ---------------------------------------------------------------


def test_gamma_intervals_noiseless_centers():
    d, _, gamma = synthetic(n=40, m=10, p=0, q=2, K_gamma=3, seed=8)
    dm = est.build_differenced_model(d, 1.0, 3)
    fit = est.fit_gamma(dm, "ld")
    gi = inf.gamma_grid_intervals(dm, fit, noise_sd=1.0)
    np.testing.assert_allclose(gi.centers, eval_expansion(gamma, gi.tstar)[:, 0], atol=1e-6)
    np.testing.assert_allclose(gi.tstar, np.arange(1, 7) / 6)


def test_gamma_intervals_single_point():
    d, _, _ = synthetic(n=40, m=10, p=0, q=2, K_gamma=3, seed=9, noise=0.5)
    dm = est.build_differenced_model(d, 1.0, 3)
    fit = est.fit_gamma(dm, "hd", 0.01)
    gi = inf.gamma_grid_intervals(dm, fit, 0.05, tstar=[0.4])
    half = (gi.intervals[0, 1] - gi.intervals[0, 0]) / 2
    assert half == pytest.approx(inf.stats.norm.isf(0.025) * gi.scales[0])


def test_gamma_interval_width_scales_with_sqrt_N():
    ratios = []
    for rep in range(6):
        widths = []
        for n in (100, 400):
            d, _, _ = synthetic(n=n, m=10, p=0, q=3, K_gamma=3, seed=100 + rep, noise=1.0)
            dm = est.build_differenced_model(d, 1.0, 3)
            fit = est.fit_gamma(dm, "hd", 0.02)
            gi = inf.gamma_grid_intervals(dm, fit, nu=0.02)
            widths.append(np.median(np.diff(gi.intervals, axis=1)))
        ratios.append(widths[1] / widths[0])
    assert 0.4 <= np.median(ratios) <= 0.6
