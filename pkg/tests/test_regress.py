import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hdvcm import regress
from hdvcm.regress import LinearProblem


def kkt_oracle(X, y, b, lam, S=None):
    """Subgradient slack computed from the raw design, independent of the solver's Gram path."""
    S = len(y) if S is None else S
    g = -2.0 * X.T @ (y - X @ b) / S
    nz = b != 0
    viol = np.zeros(len(b))
    viol[nz] = np.abs(g[nz] + lam * np.sign(b[nz]))
    viol[~nz] = np.maximum(np.abs(g[~nz]) - lam, 0.0)
    return viol.max(initial=0.0)


def random_problem(seed, N, P, s=3, noise=0.5):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((N, P))
    b = np.zeros(P)
    b[: min(s, P)] = rng.uniform(1, 2, min(s, P))
    return X, X @ b + noise * rng.standard_normal(N)


# -- LinearProblem / ols ---------------------------------------------------------


def test_problem_validation():
    with pytest.raises(ValueError):
        LinearProblem(np.array([[np.inf]]), np.array([1.0]))
    with pytest.raises(ValueError):
        LinearProblem(np.zeros((2, 1)), np.zeros(3))


def test_ols_identity():
    r = np.array([1.0, -2.0, 3.0])
    np.testing.assert_allclose(regress.ols(LinearProblem(np.eye(3), r)), r, atol=1e-14)


def test_ols_orthogonal_exact():
    Q, _ = np.linalg.qr(np.random.default_rng(0).standard_normal((20, 4)))
    c = np.array([1.0, -2.0, 0.5, 3.0])
    np.testing.assert_allclose(regress.ols(LinearProblem(Q, Q @ c)), c, atol=1e-10)


def test_ols_normal_equations():
    X, y = random_problem(1, 50, 5)
    b = regress.ols(LinearProblem(X, y))
    assert np.max(np.abs(X.T @ (y - X @ b))) <= 1e-8


def test_ols_rank_deficient():
    X = np.ones((10, 3))
    with pytest.raises(regress.RankDeficientError, match="2"):
        regress.ols(LinearProblem(X, np.arange(10.0)))


# -- lasso ----------------------------------------------------------------------


def test_lasso_zero_above_threshold():
    X, y = random_problem(2, 40, 10)
    lam = 2 * np.max(np.abs(X.T @ y)) / 40
    sol = regress.lasso(LinearProblem(X, y), lam)
    assert np.all(sol.coefficients == 0)
    assert regress.lambda_max(LinearProblem(X, y)) == pytest.approx(lam)


def test_soft_threshold_example():
    N = 4
    X = np.sqrt(N) * np.eye(N)[:, :2]
    y = X @ np.array([3.0, 0.1])
    sol = regress.lasso(LinearProblem(X, y), 1.0, tol=1e-12)
    np.testing.assert_allclose(sol.coefficients, [2.5, 0.0], atol=1e-10)


def test_kkt_random_40x60():
    X, y = random_problem(3, 40, 60)
    sol = regress.lasso(LinearProblem(X, y), 0.3)
    assert sol.converged
    assert kkt_oracle(X, y, sol.coefficients, 0.3) <= 1e-6
    assert sol.kkt_violation <= regress.DEFAULT_TOL


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 80), st.integers(1, 120), st.floats(0.01, 2.0), st.integers(0, 10**6))
def test_kkt_random_problems(N, P, frac, seed):
    X, y = random_problem(seed, N, P)
    p = LinearProblem(X, y)
    lam = frac * regress.lambda_max(p) / 2 + 1e-6
    sol = regress.lasso(p, lam)
    assert sol.converged
    assert kkt_oracle(X, y, sol.coefficients, lam) <= 1e-6


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 10), st.integers(0, 10**6), st.floats(0.0, 3.0))
def test_soft_threshold_oracle(P, seed, lam):
    rng = np.random.default_rng(seed)
    N = P + int(rng.integers(0, 10))
    Q, _ = np.linalg.qr(rng.standard_normal((N, P)))
    X = np.sqrt(N) * Q
    y = rng.standard_normal(N) * 2
    z = X.T @ y / N
    want = np.sign(z) * np.maximum(np.abs(z) - lam / 2, 0)
    sol = regress.lasso(LinearProblem(X, y), lam, tol=1e-12)
    np.testing.assert_allclose(sol.coefficients, want, atol=1e-8)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 15), st.integers(0, 10**6))
def test_lasso_zero_equals_ols(P, seed):
    X, y = random_problem(seed, P + 30, P)
    p = LinearProblem(X, y)
    sol = regress.lasso(p, 0.0, tol=1e-10)
    np.testing.assert_allclose(sol.coefficients, regress.ols(p), atol=1e-6)


def test_objective_nonincreasing_per_sweep():
    X, y = random_problem(4, 60, 90)
    sol = regress.lasso(LinearProblem(X, y), 0.05, record_history=True)
    h = sol.history
    assert len(h) >= 2
    assert np.all(np.diff(h) <= 1e-12 * np.abs(h[:-1]).max())
    assert h[-1] == pytest.approx(sol.objective, rel=1e-10)


def test_sample_scale_changes_penalty_scale():
    X, y = random_problem(5, 30, 8)
    a = regress.lasso(LinearProblem(X, y, sample_scale=60.0), 0.1, tol=1e-10)
    b = regress.lasso(LinearProblem(X, y), 0.2, tol=1e-10)
    np.testing.assert_allclose(a.coefficients, b.coefficients, atol=1e-8)


def test_nonconvergence_flag():
    X, y = random_problem(6, 50, 100)
    sol = regress.lasso(LinearProblem(X, y), 1e-4, tol=1e-14, max_iter=2)
    assert not sol.converged


def test_negative_lambda_rejected():
    with pytest.raises(ValueError):
        regress.lasso(LinearProblem(np.eye(2), np.ones(2)), -1.0)


def test_deterministic():
    X, y = random_problem(7, 40, 50)
    a = regress.lasso(LinearProblem(X, y), 0.1).coefficients
    b = regress.lasso(LinearProblem(X, y), 0.1).coefficients
    assert np.array_equal(a, b)


def test_path_matches_individual_fits():
    X, y = random_problem(8, 40, 30)
    p = LinearProblem(X, y)
    lams = regress.lambda_grid(p, 10)
    path = regress.lasso_path(p, lams, tol=1e-10)
    for lam, row in zip(lams, path):
        np.testing.assert_allclose(row, regress.lasso(p, lam, tol=1e-10).coefficients, atol=1e-6)


def test_near_saturated_path_converges_with_unique_solution():
    # support close to N: the regime where the active-set steps take over
    X, y = random_problem(9, 80, 120, s=10, noise=1.0)
    p = LinearProblem(X, y)
    lams = regress.lambda_grid(p, 30, ratio=0.003)
    path = regress.lasso_path(p, lams)
    assert np.count_nonzero(path[-1]) > 60
    for lam, row in zip(lams, path):
        assert kkt_oracle(X, y, row, lam) <= 1e-6
    # the objective is strictly convex on a support with full column rank
    sol = regress.lasso(p, lams[-1], tol=1e-12)
    np.testing.assert_allclose(path[-1], sol.coefficients, atol=1e-6)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_history_nonincreasing_near_saturation(seed):
    X, y = random_problem(seed, 40, 60, s=5, noise=1.0)
    p = LinearProblem(X, y)
    sol = regress.lasso(p, 0.02 * regress.lambda_max(p), record_history=True)
    h = sol.history
    assert np.all(np.diff(h) <= 1e-12 * np.abs(h).max())
    assert kkt_oracle(X, y, sol.coefficients, sol.lam) <= 1e-6


# -- scaled lasso -----------------------------------------------------------------


def test_scaled_lasso_pure_noise_monte_carlo():
    rng = np.random.default_rng(10)
    est = []
    for _ in range(200):
        y = 1.5 * rng.standard_normal(500)
        est.append(regress.scaled_lasso(LinearProblem(np.zeros((500, 1)), y)).noise_sd)
    assert abs(np.mean(est) / 1.5 - 1) <= 0.15


def test_scaled_lasso_noiseless():
    X, _ = random_problem(11, 100, 200)
    b = np.zeros(200)
    b[:3] = [2.0, -1.5, 1.0]
    res = regress.scaled_lasso(LinearProblem(X, X @ b))
    assert res.noise_sd <= 1e-6


def test_scaled_lasso_self_consistent_kkt():
    X, y = random_problem(12, 200, 100)
    res = regress.scaled_lasso(LinearProblem(X, y))
    assert res.lam == pytest.approx(2 * res.noise_sd * res.lambda0, rel=1e-12)
    assert kkt_oracle(X, y, res.coefficients, res.lam) <= 1e-6
    assert 0.35 <= res.noise_sd <= 0.65


def test_scaled_lasso_collapse_errors():
    with pytest.raises(regress.ScaledLassoError):
        regress.scaled_lasso(LinearProblem(np.ones((5, 1)), np.zeros(5)))
    with pytest.raises(ValueError):
        regress.scaled_lasso(LinearProblem(np.ones((1, 1)), np.ones(1)))


# -- nodewise lasso -------------------------------------------------------------


def test_nodewise_identity_covariance():
    Q, _ = np.linalg.qr(np.random.default_rng(13).standard_normal((50, 6)))
    X = np.sqrt(50) * Q
    res = regress.nodewise_lasso(X, 1e-3)
    assert res.violation <= 1e-6
    off = res.theta - np.diag(np.diag(res.theta))
    assert np.max(np.abs(off)) <= 1e-6


def test_nodewise_two_by_two():
    rng = np.random.default_rng(14)
    S = np.array([[1.0, 0.6], [0.6, 2.0]])
    X = rng.multivariate_normal([0, 0], S, size=20_000)
    res = regress.nodewise_lasso(X, 1e-5)
    inv = np.linalg.inv(S)
    assert np.max(np.abs(res.theta - inv) / np.abs(inv)) <= 0.10


def test_nodewise_violation_recomputed():
    rng = np.random.default_rng(15)
    X = rng.standard_normal((80, 12))
    res = regress.nodewise_lasso(X, 0.05)
    G = X.T @ X / 80
    assert abs(res.violation - np.max(np.abs(np.eye(12) - res.theta @ G))) <= 1e-12


def test_nodewise_tau_formula():
    rng = np.random.default_rng(16)
    X = rng.standard_normal((60, 8))
    res = regress.nodewise_lasso(X, 0.1, rows=[3])
    g = -res.theta[3] * res.tau2[3]
    g[3] = 0
    r = X[:, 3] - X @ g
    assert res.tau2[3] == pytest.approx(r @ r / 60 + 0.1 * np.abs(g).sum(), rel=1e-10)
    assert np.isnan(res.theta[0]).all()


def test_nodewise_errors():
    with pytest.raises(ValueError):
        regress.nodewise_lasso(np.ones((5, 1)), 0.1)
    X = np.random.default_rng(0).standard_normal((10, 3))
    X[:, 2] = X[:, 0]
    with pytest.raises(ValueError):
        regress.nodewise_lasso(X, 0.0)


# -- cross-validation ----------------------------------------------------------


def test_cv_single_lambda():
    X, y = random_problem(17, 30, 5)
    assert regress.kfold_cv(LinearProblem(X, y), [0.3]).lam == 0.3


def test_cv_bias_only_regime_increasing():
    rng = np.random.default_rng(18)
    X = rng.standard_normal((100, 5))
    X = np.r_[X, X]
    y = X @ np.array([1.0, -1.0, 2.0, 0.5, -1.5])
    grid = np.geomspace(1e-3, 1.0, 15)
    res = regress.kfold_cv(LinearProblem(X, y), grid, rng_seed=1)
    assert np.all(np.diff(res.errors) > 0)
    assert res.lam == grid[0]


def test_cv_choice_beats_endpoints():
    X, y = random_problem(19, 120, 200)
    p = LinearProblem(X, y)
    grid = regress.lambda_grid(p, 20)
    res = regress.kfold_cv(p, grid)
    assert res.errors[res.index] <= min(res.errors[0], res.errors[-1])


def test_cv_ties_go_to_larger_lambda():
    assert regress.pick_min(np.array([0.1, 0.2, 0.3]), np.array([1.0, 0.5, 0.5])) == 0.3


def test_cv_errors():
    p = LinearProblem(np.ones((3, 1)), np.ones(3))
    with pytest.raises(ValueError):
        regress.kfold_cv(p, [0.1], folds=5)
    with pytest.raises(ValueError):
        regress.kfold_cv(p, [0.1], folds=1)


def test_fold_assignment_groups_and_determinism():
    g = np.repeat(np.arange(10), 3)
    lab = regress.fold_assignment(30, 5, 3, g)
    for i in range(10):
        assert len(set(lab[g == i])) == 1
    assert np.array_equal(lab, regress.fold_assignment(30, 5, 3, g))
    assert np.bincount(regress.fold_assignment(23, 5, 0)).tolist() == [5, 5, 5, 4, 4]
