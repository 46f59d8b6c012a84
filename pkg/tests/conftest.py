import numpy as np

from hdvcm import sampling
from hdvcm.basis import CoefficientExpansion, eval_expansion
from hdvcm.estimators import LongitudinalDataset


def synthetic(n=40, m=12, p=3, q=2, K_beta=4, K_gamma=3, times="common", noise=0.0,
              seed=0, beta=None, gamma=None, random_effect=None):
    """Forward-simulated dataset y = x^T beta(t) + z^T gamma(t) [+ xi(t)] + noise."""
    rng = np.random.default_rng(seed)
    td = sampling.generate_times(times, n, m, rng_seed=rng)
    x = rng.standard_normal((n, p))
    if beta is None and p:
        beta = CoefficientExpansion(rng.standard_normal((K_beta, p)))
    if gamma is None and q:
        gamma = CoefficientExpansion(rng.standard_normal((K_gamma, q)))
    zs, ys = [], []
    for i, t in enumerate(td.times):
        z = rng.standard_normal((len(t), q))
        y = np.zeros(len(t))
        if p:
            y += eval_expansion(beta, t) @ x[i]
        if q:
            y += np.sum(z * eval_expansion(gamma, t), axis=1)
        if random_effect is not None:
            y += random_effect(i, t)
        y += noise * rng.standard_normal(len(t))
        zs.append(z)
        ys.append(y)
    return LongitudinalDataset(td, x, tuple(zs), tuple(ys)), beta, gamma


ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
