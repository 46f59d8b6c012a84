"""Numerical verification of the basis identities and the sample-size claims."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .. import basis
from ..sampling import pair_count_mc

DEFAULT_SIZES = {
    "m_max": 32,
    "l_factor": 6,
    "moment_tuples": 500,
    "moment_max_index": 12,
    "quad_nodes": 10_000,
    "parseval_cases": 100,
    "pair_reps": 200,
}


@dataclass(frozen=True)
class LemmaRow:
    name: str
    statistic: float
    threshold: float
    passed: bool
    detail: str = ""


def check_discrete_gram(m_max: int, l_factor: int, gram: Callable) -> LemmaRow:
    worst = 0.0
    for m in range(2, m_max + 1):
        for k in range(1, m):
            for l in range(1, l_factor * m + 1):
                worst = max(worst, abs(gram(k, l, m) - basis.discrete_gram_direct(k, l, m)))
    return LemmaRow("gram_closed_form_vs_direct", worst, 1e-10, worst <= 1e-10,
                    f"m<={m_max}, k<=m-1, l<={l_factor}m")


def check_discrete_orthonormality(m_max: int) -> LemmaRow:
    worst = 0.0
    for m in range(2, m_max + 1):
        P = basis.trig_matrix(np.arange(1, m + 1) / m, m - 1)
        worst = max(worst, float(np.max(np.abs(P.T @ P / m - np.eye(m - 1)))))
    return LemmaRow("grid_orthonormality", worst, 1e-10, worst <= 1e-10, f"m<={m_max}")


def check_exponential_sums(m_max: int) -> LemmaRow:
    worst = 0.0
    for m in range(1, m_max + 1):
        for k in range(2, 4 * m + 1, 2):
            got = basis.grid_exponential_mean(k, m)
            worst = max(worst, abs(got - basis.grid_exponential_mean_closed(k, m)))
    return LemmaRow("grid_exponential_sums", worst, 1e-12, worst <= 1e-12, f"even k<=4m, m<={m_max}")


def check_fourth_moments(rng, tuples: int, max_index: int, quad_nodes: int) -> LemmaRow:
    idx = rng.integers(1, max_index + 1, size=(tuples, 4))
    slack = [basis.fourth_moment(*map(int, r), quad_nodes) - basis.fourth_moment_bound(*map(int, r))
             for r in idx]
    worst = float(max(slack))
    ok = all(basis.lemma_s1_bound_check(*map(int, r), quad_nodes=quad_nodes) for r in idx)
    return LemmaRow("fourth_moment_bound", worst, 1e-8, ok, f"{tuples} tuples, indices<={max_index}")


def check_orthonormality(quad_nodes: int, K: int = 12) -> LemmaRow:
    t = np.linspace(0.0, 1.0, quad_nodes + 1)
    P = basis.trig_matrix(t, K)
    w = np.full(len(t), 1.0 / quad_nodes)
    w[[0, -1]] *= 0.5
    worst = float(np.max(np.abs(P.T @ (w[:, None] * P) - np.eye(K))))
    return LemmaRow("orthonormality_quadrature", worst, 1e-8, worst <= 1e-8, f"k,l<={K}")


def check_parseval(rng, cases: int, quad_nodes: int) -> LemmaRow:
    worst = 0.0
    for _ in range(cases):
        K, d = int(rng.integers(1, 31)), int(rng.integers(1, 4))
        a = basis.CoefficientExpansion(rng.standard_normal((K, d)))
        b = basis.CoefficientExpansion(rng.standard_normal((int(rng.integers(1, 31)), d)))
        worst = max(worst, abs(basis.ise_between(a, b) - basis.quadrature_ise(a, b, quad_nodes)))
    return LemmaRow("parseval_ise", worst, 1e-6, worst <= 1e-6, f"{cases} random expansions")


def check_aliasing(rng) -> LemmaRow:
    m, K = 6, 5
    beth = basis.CoefficientExpansion(rng.standard_normal((4 * m, 2)))
    got = basis.aliasing_coefficients(beth, m, K).coeffs
    G = np.array([[basis.discrete_gram_direct(k, l, m) for l in range(1, beth.K + 1)]
                  for k in range(1, K + 1)])
    want = G @ beth.coeffs - beth.coeffs[:K]
    worst = float(np.max(np.abs(got - want)))
    return LemmaRow("aliasing_closed_form", worst, 1e-10, worst <= 1e-10, "m=6, K=5, length 4m")


def check_pair_counts(seed: int, reps: int) -> list:
    rows = []
    for n in (50, 100, 200, 400):
        r = pair_count_mc(n, 2, 0.1, reps, rng_seed=[seed, n])
        v = r["ratio_nh"]
        rows.append(LemmaRow(f"pairs_nh_n{n}", v, 4.0, 0.25 <= v <= 4.0, "m=2, h=0.1, ratio in [1/4, 4]"))
    r = pair_count_mc(50, 100, 1e-4, reps, rng_seed=[seed, 1])
    v = r["ratio_nm2h"]
    rows.append(LemmaRow("pairs_nm2h", v, 4.0, 0.25 <= v <= 4.0, "n=50, m=100, h=1e-4, ratio in [1/4, 4]"))
    r = pair_count_mc(20, 200, 0.2, reps, rng_seed=[seed, 2])
    v = r["prob_all_pairs"]
    rows.append(LemmaRow("pairs_all_gaps_kept", v, 0.95, v >= 0.95, "n=20, m=200, h=0.2, P(all gaps kept)"))
    return rows


def verify_lemmas(seed: int = 0, sizes: dict | None = None, gram: Callable | None = None) -> list:
    """Run every registered property; failures are rows, never exceptions.

    ``gram`` replaces the closed-form discrete Gram (used as a negative
    control).
    """
    sz = dict(DEFAULT_SIZES, **(sizes or {}))
    gram = basis.discrete_gram if gram is None else gram
    rng = np.random.default_rng(seed)
    rows = [
        check_discrete_gram(sz["m_max"], sz["l_factor"], gram),
        check_discrete_orthonormality(sz["m_max"]),
        check_exponential_sums(sz["m_max"]),
        check_fourth_moments(rng, sz["moment_tuples"], sz["moment_max_index"], sz["quad_nodes"]),
        check_orthonormality(sz["quad_nodes"]),
        check_parseval(rng, sz["parseval_cases"], sz["quad_nodes"]),
        check_aliasing(rng),
    ]
    rows.extend(check_pair_counts(seed, sz["pair_reps"]))
    return rows


def lemma_report_csv(rows: list) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["property", "statistic", "threshold", "passed", "detail"])
    for r in rows:
        w.writerow([r.name, f"{r.statistic:.17g}", f"{r.threshold:.17g}", int(r.passed), r.detail])
    return buf.getvalue()
