"""Trigonometric basis on the unit interval and coefficient-space arithmetic.

Frequencies are 1-based throughout: ``trig_basis(1, t)`` is the constant
function, even ``k`` are cosines and odd ``k >= 3`` are sines.  Row ``k - 1``
of a :class:`CoefficientExpansion` holds the coefficient vector of frequency
``k``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

SQRT2 = np.sqrt(2.0)


@dataclass(frozen=True)
class CoefficientExpansion:
    """A d-vector of functions on (0, 1) stored as a K x d matrix of
    trigonometric coefficients."""

    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        if c.ndim == 1:
            c = c[:, None]
        if c.ndim != 2 or c.shape[0] < 1 or c.shape[1] < 1:
            raise ValueError(f"coefficients must be a non-empty K x d matrix, got shape {c.shape}")
        if not np.all(np.isfinite(c)):
            raise ValueError("coefficients must be finite")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def K(self) -> int:
        return self.coeffs.shape[0]

    @property
    def d(self) -> int:
        return self.coeffs.shape[1]

    @classmethod
    def zeros(cls, K: int, d: int) -> "CoefficientExpansion":
        return cls(np.zeros((K, d)))

    def padded(self, K: int) -> np.ndarray:
        """Coefficient matrix zero-padded (never truncated) to at least K rows."""
        if K <= self.K:
            return np.array(self.coeffs)
        out = np.zeros((K, self.d))
        out[: self.K] = self.coeffs
        return out

    def truncated(self, K: int) -> "CoefficientExpansion":
        return CoefficientExpansion(self.padded(K)[:K])

    def column(self, j: int) -> "CoefficientExpansion":
        return CoefficientExpansion(self.coeffs[:, [j]])

    def __call__(self, t):
        return eval_expansion(self, t)


@dataclass(frozen=True)
class FunctionOnUnitInterval:
    """Callable wrapper recording where a function came from
    (``"expansion"``, ``"spline"`` or ``"closed-form"``)."""

    evaluator: Callable[[np.ndarray], np.ndarray]
    description: str = "closed-form"
    meta: dict = field(default_factory=dict, compare=False)

    def __call__(self, t):
        return self.evaluator(t)

    @classmethod
    def from_expansion(cls, c: CoefficientExpansion) -> "FunctionOnUnitInterval":
        return cls(c.__call__, "expansion", {"expansion": c})


def trig_basis(k: int, t):
    """Value of the k-th trigonometric basis function at t (scalar or array)."""
    k = int(k)
    if k < 1:
        raise ValueError(f"basis index must be >= 1, got {k}")
    t = np.asarray(t, dtype=float)
    if k == 1:
        out = np.ones_like(t)
    elif k % 2 == 0:
        out = SQRT2 * np.cos(np.pi * k * t)
    else:
        out = SQRT2 * np.sin(np.pi * (k - 1) * t)
    return float(out) if out.ndim == 0 else out


def trig_matrix(t, K: int) -> np.ndarray:
    """Matrix with entry [j, k-1] = phi_k(t_j) for k = 1..K."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if K < 1:
        raise ValueError(f"truncation level must be >= 1, got {K}")
    k = np.arange(1, K + 1)
    freq = np.where(k % 2 == 0, k, k - 1).astype(float)
    arg = np.pi * np.outer(t, freq)
    out = np.where(k % 2 == 0, SQRT2 * np.cos(arg), SQRT2 * np.sin(arg))
    out[:, 0] = 1.0
    return out


def eval_expansion(c: CoefficientExpansion, t):
    """Evaluate sum_k c[k] phi_k(t).

    A scalar ``t`` gives a length-d vector, an array of times gives a
    ``len(t) x d`` matrix.
    """
    scalar = np.ndim(t) == 0
    vals = trig_matrix(t, c.K) @ c.coeffs
    return vals[0] if scalar else vals


def ise_between(a: CoefficientExpansion, b: CoefficientExpansion) -> float:
    """Integrated squared error between two expansions, via Parseval."""
    if a.d != b.d:
        raise ValueError(f"dimension mismatch: {a.d} vs {b.d}")
    K = max(a.K, b.K)
    diff = a.padded(K) - b.padded(K)
    return float(np.sum(diff * diff))


def trapezoid_integral(f: Callable[[np.ndarray], np.ndarray], nodes: int = 10_000) -> np.ndarray:
    """Composite trapezoid rule for int_0^1 f(t) dt on a uniform grid.

    ``f`` maps an array of times to an array whose first axis is time.
    """
    t = np.linspace(0.0, 1.0, nodes + 1)
    vals = np.asarray(f(t), dtype=float)
    w = np.full(t.shape, 1.0 / nodes)
    w[0] = w[-1] = 0.5 / nodes
    return np.tensordot(w, vals, axes=(0, 0))


def quadrature_ise(f: Callable, g: Callable, nodes: int = 10_000) -> float:
    """Integrated squared distance of two (vector-valued) functions by quadrature."""

    def sq(t):
        diff = np.asarray(f(t)) - np.asarray(g(t))
        diff = diff.reshape(len(t), -1)
        return np.sum(diff * diff, axis=1)

    return float(trapezoid_integral(sq, nodes))


# -- discrete orthogonality and aliasing on the grid j/m ---------------------


def _even_multiple(num: int, m: int) -> bool:
    # num / m in 2Z
    return num % (2 * m) == 0


def discrete_gram(k: int, l: int, m: int) -> float:
    """Closed form of m^-1 sum_{j=1}^m phi_k(j/m) phi_l(j/m) for 1 <= k <= m-1."""
    k, l, m = int(k), int(l), int(m)
    if k < 1 or l < 1:
        raise ValueError("basis indices must be >= 1")
    if k >= m:
        raise ValueError(f"closed form requires k <= m - 1 (k={k}, m={m})")
    if l <= m - 1:
        return 1.0 if k == l else 0.0
    if k == 1:
        return SQRT2 if _even_multiple(l, m) else 0.0
    if k % 2 == 0:
        return float(_even_multiple(l - k, m)) + float(_even_multiple(l + k, m))
    return float(_even_multiple(l - k, m)) - float(_even_multiple(l + k - 2, m))


def discrete_gram_direct(k: int, l: int, m: int) -> float:
    """m^-1 sum_{j=1}^m phi_k(j/m) phi_l(j/m) by explicit summation."""
    t = np.arange(1, m + 1) / m
    return float(np.mean(trig_basis(k, t) * trig_basis(l, t)))


def grid_exponential_mean(k: int, m: int) -> complex:
    """m^-1 sum_{j=1}^m exp(i pi k j / m) by explicit summation."""
    j = np.arange(1, m + 1)
    return complex(np.mean(np.exp(1j * np.pi * k * j / m)))


def grid_exponential_mean_closed(k: int, m: int) -> float:
    """Closed form of :func:`grid_exponential_mean` for even k."""
    if k % 2:
        raise ValueError("closed form holds for even k only")
    return 1.0 if _even_multiple(k, m) else 0.0


def aliasing_coefficients(beth: CoefficientExpansion, m: int, K: int) -> CoefficientExpansion:
    """Aliased coefficient mass folded onto frequencies 1..K by the grid j/m.

    The infinite sums over r are truncated at the stored length of ``beth``.
    """
    m, K = int(m), int(K)
    if K >= m:
        raise ValueError(f"aliasing closed form requires K <= m - 1 (K={K}, m={m})")
    L = beth.K
    c = beth.coeffs

    def row(idx):
        return c[idx - 1] if 1 <= idx <= L else 0.0

    out = np.zeros((K, beth.d))
    rmax = L // (2 * m) + 1
    for k in range(1, K + 1):
        acc = np.zeros(beth.d)
        for r in range(1, rmax + 1):
            base = 2 * r * m
            if k == 1:
                acc = acc + SQRT2 * row(base)
            elif k % 2 == 0:
                acc = acc + row(base + k) + row(base - k)
            else:
                acc = acc + row(base + k) - row(base + 2 - k)
        out[k - 1] = acc
    return CoefficientExpansion(out)


def sinc_kernel(x):
    """sin(pi x) / (pi x) with value 1 at x = 0."""
    out = np.sinc(np.asarray(x, dtype=float))
    return float(out) if out.ndim == 0 else out


# -- B-splines ---------------------------------------------------------------


def clamped_knots(degree: int, interior=(), lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
    interior = list(interior)
    return np.array([lo] * (degree + 1) + interior + [hi] * (degree + 1), dtype=float)


def bspline_basis(degree: int, knots, j: int, t):
    """Cox-de Boor value of the j-th (0-based) B-spline of the given degree.

    The last non-degenerate knot span is treated as closed on the right so
    that the basis sums to one on the whole knot range.  Outside the knot
    range the value is 0.
    """
    knots = np.asarray(knots, dtype=float)
    if np.any(np.diff(knots) < 0):
        raise ValueError("knots must be nondecreasing")
    nbasis = len(knots) - degree - 1
    if not 0 <= j < nbasis:
        raise ValueError(f"basis index {j} outside 0..{nbasis - 1}")
    t = np.asarray(t, dtype=float)
    scalar = t.ndim == 0
    t = np.atleast_1d(t)

    last = np.nonzero(knots[1:] > knots[:-1])[0]
    last_span = last[-1] if len(last) else -1

    def N0(i):
        left, right = knots[i], knots[i + 1]
        inside = (t >= left) & (t < right)
        if i == last_span:
            inside |= t == right
        return inside.astype(float)

    # triangular table over the spans j..j+degree
    vals = [N0(i) for i in range(j, j + degree + 1)]
    for p in range(1, degree + 1):
        nxt = []
        for off in range(degree + 1 - p):
            i = j + off
            a = knots[i + p] - knots[i]
            b = knots[i + p + 1] - knots[i + 1]
            term = np.zeros_like(t)
            if a > 0:
                term += (t - knots[i]) / a * vals[off]
            if b > 0:
                term += (knots[i + p + 1] - t) / b * vals[off + 1]
            nxt.append(term)
        vals = nxt
    out = vals[0]
    out = np.where((t < knots[0]) | (t > knots[-1]), 0.0, out)
    return float(out[0]) if scalar else out


def bspline_matrix(degree: int, knots, t) -> np.ndarray:
    knots = np.asarray(knots, dtype=float)
    nbasis = len(knots) - degree - 1
    return np.column_stack([bspline_basis(degree, knots, j, t) for j in range(nbasis)])


# -- fourth moments ----------------------------------------------------------


def fourth_moment_bound(a: int, b: int, k: int, l: int) -> int:
    """Right-hand side of the Kronecker-delta bound on int phi_a phi_b phi_k phi_l."""

    def d(x, y):
        return int(x == y)

    total = (
        d(a + b, k + l) + d(a + b + k, l) + d(a + b + l, k) + d(a + k + l, b)
        + d(a, b + k + l) + d(a + k, b + l) + d(a + l, b + k)
    )
    total += d(l, 1) * (d(a + b, k) + d(a + k, b) + d(a, b + k))
    total += d(k, 1) * (d(a + b, l) + d(a + l, b) + d(a, b + l))
    total += d(b, 1) * (d(a + k, l) + d(a + l, k) + d(a, k + l))
    total += d(a, 1) * (d(b + k, l) + d(b + l, k) + d(b, k + l))
    return total


def fourth_moment(a: int, b: int, k: int, l: int, quad_nodes: int = 10_000) -> float:
    """int_0^1 phi_a phi_b phi_k phi_l dt by the trapezoid rule."""
    return float(trapezoid_integral(
        lambda t: trig_basis(a, t) * trig_basis(b, t) * trig_basis(k, t) * trig_basis(l, t),
        quad_nodes,
    ))


def lemma_s1_bound_check(a: int, b: int, k: int, l: int, quad_nodes: int = 10_000,
                         tol: float = 1e-8) -> bool:
    """True when the quadrature fourth moment respects the delta bound."""
    if min(a, b, k, l) < 1:
        raise ValueError("basis indices must be >= 1")
    return fourth_moment(a, b, k, l, quad_nodes) <= fourth_moment_bound(a, b, k, l) + tol
