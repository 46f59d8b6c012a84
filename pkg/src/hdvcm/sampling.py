"""Sampling-time designs, difference sets and the sample-size Monte Carlo.

Individuals and sorted positions are 0-based.  A pair ``(i, j)`` joins the
order statistics ``j`` and ``j + 1`` of individual ``i``; the paired scheme
uses even 0-based ``j`` (odd positions in 1-based counting).
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy import linalg


class TimeScheme(str, enum.Enum):
    RANDOM = "random"
    COMMON = "common"


class PairScheme(str, enum.Enum):
    PAIRED = "A"
    OVERLAPPING = "B"


@dataclass(frozen=True)
class TimeDesign:
    """Per-individual sampling times, stored in observation order.

    ``order[i]`` is the stable argsort of ``times[i]`` so that
    ``times[i][order[i]]`` are the order statistics.
    """

    scheme: TimeScheme
    times: tuple

    def __post_init__(self):
        times = tuple(np.asarray(t, dtype=float) for t in self.times)
        if not times:
            raise ValueError("need at least one individual")
        for t in times:
            if t.ndim != 1 or len(t) < 1:
                raise ValueError("each individual needs at least one time")
            if not np.all(np.isfinite(t)):
                raise ValueError("times must be finite")
            t.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "scheme", TimeScheme(self.scheme))
        if self.scheme is TimeScheme.COMMON:
            m = len(times[0])
            grid = common_grid(m)
            if any(len(t) != m or not np.array_equal(t, grid) for t in times):
                raise ValueError("common-grid designs need t_ij = j/m for every individual")
        order = tuple(np.argsort(t, kind="stable") for t in times)
        object.__setattr__(self, "_order", order)

    @property
    def n(self) -> int:
        return len(self.times)

    @property
    def counts(self) -> np.ndarray:
        return np.array([len(t) for t in self.times])

    @property
    def m(self) -> int:
        """Common number of observations; raises if counts differ."""
        c = self.counts
        if np.any(c != c[0]):
            raise ValueError("individuals have different numbers of observations")
        return int(c[0])

    @property
    def order(self) -> tuple:
        return self._order

    def sorted_times(self, i: int) -> np.ndarray:
        return self.times[i][self._order[i]]


def common_grid(m: int) -> np.ndarray:
    return np.arange(1, m + 1) / m


def generate_times(scheme, n: int, m, rng_seed=None) -> TimeDesign:
    """Draw a time design.  ``m`` is an int or a length-n sequence of counts."""
    scheme = TimeScheme(scheme)
    if n < 1:
        raise ValueError("n must be >= 1")
    counts = np.full(n, int(m)) if np.ndim(m) == 0 else np.asarray(m, dtype=int)
    if len(counts) != n or np.any(counts < 1):
        raise ValueError("need n positive per-individual counts")
    if scheme is TimeScheme.COMMON:
        if np.any(counts != counts[0]):
            raise ValueError("common grid requires equal m_i")
        grid = common_grid(int(counts[0]))
        return TimeDesign(scheme, tuple(grid.copy() for _ in range(n)))
    rng = np.random.default_rng(rng_seed)
    return TimeDesign(scheme, tuple(rng.uniform(0.0, 1.0, c) for c in counts))


@dataclass(frozen=True)
class DifferencePlan:
    scheme: PairScheme
    h: float
    pairs: np.ndarray  # (N, 2) rows of (individual, lower sorted position)

    @property
    def N(self) -> int:
        return len(self.pairs)

    def individual_slices(self) -> dict:
        """Map individual -> slice of rows, rows being grouped by individual."""
        out = {}
        if self.N == 0:
            return out
        ids = self.pairs[:, 0]
        starts = np.flatnonzero(np.r_[True, ids[1:] != ids[:-1]])
        ends = np.r_[starts[1:], len(ids)]
        for s, e in zip(starts, ends):
            out[int(ids[s])] = slice(int(s), int(e))
        return out


def build_difference_plan(td: TimeDesign, h: float, scheme) -> DifferencePlan:
    """Pairs of consecutive order statistics closer than ``h``.

    Under the paired scheme an odd trailing observation is dropped.
    """
    if h <= 0:
        raise ValueError("bandwidth must be positive")
    scheme = PairScheme(scheme)
    rows = []
    for i in range(td.n):
        s = td.sorted_times(i)
        mi = len(s)
        if mi < 2:
            continue
        gaps = np.diff(s)
        if scheme is PairScheme.PAIRED:
            j = np.arange(0, mi - 1, 2)
        else:
            j = np.arange(mi - 1)
        keep = j[gaps[j] < h]
        rows.extend((i, int(jj)) for jj in keep)
    pairs = np.array(rows, dtype=int).reshape(-1, 2)
    return DifferencePlan(scheme, float(h), pairs)


def pair_correlation(positions: np.ndarray) -> np.ndarray:
    """Correlation of consecutive differences of iid errors for one individual.

    Unit diagonal, -1/2 between pairs that share an endpoint.
    """
    positions = np.asarray(positions)
    C = np.eye(len(positions))
    if len(positions) > 1:
        shared = np.diff(positions) == 1
        idx = np.flatnonzero(shared)
        C[idx, idx + 1] = C[idx + 1, idx] = -0.5
    return C


def whitening_matrix(plan: DifferencePlan) -> dict:
    """Per-individual lower-triangular B with B Corr B^T = I.

    Applying B to the differenced rows leaves each transformed error with the
    variance of a single difference (2 sigma^2).
    """
    if plan.scheme is not PairScheme.OVERLAPPING:
        raise ValueError("whitening applies to the overlapping scheme only")
    out = {}
    for i, sl in plan.individual_slices().items():
        C = pair_correlation(plan.pairs[sl, 1])
        try:
            L = linalg.cholesky(C, lower=True)
        except linalg.LinAlgError as exc:  # pragma: no cover - cannot happen for valid plans
            raise RuntimeError(f"singular correlation block for individual {i}") from exc
        out[i] = linalg.solve_triangular(L, np.eye(len(C)), lower=True)
    return out


def _gap_counts(t_sorted: np.ndarray, h: float):
    gaps = np.diff(t_sorted, axis=-1) < h
    n_tilde = gaps.sum(axis=(-1, -2))
    n_paired = gaps[..., 0::2].sum(axis=(-1, -2))
    return n_tilde, n_paired


def pair_count_mc(n: int, m: int, h: float, replications: int, rng_seed=None,
                    batch: int = 50) -> dict:
    """Monte Carlo summary of difference-set sizes under uniform random times.

    Returns the mean of |B_h|, the mean of 1 / (|A_h| + 1), and the
    probability that every consecutive gap survives (|B_h| = n(m - 1)).
    """
    if replications < 1:
        raise ValueError("replications must be >= 1")
    rng = np.random.default_rng(rng_seed)
    nt, npaired = [], []
    done = 0
    while done < replications:
        b = min(batch, replications - done)
        t = np.sort(rng.uniform(0.0, 1.0, (b, n, m)), axis=-1)
        a, c = _gap_counts(t, h)
        nt.append(a)
        npaired.append(c)
        done += b
    nt = np.concatenate(nt)
    npaired = np.concatenate(npaired)
    full = n * (m - 1)
    return {
        "n": n, "m": m, "h": h, "replications": replications,
        "mean_n_tilde": float(nt.mean()),
        "mean_inv_n_plus_1": float(np.mean(1.0 / (npaired + 1.0))),
        "prob_all_pairs": float(np.mean(nt == full)),
        "ratio_nh": float(nt.mean() / (n * h)),
        "ratio_nm2h": float(nt.mean() / (n * m * m * h)),
    }
