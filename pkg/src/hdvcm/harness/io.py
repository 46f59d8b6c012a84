"""CSV exchange for datasets and fitted coefficients.

Dataset files
  x file:    individual_id, x_1..x_p             (one row per individual)
  long file: individual_id, time, y, z_1..z_q    (one row per observation)

Fit files (``<prefix>``)
  <prefix>_beta.csv / <prefix>_gamma.csv: k, coef_1..coef_d (k is 1-based)
  <prefix>_manifest.csv: key, value (K levels, h, scheme, lambdas, ...)

Floats are written with 17 significant digits so files round-trip exactly.
"""
from __future__ import annotations

import csv

import numpy as np

from ..basis import CoefficientExpansion
from ..estimators import FitResult, LongitudinalDataset
from ..sampling import TimeDesign, TimeScheme, common_grid


class CSVFormatError(ValueError):
    pass


def _f(v) -> str:
    return f"{float(v):.17g}"


def write_dataset_csv(d: LongitudinalDataset, x_path, long_path, ids=None):
    ids = list(range(d.n)) if ids is None else list(ids)
    with open(x_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["individual_id"] + [f"x_{j + 1}" for j in range(d.p)])
        for i, xi in zip(ids, d.x):
            w.writerow([i] + [_f(v) for v in xi])
    with open(long_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["individual_id", "time", "y"] + [f"z_{j + 1}" for j in range(d.q)])
        for i, t, y, z in zip(ids, d.times.times, d.y, d.z):
            for j in range(len(t)):
                w.writerow([i, _f(t[j]), _f(y[j])] + [_f(v) for v in z[j]])


def _number(text: str, path, lineno: int, col: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise CSVFormatError(f"{path}:{lineno}: non-numeric value {text!r} in column {col}") from None
    if not np.isfinite(v):
        raise CSVFormatError(f"{path}:{lineno}: non-finite value in column {col}")
    return v


def _read(path, required: list, prefix: str):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise CSVFormatError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if header[: len(required)] != required:
        raise CSVFormatError(f"{path}:1: header must start with {', '.join(required)}")
    extra = header[len(required):]
    for j, name in enumerate(extra):
        if name != f"{prefix}_{j + 1}":
            raise CSVFormatError(f"{path}:1: expected column {prefix}_{j + 1}, found {name!r}")
    return header, rows[1:]


def normalize_times(raw: np.ndarray) -> np.ndarray:
    """Map the distinct observed times u_1 < ... < u_M onto [0, (M-1)/M]:
    t = (u - u_1) / (u_M - u_1) * (M - 1) / M."""
    u = np.unique(raw)
    if len(u) < 2:
        return np.zeros_like(raw)
    M = len(u)
    return (raw - u[0]) / (u[-1] - u[0]) * (M - 1) / M


def ingest_csv(x_path, long_path, normalize: bool = False) -> LongitudinalDataset:
    """Parse the two dataset files; errors name the file and line."""
    xh, xrows = _read(x_path, ["individual_id"], "x")
    p = len(xh) - 1
    order, xs = [], {}
    for lineno, row in enumerate(xrows, start=2):
        if not row:
            continue
        if len(row) != p + 1:
            raise CSVFormatError(f"{x_path}:{lineno}: expected {p + 1} fields, got {len(row)}")
        key = row[0].strip()
        if key in xs:
            raise CSVFormatError(f"{x_path}:{lineno}: duplicate individual_id {key!r}")
        xs[key] = [_number(v, x_path, lineno, xh[j + 1]) for j, v in enumerate(row[1:])]
        order.append(key)
    lh, lrows = _read(long_path, ["individual_id", "time", "y"], "z")
    q = len(lh) - 3
    obs = {k: [] for k in order}
    for lineno, row in enumerate(lrows, start=2):
        if not row:
            continue
        if len(row) != q + 3:
            raise CSVFormatError(f"{long_path}:{lineno}: expected {q + 3} fields, got {len(row)}")
        key = row[0].strip()
        if key not in obs:
            raise CSVFormatError(f"{long_path}:{lineno}: unknown individual_id {key!r}")
        vals = [_number(v, long_path, lineno, lh[j + 1]) for j, v in enumerate(row[1:])]
        obs[key].append((lineno, vals))
    missing = [k for k in order if not obs[k]]
    if missing:
        raise CSVFormatError(f"{long_path}: no observations for individual_id(s) {', '.join(missing)}")
    all_t = np.array([v[0] for k in order for _, v in obs[k]])
    if normalize:
        all_t = normalize_times(all_t)
    times, ys, zs = [], [], []
    pos = 0
    for k in order:
        rows = obs[k]
        t = all_t[pos:pos + len(rows)]
        pos += len(rows)
        bad = np.flatnonzero((t < 0) | (t > 1))
        if len(bad):
            raise CSVFormatError(f"{long_path}:{rows[bad[0]][0]}: time {t[bad[0]]!r} outside [0, 1]"
                                 + (" after normalization" if normalize else ""))
        times.append(t)
        ys.append(np.array([v[1] for _, v in rows]))
        zs.append(np.array([v[2:] for _, v in rows]).reshape(len(rows), q))
    scheme = TimeScheme.RANDOM
    m = len(times[0])
    if all(len(t) == m and np.array_equal(t, common_grid(m)) for t in times):
        scheme = TimeScheme.COMMON
    td = TimeDesign(scheme, tuple(times))
    x = np.array([xs[k] for k in order]).reshape(len(order), p)
    return LongitudinalDataset(td, x, tuple(zs), tuple(ys))


def _write_expansion(path, c: CoefficientExpansion):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k"] + [f"coef_{j + 1}" for j in range(c.d)])
        for k, row in enumerate(c.coeffs, start=1):
            w.writerow([k] + [_f(v) for v in row])


def _read_expansion(path) -> CoefficientExpansion:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return CoefficientExpansion(np.array([[float(v) for v in r[1:]] for r in rows[1:]]))


def write_fit(fit: FitResult, prefix: str) -> list:
    """Write the coefficient CSVs and the manifest; returns the paths written."""
    paths = []
    manifest = []
    if fit.beta_hat is not None:
        path = f"{prefix}_beta.csv"
        _write_expansion(path, fit.beta_hat)
        paths.append(path)
        manifest.append(("K_beta", str(fit.beta_hat.K)))
        manifest.append(("beta_lambdas", ";".join(_f(v) for v in fit.beta_lambdas)))
    if fit.gamma_hat is not None:
        path = f"{prefix}_gamma.csv"
        _write_expansion(path, fit.gamma_hat)
        paths.append(path)
        manifest.append(("K_gamma", str(fit.gamma_hat.K)))
        manifest.append(("gamma_lambda", _f(fit.gamma_lambda)))
    for key in ("h", "scheme", "whitened", "time_scheme", "beta_mode", "gamma_mode"):
        if key in fit.diagnostics:
            v = fit.diagnostics[key]
            manifest.append((key, _f(v) if isinstance(v, float) else str(v)))
    path = f"{prefix}_manifest.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["key", "value"])
        w.writerows(manifest)
    paths.append(path)
    return paths


def read_fit(prefix: str) -> FitResult:
    with open(f"{prefix}_manifest.csv", newline="") as fh:
        man = dict(list(csv.reader(fh))[1:])
    beta = gamma = lams = glam = None
    if "K_beta" in man:
        beta = _read_expansion(f"{prefix}_beta.csv")
        lams = np.array([float(v) for v in man["beta_lambdas"].split(";")])
    if "K_gamma" in man:
        gamma = _read_expansion(f"{prefix}_gamma.csv")
        glam = float(man["gamma_lambda"])
    diag = {k: v for k, v in man.items() if k in ("scheme", "whitened", "time_scheme", "beta_mode", "gamma_mode")}
    if "h" in man:
        diag["h"] = float(man["h"])
    return FitResult(gamma, beta, glam, lams, diag)
