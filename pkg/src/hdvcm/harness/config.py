"""Simulation configuration and the flat ``key = value`` config format."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass

from ..estimators import TheoryParams


@dataclass(frozen=True)
class SimConfig:
    n: int = 200
    m: int = 25
    p: int = 200
    q: int = 0
    s_beta: int = 15
    s_gamma: int = 0
    basis: str = "trig"  # trig | bspline
    times: str = "common"  # common | random
    pair_scheme: str = "A"
    whiten: bool = False
    mode: str = "hd"  # hd | ld
    K_beta_grid: tuple = ()  # empty: 1..min(20, m - 1)
    K_gamma_grid: tuple = (2, 4, 6, 8)
    h: float = 0.0  # 0: choose by CV over gap quantiles
    h_quantiles: tuple = (0.5, 0.75, 0.9, 1.0)
    n_lambda: int = 30
    folds: int = 5
    replications: int = 50
    rng_seed: int = 0
    tau: float = 0.05
    noise_sd: float = 1.0
    random_effects: bool = True
    band_points: int = 512
    coord: int = 0
    alpha: float = 2.0
    delta_c: float = -1.0  # negative: no enlargement
    t: float = 2.0

    def __post_init__(self):
        if not 0 <= self.s_beta <= self.p:
            raise ValueError(f"s_beta={self.s_beta} must lie in [0, p={self.p}]")
        if not 0 <= self.s_gamma <= self.q:
            raise ValueError(f"s_gamma={self.s_gamma} must lie in [0, q={self.q}]")
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if self.n < 1 or self.m < 1:
            raise ValueError("n and m must be positive")
        if self.basis not in ("trig", "bspline"):
            raise ValueError(f"basis must be 'trig' or 'bspline', got {self.basis!r}")
        if self.times not in ("common", "random"):
            raise ValueError(f"times must be 'common' or 'random', got {self.times!r}")
        if self.mode not in ("hd", "ld"):
            raise ValueError(f"mode must be 'hd' or 'ld', got {self.mode!r}")
        if self.p == 0 and self.q == 0:
            raise ValueError("need p > 0 or q > 0")

    @property
    def k_beta_grid(self) -> tuple:
        if self.K_beta_grid:
            return tuple(int(k) for k in self.K_beta_grid)
        top = 20 if self.times == "random" else min(20, self.m - 1)
        return tuple(range(1, top + 1))

    @property
    def theory(self) -> TheoryParams:
        return TheoryParams(alpha=self.alpha, sigma_eps=self.noise_sd, t=self.t,
                            delta_c=None if self.delta_c < 0 else self.delta_c)

    def replace(self, **kw) -> "SimConfig":
        return dataclasses.replace(self, **kw)


_FIELDS = {f.name: f for f in dataclasses.fields(SimConfig)}


def _convert(name: str, raw: str):
    default = _FIELDS[name].default
    raw = raw.strip()
    if isinstance(default, bool):
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{name}: expected a boolean, got {raw!r}")
    if isinstance(default, tuple):
        parts = [s for s in raw.replace(" ", "").split(",") if s]
        kind = float if name in ("h_quantiles",) else int
        return tuple(kind(s) for s in parts)
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    return raw


def coerce_fields(values: dict) -> dict:
    """Convert string values to the field types; unknown keys are errors."""
    out = {}
    for k, v in values.items():
        if k not in _FIELDS:
            raise ValueError(f"unknown configuration key {k!r}")
        out[k] = _convert(k, v) if isinstance(v, str) else v
    return out


def parse_config_text(text: str) -> dict:
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in _FIELDS:
            raise ValueError(f"line {lineno}: unknown configuration key {key!r}")
        try:
            values[key] = _convert(key, val)
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from None
    return values


def load_config(path) -> SimConfig:
    with open(path) as fh:
        return SimConfig(**parse_config_text(fh.read()))


def format_config(cfg: SimConfig) -> str:
    lines = []
    for name in _FIELDS:
        v = getattr(cfg, name)
        if isinstance(v, tuple):
            v = ",".join(str(x) for x in v)
        lines.append(f"{name} = {v}")
    return "\n".join(lines) + "\n"


__all__ = ["SimConfig", "TheoryParams", "parse_config_text", "load_config", "format_config",
           "coerce_fields"]
