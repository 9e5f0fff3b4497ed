"""Line-oriented ``key = value`` run configuration."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields, replace

import numpy as np

from .channel import ChannelModel
from .errors import ConfigError
from .estimation import EstimationMode
from .keyrate import MAX_BSTEPS
from .photon_stats import SourceKind
from .pipeline import RateContext
from .tmd import TMDModel

_TRUE = {"on", "true", "yes", "1"}
_FALSE = {"off", "false", "no", "0"}


@dataclass(frozen=True)
class RunConfig:
    source: SourceKind = SourceKind.POISSONIAN
    chi: float | None = None          # None: optimise per distance
    alpha: float = 0.21
    eta_bob: float = 0.045
    y0: float = 1.7e-6
    e_det: float = 0.033
    f_ec: float = 1.22
    q: float = 1.0
    n_bins: int = 8
    eta_tmd: float = 0.5
    n_max: int = 20
    locc: int = 1
    filtered: bool = False
    estimation: EstimationMode = EstimationMode.EXACT
    max_bsteps: int = MAX_BSTEPS
    l_start: float = 0.0
    l_end: float = 220.0
    l_step: float = 1.0
    monte_carlo: bool = False
    mc_l_km: float = 50.0
    n_total: int = 1_000_000
    seed: int = 1
    m_subset: int = 0                 # 0: a tenth of the session
    delta_scale: float = 0.8
    out: str = "rates.csv"

    def context(self) -> RateContext:
        return RateContext(
            source=self.source,
            channel=ChannelModel(self.alpha, self.eta_bob, self.y0, self.e_det),
            tmd=TMDModel(self.n_bins, self.eta_tmd, self.n_max),
            filtered=self.filtered, locc=self.locc, estimation=self.estimation,
            chi=self.chi, q=self.q, f_ec=self.f_ec, n_max=self.n_max,
            max_bsteps=self.max_bsteps, delta_scale=self.delta_scale)

    def grid(self) -> np.ndarray:
        n = int(round((self.l_end - self.l_start) / self.l_step)) + 1
        return self.l_start + self.l_step * np.arange(n)


_FIELDS = {f.name: f for f in fields(RunConfig)}


def _convert(key: str, raw: str):
    kind = _FIELDS[key].type
    try:
        if key == "source":
            return SourceKind(raw.lower())
        if key == "estimation":
            return EstimationMode(raw.lower())
        if key == "chi":
            return None if raw.lower() in ("opt", "optimize", "auto") else float(raw)
        if kind == "bool":
            if raw.lower() in _TRUE:
                return True
            if raw.lower() in _FALSE:
                return False
            raise ValueError
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r}", key=key) from None


def _check(key: str, ok: bool, what: str):
    if not ok:
        raise ConfigError(f"{key}: {what}", key=key)


def validate(cfg: RunConfig) -> RunConfig:
    for k in ("alpha", "eta_bob", "y0", "e_det", "f_ec", "q", "eta_tmd", "l_start", "l_end",
              "l_step", "mc_l_km", "delta_scale"):
        _check(k, math.isfinite(getattr(cfg, k)), "must be finite")
    for k in ("eta_bob", "y0", "e_det", "eta_tmd", "q"):
        _check(k, 0.0 <= getattr(cfg, k) <= 1.0, "must lie in [0, 1]")
    _check("alpha", cfg.alpha >= 0, "must be >= 0")
    _check("f_ec", cfg.f_ec >= 1, "must be >= 1")
    if cfg.chi is not None:
        _check("chi", 0 < cfg.chi <= 0.5 or cfg.source is SourceKind.SINGLE_PHOTON,
               "must lie in (0, 0.5]")
    _check("n_bins", cfg.n_bins >= 1, "must be >= 1")
    _check("n_max", cfg.n_max >= 1, "must be >= 1")
    _check("locc", cfg.locc in (1, 2), "must be 1 or 2")
    _check("max_bsteps", 0 <= cfg.max_bsteps <= MAX_BSTEPS, f"must lie in [0, {MAX_BSTEPS}]")
    _check("l_start", cfg.l_start >= 0, "must be >= 0")
    _check("l_step", cfg.l_step > 0, "must be > 0")
    _check("l_end", cfg.l_end >= cfg.l_start, "must be >= l_start")
    _check("mc_l_km", cfg.mc_l_km >= 0, "must be >= 0")
    _check("n_total", cfg.n_total >= 1, "must be >= 1")
    _check("seed", cfg.seed >= 0, "must be >= 0")
    _check("m_subset", 0 <= cfg.m_subset <= cfg.n_total, "must lie in [0, n_total]")
    _check("delta_scale", cfg.delta_scale >= 0, "must be >= 0")
    _check("out", bool(cfg.out), "must not be empty")
    return cfg


def apply_setting(cfg: RunConfig, key: str, raw: str) -> RunConfig:
    key = key.strip()
    if key not in _FIELDS:
        raise ConfigError(f"unknown key {key!r}")
    return replace(cfg, **{key: _convert(key, raw.strip())})


def parse_config(text: str, base: RunConfig | None = None) -> RunConfig:
    cfg = base or RunConfig()
    where = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"expected 'key = value', got {body!r}", lineno)
        key, raw = body.split("=", 1)
        try:
            cfg = apply_setting(cfg, key, raw)
        except ConfigError as exc:
            raise ConfigError(exc.message, lineno, exc.key) from None
        where[key.strip()] = lineno
    try:
        return validate(cfg)
    except ConfigError as exc:
        raise ConfigError(exc.message, where.get(exc.key), exc.key) from None


def _fmt(v) -> str:
    if v is None:
        return "opt"
    if isinstance(v, bool):
        return "on" if v else "off"
    if isinstance(v, float):
        return repr(v)
    if hasattr(v, "value"):
        return v.value
    return str(v)


def serialize_config(cfg: RunConfig) -> str:
    return "".join(f"{k} = {_fmt(v)}\n" for k, v in asdict(cfg).items())
