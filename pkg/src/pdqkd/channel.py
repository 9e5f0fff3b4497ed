"""Fibre channel and receiver model: yields, error rates, gain and QBER."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NoSignalError
from .photon_stats import PhotonDistribution

E0 = 0.5


@dataclass(frozen=True)
class ChannelModel:
    """Fiber and receiver parameters; defaults are a standard telecom-fiber set."""

    alpha: float = 0.21       # dB/km
    eta_bob: float = 0.045
    y0: float = 1.7e-6
    e_det: float = 0.033
    e0: float = E0

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")
        for name in ("eta_bob", "y0", "e_det"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.e0 != E0:
            raise ValueError("the vacuum error rate is fixed at 1/2")


def transmittance(c: ChannelModel, l_km: float) -> float:
    """Overall transmittance including the receiver, ``10^(-alpha l / 10) * eta_bob``."""
    if l_km < 0:
        raise ValueError("distance must be non-negative")
    return 10.0 ** (-c.alpha * l_km / 10.0) * c.eta_bob


def eta_n(eta, n):
    """Probability that at least one of n photons survives."""
    # -expm1(n log1p(-eta)) == 1 - (1 - eta)^n without cancellation at small eta
    n = np.asarray(n)
    if eta >= 1.0:
        return np.where(n > 0, 1.0, 0.0) if n.ndim else float(n > 0)
    out = -np.expm1(n * np.log1p(-eta))
    return out if n.ndim else float(out)


def yield_n(c: ChannelModel, eta: float, n):
    en = eta_n(eta, n)
    return c.y0 + en - c.y0 * en


def error_n(c: ChannelModel, eta: float, n):
    """Error rate of n-photon signals; 1/2 for vacuum by definition."""
    n_arr = np.asarray(n)
    y = np.asarray(yield_n(c, eta, n_arr), dtype=float)
    pos = n_arr > 0
    if np.any(pos & (y <= 0)):
        raise NoSignalError("yield is zero; error rate undefined")
    en = np.asarray(eta_n(eta, n_arr), dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        e = np.where(pos, (c.e0 * c.y0 + c.e_det * en) / np.where(y > 0, y, 1.0), c.e0)
    return e if n_arr.ndim else float(e)


def yields_and_errors(c: ChannelModel, eta: float, n_max: int):
    n = np.arange(n_max + 1)
    return yield_n(c, eta, n), error_n(c, eta, n)


def gain_and_qber(c: ChannelModel, l_km: float, p: PhotonDistribution):
    """Overall gain Q and QBER E for source statistics ``p`` at distance ``l_km``.

    Raises:
        NoSignalError: when the gain vanishes.
    """
    y, e = yields_and_errors(c, transmittance(c, l_km), p.n_max)
    return gain_and_qber_from(y, e, p.probs)


def gain_and_qber_from(y, e, probs):
    q = float(np.dot(y, probs))
    if q <= 0:
        raise NoSignalError("gain is zero: no detections")
    return q, float(np.dot(y * e, probs)) / q
