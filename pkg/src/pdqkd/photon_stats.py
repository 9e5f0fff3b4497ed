"""Truncated photon-number distributions for heralded PDC sources."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping

import numpy as np

from .errors import TruncationError

DEFAULT_N_MAX = 20
DEFAULT_TAIL_TOL = 1e-10
NORM_TOL = 1e-12


class SourceKind(str, enum.Enum):
    POISSONIAN = "poissonian"
    THERMAL = "thermal"
    SINGLE_PHOTON = "single_photon"


@dataclass(frozen=True)
class SourceSpec:
    kind: SourceKind
    chi: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", SourceKind(self.kind))
        if self.kind is not SourceKind.SINGLE_PHOTON and not self.chi > 0:
            raise ValueError(f"chi must be positive for {self.kind.value} sources, got {self.chi}")


@dataclass(frozen=True, eq=False)
class PhotonDistribution:
    """Photon-number probabilities p(0..n_max) plus the mass cut off above n_max.

    The array is stored read-only. ``meta`` carries diagnostics from the
    operation that produced the distribution (e.g. inversion residuals).
    """

    probs: np.ndarray
    tail_mass: float = 0.0
    meta: Mapping = field(default_factory=dict)

    def __post_init__(self):
        probs = np.array(self.probs, dtype=float)
        if probs.ndim != 1 or probs.size < 2:
            raise ValueError("probs must be a 1-d vector covering at least n = 0, 1")
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "tail_mass", float(self.tail_mass))
        object.__setattr__(self, "meta", MappingProxyType(dict(self.meta)))
        if self.meta.get("unchecked"):
            return
        if np.any(probs < 0) or self.tail_mass < 0:
            raise ValueError("probabilities must be non-negative")
        total = probs.sum() + self.tail_mass
        if abs(total - 1.0) > NORM_TOL:
            raise ValueError(f"probabilities sum to {total!r}, expected 1")

    @property
    def n_max(self) -> int:
        return self.probs.size - 1

    def __getitem__(self, n):
        return self.probs[n]

    def __eq__(self, other):
        if not isinstance(other, PhotonDistribution):
            return NotImplemented
        return np.array_equal(self.probs, other.probs) and self.tail_mass == other.tail_mass

    __hash__ = None

    @classmethod
    def unchecked(cls, probs, tail_mass=0.0, **meta):
        """Build without validation; used for quasi-distributions from exact inversion."""
        meta["unchecked"] = True
        return cls(probs, tail_mass, meta)

    def total_variation(self, other: "PhotonDistribution") -> float:
        n = max(self.n_max, other.n_max) + 1
        a = np.zeros(n)
        b = np.zeros(n)
        a[: self.probs.size] = self.probs
        b[: other.probs.size] = other.probs
        return 0.5 * (np.abs(a - b).sum() + abs(self.tail_mass - other.tail_mass))


def vacuum(n_max: int = DEFAULT_N_MAX) -> PhotonDistribution:
    p = np.zeros(n_max + 1)
    p[0] = 1.0
    return PhotonDistribution(p)


def mean_from_chi(chi: float) -> float:
    return math.sinh(chi) ** 2


def _poisson(mu, n):
    # log-space keeps n! and mu**n finite for any n_max
    with np.errstate(divide="ignore"):
        logp = n * np.log(mu) - mu - np.array([math.lgamma(k + 1) for k in n])
    return np.exp(logp)


def _thermal(mu, n):
    return (mu / (1.0 + mu)) ** n / (1.0 + mu)


def make_source(spec: SourceSpec, n_max: int = DEFAULT_N_MAX,
                tail_tol: float = DEFAULT_TAIL_TOL) -> PhotonDistribution:
    """Photon-number statistics of one PDC arm (or an ideal single-photon source).

    Both PDC kinds have mean photon number ``sinh(chi)**2``. The probability
    mass above ``n_max`` is recorded in ``tail_mass``; it is never folded back
    into the kept entries.

    Raises:
        TruncationError: if the tail mass exceeds ``tail_tol``.
    """
    if n_max < 1:
        raise ValueError("n_max must be at least 1")
    n = np.arange(n_max + 1)
    if spec.kind is SourceKind.SINGLE_PHOTON:
        p = np.zeros(n_max + 1)
        p[1] = 1.0
        return PhotonDistribution(p)
    mu = mean_from_chi(spec.chi)
    if spec.kind is SourceKind.POISSONIAN:
        p = _poisson(mu, n)
        tail = _poisson_tail(mu, n_max)
    else:
        p = _thermal(mu, n)
        tail = (mu / (1.0 + mu)) ** (n_max + 1)
    if tail > tail_tol:
        raise TruncationError(
            f"tail mass {tail:.3e} above n_max={n_max} exceeds {tail_tol:.1e}; increase n_max"
        )
    return PhotonDistribution(p, tail, {"kind": spec.kind.value, "chi": spec.chi, "mu": mu})


def _poisson_tail(mu, n_max):
    from scipy.special import gammainc

    # P(N > n_max) = P(n_max + 1, mu), regularized lower incomplete gamma
    return float(gammainc(n_max + 1, mu))


def mean_photon_number(d: PhotonDistribution) -> float:
    return float(np.dot(np.arange(d.probs.size), d.probs))
