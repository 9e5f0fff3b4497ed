"""Time-multiplexed detector: response matrices, inversion and vacuum filtering.

Matrices are indexed ``[outcome m, photon number n]`` and are column
stochastic. Dark counts in the detector are taken to be zero, so outcome
``m`` never exceeds the number of impinging photons.
"""
from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import solve_triangular
from scipy.optimize import nnls

from .errors import NegativityError, NoSignalError, SingularMatrixError
from .photon_stats import DEFAULT_N_MAX, PhotonDistribution

EPS_NEG = 1e-6
ROUNDOFF = 1e-12


class MatrixKind(str, enum.Enum):
    LOSS = "loss"
    CONVOLUTION = "convolution"
    COMPOSITE = "composite"


class InversionMethod(str, enum.Enum):
    TRIANGULAR_SOLVE = "triangular"
    CONSTRAINED_LSQ = "cls"


class NegativityWarning(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class TriangularMatrix:
    entries: np.ndarray
    kind: MatrixKind

    def __post_init__(self):
        self.entries.setflags(write=False)

    def __matmul__(self, other):
        if isinstance(other, TriangularMatrix):
            return TriangularMatrix(self.entries @ other.entries, MatrixKind.COMPOSITE)
        return self.entries @ other


@dataclass(frozen=True)
class TMDModel:
    n_bins: int = 8
    eta_tmd: float = 0.5
    n_max: int = DEFAULT_N_MAX

    def __post_init__(self):
        if self.n_bins < 1:
            raise ValueError("n_bins must be >= 1")
        if not 0.0 <= self.eta_tmd <= 1.0:
            raise ValueError("eta_tmd must lie in [0, 1]")
        if self.n_max < 1:
            raise ValueError("n_max must be >= 1")

    def response(self) -> np.ndarray:
        """The composite matrix C·L (loss first, then bin statistics)."""
        return _composite(self.n_bins, self.eta_tmd, self.n_max)

    def no_click(self) -> np.ndarray:
        """p(0|n): probability of a zero outcome given n photons."""
        return self.response()[0]


def loss_matrix(eta: float, n_max: int) -> TriangularMatrix:
    """Binomial thinning: ``[m, n] = C(n, m) eta^m (1 - eta)^(n - m)``."""
    return TriangularMatrix(_loss(float(eta), n_max).copy(), MatrixKind.LOSS)


def convolution_matrix(n_bins: int, n_max: int) -> TriangularMatrix:
    """Probability that k photons spread uniformly over ``n_bins`` bins fill exactly m bins.

    Equal to ``C(N, m) * sum_j (-1)^j C(m, j) ((m - j) / N)^k``; evaluated by the
    occupancy recursion instead, which has no cancellation.
    """
    return TriangularMatrix(_conv(n_bins, n_max).copy(), MatrixKind.CONVOLUTION)


@lru_cache(maxsize=64)
def _loss(eta, n_max):
    out = np.zeros((n_max + 1, n_max + 1))
    for n in range(n_max + 1):
        for m in range(n + 1):
            out[m, n] = math.comb(n, m) * eta**m * (1.0 - eta) ** (n - m)
    out.setflags(write=False)
    return out


@lru_cache(maxsize=64)
def _conv(n_bins, n_max):
    out = np.zeros((n_max + 1, n_max + 1))
    out[0, 0] = 1.0
    for k in range(n_max):
        occupied = np.arange(n_max + 1)
        stay = out[:, k] * occupied / n_bins
        move = out[:, k] * (n_bins - occupied) / n_bins
        out[:, k + 1] = stay
        out[1:, k + 1] += move[:-1]
    out.setflags(write=False)
    return out


@lru_cache(maxsize=64)
def _composite(n_bins, eta, n_max):
    out = _conv(n_bins, n_max) @ _loss(float(eta), n_max)
    out.setflags(write=False)
    return out


def _check_dims(model, d):
    if d.n_max != model.n_max:
        raise ValueError(f"distribution has n_max={d.n_max}, detector model expects {model.n_max}")


def forward(model: TMDModel, source: PhotonDistribution) -> PhotonDistribution:
    """Click-count distribution produced by ``source`` on the detector."""
    _check_dims(model, source)
    meas = model.response() @ source.probs
    return PhotonDistribution(np.clip(meas, 0.0, None), source.tail_mass)


def _filtered_response(model):
    a = model.response()
    keep = 1.0 - a[0, 1:]
    if np.any(keep <= 0):
        raise SingularMatrixError("detector never clicks; vacuum-conditioned response undefined")
    return a[1:, 1:] / keep


def invert(model: TMDModel, p_meas: PhotonDistribution,
           method: InversionMethod | str = InversionMethod.TRIANGULAR_SOLVE,
           vacuum_filtered: bool = False, strict: bool = False) -> PhotonDistribution:
    """Recover the impinging photon statistics from a click distribution.

    With ``vacuum_filtered`` the input is read as statistics of the non-zero
    outcomes only (see :func:`filter_vacuum`); the response matrix is then
    conditioned on a click, so the result is the photon-number distribution
    of the retained slots.

    Raises:
        SingularMatrixError: triangular solve on a matrix with a zero pivot
            (``eta_tmd = 0`` or more photons than bins).
        NegativityError: only with ``strict``, if the exact solution has an
            entry below ``-EPS_NEG``.
    """
    _check_dims(model, p_meas)
    method = InversionMethod(method)
    if vacuum_filtered:
        a = _filtered_response(model)
        b = p_meas.probs[1:]
    else:
        a = model.response()
        b = p_meas.probs
    if method is InversionMethod.TRIANGULAR_SOLVE:
        x = _triangular(a, b)
    else:
        x = _constrained_lsq(a, b)
    if vacuum_filtered:
        x = np.concatenate([[0.0], x])
    return _package(x, p_meas.tail_mass, method, strict, residual=_residual(a, x[1:] if vacuum_filtered else x, b))


def _residual(a, x, b):
    return float(np.linalg.norm(a @ x - b))


def _triangular(a, b):
    diag = np.diag(a)
    if np.any(diag <= 0):
        bad = int(np.flatnonzero(diag <= 0)[0])
        raise SingularMatrixError(f"zero pivot at n={bad}: response matrix is singular")
    return solve_triangular(a, b, lower=False)


def _constrained_lsq(a, b):
    # min |a x - b| with x >= 0 and sum(x) <= 1; the sum constraint is
    # enforced as an equality through a heavily weighted extra row when the
    # plain NNLS solution violates it
    x, _ = nnls(a, b, maxiter=50 * a.shape[1])
    if x.sum() > 1.0 + ROUNDOFF:
        w = 1e4 * max(1.0, np.abs(a).max())
        aug = np.vstack([a, w * np.ones(a.shape[1])])
        x, _ = nnls(aug, np.append(b, w), maxiter=50 * a.shape[1])
        x /= max(1.0, x.sum())
    return x


def _package(x, tail, method, strict, residual):
    meta = {"method": method.value, "residual": residual}
    small = (x < 0) & (x >= -EPS_NEG)
    if np.any(small):
        meta["clipped"] = float(-x[small].sum())
        x = np.where(small, 0.0, x)
    if np.any(x < 0):
        worst = float(x.min())
        if strict:
            raise NegativityError(f"inverted distribution has entry {worst:.3e} < -{EPS_NEG}")
        warnings.warn(f"inverted distribution has negative entry {worst:.3e}", NegativityWarning,
                      stacklevel=3)
        return PhotonDistribution.unchecked(x, tail, negativity=worst, **meta)
    tail = max(0.0, 1.0 - x.sum()) if method is InversionMethod.CONSTRAINED_LSQ else tail
    total = x.sum() + tail
    if abs(total - 1.0) > ROUNDOFF:
        # clipping or noisy input shifted the normalisation; report, do not hide
        return PhotonDistribution.unchecked(x, tail, norm_error=total - 1.0, **meta)
    return PhotonDistribution(x, tail, meta)


def filter_vacuum(p_meas: PhotonDistribution) -> PhotonDistribution:
    """Condition a click distribution on a non-zero outcome."""
    keep = 1.0 - p_meas.probs[0]
    if keep <= 0:
        raise NoSignalError("distribution is pure vacuum; nothing survives filtering")
    p = p_meas.probs.copy()
    p[0] = 0.0
    return PhotonDistribution(p / keep, p_meas.tail_mass / keep)


def penalty_factor(model: TMDModel, p_source: PhotonDistribution) -> float:
    """Probability that the detector registers at least one click.

    Mass above ``n_max`` clicks with the ``n_max`` probability, a lower bound.
    """
    _check_dims(model, p_source)
    click = 1.0 - model.no_click()
    # summed over clicking terms rather than 1 - sum(p(0|n) p(n)): no cancellation for weak sources
    return float(np.dot(click, p_source.probs) + click[-1] * p_source.tail_mass)


def effective_filtered_source(model: TMDModel, p_source: PhotonDistribution) -> PhotonDistribution:
    """Photon-number distribution of the slots kept after discarding zero outcomes."""
    pen = penalty_factor(model, p_source)
    if pen <= 0:
        raise NoSignalError("detector never clicks for this source; penalty factor is zero")
    click = 1.0 - model.no_click()
    p = click * p_source.probs / pen
    p[0] = 0.0
    return PhotonDistribution(p, click[-1] * p_source.tail_mass / pen, {"p_pen": pen})
