"""Per-photon-number yields and error rates from signal and decoy observations."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import linprog

from .channel import ChannelModel, transmittance, yields_and_errors
from .errors import ConditioningError, InfeasibleObservations
from .photon_stats import PhotonDistribution

MAX_COND = 1e12
DEFAULT_N_CUT = 9
# relative slack applied to LP optima so solver tolerances never make a bound optimistic
_LP_GUARD = 1e-7


class EstimationMode(str, enum.Enum):
    EXACT = "exact"
    BOUNDS = "bounds"


@dataclass(frozen=True)
class Observation:
    label: str
    dist: PhotonDistribution
    gain: float
    error_gain: float

    def __post_init__(self):
        if not 0.0 <= self.gain <= 1.0:
            raise ValueError(f"{self.label}: gain {self.gain} outside [0, 1]")
        if not 0.0 <= self.error_gain <= self.gain * (1 + 1e-12):
            raise ValueError(f"{self.label}: error gain must lie in [0, gain]")


@dataclass(frozen=True)
class ObservationSet:
    entries: tuple

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)


@dataclass(frozen=True, eq=False)
class YieldEstimate:
    y: np.ndarray
    e: np.ndarray
    n_cut: int
    mode: EstimationMode
    meta: dict = field(default_factory=dict)


def synthesize(dists: Sequence[PhotonDistribution], yields, errors, labels=None) -> ObservationSet:
    """Observations an honest channel with the given yields/errors would produce."""
    labels = labels or [f"obs{k}" for k in range(len(dists))]
    out = []
    for label, d in zip(labels, dists):
        k = d.probs.size
        q = float(np.dot(yields[:k], d.probs))
        eq = float(np.dot(yields[:k] * errors[:k], d.probs))
        out.append(Observation(label, d, q, min(eq, q)))
    return ObservationSet(out)


def synthesize_from_channel(channel: ChannelModel, l_km: float, dists, labels=None) -> ObservationSet:
    n_max = max(d.n_max for d in dists)
    y, e = yields_and_errors(channel, transmittance(channel, l_km), n_max)
    return synthesize(dists, y, e, labels)


def _moments(obs, n_cut):
    return np.array([[d.dist.probs[n] if n <= d.dist.n_max else 0.0 for n in range(n_cut + 1)]
                     for d in obs])


def solve_exact(obs: ObservationSet, n_cut: int = DEFAULT_N_CUT, tail_yields=None,
                tail_errors=None) -> YieldEstimate:
    """Solve the decoy linear system for Y_n and e_n, n <= n_cut.

    Contributions above ``n_cut`` are subtracted using ``tail_yields`` /
    ``tail_errors`` (full-length vectors; entries <= n_cut are ignored) and
    are taken as zero otherwise. Results are clamped to [0, 1]; the largest
    clamp adjustment is reported in ``meta["clamp"]``.

    Raises:
        ConditioningError: fewer observations than unknowns, or a moment
            matrix with condition number above 1e12.
    """
    if len(obs) < n_cut + 1:
        raise ConditioningError(f"{len(obs)} observations cannot determine {n_cut + 1} yields")
    mom = _moments(obs, n_cut)
    cond = float(np.linalg.cond(mom))
    if not np.isfinite(cond) or cond > MAX_COND:
        raise ConditioningError(
            f"moment matrix condition number {cond:.3g} exceeds {MAX_COND:.0e}; "
            "use more distinct decoys or a smaller n_cut")
    q = np.array([o.gain for o in obs])
    eq = np.array([o.error_gain for o in obs])
    if tail_yields is not None:
        ty = np.asarray(tail_yields, dtype=float)
        te = np.asarray(tail_errors, dtype=float) if tail_errors is not None else np.zeros_like(ty)
        for k, o in enumerate(obs):
            n = np.arange(n_cut + 1, min(o.dist.n_max, ty.size - 1) + 1)
            q[k] -= np.dot(ty[n], o.dist.probs[n])
            eq[k] -= np.dot(ty[n] * te[n], o.dist.probs[n])
    y = np.linalg.lstsq(mom, q, rcond=None)[0]
    z = np.linalg.lstsq(mom, eq, rcond=None)[0]
    with np.errstate(divide="ignore", invalid="ignore"):
        e = np.where(y > 0, z / y, 0.0)
    y_c = np.clip(y, 0.0, 1.0)
    e_c = np.clip(e, 0.0, 1.0)
    clamp = float(max(np.abs(y - y_c).max(), np.abs(e - e_c).max()))
    return YieldEstimate(y_c, e_c, n_cut, EstimationMode.EXACT, {"cond": cond, "clamp": clamp})


def _lp_problem(obs, n_cut, stat_tol):
    nv = n_cut + 1
    k_obs = len(obs)
    nvar = 2 * nv + 2 * k_obs
    iy, iz = slice(0, nv), slice(nv, 2 * nv)
    rows, rhs, eq_rows, eq_rhs = [], [], [], []
    tails = []
    for k, o in enumerate(obs):
        p = o.dist.probs
        head = np.zeros(nv)
        m = min(nv, p.size)
        head[:m] = p[:m]
        tails.append(float(p[nv:].sum() + o.dist.tail_mass))
        for col, extra, target in ((iy, 2 * nv + k, o.gain), (iz, 2 * nv + k_obs + k, o.error_gain)):
            scale = 1.0 / target if target > 0 else 1.0
            r = np.zeros(nvar)
            r[col] = head * scale
            r[extra] = scale
            t = target * scale
            if stat_tol > 0:
                rows += [r, -r]
                rhs += [t * (1 + stat_tol), -t * (1 - stat_tol)]
            else:
                eq_rows.append(r)
                eq_rhs.append(t)
    for n in range(nv):
        r = np.zeros(nvar)
        r[nv + n], r[n] = 1.0, -1.0
        rows.append(r)
        rhs.append(0.0)
    for k in range(k_obs):
        r = np.zeros(nvar)
        r[2 * nv + k_obs + k], r[2 * nv + k] = 1.0, -1.0
        rows.append(r)
        rhs.append(0.0)
    bounds = [(0.0, 1.0)] * (2 * nv) + [(0.0, t) for t in tails] * 2
    return dict(A_ub=np.array(rows), b_ub=np.array(rhs),
                A_eq=np.array(eq_rows) if eq_rows else None,
                b_eq=np.array(eq_rhs) if eq_rhs else None, bounds=bounds), nvar


_HIGHS = {"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10}


def _optimise(problem, nvar, index, sense):
    c = np.zeros(nvar)
    c[index] = sense
    res = linprog(c, method="highs", options=_HIGHS, **problem)
    if res.status == 2:
        raise InfeasibleObservations(
            "no yield assignment reproduces the observed gains and error rates; "
            "the channel is not behaving like a passive lossy line")
    if res.status != 0:
        raise RuntimeError(f"linear program failed: {res.message}")
    return sense * res.fun


def bound_y1_e1(obs: ObservationSet, n_cut: int = DEFAULT_N_CUT, stat_tol: float = 0.0) -> YieldEstimate:
    """Worst-case single-photon yield and error rate compatible with ``obs``.

    Yields ``Y_n`` and error-weighted yields ``e_n Y_n`` are free in
    ``[0, 1]`` and ``[0, Y_n]``; photon numbers above ``n_cut`` contribute an
    unconstrained amount up to their probability mass, separately for each
    observation. Gains are matched within a relative ``stat_tol``.

    Returns ``y = [Y0_min, Y1_min]`` and ``e = [nan, e1_max]``, with
    ``e1_max = max(e1 Y1) / min(Y1)``; ``meta["y0_max"]`` holds the upper end of Y0.

    Raises:
        InfeasibleObservations: the observations contradict every passive
            channel, which is the eavesdropping alarm.
    """
    if len(obs) < 2:
        raise ValueError("bounding needs at least two observations")
    problem, nvar = _lp_problem(obs, n_cut, stat_tol)
    nv = n_cut + 1
    y1 = _optimise(problem, nvar, 1, 1.0)
    z1 = _optimise(problem, nvar, nv + 1, -1.0)
    y0_lo = _optimise(problem, nvar, 0, 1.0)
    y0_hi = _optimise(problem, nvar, 0, -1.0)
    y1 = max(0.0, y1 * (1 - _LP_GUARD) - 1e-15)
    z1 = min(1.0, z1 * (1 + _LP_GUARD) + 1e-15)
    e1 = min(1.0, z1 / y1) if y1 > 0 else 1.0
    return YieldEstimate(np.array([max(0.0, y0_lo * (1 - _LP_GUARD)), y1]), np.array([np.nan, e1]),
                         n_cut, EstimationMode.BOUNDS,
                         {"y0_max": min(1.0, y0_hi * (1 + _LP_GUARD)), "z1_max": z1})


def pns_alarm(obs: ObservationSet, expected_y1: float, n_cut: int = DEFAULT_N_CUT,
              stat_tol: float = 0.0, margin: float = 0.25) -> bool:
    """True when no passive channel reproduces ``obs`` with a single-photon yield
    of at least ``(1 - margin) * expected_y1``.

    ``expected_y1`` comes from the characterised line (transmittance and dark
    counts). Photon-number splitting suppresses single-photon transmission,
    which makes this feasibility problem infeasible.
    """
    problem, nvar = _lp_problem(obs, n_cut, stat_tol)
    bounds = list(problem["bounds"])
    bounds[1] = ((1.0 - margin) * expected_y1, 1.0)
    problem["bounds"] = bounds
    res = linprog(np.zeros(nvar), method="highs", options=_HIGHS, **problem)
    if res.status not in (0, 2):
        raise RuntimeError(f"linear program failed: {res.message}")
    return res.status == 2


def q1_e1_from_estimate(est: YieldEstimate, p_signal: PhotonDistribution):
    """Single-photon gain Q1 = Y1 p(1) and error rate e1 for the signal statistics."""
    return float(est.y[1] * p_signal.probs[1]), float(est.e[1])
