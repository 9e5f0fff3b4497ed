"""Chi optimisation, distance limits and distance sweeps."""
from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .channel import gain_and_qber_from, transmittance, yields_and_errors
from .errors import DegenerateConfiguration, UnboundedLimit
from .pipeline import RateContext, evaluate, signal_distribution

CHI_GRID = np.linspace(0.01, 0.5, 50)
CHI_MIN = 1e-6
CHI_TOL = 1e-4
DISTANCE_TOL = 0.05
L_UNBOUNDED = 10_000.0
_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class RatePoint:
    l_km: float
    chi_opt: float
    bsteps: int
    rate: float
    Q_chi: float
    E_chi: float
    Q1: float
    e1: float
    p_pen: float
    mode: str


def golden_max(f, a: float, b: float, tol: float = CHI_TOL):
    """Maximise a unimodal ``f`` on [a, b]; returns ``(x, f(x))``."""
    c, d = b - _INV_PHI * (b - a), a + _INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = f(d)
    return (c, fc) if fc >= fd else (d, fd)


def _argopt(f, grid, sign: float = 1.0):
    """Grid search then golden refinement inside the neighbouring cells."""
    vals = [sign * f(x) for x in grid]
    i = int(np.argmax(vals))
    a = grid[i - 1] if i > 0 else CHI_MIN
    b = grid[i + 1] if i + 1 < len(grid) else grid[i]
    x, v = golden_max(lambda t: sign * f(t), a, b)
    if vals[i] >= v:
        x, v = grid[i], vals[i]
    return float(x), sign * v


def optimal_point(ctx: RateContext, l_km: float) -> RatePoint:
    """Rate at the best chi (or at ``ctx.chi`` when fixed)."""
    if not ctx.heralded:
        chi = math.nan
        ev = evaluate(ctx, None, l_km)
    else:
        if ctx.chi is not None:
            chi = ctx.chi
        else:
            chi, _ = _argopt(lambda c: evaluate(ctx, c, l_km).value, CHI_GRID)
        ev = evaluate(ctx, chi, l_km)
    inp = ev.inputs
    rate = ev.rate if ev.rate > ctx.rate_floor else 0.0
    return RatePoint(float(l_km), chi, ev.bsteps, rate, inp.Q_chi, inp.E_chi, inp.Q1,
                     inp.e1, inp.p_pen, ctx.mode)


def optimize_chi(ctx: RateContext, l_km: float):
    """``(chi_opt, rate, bsteps)``; ``chi_opt`` is nan for the single-photon source."""
    p = optimal_point(ctx, l_km)
    return p.chi_opt, p.rate, p.bsteps


def _edge(positive, start: float, tol: float, limit: float) -> float:
    """Largest l with ``positive(l)``, assuming monotone decay and ``positive(0)``."""
    lo, hi = 0.0, start
    while positive(hi):
        lo, hi = hi, 2.0 * hi
        if lo >= limit:
            raise UnboundedLimit(f"no limit below {limit} km")
    hi = min(hi, 2 * limit)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if positive(mid):
            lo = mid
        else:
            hi = mid
    return lo


def max_secure_distance(ctx: RateContext, tol: float = DISTANCE_TOL) -> float:
    """Largest distance with a positive optimised rate."""
    pos = lambda l: optimal_point(ctx, l).rate > 0
    if not pos(0.0):
        raise DegenerateConfiguration("no positive key rate at zero distance")
    return _edge(pos, 20.0, tol, L_UNBOUNDED)


def min_qber(ctx: RateContext, l_km: float) -> float:
    """Smallest observed QBER over chi (fixed chi if set)."""
    y, e = yields_and_errors(ctx.channel, transmittance(ctx.channel, l_km), ctx.n_max)

    def qber(chi):
        return gain_and_qber_from(y, e, signal_distribution(ctx, chi)[0].probs)[1]

    if not ctx.heralded:
        return qber(None)
    if ctx.chi is not None:
        return qber(ctx.chi)
    return _argopt(qber, CHI_GRID, sign=-1.0)[1]


def intercept_resend_limit(ctx: RateContext, tol: float = DISTANCE_TOL) -> float:
    """Distance where the lowest achievable QBER reaches 1/4."""
    below = lambda l: min_qber(ctx, l) < 0.25
    if not below(0.0):
        return 0.0
    return _edge(below, 20.0, tol, L_UNBOUNDED)


def default_workers() -> int:
    env = os.environ.get("QKD_SIM_THREADS")
    cap = int(env) if env else (os.cpu_count() or 1)
    return max(1, cap)


def _point(args):
    return optimal_point(*args)


def sweep(ctx: RateContext, distances, workers: int | None = None) -> list[RatePoint]:
    """Optimised rate at every distance, in input order."""
    ls = [float(l) for l in distances]
    workers = min(workers or 1, default_workers(), max(1, len(ls)))
    if workers <= 1:
        return [optimal_point(ctx, l) for l in ls]
    with ProcessPoolExecutor(workers) as ex:
        return list(ex.map(_point, [(ctx, l) for l in ls], chunksize=4))
