"""Assemble rate inputs from source, detector, channel and decoy estimation."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import keyrate
from .channel import ChannelModel, gain_and_qber_from, transmittance, yields_and_errors
from .estimation import (DEFAULT_N_CUT, EstimationMode, bound_y1_e1, q1_e1_from_estimate,
                         synthesize)
from .passive_decoy import (SessionRecord, make_standard_plans, outcome_mixture,
                            partition_session, simulate_session, subset_source_distribution)
from .photon_stats import (DEFAULT_N_MAX, PhotonDistribution, SourceKind, SourceSpec,
                           make_source)
from .tmd import InversionMethod, TMDModel, effective_filtered_source, forward, invert

# slots in the noise-free session used to lay out decoy subsets analytically
NOMINAL_SLOTS = 10**12


@dataclass(frozen=True)
class RateContext:
    """Everything held fixed while the key rate is optimised over chi."""

    source: SourceKind = SourceKind.POISSONIAN
    channel: ChannelModel = field(default_factory=ChannelModel)
    tmd: TMDModel = field(default_factory=TMDModel)
    filtered: bool = False
    locc: int = 1
    estimation: EstimationMode = EstimationMode.EXACT
    chi: float | None = None
    q: float = 1.0
    f_ec: keyrate.FecLike = keyrate.F_EC
    n_max: int = DEFAULT_N_MAX
    n_cut: int = DEFAULT_N_CUT
    stat_tol: float = 0.0
    decoy_fraction: float = 0.1
    delta_scale: float = 0.8
    max_bsteps: int = keyrate.MAX_BSTEPS
    rate_floor: float = 1e-12

    def __post_init__(self):
        object.__setattr__(self, "source", SourceKind(self.source))
        object.__setattr__(self, "estimation", EstimationMode(self.estimation))
        if self.locc not in (1, 2):
            raise ValueError("locc must be 1 or 2")
        if self.tmd.n_max != self.n_max:
            object.__setattr__(self, "tmd", replace(self.tmd, n_max=self.n_max))
        if not 0 <= self.max_bsteps <= keyrate.MAX_BSTEPS:
            raise ValueError(f"max_bsteps must lie in [0, {keyrate.MAX_BSTEPS}]")

    @property
    def heralded(self) -> bool:
        return self.source is not SourceKind.SINGLE_PHOTON

    @property
    def mode(self) -> str:
        filt = "filt" if self.filtered and self.heralded else "unf"
        return f"{self.source.value}/{filt}/locc{self.locc}/{self.estimation.value}"


@dataclass(frozen=True)
class Evaluation:
    value: float          # penalised S' before the step clamp
    bsteps: int
    inputs: keyrate.RateInputs

    @property
    def rate(self) -> float:
        return self.value if self.value > 0 else 0.0


def source_distribution(ctx: RateContext, chi: float | None) -> PhotonDistribution:
    return make_source(SourceSpec(ctx.source, chi if ctx.heralded else 0.0), ctx.n_max)


def signal_distribution(ctx: RateContext, chi: float | None):
    """Effective signal statistics and penalty factor for one chi."""
    src = source_distribution(ctx, chi)
    if ctx.filtered and ctx.heralded:
        eff = effective_filtered_source(ctx.tmd, src)
        return eff, eff.meta["p_pen"]
    return src, 1.0


def expected_subsets(ctx: RateContext, src: PhotonDistribution):
    """Noise-free signal and decoy distributions of the standard passive plans.

    Returns ``(distributions, labels)`` with the signal first.
    """
    meas = forward(ctx.tmd, src).probs
    counts = np.round(meas * NOMINAL_SLOTS).astype(np.int64)
    if ctx.filtered:
        counts[0] = 0
    rec = SessionRecord(counts, int(counts.sum()), 0)
    m = max(1, int(ctx.decoy_fraction * rec.n_total))
    plans = make_standard_plans(rec, m, ctx.delta_scale, include_vacuum=not ctx.filtered)
    decoys, signal = partition_session(rec, plans, 0)
    dists = [outcome_mixture(ctx.tmd, src, r.counts / r.n_total) for r in [signal] + decoys]
    return dists, ["signal"] + [p.label for p in plans]


def _finish(ctx, q, e, q1, e1, pen):
    inp = keyrate.RateInputs(q, e, min(q1, q), e1, pen, ctx.q, ctx.f_ec)
    if ctx.locc == 1:
        return Evaluation(pen * keyrate.secure_fraction_1locc(inp), 0, inp)
    val, k = keyrate.best_bsteps(inp, ctx.max_bsteps)
    return Evaluation(val, k, inp)


def evaluate(ctx: RateContext, chi: float | None, l_km: float) -> Evaluation:
    """Penalised secure fraction at one (chi, distance), best B-step count for 2-LOCC."""
    y, e = yields_and_errors(ctx.channel, transmittance(ctx.channel, l_km), ctx.n_max)
    if ctx.estimation is EstimationMode.EXACT or not ctx.heralded:
        sig, pen = signal_distribution(ctx, chi)
        q, err = gain_and_qber_from(y, e, sig.probs)
        # infinite-decoy limit: the decoy system recovers the channel's own Y1, e1
        return _finish(ctx, q, err, y[1] * sig.probs[1], e[1], pen)
    src = source_distribution(ctx, chi)
    dists, labels = expected_subsets(ctx, src)
    obs = synthesize(dists, y, e, labels)
    est = bound_y1_e1(obs, ctx.n_cut, ctx.stat_tol)
    q1, e1 = q1_e1_from_estimate(est, dists[0])
    sig = obs.entries[0]
    pen = 1.0
    if ctx.filtered:
        pen = effective_filtered_source(ctx.tmd, src).meta["p_pen"]
    return _finish(ctx, sig.gain, sig.error_gain / sig.gain, q1, e1, pen)


@dataclass(frozen=True)
class MonteCarloResult:
    rate: float
    evaluation: Evaluation
    record: SessionRecord
    distributions: list
    labels: list
    estimate: object


def monte_carlo_rate(ctx: RateContext, chi: float, l_km: float, n_total: int = 10**6,
                     seed: int = 1, m: int | None = None, delta_scale: float | None = None,
                     method: InversionMethod | str = InversionMethod.CONSTRAINED_LSQ,
                     record: SessionRecord | None = None, workers: int = 1) -> MonteCarloResult:
    """Key rate from one simulated (or replayed) session with passive decoys.

    The whole session is inverted to estimate the source; every subset then
    gets the outcome-conditioned composition implied by that estimate. Bob's
    gains for each subset are the channel's expected gains for that
    composition, and Y1/e1 are bounded by linear programming.
    """
    src = source_distribution(ctx, chi)
    if record is None:
        record = simulate_session(src, ctx.tmd, n_total, seed, workers)
    parent = invert(ctx.tmd, _fit(record.empirical(), ctx.n_max), method)
    m = m if m is not None else max(1, int(ctx.decoy_fraction * record.n_total))
    ds = ctx.delta_scale if delta_scale is None else delta_scale
    plans = make_standard_plans(record, m, ds)
    decoys, signal = partition_session(record, plans, record.seed)
    pen = 1.0
    if ctx.filtered:
        kept = signal.counts.copy()
        pen = 1.0 - kept[0] / signal.n_total
        kept[0] = 0
        signal = SessionRecord(kept, int(kept.sum()), signal.seed)
    subsets = [signal] + decoys
    dists = [subset_source_distribution(r, ctx.tmd, method, parent) for r in subsets]
    labels = ["signal"] + [p.label for p in plans]
    y, e = yields_and_errors(ctx.channel, transmittance(ctx.channel, l_km), ctx.n_max)
    obs = synthesize(dists, y, e, labels)
    est = bound_y1_e1(obs, ctx.n_cut, ctx.stat_tol)
    q1, e1 = q1_e1_from_estimate(est, dists[0])
    sig = obs.entries[0]
    ev = _finish(ctx, sig.gain, sig.error_gain / sig.gain, q1, e1, pen)
    return MonteCarloResult(ev.rate, ev, record, dists, labels, est)


def _fit(d: PhotonDistribution, n_max: int) -> PhotonDistribution:
    if d.n_max == n_max:
        return d
    p = np.zeros(n_max + 1)
    k = min(n_max, d.n_max) + 1
    p[:k] = d.probs[:k]
    return PhotonDistribution(p, d.tail_mass + d.probs[k:].sum())
