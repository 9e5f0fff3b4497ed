"""Monte Carlo sessions and post-hoc decoy selection from recorded detector outcomes.

Decoy membership is decided only after transmission, from the recorded
outcome of each slot and a seed. Every slot is prepared identically, so the
transmitted ensemble carries no signal/decoy label.
"""
from __future__ import annotations

import io
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import PlanError
from .photon_stats import PhotonDistribution
from .tmd import InversionMethod, TMDModel, invert

BLOCK = 1 << 16


@dataclass(frozen=True, eq=False)
class SessionRecord:
    """Tallies of detector outcomes over ``n_total`` slots.

    ``outcomes``/``photons``/``slots`` are per-slot arrays kept by simulations
    (original slot index, outcome and true photon number). Records replayed
    from text carry counts only.
    """

    counts: np.ndarray
    n_total: int
    seed: int
    source_truth: PhotonDistribution | None = None
    outcomes: np.ndarray | None = field(default=None, repr=False)
    photons: np.ndarray | None = field(default=None, repr=False)
    slots: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        if np.any(counts < 0):
            raise ValueError("counts must be non-negative")
        if counts.sum() != self.n_total:
            raise ValueError(f"counts sum to {counts.sum()}, n_total is {self.n_total}")
        object.__setattr__(self, "counts", counts)

    @property
    def n_max(self) -> int:
        return self.counts.size - 1

    def empirical(self) -> PhotonDistribution:
        if self.n_total < 1:
            raise ValueError("empty record")
        return PhotonDistribution(self.counts / self.n_total)

    def to_text(self) -> str:
        lines = [f"ntotal={self.n_total} seed={self.seed}"]
        lines += [f"{m} {c}" for m, c in enumerate(self.counts)]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, n_max: int | None = None) -> "SessionRecord":
        rows = [ln.strip() for ln in io.StringIO(text) if ln.strip()]
        if not rows:
            raise ValueError("empty session record")
        header = dict(tok.split("=", 1) for tok in rows[0].split())
        try:
            n_total, seed = int(header["ntotal"]), int(header["seed"])
        except (KeyError, ValueError) as exc:
            raise ValueError(f"bad session header {rows[0]!r}") from exc
        pairs = {}
        for ln in rows[1:]:
            m, c = ln.split()
            pairs[int(m)] = int(c)
        size = max(max(pairs, default=0), n_max or 0) + 1
        counts = np.zeros(size, dtype=np.int64)
        for m, c in pairs.items():
            counts[m] = c
        return cls(counts, n_total, seed)


@dataclass(frozen=True)
class DecoyPlan:
    m_subset: int
    offsets: tuple
    label: str = "decoy"

    def __post_init__(self):
        object.__setattr__(self, "offsets", tuple(int(d) for d in self.offsets))


def _block_rng(seed, block):
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(block,)))


def _simulate_blocks(probs, cdf, n_total, seed, blocks):
    out_n, out_m = [], []
    for b in blocks:
        size = min(BLOCK, n_total - b * BLOCK)
        rng = _block_rng(seed, b)
        n = rng.choice(probs.size, size=size, p=probs)
        u = rng.random(size)
        m = (u[:, None] >= cdf[:, n].T).sum(axis=1)
        out_n.append(n)
        out_m.append(np.minimum(m, probs.size - 1))
    return np.concatenate(out_n), np.concatenate(out_m)


def simulate_session(source: PhotonDistribution, tmd: TMDModel, n_total: int, seed: int,
                     workers: int = 1) -> SessionRecord:
    """Draw ``n_total`` slots: a photon number from ``source``, then a detector outcome.

    Slots are generated in fixed blocks, each with its own substream of
    ``seed``, so the result does not depend on ``workers``.
    """
    if n_total < 1:
        raise ValueError("n_total must be >= 1")
    probs = source.probs / source.probs.sum()
    cdf = np.cumsum(tmd.response(), axis=0)
    cdf[-1] = 1.0
    n_blocks = -(-n_total // BLOCK)
    if workers > 1 and n_blocks > 1:
        shards = np.array_split(np.arange(n_blocks), min(workers, n_blocks))
        with ProcessPoolExecutor(len(shards)) as pool:
            parts = list(pool.map(_simulate_blocks, *zip(*[(probs, cdf, n_total, seed, s) for s in shards])))
        photons = np.concatenate([p[0] for p in parts])
        outcomes = np.concatenate([p[1] for p in parts])
    else:
        photons, outcomes = _simulate_blocks(probs, cdf, n_total, seed, range(n_blocks))
    counts = np.bincount(outcomes, minlength=probs.size)
    return SessionRecord(counts, n_total, seed, source, outcomes, photons, np.arange(n_total))


def _truth_of(photons, size):
    hist = np.bincount(photons, minlength=size)[:size]
    return PhotonDistribution(hist / hist.sum()) if hist.sum() else None


def _subrecord(rec, mask, counts, seed):
    if rec.outcomes is None:
        return SessionRecord(counts, int(counts.sum()), seed)
    photons = rec.photons[mask] if rec.photons is not None else None
    truth = _truth_of(photons, rec.counts.size) if photons is not None else None
    return SessionRecord(counts, int(counts.sum()), seed, truth, rec.outcomes[mask], photons,
                         rec.slots[mask])


def _base_counts(rec: SessionRecord, m: int) -> np.ndarray:
    # float product: int64 would overflow for large nominal sessions
    return np.round(rec.counts.astype(float) * m / rec.n_total).astype(np.int64)


def decoy_counts(rec: SessionRecord, plan: DecoyPlan) -> np.ndarray:
    """Per-outcome decoy sizes ``round(#n M / N) + delta_n`` (half-to-even rounding)."""
    offsets = np.zeros(rec.counts.size, dtype=np.int64)
    if len(plan.offsets) > rec.counts.size:
        if any(plan.offsets[rec.counts.size:]):
            raise PlanError(f"plan {plan.label!r} has offsets beyond outcome {rec.n_max}")
    k = min(len(plan.offsets), rec.counts.size)
    offsets[:k] = plan.offsets[:k]
    base = _base_counts(rec, plan.m_subset)
    want = base + offsets
    for n, (w, have) in enumerate(zip(want, rec.counts)):
        if w < 0 or w > have:
            raise PlanError(f"plan {plan.label!r} asks for {w} slots with outcome {n}; {have} available")
    return want


def select_decoy_subset(rec: SessionRecord, plan: DecoyPlan, seed: int):
    """Split ``rec`` into ``(decoy, signal)`` according to ``plan``.

    Within each outcome class the decoy slots are drawn uniformly at random.
    """
    want = decoy_counts(rec, plan)
    if rec.outcomes is None:
        return (SessionRecord(want, int(want.sum()), seed),
                SessionRecord(rec.counts - want, int(rec.n_total - want.sum()), seed))
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    mask = np.zeros(rec.n_total, dtype=bool)
    for n, k in enumerate(want):
        if k:
            idx = np.flatnonzero(rec.outcomes == n)
            mask[rng.choice(idx, size=k, replace=False)] = True
    return _subrecord(rec, mask, want, seed), _subrecord(rec, ~mask, rec.counts - want, seed)


def partition_session(rec: SessionRecord, plans: Sequence[DecoyPlan], seed: int):
    """Draw disjoint decoy subsets for all ``plans`` at once; the remainder is the signal.

    Every plan is sized against the full session, as if applied alone.
    """
    wants = [decoy_counts(rec, plan) for plan in plans]
    used = np.sum(wants, axis=0) if wants else np.zeros_like(rec.counts)
    over = np.flatnonzero(used > rec.counts)
    if over.size:
        n = int(over[0])
        raise PlanError(f"plans jointly need {used[n]} slots with outcome {n}; {rec.counts[n]} available")
    if rec.outcomes is None:
        decoys = [SessionRecord(w, int(w.sum()), seed) for w in wants]
        rest = rec.counts - used
        return decoys, SessionRecord(rest, int(rest.sum()), seed)
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    label = np.full(rec.n_total, -1)
    for n in range(rec.counts.size):
        idx = np.flatnonzero(rec.outcomes == n)
        if not idx.size:
            continue
        idx = rng.permutation(idx)
        start = 0
        for k, w in enumerate(wants):
            label[idx[start:start + w[n]]] = k
            start += w[n]
    decoys = [_subrecord(rec, label == k, w, seed) for k, w in enumerate(wants)]
    return decoys, _subrecord(rec, label < 0, rec.counts - used, seed)


def subset_source_distribution(rec: SessionRecord, tmd: TMDModel,
                               method: InversionMethod | str = InversionMethod.CONSTRAINED_LSQ,
                               parent: PhotonDistribution | None = None) -> PhotonDistribution:
    """Photon-number distribution of the slots in ``rec``.

    Without ``parent`` the subset's click histogram is inverted directly,
    which is only valid when the subset was drawn without regard to outcome.
    Given ``parent`` (the inverted statistics of the whole session) each
    outcome class contributes its posterior ``p(n | m)``; this is the correct
    composition of an outcome-selected subset.
    """
    if rec.n_total < 1:
        raise ValueError("empty record")
    if parent is None:
        return invert(tmd, _pad(rec.empirical(), tmd.n_max), method)
    weights = np.zeros(tmd.n_max + 1)
    c = rec.counts[: tmd.n_max + 1]
    weights[: c.size] = c / rec.n_total
    return outcome_mixture(tmd, parent, weights)


def outcome_mixture(tmd: TMDModel, parent: PhotonDistribution, weights) -> PhotonDistribution:
    """Mix posteriors ``p(n | m)`` of ``parent`` with outcome weights ``weights[m]``."""
    a = tmd.response()
    joint = a * parent.probs[None, :]
    marg = joint.sum(axis=1)
    ok = marg > 0
    post = np.zeros_like(joint)
    post[ok] = joint[ok] / marg[ok, None]
    weights = np.asarray(weights, dtype=float)
    dropped = float(weights[~ok].sum())
    mix = weights @ post
    total = mix.sum()
    return PhotonDistribution(mix / total, 0.0, {"dropped_weight": dropped})


def _pad(d, n_max):
    if d.n_max == n_max:
        return d
    p = np.zeros(n_max + 1)
    k = min(n_max, d.n_max) + 1
    p[:k] = d.probs[:k]
    return PhotonDistribution(p, d.tail_mass + d.probs[k:].sum())


def make_standard_plans(rec: SessionRecord, m: int, delta_scale: float,
                        include_vacuum: bool = True) -> list[DecoyPlan]:
    """A zero-outcome subset and two subsets tilted towards higher / lower outcomes.

    The tilt is ``delta_n = +-round(delta_scale * base_n * (n - nbar))`` with
    ``base_n = #n M / N`` and ``nbar`` the mean outcome, so the subset size is
    preserved up to rounding. Each entry is clamped to what the session can
    supply; for the downward tilt this truncates high outcomes, which makes
    the two tilted subsets linearly independent of each other.

    ``include_vacuum=False`` drops the zero-outcome plan (used when zero
    outcomes have been filtered away).
    """
    if not 0 < m <= rec.n_total:
        raise PlanError(f"subset size {m} outside (0, {rec.n_total}]")
    counts = rec.counts
    n = np.arange(counts.size)
    base = _base_counts(rec, m)
    if include_vacuum and m > counts[0]:
        raise PlanError(f"outcome 0: vacuum plan needs {m} slots, {counts[0]} available")
    vac = -base.copy()
    vac[0] = m - base[0]
    nbar = float(np.dot(n, counts)) / rec.n_total
    raw = delta_scale * base * (n - nbar)
    lo, hi = -base, counts - base
    up = np.clip(np.round(raw), lo, hi).astype(np.int64)
    down = np.clip(np.round(-raw), lo, hi).astype(np.int64)
    tilted = [DecoyPlan(m, tuple(up), "tilt+"), DecoyPlan(m, tuple(down), "tilt-")]
    return ([DecoyPlan(m, tuple(vac), "vacuum")] if include_vacuum else []) + tilted
