"""Secret-key rate lower bounds for one-way and two-way post-processing."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Union


MAX_BSTEPS = 4
F_EC = 1.22

FecLike = Union[float, Callable[[float], float]]


def h2(x: float) -> float:
    """Binary Shannon entropy in bits, with h2(0) = h2(1) = 0."""
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"h2 argument {x} outside [0, 1]")
    if x == 0.0 or x == 1.0:
        return 0.0
    return -x * math.log2(x) - (1.0 - x) * math.log2(1.0 - x)


def _fec(f: FecLike, e: float) -> float:
    return float(f(e)) if callable(f) else float(f)


@dataclass(frozen=True)
class RateInputs:
    Q_chi: float
    E_chi: float
    Q1: float
    e1: float
    p_pen: float = 1.0
    q: float = 1.0
    f_ec: FecLike = F_EC

    def __post_init__(self):
        tol = 1e-12
        if not (0 <= self.E_chi <= 1 and 0 <= self.e1 <= 1):
            raise ValueError("error rates must lie in [0, 1]")
        if not (0 <= self.Q1 <= self.Q_chi * (1 + tol) and self.Q_chi <= 1):
            raise ValueError(f"need 0 <= Q1 <= Q_chi <= 1, got Q1={self.Q1}, Q={self.Q_chi}")
        if not 0 <= self.p_pen <= 1:
            raise ValueError("p_pen must lie in [0, 1]")


def secure_fraction_1locc(inp: RateInputs) -> float:
    """S' before the step clamp and the penalty factor."""
    return inp.q * (-inp.Q_chi * _fec(inp.f_ec, inp.E_chi) * h2(inp.E_chi)
                    + inp.Q1 * (1.0 - h2(inp.e1)))


def rate_1locc(inp: RateInputs) -> float:
    s = secure_fraction_1locc(inp)
    return inp.p_pen * s if s > 0 else 0.0


@dataclass(frozen=True)
class BStepState:
    """Bookkeeping for repeated B-steps on key-bit pairs.

    ``survival`` is the product of per-round pair survival probabilities;
    the factor 1/2 per round (one bit kept per surviving pair) is applied
    in :func:`rate_2locc`.
    """

    bit_err: float
    phase_err_1: float
    omega: float
    survival: float = 1.0
    rounds: int = 0
    bit_err_1: float | None = None

    def __post_init__(self):
        if self.bit_err_1 is None:
            object.__setattr__(self, "bit_err_1", self.phase_err_1)
        if not 0 <= self.rounds <= MAX_BSTEPS:
            raise ValueError(f"rounds must lie in [0, {MAX_BSTEPS}]")


def initial_state(inp: RateInputs) -> BStepState:
    omega = inp.Q1 / inp.Q_chi if inp.Q_chi > 0 else 0.0
    return BStepState(inp.E_chi, inp.e1, omega, 1.0, 0, inp.e1)


def _pair_keep(b):
    return (1.0 - b) ** 2 + b * b


def bstep(state: BStepState) -> BStepState:
    """One round of parity comparison on random bit pairs.

    Bit and phase errors are treated as independent within the single-photon
    part, so a kept pair has phase error ``2p(1-p)`` (the pair-survival
    normalisation cancels). The single-photon fraction becomes the fraction of
    kept pairs with both halves from single photons.
    """
    if state.rounds >= MAX_BSTEPS:
        raise ValueError(f"at most {MAX_BSTEPS} B-steps are supported")
    b, b1, p = state.bit_err, state.bit_err_1, state.phase_err_1
    keep = _pair_keep(b)
    keep1 = _pair_keep(b1)
    return BStepState(
        bit_err=b * b / keep,
        phase_err_1=min(2.0 * p * (1.0 - p), 0.5),
        omega=min(1.0, state.omega ** 2 * keep1 / keep),
        survival=state.survival * keep,
        rounds=state.rounds + 1,
        bit_err_1=b1 * b1 / keep1,
    )


def secure_fraction_2locc(inp: RateInputs, state: BStepState) -> float:
    yield_factor = state.survival * 0.5 ** state.rounds
    return inp.q * inp.Q_chi * yield_factor * (
        -_fec(inp.f_ec, state.bit_err) * h2(state.bit_err)
        + state.omega * (1.0 - h2(state.phase_err_1)))


def rate_2locc(inp: RateInputs, state: BStepState) -> float:
    s = secure_fraction_2locc(inp, state)
    return inp.p_pen * s if s > 0 else 0.0


def best_bsteps(inp: RateInputs, max_rounds: int = MAX_BSTEPS):
    """Unclamped penalised S' maximised over 0..max_rounds B-steps -> (value, rounds)."""
    state = initial_state(inp)
    best = (inp.p_pen * secure_fraction_2locc(inp, state), 0)
    for _ in range(max_rounds):
        state = bstep(state)
        val = inp.p_pen * secure_fraction_2locc(inp, state)
        if val > best[0]:
            best = (val, state.rounds)
    return best
