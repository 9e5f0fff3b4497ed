import math

import pytest
from hypothesis import given, settings, strategies as st

from pdqkd.keyrate import (BStepState, RateInputs, best_bsteps, bstep, h2, initial_state,
                           rate_1locc, rate_2locc, secure_fraction_1locc)


def test_h2_values():
    assert h2(0.0) == 0.0 and h2(1.0) == 0.0 and h2(0.5) == 1.0
    assert h2(0.11) == pytest.approx(0.49992, abs=1e-5)
    with pytest.raises(ValueError):
        h2(1.5)


@settings(max_examples=50)
@given(st.floats(0.0, 1.0))
def test_h2_symmetric(x):
    assert h2(x) == pytest.approx(h2(1 - x), abs=1e-12)


def test_rate_1locc_hand_computed():
    inp = RateInputs(Q_chi=1e-3, E_chi=0.03, Q1=6e-4, e1=0.035, p_pen=0.8, q=0.5, f_ec=1.22)
    expected = 0.5 * (-1e-3 * 1.22 * h2(0.03) + 6e-4 * (1 - h2(0.035)))
    assert secure_fraction_1locc(inp) == pytest.approx(expected, rel=1e-14)
    assert rate_1locc(inp) == pytest.approx(0.8 * expected, rel=1e-14)


def test_rate_1locc_clamped():
    inp = RateInputs(Q_chi=1e-3, E_chi=0.2, Q1=1e-4, e1=0.2)
    assert secure_fraction_1locc(inp) < 0
    assert rate_1locc(inp) == 0.0


def test_f_ec_callable():
    inp = RateInputs(1e-3, 0.03, 6e-4, 0.035, f_ec=lambda e: 1.0 + e)
    assert secure_fraction_1locc(inp) == pytest.approx(-1e-3 * 1.03 * h2(0.03) + 6e-4 * (1 - h2(0.035)))


def test_bstep_example():
    s = bstep(BStepState(0.1, 0.1, 0.5))
    assert s.survival == pytest.approx(0.82)
    assert s.bit_err == pytest.approx(0.012195, abs=1e-6)
    assert s.phase_err_1 == pytest.approx(0.18)
    assert s.rounds == 1


@pytest.mark.parametrize("b", [0.0, 0.5])
def test_bstep_fixed_points(b):
    assert bstep(BStepState(b, 0.1, 0.5)).bit_err == pytest.approx(b, abs=1e-15)


@settings(max_examples=100)
@given(st.floats(1e-6, 0.5 - 1e-6), st.floats(0.0, 0.5), st.floats(0.0, 1.0))
def test_bstep_contracts(b, p, omega):
    s = bstep(BStepState(b, p, omega))
    assert s.bit_err < b
    assert 0 <= s.phase_err_1 <= 0.5
    assert 0 <= s.omega <= 1
    assert 0 < s.survival <= 1


def test_bstep_round_limit():
    s = BStepState(0.1, 0.1, 0.5)
    for _ in range(4):
        s = bstep(s)
    with pytest.raises(ValueError):
        bstep(s)


inputs = st.builds(
    lambda q, r, e, e1, pen: RateInputs(q, e, q * r, e1, pen),
    st.floats(1e-8, 1e-2), st.floats(0.0, 1.0), st.floats(0.0, 0.5), st.floats(0.0, 0.5),
    st.floats(0.01, 1.0))


@settings(max_examples=200)
@given(inputs)
def test_zero_rounds_equals_one_way(inp):
    assert rate_2locc(inp, initial_state(inp)) == pytest.approx(rate_1locc(inp), abs=1e-12)
    assert abs(rate_2locc(inp, initial_state(inp)) - rate_1locc(inp)) <= 1e-12


@settings(max_examples=200)
@given(inputs)
def test_best_bsteps_dominates(inp):
    val, k = best_bsteps(inp)
    assert 0 <= k <= 4
    assert val >= inp.p_pen * secure_fraction_1locc(inp) - 1e-18
    assert math.isfinite(val)


def test_two_way_extends_high_qber():
    inp = RateInputs(1e-5, 0.12, 6e-6, 0.13)
    assert rate_1locc(inp) == 0.0
    val, k = best_bsteps(inp)
    assert val > 0 and k >= 1
