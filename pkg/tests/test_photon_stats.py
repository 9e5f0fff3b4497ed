import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pdqkd.errors import TruncationError
from pdqkd.photon_stats import (PhotonDistribution, SourceKind, SourceSpec, make_source,
                                mean_from_chi, mean_photon_number, vacuum)

chis = st.floats(min_value=1e-3, max_value=0.5)


def test_single_photon_definition():
    d = make_source(SourceSpec(SourceKind.SINGLE_PHOTON), n_max=5)
    assert list(d.probs) == [0, 1, 0, 0, 0, 0]
    assert mean_photon_number(d) == 1.0


def test_vacuum_mean():
    assert mean_photon_number(vacuum(7)) == 0.0


def test_mean_from_chi_value():
    # sinh^2(0.3) evaluated independently
    assert mean_from_chi(0.3) == pytest.approx(float(mpmath.sinh(mpmath.mpf("0.3")) ** 2), rel=1e-14)
    assert mean_from_chi(0.3) == pytest.approx(0.092733, abs=1e-6)


def test_poisson_against_high_precision():
    mpmath.mp.dps = 40
    mu = mpmath.sinh(mpmath.mpf("0.3")) ** 2
    d = make_source(SourceSpec(SourceKind.POISSONIAN, 0.3))
    for n in range(3):
        ref = mpmath.e ** (-mu) * mu**n / mpmath.factorial(n)
        assert d.probs[n] == pytest.approx(float(ref), rel=1e-13)


def test_thermal_vacuum_limit():
    d = make_source(SourceSpec(SourceKind.THERMAL, 1e-6))
    assert d.probs[0] == pytest.approx(1.0, abs=1e-11)
    assert d.probs[1:].max() < 1e-11


@pytest.mark.parametrize("kind", [SourceKind.POISSONIAN, SourceKind.THERMAL])
def test_tail_too_large(kind):
    with pytest.raises(TruncationError):
        make_source(SourceSpec(kind, 0.5), n_max=3)


def test_chi_must_be_positive():
    with pytest.raises(ValueError):
        SourceSpec(SourceKind.THERMAL, 0.0)


def test_distribution_validation():
    with pytest.raises(ValueError):
        PhotonDistribution(np.array([0.5, 0.6]))
    with pytest.raises(ValueError):
        PhotonDistribution(np.array([1.1, -0.1]))
    d = PhotonDistribution(np.array([0.5, 0.5]))
    with pytest.raises(ValueError):
        d.probs[0] = 1.0


@settings(max_examples=60, deadline=None)
@given(chis, st.sampled_from([SourceKind.POISSONIAN, SourceKind.THERMAL]))
def test_mean_matches_sinh2(chi, kind):
    d = make_source(SourceSpec(kind, chi))
    assert d.tail_mass <= 1e-10
    assert abs(d.probs.sum() + d.tail_mass - 1.0) <= 1e-12
    assert mean_photon_number(d) == pytest.approx(math.sinh(chi) ** 2, abs=1e-10 + 1e-10)


@settings(max_examples=40, deadline=None)
@given(chis)
def test_ratio_properties(chi):
    mu = math.sinh(chi) ** 2
    t = make_source(SourceSpec(SourceKind.THERMAL, chi)).probs
    p = make_source(SourceSpec(SourceKind.POISSONIAN, chi)).probs
    n = np.arange(6)
    np.testing.assert_allclose(t[n] / t[n + 1], (1 + mu) / mu, rtol=1e-12)
    np.testing.assert_allclose(p[n + 1] / p[n], mu / (n + 1), rtol=1e-12)


@settings(max_examples=40, deadline=None)
@given(chis, chis, st.sampled_from([SourceKind.POISSONIAN, SourceKind.THERMAL]))
def test_mean_monotone_in_chi(a, b, kind):
    if a == b:
        return
    lo, hi = sorted((a, b))
    assert (mean_photon_number(make_source(SourceSpec(kind, lo)))
            < mean_photon_number(make_source(SourceSpec(kind, hi))))
