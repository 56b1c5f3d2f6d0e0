from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import trapezoid

from oucl import measures
from oucl.errors import PreconditionError, RepresentationError
from oucl.measures import (Atomic, DensityOnIntervals, IntervalAutocorrelation, IntervalUnion, SymmetricStable,
                           density_overlap_region, interval_overlap, overlap_certificate, overlap_mass,
                           shift_measure, shifted_overlap_infimum, svc_length, svc_set, variation_distance)


def unif(lo=0.0, hi=1.0):
    return DensityOnIntervals([(lo, hi)])


# truncation

def test_cantor_measure_is_finite_and_passes_through():
    nu = DensityOnIntervals(svc_set(10))
    assert nu.truncate(0.01) is nu
    assert nu.total_mass == pytest.approx(float(svc_length(10)), rel=1e-12)


def test_stable_truncation_mass():
    # density |z|^{-3/2} on the line, cut at 1: 2 * int_1^inf z^{-3/2} dz = 4
    nu = SymmetricStable.from_density_constant(0.5, 1.0)
    assert nu.truncate(1.0).total_mass == pytest.approx(4.0, rel=1e-10)


def test_atomic_truncation_is_identity():
    nu = Atomic([(1.0, 0.5)])
    assert nu.truncate(2.0).total_mass == 0.5


# overlaps

def test_identical_atoms_overlap_fully():
    # the origin cannot carry Levy mass; overlap is shift invariant so any point will do
    assert overlap_mass(Atomic([(0.5, 1.0)]), Atomic([(0.5, 1.0)])) == 1.0


def test_disjoint_atoms_do_not_overlap():
    assert overlap_mass(Atomic([(0.5, 1.0)]), Atomic([(1.5, 1.0)])) == 0.0


def test_half_shifted_uniforms():
    assert overlap_mass(unif(0, 1), unif(0.5, 1.5)) == pytest.approx(0.5, abs=1e-12)


def test_mixed_representations_rejected():
    with pytest.raises(RepresentationError):
        overlap_mass(Atomic([(0.5, 1.0)]), unif())


def test_shifted_overlap_cantor():
    assert shifted_overlap_infimum(DensityOnIntervals(svc_set(10)), 0.1) >= 0.25


def test_shifted_overlap_uniform():
    assert shifted_overlap_infimum(unif(), 0.5) == pytest.approx(0.5, abs=1e-12)


def test_shifted_overlap_atom():
    assert shifted_overlap_infimum(Atomic([(0.7, 1.0)]), 0.1) == 0.0


def test_certificate_exact_for_constant_density():
    cert = overlap_certificate(DensityOnIntervals(svc_set(10)), 0.1)
    assert cert.verdict == "exact-piecewise-linear"
    assert 0.25 <= cert.certified_lower <= cert.grid_min


@settings(max_examples=30, deadline=None)
@given(st.floats(-0.9, 0.9))
def test_overlap_symmetric_in_arguments(a):
    mu, nu = unif(0, 1), DensityOnIntervals([(0.2, 0.5), (0.6, 1.4)], weight=0.7)
    nu = shift_measure(nu, a)
    assert overlap_mass(mu, nu) == overlap_mass(nu, mu)


@settings(max_examples=30, deadline=None)
@given(st.floats(-0.5, 0.5))
def test_shift_identity_density(a):
    nu = DensityOnIntervals(svc_set(4))
    lhs = overlap_mass(nu, shift_measure(nu, a))
    rhs = overlap_mass(nu, shift_measure(nu, -a))
    assert lhs == pytest.approx(rhs, abs=1e-10)


@settings(max_examples=30, deadline=None)
@given(st.integers(-3, 3))
def test_shift_identity_atomic(k):
    nu = Atomic([(1.0, 0.2), (2.0, 0.3), (3.0, 0.5)])
    a = float(k)
    assert overlap_mass(nu, shift_measure(nu, a)) == pytest.approx(overlap_mass(nu, shift_measure(nu, -a)),
                                                                   abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.floats(-1.5, 1.5), st.floats(0.1, 3.0))
def test_jordan_hahn_density(a, w):
    mu = DensityOnIntervals([(0.0, 0.4), (0.5, 1.0)])
    nu = shift_measure(DensityOnIntervals([(0.1, 0.9)], weight=w), a)
    # independent L1 distance of the two densities on a fine grid aligned to every breakpoint
    z = np.linspace(-2, 4, 600001)
    l1 = trapezoid(np.abs(mu.pdf(z) - nu.pdf(z)), z)
    assert variation_distance(mu, nu) == pytest.approx(l1, abs=1e-4)
    assert overlap_mass(mu, nu) == pytest.approx(
        0.5 * (mu.total_mass + nu.total_mass - variation_distance(mu, nu)), abs=1e-10)


def test_jordan_hahn_atomic():
    mu = Atomic([(1.0, 0.2), (2.0, 0.8)])
    nu = Atomic([(2.0, 0.5), (3.0, 0.1)])
    var = 0.2 + 0.3 + 0.1
    assert variation_distance(mu, nu) == pytest.approx(var, abs=1e-15)
    assert overlap_mass(mu, nu) == pytest.approx(0.5 * (1.0 + 0.6 - var), abs=1e-15)


# fat Cantor sets

def test_svc_level_zero():
    u = svc_set(0)
    assert u.intervals == ((0, 1),) and u.length == 1


def test_svc_level_one():
    u = svc_set(1, Fraction(1, 4))
    assert len(u) == 2 and u.length == Fraction(7, 8)


def test_svc_length_tends_to_three_quarters():
    assert abs(float(svc_length(40)) - 0.75) < 1e-12


@pytest.mark.parametrize("level", range(0, 9))
@pytest.mark.parametrize("removed", [Fraction(1, 4), Fraction(1, 3), Fraction(1, 2)])
def test_svc_length_formula_exact(level, removed):
    u = svc_set(level, removed)
    assert u.length == 1 - removed * (1 - Fraction(1, 2 ** level))
    assert len(u) == 2 ** level


def test_svc_level_cap_warns(monkeypatch):
    monkeypatch.setattr(measures, "SVC_MAX_LEVEL", 3)
    with pytest.warns(RuntimeWarning):
        u = svc_set(7)
    assert len(u) == 8


def test_interval_overlap_examples():
    u = IntervalUnion(((Fraction(0), Fraction(1)),))
    assert interval_overlap(u, Fraction(0)) == 1
    assert interval_overlap(u, Fraction(3, 10)) == Fraction(7, 10)
    assert interval_overlap(svc_set(10), Fraction(1, 20)) >= Fraction(1, 4)


@pytest.mark.parametrize("level", [2, 5, 10])
def test_svc_overlap_symmetric(level):
    u = svc_set(level)
    for k in range(1, 30):
        z = Fraction(k, 97)
        assert interval_overlap(u, z) == interval_overlap(u, -z)


def test_svc_overlap_above_limit_bound():
    # the limit set has length 3/4 and sits in [0, 1]; two copies shifted by z overlap in at least 1/2 - |z|
    u = svc_set(10)
    for k in range(-100, 101):
        z = Fraction(k, 1000)
        assert interval_overlap(u, z) >= Fraction(1, 2) - abs(z)


def test_autocorrelation_matches_exact_sweep():
    u = svc_set(6)
    prof = IntervalAutocorrelation(u)
    zs = [Fraction(k, 173) for k in range(-60, 61)]
    exact = np.array([float(interval_overlap(u, z)) for z in zs])
    assert np.max(np.abs(prof(np.array([float(z) for z in zs])) - exact)) < 1e-14


# density-overlap construction

def test_density_overlap_indicator():
    rho0 = lambda z: ((z >= 1) & (z <= 2)).astype(float)
    reg = density_overlap_region(rho0, 1.5, 0.5, delta_max=0.25)
    assert reg.F.as_float_array().tolist() == [[1.0, 2.0]]
    assert reg.K == pytest.approx(1.0, abs=1e-12)
    assert reg.inf_overlap == pytest.approx(0.75, abs=1e-6)
    assert reg.lower_bound >= reg.K / 8


def test_density_overlap_singular_density():
    rho0 = lambda z: np.abs(z - 1.5) ** -0.5
    reg = density_overlap_region(rho0, 1.5, 0.5)
    assert reg.lower_bound >= reg.K / 8 > 0


def test_density_overlap_excludes_origin():
    rho0 = lambda z: ((z >= -1) & (z <= 1)).astype(float)
    reg = density_overlap_region(rho0, 0.0, 1.0)
    assert not reg.F.contains(0.0)
    assert reg.lower_bound > 0


def test_density_overlap_divergent_reciprocal():
    rho0 = lambda z: np.abs(z - 1.5)
    with pytest.raises(PreconditionError):
        density_overlap_region(rho0, 1.5, 0.5)
