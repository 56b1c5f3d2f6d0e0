import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oucl.errors import PreconditionError, UnboundedSearchError
from oucl.measures import Atomic, DensityOnIntervals, SymmetricStable
from oucl.symbol import (LevyTriplet, Lattice, OUModel, bound_report, characteristic_exponent, check_conditions,
                         density_via_fourier, ou_pushforward_triplet, phi_inverse, phi_sup, pushforward_exponent,
                         pushforward_triplet, time_integrated_exponent)


def stable_model(alpha, a=-1.0, scale=1.0):
    return OUModel([[a]], [[1.0]], LevyTriplet.pure_jump(SymmetricStable(alpha, scale)))


# characteristic exponent

def test_single_atom_at_pi():
    tr = LevyTriplet.pure_jump(Atomic([(1.0, 1.0)]))
    assert characteristic_exponent(tr, math.pi) == pytest.approx(2.0, abs=1e-15)


def test_gaussian_term():
    tr = LevyTriplet.gaussian([[1.0]])
    for xi in (0.3, -2.0, 5.0):
        assert characteristic_exponent(tr, xi) == pytest.approx(xi * xi / 2, abs=1e-14)


def test_drift_term():
    tr = LevyTriplet(np.zeros((2, 2)), [0.5, -1.5], None)
    xi = np.array([2.0, 1.0])
    assert characteristic_exponent(tr, xi) == pytest.approx(1j * (0.5 * 2.0 - 1.5 * 1.0), abs=1e-15)


triplets = [
    LevyTriplet.pure_jump(Atomic([(0.5, 1.0), (-2.0, 0.3)])),
    LevyTriplet.pure_jump(DensityOnIntervals([(0.1, 0.4), (0.6, 1.5)])),
    LevyTriplet.pure_jump(SymmetricStable(1.3)),
    LevyTriplet([[0.7]], [0.2], Atomic([(0.3, 2.0)])),
]


@settings(max_examples=50, deadline=None)
@given(st.sampled_from(range(len(triplets))), st.floats(-50, 50))
def test_real_part_nonnegative_and_hermitian(i, xi):
    tr = triplets[i]
    phi = characteristic_exponent(tr, xi)
    assert phi.real >= -1e-12
    assert characteristic_exponent(tr, -xi) == pytest.approx(phi.conjugate(), abs=1e-12)


# pushforwards

def test_identity_pushforward():
    tr = triplets[0]
    m = OUModel([[-1.0]], [[1.0]], tr)
    for xi in (0.2, 1.7):
        assert pushforward_exponent(m, xi) == characteristic_exponent(tr, xi)


def test_scaled_stable_pushforward():
    alpha = 1.5
    m = OUModel([[-1.0]], [[2.0]], LevyTriplet.pure_jump(SymmetricStable(alpha, 0.8)))
    for xi in (0.5, 3.0):
        assert pushforward_exponent(m, xi).real == pytest.approx(2 ** alpha * abs(xi) ** alpha * 0.8, rel=1e-12)


def test_projected_atom_vanishes():
    m = OUModel([[-1.0]], [[1.0, 0.0]], LevyTriplet.pure_jump(Atomic([((0.0, 1.0), 1.0)])))
    assert pushforward_exponent(m, 1.3) == 0


def test_pushforward_triplet_matches_exponent():
    tr = LevyTriplet.pure_jump(Atomic([((0.3, 0.9), 1.0), ((-0.2, 0.5), 0.4)]))
    B = np.array([[1.0, 2.0], [0.0, 3.0]])
    m = OUModel(-np.eye(2), B, tr)
    pb = pushforward_triplet(tr, B)
    for xi in ([0.5, -1.0], [2.0, 0.3]):
        assert characteristic_exponent(pb, xi) == pytest.approx(pushforward_exponent(m, xi), abs=1e-12)


# time-integrated exponent

def test_zero_drift_matrix_is_linear_in_time():
    m = OUModel([[0.0]], [[1.0]], triplets[0])
    assert time_integrated_exponent(m, 2.5, 0.7) == pytest.approx(2.5 * characteristic_exponent(triplets[0], 0.7))


@pytest.mark.parametrize("alpha", [0.5, 1.0, 1.5])
def test_stable_closed_form(alpha):
    m = stable_model(alpha)
    for t in (0.1, 1.0, 10.0):
        for xi in (0.3, 4.0):
            exact = abs(xi) ** alpha * (1 - math.exp(-alpha * t)) / alpha
            assert time_integrated_exponent(m, t, xi).real == pytest.approx(exact, rel=1e-9)


def test_time_zero():
    assert time_integrated_exponent(stable_model(1.0), 0.0, 3.0) == 0


@settings(max_examples=15, deadline=None)
@given(st.floats(0.1, 2.0), st.floats(0.1, 2.0), st.floats(-3, 3))
def test_time_splitting(s, t, xi):
    A = np.array([[-0.4, 1.0], [-1.0, -0.1]])
    m = OUModel(A, np.eye(2), LevyTriplet.pure_jump(Atomic([((0.5, 0.2), 1.0), ((-0.3, 0.7), 0.5)])))
    v = np.array([xi, 0.5])
    from oucl.spectral import matrix_exponential
    lhs = time_integrated_exponent(m, s + t, v)
    rhs = time_integrated_exponent(m, s, v) + time_integrated_exponent(m, t, matrix_exponential(A, s).T @ v)
    assert abs(lhs - rhs) <= 1e-8 * (1 + abs(lhs))


# time-t triplet

def test_atomic_mass_doubles_without_drift():
    m = OUModel([[0.0]], [[1.0]], LevyTriplet.pure_jump(Atomic([(1.0, 1.0)])))
    nu_t = ou_pushforward_triplet(m, 2.0).nu
    assert np.allclose(nu_t.locations, 1.0)
    assert nu_t.masses.sum() == pytest.approx(2.0, rel=1e-14)


def test_zero_time_triplet():
    tr = ou_pushforward_triplet(stable_model(1.0), 0.0)
    assert tr.nu is None and not np.any(tr.b)


def test_atomic_spreads_under_contraction():
    m = OUModel([[-1.0]], [[1.0]], LevyTriplet.pure_jump(Atomic([(1.0, 1.0)])))
    nu_t = ou_pushforward_triplet(m, math.log(2)).nu
    assert np.all((nu_t.locations >= 0.5) & (nu_t.locations <= 1.0))
    assert nu_t.masses.sum() == pytest.approx(math.log(2), rel=1e-14)


def test_gaussian_part_rejected():
    m = OUModel([[-1.0]], [[1.0]], LevyTriplet.gaussian([[1.0]]))
    with pytest.raises(PreconditionError):
        ou_pushforward_triplet(m, 1.0)


# phi_t and its inverse

@pytest.mark.parametrize("alpha", [0.5, 1.0, 1.5])
def test_phi_sup_closed_form(alpha):
    m = stable_model(alpha)
    for t in (0.5, 3.0):
        for rho in (0.5, 2.0):
            exact = rho ** alpha * (1 - math.exp(-alpha * t)) / alpha
            assert phi_sup(m, t, rho) == pytest.approx(exact, rel=1e-9)
            assert phi_sup(m, t, 2 * rho) == pytest.approx(2 ** alpha * phi_sup(m, t, rho), rel=1e-9)


def test_phi_sup_linear_in_time_without_drift():
    m = stable_model(1.2, a=0.0)
    assert phi_sup(m, 3.0, 1.5) == pytest.approx(3.0 * phi_sup(m, None, 1.5), rel=1e-12)


def test_phi_sup_monotone_in_time_and_radius():
    m = OUModel([[-0.5]], [[1.0]], LevyTriplet.pure_jump(DensityOnIntervals([(0.2, 1.0)])))
    ts = [0.25, 0.5, 1, 2, 4]
    rhos = [0.5, 1, 2, 4, 8]
    grid = np.array([[phi_sup(m, t, r) for r in rhos] for t in ts])
    assert np.all(np.diff(grid, axis=0) >= 0)
    assert np.all(np.diff(grid, axis=1) >= 0)


@pytest.mark.parametrize("alpha", [0.5, 1.0, 1.5])
def test_phi_inverse_closed_form(alpha):
    m = stable_model(alpha)
    for t in (0.1, 1.0, 10.0):
        exact = (alpha / (1 - math.exp(-alpha * t))) ** (1 / alpha)
        assert phi_inverse(m, t) == pytest.approx(exact, rel=1e-6)


def test_phi_inverse_without_drift():
    alpha = 1.5
    m = stable_model(alpha, a=0.0)
    for t in (0.5, 2.0):
        assert phi_inverse(m, t) == pytest.approx(t ** (-1 / alpha), rel=1e-7)


@pytest.mark.parametrize("level", [0.3, 1.0, 7.0])
def test_phi_inverse_roundtrip(level):
    m = OUModel([[-1.0]], [[1.0]], LevyTriplet([[0.5]], [0.0], SymmetricStable(0.8)))
    rho = phi_inverse(m, 1.0, level)
    assert level * (1 - 1e-6) <= phi_sup(m, 1.0, rho) <= level * (1 + 1e-6)


def test_phi_inverse_unreachable():
    m = OUModel([[0.0]], [[1.0]], LevyTriplet.pure_jump(Atomic([(1.0, 0.1)])))
    with pytest.raises(UnboundedSearchError):
        phi_inverse(m, 1.0, level=5.0)


# conditions

def test_conditions_stable_driver():
    flags = check_conditions(stable_model(1.0))
    assert flags.cond_16 and flags.cond_19 and flags.cond_17_implied


def test_conditions_compound_poisson():
    m = OUModel([[-1.0]], [[1.0]], LevyTriplet.pure_jump(DensityOnIntervals([(0.0, 1.0)])))
    assert not check_conditions(m).cond_16


# Fourier inversion

def test_gaussian_density():
    m = OUModel([[0.0]], [[1.0]], LevyTriplet.gaussian([[1.0]]))
    g = density_via_fourier(m, 1.0, Lattice.symmetric(12, 4097))
    x = g.axes[0]
    assert np.max(np.abs(g.values - np.exp(-x ** 2 / 2) / math.sqrt(2 * math.pi))) <= 1e-8
    assert g.integral() == pytest.approx(1.0, abs=1e-4)


def test_cauchy_density():
    m = stable_model(1.0, a=0.0)
    g = density_via_fourier(m, 1.0, Lattice.symmetric(1e4, (1 << 20) + 1))
    x = g.axes[0]
    assert np.max(np.abs(g.values - 1 / (math.pi * (1 + x ** 2)))) <= 1e-6
    assert g.integral() == pytest.approx(1.0, abs=1e-4)
    assert g.values.min() >= -1e-8


def test_symmetric_density_is_even():
    m = OUModel([[-1.0]], [[1.0]], LevyTriplet.pure_jump(SymmetricStable(0.7)))
    g = density_via_fourier(m, 2.0, Lattice.symmetric(30, 2049))
    assert np.max(np.abs(g.values - g.values[::-1])) <= 1e-10


def test_density_2d_integrates_to_one():
    m = OUModel(-np.eye(2), np.eye(2), LevyTriplet.gaussian(np.eye(2)))
    g = density_via_fourier(m, 1.0, Lattice.symmetric(6, 257, dim=2))
    assert g.integral() == pytest.approx(1.0, abs=1e-4)
    assert g.values.min() >= -1e-8


def test_non_integrable_characteristic_function():
    m = OUModel([[-1.0]], [[1.0]], LevyTriplet.pure_jump(Atomic([(1.0, 1.0)])))
    with pytest.raises(PreconditionError):
        density_via_fourier(m, 1.0, Lattice.symmetric(5, 257))


# bounds

def test_bound_report_equal_points():
    r = bound_report(stable_model(1.5), 1.0, [0.3], [0.3])
    assert r.tv_bound == 0


def test_gradient_bound_small_time_rate():
    alpha = 1.5
    m = OUModel(-np.eye(2), np.eye(2), LevyTriplet.pure_jump(SymmetricStable(alpha, dim=2)))
    cond = check_conditions(m, diagnostics=False)
    g = {t: bound_report(m, t, [1.0, 0.0], [0.0, 0.0], conditions=cond).gradient_bound_small_t
         for t in (0.125, 0.25, 0.5)}
    for t in (0.125, 0.25, 0.5):
        assert g[t] == pytest.approx(t ** (-1 / alpha), rel=1e-6)


def test_phi_inverse_decreases_to_limit():
    alpha = 1.5
    m = stable_model(alpha)
    vals = [phi_inverse(m, t) for t in (1, 2, 4, 8, 16, 32)]
    # strictly decreasing until the change drops below the search tolerance
    assert all(b <= a * (1 + 1e-8) for a, b in zip(vals, vals[1:]))
    assert vals[0] > vals[1] > vals[2]
    assert vals[-1] == pytest.approx(alpha ** (1 / alpha), rel=1e-6)
