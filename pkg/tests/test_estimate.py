import math

import numpy as np
import pytest
from scipy import stats

from oucl.errors import DegenerateError, PreconditionError
from oucl.estimate import (TVCurve, TVRow, bound_thm11, fit_decay, gradient_sup_norm, indicator_halfline,
                           tv_exact_1d, tv_histogram)
from oucl.measures import SymmetricStable
from oucl.symbol import LevyTriplet, OUModel

N = 100_000


def gaussian_tv(dm, sigma):
    return 2 * (2 * stats.norm.cdf(abs(dm) / (2 * sigma)) - 1)


def gaussian_model():
    # symbol xi^2, so X_t ~ N(e^{-t} x, 1 - e^{-2t})
    return OUModel([[-1.0]], [[1.0]], LevyTriplet.gaussian([[2.0]]))


# histogram estimator

def test_identical_samples_zero():
    x = np.random.default_rng(1).normal(size=5000)
    est = tv_histogram(x, x)
    assert est.tv_hat == 0.0


def test_disjoint_samples_two():
    g = np.random.default_rng(2)
    est = tv_histogram(g.uniform(0, 1, 5000), g.uniform(5, 6, 5000))
    assert est.tv_hat == 2.0


def test_gaussian_shift():
    g = np.random.default_rng(3)
    est = tv_histogram(g.normal(0, 1, N), g.normal(1, 1, N))
    assert abs(est.tv_hat - gaussian_tv(1.0, 1.0)) <= 0.02
    assert est.std_err <= est.std_err_bound


def test_bootstrap_error_for_paired_samples():
    g = np.random.default_rng(4)
    x = g.normal(0, 1, 20_000)
    est = tv_histogram(x, x + 0.5, std_err="bootstrap", rng=5)
    assert est.method == "bootstrap" and 0 < est.std_err < 0.02
    assert abs(est.tv_hat - gaussian_tv(0.5, 1.0)) <= 0.03


def test_trimmed_grid_keeps_tails():
    g = np.random.default_rng(6)
    x, y = g.standard_cauchy(N), g.standard_cauchy(N) + 1.0
    # TV(Cauchy, Cauchy + 1) = (4/pi) arctan(1/2)
    exact = 4 / math.pi * math.atan(0.5)
    coarse = tv_histogram(x, y, trim=0.01)
    assert coarse.cells == 66
    # unit-width cells blur a unit shift; binning can only lose mass difference
    assert coarse.tv_hat <= exact + 3 * coarse.std_err
    fine = tv_histogram(x, y, bins_per_axis=256, trim=0.01)
    assert abs(fine.tv_hat - exact) <= 0.03


def test_empty_rejected():
    with pytest.raises(PreconditionError):
        tv_histogram([], [1.0])


def test_coarsening_does_not_increase_tv():
    g = np.random.default_rng(7)
    x, y = g.normal(0, 1, 20_000), g.normal(0.3, 1, 20_000)
    fine = tv_histogram(x, y, bins_per_axis=64).tv_hat
    coarse = tv_histogram(x, y, bins_per_axis=32).tv_hat
    assert coarse <= fine + 1e-12


def test_two_dimensional_histogram():
    g = np.random.default_rng(8)
    x = g.normal(size=(N, 2))
    y = g.normal(size=(N, 2)) + [1.0, 0.0]
    est = tv_histogram(x, y, bins_per_axis=32)
    assert est.cells == 1024
    assert abs(est.tv_hat - gaussian_tv(1.0, 1.0)) <= 0.04


# Fourier-exact 1-d distance

def test_exact_equal_points():
    assert tv_exact_1d(gaussian_model(), 1.0, 0.3, 0.3) == 0.0


@pytest.mark.parametrize("t", [0.2, 1.0, 3.0])
def test_exact_gaussian(t):
    val = tv_exact_1d(gaussian_model(), t, 1.0, -0.5)
    exact = gaussian_tv(1.5 * math.exp(-t), math.sqrt(1 - math.exp(-2 * t)))
    assert val == pytest.approx(exact, abs=1e-6)


def test_exact_cauchy():
    m = OUModel([[0.0]], [[1.0]], LevyTriplet.pure_jump(SymmetricStable(1.0)))
    assert tv_exact_1d(m, 1.0, 0.0, 1.0) == pytest.approx(4 / math.pi * math.atan(0.5), abs=1e-4)


def test_exact_triangle_inequality():
    m = OUModel([[-0.5]], [[1.0]], LevyTriplet.pure_jump(SymmetricStable(1.5)))
    ab = tv_exact_1d(m, 1.0, 0.0, 0.7)
    bc = tv_exact_1d(m, 1.0, 0.7, 1.5)
    ac = tv_exact_1d(m, 1.0, 0.0, 1.5)
    assert ac <= ab + bc + 1e-9


def test_exact_agrees_with_histogram():
    m = OUModel([[0.0]], [[1.0]], LevyTriplet.pure_jump(SymmetricStable(1.5)))
    from oucl.rng import RngStream
    from oucl.sampler import sample_ou_endpoint
    x = sample_ou_endpoint(m, 1.0, [0.0], "stable_exact", RngStream(9), N).values
    y = sample_ou_endpoint(m, 1.0, [1.0], "stable_exact", RngStream(10), N).values
    est = tv_histogram(x, y, trim=0.01)
    assert abs(est.tv_hat - tv_exact_1d(m, 1.0, 0.0, 1.0)) <= 0.03


# decay fits

def test_fit_recovers_power_law():
    t = np.array([1.0, 2.0, 4.0, 8.0, 16.0])
    tv = 1.5 * t ** -0.5
    fit = fit_decay((t, tv, np.full(5, 1e-4)))
    assert fit.slope == pytest.approx(-0.5) and fit.r_squared == pytest.approx(1.0) and fit.rows_used == 5


def test_fit_drops_saturated_and_noise_rows():
    t = np.array([0.1, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0])
    tv = np.array([2.0, 1.0, 0.5, 0.25, 0.125, 0.0625, 0.001])
    fit = fit_decay((t, tv, np.full(7, 0.002)))
    assert fit.rows_used == 5 and fit.slope == pytest.approx(-1.0)


def test_fit_degenerate():
    with pytest.raises(DegenerateError):
        fit_decay(([1.0, 2.0, 3.0], [2.0, 1.95, 1.99], [0.01] * 3))


def test_curve_rejects_out_of_range():
    c = TVCurve()
    c.append(TVRow(1.0, 0.5, 0.01, bound_thm11(1.0, 0.0)))
    with pytest.raises(ValueError):
        c.append(TVRow(2.0, 2.5, 0.01, 1.0))
    assert bound_thm11(0.01, 1.0) == 2.0 and bound_thm11(4.0, 1.0) == pytest.approx(1.0)


# gradients

def _probe(half, count=21):
    return [{"lo": -half, "hi": half, "count": count}]


def test_gradient_of_constant_is_zero():
    g = gradient_sup_norm(gaussian_model(), 1.0, lambda z: np.ones_like(z), _probe(0.5))
    assert g.sup_norm <= 1e-9


def test_gradient_gaussian_peak():
    t = 1.0
    sigma = math.sqrt(1 - math.exp(-2 * t))
    g = gradient_sup_norm(gaussian_model(), t, indicator_halfline, _probe(0.05))
    exact = math.exp(-t) / (sigma * math.sqrt(2 * math.pi))
    assert g.sup_norm == pytest.approx(exact, abs=1e-3)
    assert abs(g.argmax[0]) <= 0.01


def test_gradient_cauchy_scaling():
    m = OUModel([[0.0]], [[1.0]], LevyTriplet.pure_jump(SymmetricStable(1.0)))
    vals = {t: gradient_sup_norm(m, t, indicator_halfline, _probe(0.05 * t)).sup_norm for t in (0.25, 0.5)}
    # the Cauchy density at time t peaks at 1 / (pi t)
    for t, v in vals.items():
        assert v == pytest.approx(1 / (math.pi * t), rel=1e-2)
    assert vals[0.25] / vals[0.5] == pytest.approx(2.0, rel=1e-2)


def test_gradient_needs_positive_time():
    with pytest.raises(PreconditionError):
        gradient_sup_norm(gaussian_model(), 0.0, indicator_halfline, _probe(0.5))
