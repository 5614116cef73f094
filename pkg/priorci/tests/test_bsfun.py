import math

import numpy as np
import pytest

from priorci.bsfun import BSFunctions, build_spline_bs, even_knots, naive_bs, s_value_basis, standard_bs, transition_bs
from priorci.dist_core import INFINITE, DegreesOfFreedom, critical_value, t_quantile
from priorci.errors import InvalidInputError

from .conftest import RHO, random_spline_bs


def test_standard_bs_is_constant(trivial_bs):
    x = np.linspace(-10, 10, 2001)
    np.testing.assert_allclose(trivial_bs.b(x), 0.0, atol=1e-14)
    np.testing.assert_allclose(trivial_bs.s(x), trivial_bs.critical, atol=1e-12)
    assert trivial_bs.critical == pytest.approx(1.991673, abs=1e-6)


def test_b_is_exactly_odd():
    bs = random_spline_bs(np.random.default_rng(0), INFINITE, d=5.0)
    x = np.linspace(0, 7, 10_000)
    np.testing.assert_array_equal(bs.b(-x), -bs.b(x))
    np.testing.assert_array_equal(bs.s(-x), bs.s(x))
    assert bs.b(0.0) == 0.0


def test_spline_interpolates_knots():
    knots = [0, 1, 2, 3, 4]
    b_values = [0.4, -0.2, 0.1]
    s_values = [1.2, 1.4, 1.7, 1.9]
    bs = build_spline_bs(4.0, knots, b_values, s_values, 0.05, INFINITE)
    np.testing.assert_allclose(bs.b(np.array(knots[1:-1], dtype=float)), b_values, atol=1e-12)
    np.testing.assert_allclose(bs.s(np.array(knots[:-1], dtype=float)), s_values, atol=1e-12)
    assert bs.b(4.0) == 0.0
    assert bs.s(4.0) == bs.critical


def test_constant_beyond_cutoff():
    bs = random_spline_bs(np.random.default_rng(1), DegreesOfFreedom(20), d=3.0)
    far = np.array([3.0, 3.5, 10.0, 1e6])
    np.testing.assert_array_equal(bs.b(far), 0.0)
    np.testing.assert_array_equal(bs.b(-far), 0.0)
    np.testing.assert_array_equal(bs.s(far), bs.critical)


def test_b_is_clamped_and_continuous_at_cutoff():
    bs = random_spline_bs(np.random.default_rng(2), INFINITE, d=4.0)
    assert bs.b_spline(4.0, 1) == pytest.approx(0.0, abs=1e-12)
    assert bs.b_spline(-4.0, 1) == pytest.approx(0.0, abs=1e-12)
    assert bs.b(4.0 - 1e-9) == pytest.approx(0.0, abs=1e-8)
    assert bs.s(4.0 - 1e-9) == pytest.approx(bs.critical, abs=1e-8)


def test_third_derivative_piecewise_constant():
    bs = random_spline_bs(np.random.default_rng(3), INFINITE, d=4.0)
    third = bs.b_spline.derivative(3)
    for lo in range(4):
        inner = np.linspace(lo + 0.05, lo + 0.95, 7)
        values = third(inner)
        np.testing.assert_allclose(values, values[0], rtol=1e-9, atol=1e-9)


def test_natural_s_has_zero_curvature_at_ends():
    bs = random_spline_bs(np.random.default_rng(4), INFINITE, d=4.0)
    assert bs.s_spline(0.0, 2) == pytest.approx(0.0, abs=1e-10)
    assert bs.s_spline(4.0, 2) == pytest.approx(0.0, abs=1e-10)


def test_not_a_knot_s():
    bs = build_spline_bs(4.0, [0, 1, 2, 3, 4], [0, 0, 0], [1.0, 1.5, 1.2, 1.8], 0.05, INFINITE, s_bc="not-a-knot")
    third = bs.s_spline.derivative(3)
    assert third(0.999) == pytest.approx(third(1.001), abs=1e-9)


def test_not_a_knot_falls_back_with_few_knots():
    bs = build_spline_bs(2.0, [0, 1, 2], [0.3], [1.0, 1.5], 0.05, INFINITE, s_bc="not-a-knot")
    assert bs.s_spline(0.0, 2) == pytest.approx(0.0, abs=1e-10)


@pytest.mark.parametrize(
    "knots,b_values,s_values,s_bc",
    [
        ([0.5, 1, 2], [0.0], [1.0, 1.0], "natural"),
        ([0, 1, 1.5], [0.0], [1.0, 1.0], "natural"),
        ([0, 1, 1, 2], [0.0, 0.0], [1.0, 1.0, 1.0], "natural"),
        ([0, 1, 2], [0.0, 0.0], [1.0, 1.0], "natural"),
        ([0, 1, 2], [0.0], [1.0], "natural"),
        ([0, 1, 2], [0.0], [1.0, -0.1], "natural"),
        ([0, 1, 2], [math.nan], [1.0, 1.0], "natural"),
        ([0, 1, 2], [0.0], [1.0, 1.0], "clamped"),
    ],
)
def test_spline_validation(knots, b_values, s_values, s_bc):
    with pytest.raises(InvalidInputError):
        build_spline_bs(2.0, knots, b_values, s_values, 0.05, INFINITE, s_bc=s_bc)


def test_nonnegative_check_catches_dip():
    # nonnegative knot values whose natural spline still dips below zero on [1, 2]
    bs = build_spline_bs(3.0, [0, 1, 2, 3], [0.0, 0.0], [5.0, 0.0, 0.0], 0.05, INFINITE)
    assert bs.min_s() < -0.1
    with pytest.raises(InvalidInputError):
        bs.check_nonnegative()


def test_even_knots():
    assert even_knots(6.0, 0.75) == pytest.approx([0.75 * i for i in range(9)])
    assert even_knots(6.0, 0.75)[-1] == 6.0
    with pytest.raises(InvalidInputError):
        even_knots(6.0, 0.7)
    with pytest.raises(InvalidInputError):
        even_knots(0.0, 1.0)


def test_dict_round_trip():
    bs = random_spline_bs(np.random.default_rng(5), DegreesOfFreedom(76), d=6.0)
    again = BSFunctions.from_dict(bs.to_dict())
    assert again == bs
    x = np.linspace(-7, 7, 301)
    np.testing.assert_array_equal(again.b(x), bs.b(x))
    assert bs.to_dict()["dof"] == 76


def test_standard_bs_knot_count():
    bs = standard_bs(3.0, [0, 1, 2, 3], 0.1, "inf")
    assert len(bs.b_values) == 2
    assert len(bs.s_values) == 3
    assert bs.critical == pytest.approx(critical_value(0.1, INFINITE))


def test_naive_examples(dof76):
    q = critical_value(0.05, dof76)
    bs = naive_bs(q, RHO, 0.05, dof76)
    assert bs.b(1.0) == pytest.approx(-0.7071068, abs=1e-7)
    assert bs.b(-1.0) == pytest.approx(0.7071068, abs=1e-7)
    assert bs.b(3.0) == 0.0
    assert bs.s(3.0) == pytest.approx(1.991673, abs=1e-6)
    inner = t_quantile(0.975, DegreesOfFreedom(77)) * math.sqrt(0.5)
    assert bs.s(0.0) == pytest.approx(inner * math.sqrt(76 / 77), rel=1e-12)


def test_naive_jumps_at_q(dof76):
    q = critical_value(0.05, dof76)
    bs = naive_bs(q, RHO, 0.05, dof76)
    assert bs.b(q) == pytest.approx(RHO * q)
    assert bs.b(q + 1e-9) == 0.0
    assert bs.s(q) < bs.s(q + 1e-9) - 0.4
    np.testing.assert_array_equal(bs.breakpoints, [0.0, q])


def test_naive_needs_finite_dof():
    with pytest.raises(InvalidInputError):
        naive_bs(1.96, RHO, 0.05, INFINITE)
    with pytest.raises(InvalidInputError):
        naive_bs(0.0, RHO, 0.05, DegreesOfFreedom(10))


def test_transition_with_g_one_is_standard():
    bs = transition_bs(lambda x: 1.0, RHO, 0.05)
    x = np.linspace(-25, 25, 501)
    np.testing.assert_array_equal(bs.b(x), 0.0)
    np.testing.assert_allclose(bs.s(x), 1.959964, atol=1e-6)


def test_transition_endpoint_values():
    bs = transition_bs(lambda x: min(1.0, x / 5.0), RHO, 0.05)
    assert bs.s(0.0) == pytest.approx(math.sqrt(1.0 - RHO**2) * critical_value(0.05, INFINITE), abs=1e-12)
    assert bs.b(2.0) == pytest.approx(0.6 * RHO * 2.0, abs=1e-12)
    assert bs.b(6.0) == 0.0
    assert bs.s(6.0) == pytest.approx(bs.critical, abs=1e-12)
    assert bs.dof is INFINITE


@pytest.mark.parametrize(
    "g",
    [
        lambda x: 1.5,
        lambda x: -0.1,
        lambda x: 1.0 - min(1.0, x / 5.0),
        lambda x: min(1.0, x / 50.0),
    ],
)
def test_transition_rejects_bad_g(g):
    with pytest.raises(InvalidInputError):
        transition_bs(g, RHO, 0.05)


def test_random_draws_keep_shape_rules():
    rng = np.random.default_rng(100)
    for _ in range(100):
        d = float(rng.choice([3.0, 4.0, 6.0]))
        step = float(rng.choice([0.5, 0.75, 1.0]))
        dof = INFINITE if rng.random() < 0.5 else DegreesOfFreedom(int(rng.integers(3, 100)))
        bs = random_spline_bs(rng, dof, d=d, step=step)
        x = np.linspace(0.0, d + 2.0, 501)
        np.testing.assert_array_equal(bs.b(-x), -bs.b(x))
        np.testing.assert_array_equal(bs.s(-x), bs.s(x))
        assert bs.b(d - 1e-10) == pytest.approx(0.0, abs=1e-8)
        assert bs.s(d - 1e-10) == pytest.approx(bs.critical, abs=1e-8)
        np.testing.assert_allclose(bs.b(np.array(bs.knots[1:-1])), bs.b_values, atol=1e-10)
        np.testing.assert_allclose(bs.s(np.array(bs.knots[:-1])), bs.s_values, atol=1e-10)
        bs.check_nonnegative()


@pytest.mark.parametrize("s_bc,knots", [("natural", [0, 1, 2, 3]), ("not-a-knot", [0, 1, 2, 3, 4]), ("not-a-knot", [0, 1.5, 3])])
def test_s_value_basis_is_the_linear_part_of_s(s_bc, knots):
    d = float(knots[-1])
    x = np.linspace(0.0, d - 1e-9, 97)
    first = build_spline_bs(d, knots, [0.1] * (len(knots) - 2), np.linspace(1.2, 1.8, len(knots) - 1), 0.05, INFINITE, s_bc=s_bc)
    second = build_spline_bs(d, knots, [-0.4] * (len(knots) - 2), np.linspace(2.5, 0.9, len(knots) - 1), 0.05, INFINITE, s_bc=s_bc)
    basis = s_value_basis(knots, x, s_bc)
    assert basis.shape == (x.size, len(knots) - 1)
    delta = np.subtract(first.s_values, second.s_values)
    np.testing.assert_allclose(first.s(x) - second.s(x), basis @ delta, atol=1e-12)
