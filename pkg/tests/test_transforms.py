"""Positive link transforms: frozen values and derivative identities."""

import numpy as np
import pytest

from nsgpreg import LinkTransform


def test_exp_apply_frozen():
    # reference value from 40-digit arithmetic: exp(-0.3 + 0.4)
    link = LinkTransform("exp", baseline=0.4)
    assert link.apply(-0.3) == pytest.approx(1.1051709180756476, rel=1e-15)


def test_exp_deriv_equals_value_without_floor():
    link = LinkTransform("exp", baseline=-0.7)
    u = np.linspace(-2.0, 2.0, 9)
    np.testing.assert_allclose(link.deriv(u), link.apply(u), rtol=1e-15)
    np.testing.assert_allclose(link.deriv(u, order=2), link.apply(u), rtol=1e-15)


def test_exp_floor_shifts_value_not_derivative():
    plain = LinkTransform("exp", baseline=0.1)
    floored = LinkTransform("exp", baseline=0.1, floor=0.25)
    u = np.array([-1.0, 0.0, 2.0])
    np.testing.assert_allclose(floored.apply(u), plain.apply(u) + 0.25, rtol=1e-15)
    np.testing.assert_allclose(floored.deriv(u), plain.deriv(u), rtol=1e-15)


def test_logistic_frozen_values():
    # reference values from 40-digit arithmetic at u=0.3, baseline=-1
    link = LinkTransform("logistic", baseline=-1.0)
    assert link.apply(0.3) == pytest.approx(0.33181222783183389, rel=1e-15)
    assert link.deriv(0.3) == pytest.approx(0.22171287329310905, rel=1e-14)
    assert link.deriv(0.3, order=2) == pytest.approx(0.07457878844034181, rel=1e-14)


def test_logistic_bounded_in_unit_interval():
    link = LinkTransform("logistic")
    u = np.linspace(-30.0, 30.0, 61)
    vals = link.apply(u)
    assert np.all(vals > 0.0) and np.all(vals < 1.0)
    assert np.all(np.diff(vals) > 0.0)


def test_softplus_like_alias_is_logistic():
    alias = LinkTransform("softplus-like", baseline=0.2)
    logistic = LinkTransform("logistic", baseline=0.2)
    assert alias.kind == "logistic"
    u = np.array([-1.5, 0.0, 0.7])
    np.testing.assert_array_equal(alias.apply(u), logistic.apply(u))


@pytest.mark.parametrize("kind", ["exp", "logistic"])
def test_derivatives_match_finite_differences(kind):
    link = LinkTransform(kind, baseline=0.3, floor=0.1)
    h = 1e-6
    for u in (-1.2, -0.1, 0.8):
        fd1 = (link.apply(u + h) - link.apply(u - h)) / (2 * h)
        fd2 = (link.deriv(u + h) - link.deriv(u - h)) / (2 * h)
        assert link.deriv(u) == pytest.approx(fd1, rel=1e-8, abs=1e-10)
        assert link.deriv(u, order=2) == pytest.approx(fd2, rel=1e-7, abs=1e-9)


def test_callable_alias():
    link = LinkTransform("exp")
    u = np.array([0.0, 1.0])
    np.testing.assert_array_equal(link(u), link.apply(u))


def test_unknown_kind_rejected():
    with pytest.raises(ValueError, match="kind"):
        LinkTransform("cubic")


def test_unknown_deriv_order_rejected():
    with pytest.raises(ValueError):
        LinkTransform("exp").deriv(0.0, order=3)
