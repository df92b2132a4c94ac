import math
import warnings

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cpmschwarz.curve import (Curve, circle, closest_point, curve_from_name,
                              length, min_curvature_radius, mobius_boundary,
                              point_at_arclength)
from cpmschwarz.errors import (ConfigError, DegenerateCurveError,
                               NonUniqueClosestPoint)


def mobius_speed_mp(t, w=1, R=1):
    hw = mpmath.mpf(w) / 2
    rho = R + hw * mpmath.cos(t / 2)
    drho = -hw * mpmath.sin(t / 2) / 2
    vx = drho * mpmath.cos(t) - rho * mpmath.sin(t)
    vy = drho * mpmath.sin(t) + rho * mpmath.cos(t)
    vz = hw * mpmath.cos(t / 2) / 2
    return mpmath.sqrt(vx**2 + vy**2 + vz**2)


@pytest.fixture(scope="module")
def mobius_length_oracle():
    with mpmath.workdps(30):
        return float(mpmath.quad(mobius_speed_mp,
                                 mpmath.linspace(0, 4 * mpmath.pi, 9)))


@pytest.mark.parametrize("R", [0.5, 1.0, 2.0])
def test_circle_length(R):
    assert abs(length(circle(R)) - 2 * math.pi * R) <= 1e-10 * 2 * math.pi * R


def test_mobius_length_matches_extended_precision(mobius, mobius_length_oracle):
    assert abs(mobius.length - mobius_length_oracle) <= 1e-10 * mobius_length_oracle


def test_zero_length_curve_rejected():
    with pytest.raises(DegenerateCurveError):
        Curve(lambda t: np.zeros((np.size(t), 2)), 1.0, 2)


@pytest.mark.parametrize("make", [circle, mobius_boundary])
def test_closure(make):
    c = make()
    gap = np.linalg.norm(c.position(np.array([0.0]))
                         - c.position(np.array([c.period * (1 - 1e-8)])))
    diameter = np.ptp(c.position(np.linspace(0, c.period, 1000)), axis=0).max()
    assert gap <= 1e-6 * diameter


def test_arclength_table_monotone(mobius):
    t = np.linspace(0, mobius.period, 5001)
    s = mobius.arclength(t[:-1])
    assert s[0] == 0.0
    assert np.all(np.diff(s) > 0)
    assert abs(mobius._arclength_unwrapped(np.array([mobius.period]))[0]
               - mobius.length) <= 1e-10 * mobius.length


@pytest.mark.parametrize("x, cp, s", [
    ((2.0, 0.0), (1.0, 0.0), 0.0),
    ((0.3, 0.4), (0.6, 0.8), math.atan2(0.8, 0.6)),
])
def test_circle_closest_point_examples(unit_circle, x, cp, s):
    with warnings.catch_warnings():
        # (2, 0) sits exactly at distance R0 from the unit circle
        warnings.simplefilter("ignore", RuntimeWarning)
        res = closest_point(unit_circle, np.array(x))
    np.testing.assert_allclose(res.point, cp, atol=1e-14)
    assert abs(res.s - s) <= 1e-12


def test_centre_is_not_unique(unit_circle):
    with pytest.raises(NonUniqueClosestPoint):
        unit_circle.closest_point(np.zeros(2))


def test_outside_reach_warns(unit_circle):
    with pytest.warns(RuntimeWarning):
        res = unit_circle.closest_point(np.array([3.0, 0.0]))
    assert res.outside_reach


def test_optimality_residual(mobius):
    rng = np.random.default_rng(1)
    t0 = rng.uniform(0, mobius.period, 200)
    offsets = rng.normal(size=(200, 3))
    offsets *= (0.4 * mobius.min_curvature_radius
                * rng.uniform(size=(200, 1))
                / np.linalg.norm(offsets, axis=1, keepdims=True))
    x = mobius.position(t0) + offsets
    cp, t, s, dist = mobius.closest_points(x)
    v = mobius.velocity(t)
    resid = np.abs(np.sum((x - cp) * v, axis=1))
    bound = 1e-12 * np.linalg.norm(v, axis=1) * np.maximum(
        np.linalg.norm(x, axis=1), 1.0)
    assert np.all(resid <= bound)


@settings(max_examples=40, deadline=None)
@given(t0=st.floats(0, 4 * math.pi, exclude_max=True),
       direction=st.tuples(*[st.floats(-1, 1)] * 3),
       frac=st.floats(0, 0.49))
def test_global_minimum_property(mobius, t0, direction, frac):
    d = np.array(direction)
    if np.linalg.norm(d) < 1e-3:
        d = np.array([1.0, 0, 0])
    x = (mobius.position(np.array([t0]))[0]
         + frac * mobius.min_curvature_radius * d / np.linalg.norm(d))
    res = mobius.closest_point(x)
    rng = np.random.default_rng(abs(hash((t0, frac))) % 2**32)
    others = mobius.position(rng.uniform(0, mobius.period, 1000))
    assert res.distance <= np.min(np.linalg.norm(others - x, axis=1)) + 1e-14


@settings(max_examples=60, deadline=None)
@given(frac=st.floats(0, 1, exclude_max=True))
def test_round_trip(mobius, frac):
    L = mobius.length
    s = frac * L
    res = mobius.closest_point(point_at_arclength(mobius, s))
    diff = abs(res.s - s)
    assert min(diff, L - diff) <= 1e-8 * L


@pytest.mark.parametrize("s, expected", [(0.0, (1.0, 0.0)),
                                         (math.pi, (-1.0, 0.0))])
def test_point_at_arclength_circle(unit_circle, s, expected):
    # s(t) = s holds to 1e-10 L, so the point agrees to that order
    np.testing.assert_allclose(point_at_arclength(unit_circle, s), expected,
                               atol=1e-10 * 2 * math.pi)


def test_point_at_arclength_mobius_half(mobius):
    L = mobius.length
    t = mobius.parameter_at_arclength(np.array([L / 2]))
    assert abs(mobius.arclength(t)[0] - L / 2) <= 1e-10 * L


def test_arclength_is_periodic(unit_circle):
    a = point_at_arclength(unit_circle, 1.0)
    b = point_at_arclength(unit_circle, 1.0 + 2 * math.pi)
    np.testing.assert_allclose(a, b, atol=1e-13)


@pytest.mark.parametrize("R", [1.0, 2.0])
def test_circle_curvature_radius(R):
    assert abs(min_curvature_radius(circle(R)) - R) <= 1e-10


def test_mobius_curvature_radius_dense_oracle(mobius):
    # independent closed-form curvature on a much finer grid
    t = np.linspace(0, 4 * math.pi, 2**18, endpoint=False)
    hw = 0.5
    rho = 1 + hw * np.cos(t / 2)
    drho = -0.5 * hw * np.sin(t / 2)
    ddrho = -0.25 * hw * np.cos(t / 2)
    v = np.column_stack([drho * np.cos(t) - rho * np.sin(t),
                         drho * np.sin(t) + rho * np.cos(t),
                         0.5 * hw * np.cos(t / 2)])
    a = np.column_stack([
        ddrho * np.cos(t) - 2 * drho * np.sin(t) - rho * np.cos(t),
        ddrho * np.sin(t) + 2 * drho * np.cos(t) - rho * np.sin(t),
        -0.25 * hw * np.sin(t / 2)])
    kappa = (np.linalg.norm(np.cross(v, a), axis=1)
             / np.linalg.norm(v, axis=1) ** 3)
    assert abs(mobius.min_curvature_radius - 1 / kappa.max()) <= 1e-4


def test_finite_difference_derivatives_agree_with_analytic():
    ref = circle(1.5)
    fd = Curve(lambda t: 1.5 * np.column_stack([np.cos(t), np.sin(t)]),
               2 * math.pi, 2)
    assert abs(fd.length - ref.length) <= 1e-10 * ref.length
    assert abs(fd.min_curvature_radius - 1.5) <= 1e-4


@pytest.mark.parametrize("name, dim, L", [
    ("circle", 2, 2 * math.pi),
    ("circle:R=2", 2, 4 * math.pi),
    ("mobius-boundary", 3, None),
])
def test_curve_from_name(name, dim, L):
    c = curve_from_name(name)
    assert c.dim == dim
    if L is not None:
        assert abs(c.length - L) <= 1e-10 * L


@pytest.mark.parametrize("name", ["ellipse", "circle:Q=1", "circle:R=x",
                                  "mobius-boundary:w"])
def test_curve_from_name_rejects(name):
    with pytest.raises(ConfigError):
        curve_from_name(name)


def test_vectorised_queries_match_scalar(unit_circle):
    rng = np.random.default_rng(3)
    x = rng.uniform(-1.4, 1.4, size=(50, 2))
    x = x[np.abs(np.linalg.norm(x, axis=1) - 1) < 0.4]
    cp, t, s, dist = unit_circle.closest_points(x)
    np.testing.assert_allclose(cp, x / np.linalg.norm(x, axis=1)[:, None],
                               atol=1e-13)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        for k in range(3):
            assert abs(unit_circle.closest_point(x[k]).s - s[k]) <= 1e-13
