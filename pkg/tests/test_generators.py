import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bregsq.errors import DomainError, EmptyInput, InvalidWeights, InversionError
from bregsq.generators import (
    BregmanGenerator,
    bregman_mean,
    divergence,
    euclidean,
    exponential,
    geometric,
    harmonic,
    identity,
    parse_generator,
    power,
)

ALL = ["euclidean", "identity", "geometric", "harmonic", "power:0.5", "power:-0.5", "power:-2", "power:0", "power:-1", "exp"]


def grid_for(g):
    if g.domain[0] == 0.0:
        return np.geomspace(0.05, 20.0, 41)
    return np.linspace(-5.0, 5.0, 41)


@pytest.mark.parametrize("name", ALL)
def test_strict_convexity_on_grid(name):
    g = parse_generator(name)
    assert np.all(g.gamma_pp(grid_for(g)) > 0)


@pytest.mark.parametrize("name", ALL)
def test_inverse_roundtrip(name):
    g = parse_generator(name)
    x = grid_for(g)
    back = g.invert(g.gamma_p(x))
    np.testing.assert_allclose(back, x, rtol=1e-12)


@pytest.mark.parametrize("name", ALL)
def test_derivatives_match_finite_differences(name):
    g = parse_generator(name)
    x = grid_for(g)
    h = 1e-5 * np.maximum(1.0, np.abs(x))
    fd1 = (g.gamma(x + h) - g.gamma(x - h)) / (2 * h)
    fd2 = (g.gamma_p(x + h) - g.gamma_p(x - h)) / (2 * h)
    np.testing.assert_allclose(g.gamma_p(x), fd1, rtol=1e-6, atol=1e-8)
    np.testing.assert_allclose(g.gamma_pp(x), fd2, rtol=1e-6)
    if g.gamma_ppp is not None:
        fd3 = (g.gamma_pp(x + h) - g.gamma_pp(x - h)) / (2 * h)
        np.testing.assert_allclose(g.gamma_ppp(x), fd3, rtol=1e-5, atol=1e-9)


def test_family_domains():
    assert euclidean().domain == (-math.inf, math.inf)
    assert exponential().domain == (-math.inf, math.inf)
    for g in (geometric(), harmonic(), power(0.7)):
        assert g.domain == (0.0, math.inf)


@pytest.mark.parametrize("beta", [-2.0, -1.5, -1.0, -0.5, 0.0, 0.5, 1.0, 3.0])
def test_power_second_derivative_shape(beta):
    g = power(beta)
    x = np.geomspace(0.1, 10, 17)
    np.testing.assert_allclose(g.gamma_pp(x), x**beta, rtol=1e-14)


def test_power_minus_one_is_geometric():
    x = np.geomspace(0.1, 10, 9)
    np.testing.assert_allclose(power(-1).gamma_p(x), geometric().gamma_p(x))


def test_divergence_examples():
    assert divergence(euclidean(), 3.0, 1.0) == pytest.approx(4.0, abs=1e-15)
    for name in ALL:
        assert divergence(parse_generator(name), 2.0, 2.0) == 0.0
    assert divergence(geometric(), 2.0, 1.0) == pytest.approx(2 * math.log(2) - 1, rel=1e-14)
    # x ln(x/x') + x' - x, written out independently
    x, x0 = 5.0, 0.3
    assert divergence(geometric(), x, x0) == pytest.approx(x * math.log(x / x0) + x0 - x, rel=1e-13)


def test_divergence_domain_error_names_argument():
    with pytest.raises(DomainError) as e:
        divergence(geometric(), 1.0, -2.0)
    assert e.value.argument == "x0"
    with pytest.raises(DomainError) as e:
        divergence(harmonic(), 0.0, 1.0)
    assert e.value.argument == "x"


@pytest.mark.parametrize("name", ALL)
def test_divergence_positive_on_random_pairs(name):
    g = parse_generator(name)
    rng = np.random.default_rng(7)
    if g.domain[0] == 0.0:
        x, y = rng.uniform(0.1, 10, 10_000), rng.uniform(0.1, 10, 10_000)
    else:
        x, y = rng.uniform(-3, 3, 10_000), rng.uniform(-3, 3, 10_000)
    d = divergence(g, x, y)
    assert np.all(d[x != y] > 0)


def test_bregman_mean_examples():
    assert bregman_mean(euclidean(), [(0.5, 1), (0.5, 3)]) == pytest.approx(2.0, rel=1e-15)
    assert bregman_mean(geometric(), [(0.5, 1), (0.5, 4)]) == pytest.approx(2.0, rel=1e-14)
    assert bregman_mean(harmonic(), [(0.5, 1), (0.5, 3)]) == pytest.approx(1.5, rel=1e-14)


def test_bregman_mean_errors():
    with pytest.raises(EmptyInput):
        bregman_mean(euclidean(), [])
    with pytest.raises(InvalidWeights):
        bregman_mean(euclidean(), [(0.5, 1.0), (0.6, 2.0)])
    with pytest.raises(InvalidWeights):
        bregman_mean(euclidean(), [(1.5, 1.0), (-0.5, 2.0)])
    with pytest.raises(DomainError):
        bregman_mean(geometric(), [(0.5, -1.0), (0.5, 2.0)])


def test_power_zero_mean_is_arithmetic():
    # gamma'' = x^0 is the Euclidean shape up to affine terms
    pts = [(0.2, 1.0), (0.3, 2.5), (0.5, 7.0)]
    assert bregman_mean(power(0.0), pts) == pytest.approx(sum(w * x for w, x in pts), rel=1e-12)


weights = st.lists(st.floats(0.01, 1.0), min_size=1, max_size=8)


@settings(max_examples=200, deadline=None)
@given(w=weights, data=st.data(), name=st.sampled_from(ALL))
def test_mean_betweenness(w, data, name):
    g = parse_generator(name)
    lo, hi = (0.05, 50.0) if g.domain[0] == 0.0 else (-5.0, 5.0)
    xs = data.draw(st.lists(st.floats(lo, hi), min_size=len(w), max_size=len(w)))
    total = sum(w)
    pairs = [(wi / total, xi) for wi, xi in zip(w, xs)]
    # renormalise exactly so the weight check passes
    drift = 1.0 - sum(p[0] for p in pairs)
    pairs[0] = (pairs[0][0] + drift, pairs[0][1])
    m = bregman_mean(g, pairs)
    assert min(xs) <= m <= max(xs)


@settings(max_examples=100, deadline=None)
@given(a=st.floats(0.1, 10.0), b=st.floats(-5.0, 5.0))
def test_affine_change_of_gamma_prime_leaves_mean_unchanged(a, b):
    g = geometric()
    shifted = BregmanGenerator(
        name="affine-geometric",
        domain=g.domain,
        gamma=lambda x: a * g.gamma(np.asarray(x)) + b * np.asarray(x),
        gamma_p=lambda x: a * np.log(np.asarray(x, dtype=float)) + b,
        gamma_pp=lambda x: a / np.asarray(x, dtype=float),
        gamma_p_inv=lambda z: np.exp((np.asarray(z, dtype=float) - b) / a),
    )
    pts = [(0.25, 0.5), (0.25, 3.0), (0.5, 9.0)]
    assert bregman_mean(shifted, pts) == pytest.approx(bregman_mean(g, pts), rel=1e-12)


def test_bisection_inverse_used_when_missing():
    g = BregmanGenerator(
        name="cubic",
        domain=(0.0, math.inf),
        gamma=lambda x: np.asarray(x) ** 3 / 3.0,
        gamma_p=lambda x: np.asarray(x, dtype=float) ** 2,
        gamma_pp=lambda x: 2.0 * np.asarray(x, dtype=float),
        p_range=(0.0, math.inf),
    )
    x = np.array([0.01, 0.5, 1.0, 3.0, 250.0])
    np.testing.assert_allclose(g.invert(g.gamma_p(x)), x, rtol=1e-12)
    assert g.invert(4.0) == pytest.approx(2.0, rel=1e-12)


def test_invert_rejects_values_outside_range():
    with pytest.raises(InversionError):
        harmonic().invert(1.5)
    with pytest.raises(InversionError):
        exponential().invert(-1.0)


def test_parse_generator():
    assert parse_generator(" Geometric ").name == "geometric"
    assert parse_generator("power:0.25").params["beta"] == 0.25
    assert identity().gamma_p(np.array(3.0)) == 3.0
    with pytest.raises(ValueError):
        parse_generator("nope")
    with pytest.raises(ValueError):
        parse_generator("power:x")
