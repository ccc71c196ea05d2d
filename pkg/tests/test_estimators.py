import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import frozen as F
from bregsq.distributions import exponential, pareto, parse_distribution, sample, uniform
from bregsq.errors import DomainError, EmptyInput, InversionError, NoInterval, TailTooSmall
from bregsq.estimators import (
    EmpiricalSample,
    bregman_superquantile_hat,
    clt_interval,
    empirical_quantile,
    estimate,
    monte_carlo_estimates,
    quantile_hat,
    superquantile_hat,
    tail_start,
)
from bregsq.generators import euclidean, exponential as exp_gen, geometric, harmonic, identity, parse_generator
from bregsq.oracle import true_bregman_superquantile

ONE_TO_TEN = np.arange(1.0, 11.0)


def test_tail_start_snaps_representation_error():
    assert tail_start(100, 0.95) == 95
    assert tail_start(20, 0.95) == 19
    assert tail_start(10, 0.33) == 3


def test_empirical_quantile_examples():
    assert empirical_quantile(ONE_TO_TEN, 0.95) == 10
    assert empirical_quantile([1, 2, 3, 4], 0.5) == 2
    assert abs(empirical_quantile(sample(exponential(), 1_000_000, 1), 0.95) - F.EXP_QUANTILE) < 0.02
    with pytest.raises(EmptyInput):
        empirical_quantile([], 0.5)


def test_superquantile_hat_examples():
    est = superquantile_hat(ONE_TO_TEN, 0.5)
    assert est.point == 8.0 and est.tail_count == 5
    assert abs(superquantile_hat(sample(exponential(), 1_000_000, 2), 0.95).point - F.EXP_SUPERQUANTILE) < 0.05


def test_superquantile_hat_empty_tail():
    with pytest.raises(TailTooSmall):
        superquantile_hat([1.0, 2.0], 1 - 1e-12)


def test_pareto_half_does_not_stabilise():
    vals = [superquantile_hat(sample(pareto(0.5), n, 12345), 0.95).point for n in (10**3, 10**4, 10**5)]
    assert max(vals) - min(vals) > 0.5 * float(np.median(vals))


def test_euclidean_equals_classical():
    x = sample(parse_distribution("exp:2@-1"), 5000, 3)
    assert bregman_superquantile_hat(x, euclidean(), 0.9).point == pytest.approx(superquantile_hat(x, 0.9).point, rel=1e-12)
    assert bregman_superquantile_hat(x, identity(), 0.9).point == pytest.approx(superquantile_hat(x, 0.9).point, rel=1e-12)


@pytest.mark.parametrize("name", ["euclidean", "identity", "geometric", "harmonic", "power:0.5", "power:-2", "exp"])
def test_constant_sample(name):
    assert bregman_superquantile_hat(np.full(100, 2.5), parse_generator(name), 0.95).point == pytest.approx(2.5, rel=1e-12)


def test_pareto_half_geometric_near_oracle():
    from bregsq.oracle import asymptotic_variance

    n = 1_000_000
    est = bregman_superquantile_hat(sample(pareto(0.5), n, 12345), geometric(), 0.95).point
    se = math.sqrt(F.PARETO05_AVAR_GEOMETRIC / n)
    assert abs(est - F.PARETO05_GEOMETRIC) < 3 * se
    assert asymptotic_variance(pareto(0.5), geometric(), 0.95) == pytest.approx(F.PARETO05_AVAR_GEOMETRIC, rel=1e-6)


def test_domain_error_reports_rank():
    x = np.concatenate([np.linspace(1.0, 5.0, 18), [-3.0, -2.0]])
    # the two negatives sort first, so the tail is clean at alpha=0.5
    assert bregman_superquantile_hat(x, geometric(), 0.5).point > 0
    with pytest.raises(DomainError) as e:
        bregman_superquantile_hat(x, geometric(), 0.05)
    assert e.value.index == 2
    assert "X_(2)" in str(e.value)


def test_inversion_error_when_inner_average_leaves_range():
    # harmonic gamma' = 1 - 1/x < 1; the 1/(n(1-alpha)) normalisation overshoots when n(1-alpha) < tail count
    x = np.full(7, 1e12)
    with pytest.raises(InversionError):
        bregman_superquantile_hat(x, harmonic(), 0.9)


def test_estimate_dispatch():
    x = sample(exponential(), 2000, 4)
    assert estimate(x, "quantile", 0.9).point == quantile_hat(x, 0.9).point
    assert estimate(x, "superquantile", 0.9).point == superquantile_hat(x, 0.9).point
    assert estimate(x, "bregman:geometric", 0.9).measure == "bregman:geometric"
    with pytest.raises(ValueError):
        estimate(x, "median", 0.9)


def test_sample_is_immutable():
    s = EmpiricalSample([3.0, 1.0, 2.0])
    assert s.sorted.tolist() == [1.0, 2.0, 3.0]
    with pytest.raises(ValueError):
        s.values[0] = 5.0
    with pytest.raises(ValueError):
        EmpiricalSample([1.0, float("nan")])


# -- properties ---------------------------------------------------------------

finite = st.floats(-1e3, 1e3, allow_nan=False)


@st.composite
def integral_tail_sizes(draw):
    # n(1 - alpha) integral, so the normalisation is exact
    alpha = draw(st.sampled_from([0.5, 0.75, 0.8, 0.9, 0.95]))
    step = round(1 / (1 - alpha))
    n = step * draw(st.integers(1, 40))
    return n, alpha


@settings(max_examples=150, deadline=None)
@given(data=st.data(), na=integral_tail_sizes(), c=finite)
def test_translation_equivariance(data, na, c):
    n, alpha = na
    x = np.array(data.draw(st.lists(finite, min_size=n, max_size=n)))
    got = superquantile_hat(x + c, alpha).point
    want = superquantile_hat(x, alpha).point + c
    assert got == pytest.approx(want, rel=1e-12, abs=1e-9)


@pytest.mark.parametrize("name", ["geometric", "power:0.5", "power:-2", "power:1"])
@pytest.mark.parametrize("lam", [0.5, 2.0, 10.0])
def test_positive_homogeneity(name, lam):
    g = parse_generator(name)
    x = sample(pareto(1.5), 20_000, 8)
    a = bregman_superquantile_hat(lam * x, g, 0.95).point
    b = lam * bregman_superquantile_hat(x, g, 0.95).point
    assert a == pytest.approx(b, rel=1e-10)


def test_exp_generator_homogeneity_fails():
    x = sample(uniform(), 1_000_000, 12345)
    g = exp_gen()
    ratio = bregman_superquantile_hat(4 * x, g, 0.95).point / (4 * bregman_superquantile_hat(x, g, 0.95).point)
    assert ratio - 1 == pytest.approx(F.EXPGEN_RATIO_4 - 1, rel=0.05)


@settings(max_examples=100, deadline=None)
@given(data=st.data(), na=integral_tail_sizes(), name=st.sampled_from(["identity", "geometric", "harmonic", "exp", "power:0.5"]))
def test_monotone_and_dominates_quantile(data, na, name):
    n, alpha = na
    g = parse_generator(name)
    # keep exp(x) finite for the exponential generator
    top = 50.0 if name == "exp" else 1e3
    x = np.array(data.draw(st.lists(st.floats(0.01, top), min_size=n, max_size=n)))
    bump = np.array(data.draw(st.lists(st.floats(0.0, 10.0), min_size=n, max_size=n)))
    lo = bregman_superquantile_hat(x, g, alpha).point
    hi = bregman_superquantile_hat(x + bump, g, alpha).point
    assert lo <= hi * (1 + 1e-12) + 1e-12
    assert lo >= empirical_quantile(x, alpha) * (1 - 1e-12) - 1e-12


# -- intervals ----------------------------------------------------------------


def test_theoretical_interval_half_width():
    x = sample(exponential(), 10_000, 5)
    est = clt_interval(superquantile_hat(x, 0.95), level=0.95, distribution=exponential())
    assert est.half_width == pytest.approx(1.959964 * math.sqrt(39 / 1e4), rel=1e-6)
    assert est.half_width == pytest.approx(0.1224, abs=1e-4)
    assert est.ci_low <= est.point <= est.ci_high
    assert est.variance_mode == "theoretical"


def test_level_zero_is_degenerate():
    x = sample(exponential(), 1000, 5)
    est = clt_interval(superquantile_hat(x, 0.95), level=0.0, sample=x)
    assert est.ci_low == est.point == est.ci_high


@pytest.mark.parametrize("measure", ["superquantile", "bregman:geometric", "bregman:harmonic", "quantile"])
def test_empirical_interval_close_to_theoretical(measure):
    x = sample(exponential(), 100_000, 6)
    est = estimate(x, measure, 0.95)
    emp = clt_interval(est, sample=x)
    theo = clt_interval(est, distribution=exponential())
    assert emp.half_width == pytest.approx(theo.half_width, rel=0.2)


def test_no_interval_for_infinite_variance():
    x = sample(pareto(1.5), 1000, 1)
    with pytest.raises(NoInterval) as e:
        clt_interval(superquantile_hat(x, 0.95), distribution=pareto(1.5))
    assert "diverges" in e.value.reason


def test_no_interval_for_flat_tail():
    with pytest.raises(NoInterval):
        clt_interval(superquantile_hat(np.ones(100), 0.9), sample=np.ones(100))


# -- Monte Carlo --------------------------------------------------------------


def test_monte_carlo_matches_single_estimates():
    seeds = [11, 12, 13]
    got = monte_carlo_estimates(exponential(), harmonic(), 0.95, 1000, seeds)
    want = [bregman_superquantile_hat(sample(exponential(), 1000, s), harmonic(), 0.95).point for s in seeds]
    np.testing.assert_allclose(got, want, rtol=1e-13)


def test_monte_carlo_variance_matches_limit():
    n = 20_000
    vals = monte_carlo_estimates(exponential(), geometric(), 0.95, n, range(400))
    assert n * vals.var(ddof=1) == pytest.approx(F.EXP_AVAR_GEOMETRIC, rel=0.2)


@pytest.mark.parametrize("spec,gname", [
    ("exp", "identity"), ("exp", "geometric"), ("exp", "harmonic"),
    ("pareto:1.5", "identity"), ("pareto:2.5", "identity"),
    ("pareto:0.5", "geometric"), ("pareto:1.5", "geometric"), ("pareto:2.5", "harmonic"), ("pareto:0.5", "harmonic"),
])
def test_consistency_regression(spec, gname):
    d, g = parse_distribution(spec), parse_generator(gname)
    truth = true_bregman_superquantile(d, g, 0.95)
    err = [np.median(np.abs(monte_carlo_estimates(d, g, 0.95, n, range(1000, 1050)) - truth)) for n in (10**3, 10**5)]
    assert err[1] < err[0]
