import math
from dataclasses import replace

import numpy as np
import pytest

from bregsq.assumptions import (
    BOUNDS,
    MARGIN,
    big_l_gamma,
    check_assumptions,
    fit_tail_exponent,
    l_gamma,
    tail_fit,
)
from bregsq.distributions import AnalyticDistribution, exponential, pareto, parse_distribution
from bregsq.errors import CapabilityError, SingularDensity, UnstableFit
from bregsq.generators import exponential as exp_gen, geometric, harmonic, identity, parse_generator

T = np.array([0.5, 0.9, 0.99, 1 - 2.0**-20])


def test_l_closed_forms():
    np.testing.assert_allclose(l_gamma(exponential(), None, T), 1 / (1 - T), rtol=1e-12)
    np.testing.assert_allclose(l_gamma(exponential(), harmonic(), T), 1 / ((1 - T) * np.log(1 - T) ** 2), rtol=1e-10)
    for a in (0.5, 1.5, 2.5):
        np.testing.assert_allclose(l_gamma(pareto(a), geometric(), T), 1 / (a * (1 - T)), rtol=1e-12)
        np.testing.assert_allclose(l_gamma(pareto(a), identity(), T), (1 - T) ** (-1 - 1 / a) / a, rtol=1e-12)


def test_big_l_closed_forms():
    np.testing.assert_allclose(big_l_gamma(exponential(), None, T), 1 / (1 - T) ** 2, rtol=1e-12)
    lg = np.log(1 - T)
    want = (lg**2 + 2 * lg) / ((1 - T) ** 2 * lg**4)
    np.testing.assert_allclose(big_l_gamma(exponential(), harmonic(), T), want, rtol=1e-10)
    np.testing.assert_allclose(big_l_gamma(pareto(1.5), geometric(), T), 1 / (1.5 * (1 - T) ** 2), rtol=1e-12)


PAIRS = [("exp", "identity"), ("exp", "harmonic"), ("exp", "geometric"), ("pareto:1.5", "geometric"),
         ("pareto:2.5", "identity"), ("halfcauchy", "harmonic"), ("uniform:0.5:2", "geometric")]


@pytest.mark.parametrize("spec,gname", PAIRS)
def test_l_matches_finite_difference(spec, gname):
    d, g = parse_distribution(spec), parse_generator(gname)
    t = np.linspace(0.5, 1 - 2.0**-20, 40)
    p = 1 - t
    h = 1e-4 * p
    # differentiate gamma'(F^{-1}) in p = 1 - t through the upper quantile, where 1 - t is exact
    phi = lambda q: g.gamma_p(d.upper_quantile(q))
    fd = -(phi(p + h) - phi(p - h)) / (2 * h)
    np.testing.assert_allclose(l_gamma(d, g, t), fd, rtol=1e-6)


@pytest.mark.parametrize("spec,gname", [p for p in PAIRS if p[0] != "uniform:0.5:2"])
def test_big_l_matches_finite_difference(spec, gname):
    d, g = parse_distribution(spec), parse_generator(gname)
    t = np.linspace(0.5, 1 - 2.0**-20, 40)
    p = 1 - t
    h = 1e-4 * p
    lf = lambda q: l_gamma(d, g, 1 - q)
    fd = -(lf(p + h) - lf(p - h)) / (2 * h)
    # L can cross zero (half-Cauchy, harmonic); measure error on the natural scale l / (1 - t) there
    scale = np.abs(fd) + np.abs(lf(p)) / p
    assert np.all(np.abs(big_l_gamma(d, g, t) - fd) <= 1e-5 * scale)


def test_singular_density():
    d = AnalyticDistribution(
        name="flat-top",
        support=(0.0, 1.0),
        cdf=lambda x: np.asarray(x, dtype=float),
        quantile=lambda u: np.asarray(u, dtype=float),
        upper_quantile=lambda p: 1.0 - np.asarray(p, dtype=float),
        pdf=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
    )
    with pytest.raises(SingularDensity):
        l_gamma(d, None, 0.9)


def test_capability_error():
    d = exponential()
    with pytest.raises(CapabilityError):
        big_l_gamma(replace(d, pdf_deriv=None), None, 0.9)
    gen = parse_generator("geometric")
    with pytest.raises(CapabilityError):
        big_l_gamma(d, replace(gen, gamma_ppp=None), 0.9)


def test_fit_examples():
    assert fit_tail_exponent(lambda t: 1 / (1 - t)) == pytest.approx(1.0, abs=0.01)
    assert fit_tail_exponent(lambda t: l_gamma(pareto(1.5), None, t)) == pytest.approx(1 + 1 / 1.5, abs=1e-6)
    assert fit_tail_exponent(lambda t: l_gamma(exponential(), harmonic(), t)) == pytest.approx(1.0, abs=0.05)
    assert fit_tail_exponent(lambda t: 0.0) == 0.0


def test_fit_grid_depth_bounds():
    with pytest.raises(ValueError):
        tail_fit(lambda t: 1.0, grid_depth=10)
    assert len(tail_fit(lambda t: 1.0, grid_depth=20).grid) == 17


def test_unstable_fit_on_log_periodic_and_overflow():
    with pytest.raises(UnstableFit):
        fit_tail_exponent(lambda t: (1 - t) ** -1 * (2 + math.sin(3 * math.log(1 - t))))
    with pytest.raises(UnstableFit):
        fit_tail_exponent(lambda t: np.exp(1 / (1 - t)))


def verdicts(spec, gname=None, which=None):
    g = parse_generator(gname) if gname else None
    return check_assumptions(parse_distribution(spec), g, which).h_verdicts


def test_case_table():
    assert verdicts("exp") == {"H3": "satisfied", "H4": "satisfied"}
    assert verdicts("exp", "harmonic") == {"H1": "satisfied", "H2": "satisfied"}
    assert verdicts("exp", "geometric") == {"H1": "satisfied", "H2": "satisfied"}
    assert verdicts("pareto:0.5")["H3"] == "violated"
    assert verdicts("pareto:1.5") == {"H3": "satisfied", "H4": "violated"}
    assert verdicts("pareto:2.5") == {"H3": "satisfied", "H4": "satisfied"}
    for a in ("0.5", "1.5", "2.5"):
        assert verdicts(f"pareto:{a}", "geometric") == {"H1": "satisfied", "H2": "satisfied"}


def test_report_fields():
    rep = check_assumptions(pareto(2.5), None)
    assert rep.fitted_exponent_l == pytest.approx(1.4, abs=1e-6)
    assert rep.fitted_exponent_L == pytest.approx(2.4, abs=1e-6)
    assert rep.pair[1] == "identity"
    assert len(rep.grid) == 37
    d = rep.as_dict()
    assert d["verdicts"]["H4"] == "satisfied"


def test_all_four_for_one_pair():
    v = verdicts("pareto:0.5", "geometric", ["H1", "H2", "H3", "H4"])
    assert v == {"H1": "satisfied", "H2": "satisfied", "H3": "violated", "H4": "violated"}


def test_inapplicable_and_inconclusive():
    # gamma' = e^x overflows along the Pareto tail
    rep = check_assumptions(pareto(1.5), exp_gen())
    assert set(rep.h_verdicts.values()) == {"inapplicable"} and rep.notes
    # half-Cauchy quantile grows like (1-t)^-1, so l sits exactly on the H3 bound
    assert verdicts("halfcauchy")["H3"] == "inconclusive"
    with pytest.raises(ValueError):
        verdicts("exp", which=["H5"])


def test_implication_chain():
    specs = ["exp", "uniform:0.5:2", "halfcauchy"] + [f"pareto:{a}" for a in (0.4, 0.8, 1.2, 1.6, 2.0, 2.4, 3.0, 5.0)]
    for spec in specs:
        for gname in (None, "geometric", "harmonic", "power:0.5"):
            v = verdicts(spec, gname, ["H1", "H2", "H3", "H4"])
            if v["H2"] == "satisfied":
                assert v["H1"] == "satisfied", (spec, gname)
            if v["H4"] == "satisfied":
                assert v["H3"] == "satisfied", (spec, gname)


def test_pareto_h3_boundary():
    assert verdicts("pareto:0.9")["H3"] == "violated"
    assert verdicts("pareto:1.1")["H3"] == "satisfied"


def test_pareto_h4_boundary():
    # the exponent 2 + 1/a is within the margin of 2.5 at a = 1.9 and a = 2.1
    assert verdicts("pareto:1.9")["H4"] != "satisfied"
    assert verdicts("pareto:2.1")["H4"] != "violated"
    # outside the margin: 2 + 1/1.8 = 2.556 and 2 + 1/2.3 = 2.435
    assert verdicts("pareto:1.8")["H4"] == "violated"
    assert verdicts("pareto:2.3")["H4"] == "satisfied"


def test_bounds_table():
    assert BOUNDS == {"H1": 2.0, "H2": 2.5, "H3": 2.0, "H4": 2.5}
    assert MARGIN == 0.05
