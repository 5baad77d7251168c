import math

import numpy as np
import pytest

from aoisched.distributions import (Deterministic, Exponential, Geometric, LogNormal, Rayleigh,
                                    TwoPoint, Uniform, from_dict, iter_samples, moments, sample)
from aoisched.rng import RngStream

N = 10**6

ALL_SPECS = [
    Exponential(2.0),
    Uniform(0.5, 3.0),
    Rayleigh(1.5),
    LogNormal(2.0, 5.0),
    TwoPoint(1e-3, 100.0, 0.5),
    Deterministic(2.0),
    Geometric(0.3),
]


def test_deterministic_always_returns_value():
    rng = RngStream(1, 0)
    assert all(sample(Deterministic(2.0), rng) == 2.0 for _ in range(100))


def test_twopoint_mean_matches_midpoint():
    eps, alpha = 1e-3, 100.0
    x = TwoPoint(eps, alpha, 0.5).sample_array(RngStream(5, 1).generator, N)
    se = x.std() / math.sqrt(N)
    assert abs(x.mean() - (alpha + eps) / 2) < 3 * se


def test_exponential_variance_is_mean_squared():
    x = Exponential(2.0).sample_array(RngStream(6, 1).generator, N)
    # standard error of the sample variance: sqrt((mu4 - var^2)/n), mu4 = 9*mean^4
    se = math.sqrt((9 * 16 - 16) / N)
    assert abs(x.var() - 4.0) < 3 * se


@pytest.mark.parametrize("spec", ALL_SPECS, ids=lambda s: s.kind)
def test_sample_moments_match_analytic(spec):
    x = spec.sample_array(RngStream(11, 2).generator, N)
    mean, var = spec.moments()
    if var == 0:
        assert np.all(x == mean)
        return
    assert abs(x.mean() - mean) < 4 * math.sqrt(var / N)
    # sample variance standard error from the empirical fourth central moment
    m4 = np.mean((x - x.mean()) ** 4)
    assert abs(x.var() - var) < 4 * math.sqrt((m4 - var ** 2) / N)


def test_rayleigh_moments():
    nu = 1.7
    mean, var = moments(Rayleigh(nu))
    assert mean == pytest.approx(nu * math.sqrt(math.pi / 2))
    assert var == pytest.approx(nu ** 2 * (4 - math.pi) / 2)
    assert var / mean ** 2 == pytest.approx(4 / math.pi - 1)


def test_uniform_moments():
    assert moments(Uniform(0, 2)) == pytest.approx((1.0, 1 / 3))
    m, v = moments(Uniform(1, 2))
    assert v / m ** 2 <= 1 / 3


def test_twopoint_variance():
    eps, alpha = 1e-3, 100.0
    assert TwoPoint(eps, alpha, 0.5).variance() == pytest.approx((alpha - eps) ** 2 / 4)


def test_exponential_and_deterministic_ratios():
    m, v = moments(Exponential(3.0))
    assert v / m ** 2 == pytest.approx(1.0)
    assert Deterministic(4.0).variance() == 0.0


def test_geometric_support_and_mean():
    g = Geometric(0.25)
    x = g.sample_array(RngStream(2, 2).generator, 1000)
    assert x.min() >= 1 and np.all(x == np.floor(x))
    assert g.mean() == 4.0


def test_lognormal_parameterized_by_moments():
    ln = LogNormal(3.0, 7.0)
    # independent conversion back from location/shape
    mean = math.exp(ln.location + ln.shape ** 2 / 2)
    var = (math.exp(ln.shape ** 2) - 1) * mean ** 2
    assert mean == pytest.approx(3.0)
    assert var == pytest.approx(7.0)


@pytest.mark.parametrize("bad", [
    lambda: Exponential(0.0),
    lambda: Exponential(-1.0),
    lambda: Uniform(2.0, 1.0),
    lambda: Uniform(-1.0, 1.0),
    lambda: Rayleigh(0.0),
    lambda: LogNormal(1.0, 0.0),
    lambda: TwoPoint(1.0, 2.0, 1.5),
    lambda: Deterministic(-0.1),
    lambda: Geometric(0.0),
    lambda: Geometric(1.2),
])
def test_invalid_parameters_rejected_at_construction(bad):
    with pytest.raises(ValueError):
        bad()


@pytest.mark.parametrize("spec", ALL_SPECS, ids=lambda s: s.kind)
def test_tagged_record_round_trip(spec):
    assert from_dict(spec.to_dict()) == spec


def test_tagged_record_errors():
    with pytest.raises(ValueError):
        from_dict({"kind": "pareto", "shape": 2})
    with pytest.raises(ValueError):
        from_dict({"kind": "exponential"})
    with pytest.raises(ValueError):
        from_dict({"kind": "exponential", "mean": 1, "rate": 2})
    assert from_dict({"kind": "exponential", "mean": 2.0}) == Exponential(2.0)


@pytest.mark.parametrize("spec", ALL_SPECS, ids=lambda s: s.kind)
def test_cdf_agrees_with_samples(spec):
    x = spec.sample_array(RngStream(3, 3).generator, 20000)
    for q in np.quantile(x, [0.1, 0.5, 0.9]):
        emp = np.mean(x <= q)
        assert abs(emp - float(spec.cdf(q))) < 0.02
        emp_left = np.mean(x < q)
        assert abs(emp_left - float(spec.cdf_left(q))) < 0.02


def test_iter_samples_matches_batch_draws():
    spec = Exponential(1.5)
    it = iter_samples(spec, RngStream(9, 4), chunk=100)
    seq = [next(it) for _ in range(250)]
    gen = RngStream(9, 4).generator
    expected = np.concatenate([spec.sample_array(gen, 100) for _ in range(3)])[:250]
    assert seq == expected.tolist()
