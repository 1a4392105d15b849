"""Distribution functions against closed forms and frozen mpmath values."""
import math

import numpy as np
import pytest
from scipy import integrate

from rankscatter import distributions as dist
from rankscatter.exceptions import DomainError, InvalidParameter

# 30-digit mpmath evaluations, frozen
CHI2_4_AT_3_5 = 0.522121655511275901628027538668
F_2_5_MEDIAN = 0.798769776932235648435004928074
F_3_HALF_Q90 = 2855.81062343015553374653511665
GAMMA_2_5_Q30 = 1.49995406637995314102591187813
CHI2_10_ISF_1E12 = 78.4716465628384807151020618665


def test_chi2_examples():
    assert dist.chi2(2).cdf(2 * math.log(2)) == pytest.approx(0.5, abs=1e-14)
    assert dist.chi2(3).quantile(0.95) == pytest.approx(7.8147, abs=5e-5)
    assert dist.chi2(2).quantile(0.5) == pytest.approx(2 * math.log(2), rel=1e-13)
    assert dist.chi2(4).cdf(3.5) == pytest.approx(CHI2_4_AT_3_5, abs=1e-12)
    assert dist.chi2(10).isf(1e-12) == pytest.approx(CHI2_10_ISF_1E12, rel=1e-10)


def test_chi2_cdf_against_density_quadrature():
    dens = lambda x: x * math.exp(-x / 2) / 4  # noqa: E731  chi-square(4)
    val, _ = integrate.quad(dens, 0, 3.5, epsabs=1e-14)
    assert dist.chi2(4).cdf(3.5) == pytest.approx(val, abs=1e-12)


def test_fisher_and_gamma_frozen():
    assert dist.fisher(2, 5).quantile(0.5) == pytest.approx(F_2_5_MEDIAN, rel=1e-12)
    assert dist.fisher(2, 5).cdf(F_2_5_MEDIAN) == pytest.approx(0.5, abs=1e-13)
    assert dist.fisher(3, 0.5).quantile(0.9) == pytest.approx(F_3_HALF_Q90, rel=1e-9)
    assert dist.gamma(2.5).quantile(0.3) == pytest.approx(GAMMA_2_5_Q30, rel=1e-12)


@pytest.mark.parametrize("d", [dist.chi2(1), dist.chi2(3), dist.fisher(2, 5), dist.gamma(0.7, 2.0)])
def test_support_and_monotonicity(d):
    assert d.cdf(0.0) == 0.0
    assert d.cdf(-3.0) == 0.0
    xs = np.linspace(0, 50, 2001)
    c = d.cdf(xs)
    assert np.all(np.diff(c) >= 0)
    assert d.cdf(1e6) == pytest.approx(1.0, abs=1e-3)
    np.testing.assert_allclose(d.cdf(xs) + d.sf(xs), 1.0, atol=1e-14)


FAMILIES = ([dist.chi2(k) for k in range(1, 11)]
            + [dist.fisher(k, nu) for k in range(1, 11) for nu in (0.5, 2, 5, 8, 12)]
            + [dist.gamma(a) for a in (0.1, 0.5, 1.0, 2.5, 5.0)])


@pytest.mark.parametrize("d", FAMILIES, ids=lambda d: f"{d.family}{d.params}")
def test_round_trip(d):
    p = np.concatenate([np.geomspace(1e-8, 0.5, 40), 1 - np.geomspace(1e-8, 0.5, 40)])
    x = d.quantile(p)
    assert np.all(np.diff(x[:40]) > 0)
    lower = p <= 0.5
    np.testing.assert_allclose(d.cdf(x[lower]), p[lower], rtol=1e-8)
    np.testing.assert_allclose(d.sf(x[~lower]), 1 - p[~lower], rtol=1e-7)
    q = np.geomspace(1e-12, 0.5, 30)
    np.testing.assert_allclose(d.sf(d.isf(q)), q, rtol=1e-8)


def test_quantile_domain():
    for p in (0.0, 1.0, -0.1, 1.5, np.nan):
        with pytest.raises(DomainError):
            dist.chi2(2).quantile(p)


@pytest.mark.parametrize("args", [("chi2", (0.0,)), ("chi2", (-1.0,)), ("f", (1.0,)),
                                  ("gamma", (1.0, np.inf)), ("beta", (1.0, 1.0))])
def test_invalid_parameters(args):
    with pytest.raises(InvalidParameter):
        dist.Distribution(*args)
