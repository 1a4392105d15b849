"""Standardized elliptical families.

Each family is described by its standardized radial density ``f1`` on the
positive half-line, scaled so that the radial distance ``d = ||Sigma^{-1/2}(X - theta)||``
has median one:

* Gaussian: ``f1(r) = exp(-a r^2 / 2)``; ``a d^2`` is chi-square(k).
* Student t_nu: ``f1(r) = (1 + a r^2 / nu)^{-(k + nu)/2}``; ``(a / k) d^2`` is F(k, nu).
* Power-exponential e_eta: ``f1(r) = exp(-b r^{2 eta})``; ``b d^{2 eta}`` is gamma(k / (2 eta)).
"""
import math
import re
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import integrate

from . import distributions as dist
from .exceptions import ConvergenceFailure, DomainError, InvalidParameter, QuadratureFailure
from .linalg import _eigh_checked, sym_sqrt

KINDS = ("gaussian", "student", "powerexp")


def standardization_constant(kind, k, param=None):
    """Constant ``a_k``, ``a_{k,nu}`` or ``b_{k,eta}`` making the radial median one."""
    if k < 1:
        raise InvalidParameter("dimension must be >= 1")
    if kind == "gaussian":
        c = dist.chi2(k).quantile(0.5)
    elif kind == "student":
        c = k * dist.fisher(k, param).quantile(0.5)
    elif kind == "powerexp":
        c = dist.gamma(k / (2.0 * param)).quantile(0.5)
    else:
        raise InvalidParameter(f"unknown family {kind!r}")
    if not (np.isfinite(c) and c > 0):
        raise ConvergenceFailure(f"median inversion failed for {kind} k={k} param={param}")
    return float(c)


@dataclass(frozen=True)
class EllipticalFamily:
    """A standardized radial density in dimension ``k``.

    ``param`` is the degrees of freedom for ``"student"`` and the exponent
    ``eta`` for ``"powerexp"``; it is ignored for ``"gaussian"``.
    """

    kind: str
    k: int
    param: float = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidParameter(f"unknown family {self.kind!r}")
        if int(self.k) != self.k or self.k < 1:
            raise InvalidParameter("dimension must be a positive integer")
        if self.kind == "gaussian":
            object.__setattr__(self, "param", None)
        elif self.param is None or not self.param > 0:
            raise InvalidParameter(f"{self.kind} needs a positive parameter")
        else:
            object.__setattr__(self, "param", float(self.param))

    @classmethod
    def parse(cls, text, k):
        """Build a family from ``"gaussian"``, ``"N"``, ``"student:5"``, ``"t5"``,
        ``"powerexp:2"`` or ``"e2"``."""
        t = text.strip().lower()
        if t in ("gaussian", "normal", "n"):
            return cls("gaussian", k)
        m = re.fullmatch(r"(student|t|powerexp|e)[:_]?([0-9.]+)", t)
        if not m:
            raise InvalidParameter(f"cannot parse density {text!r}")
        kind = "student" if m.group(1) in ("student", "t") else "powerexp"
        return cls(kind, k, float(m.group(2)))

    @property
    def label(self):
        if self.kind == "gaussian":
            return "N"
        prefix = "t" if self.kind == "student" else "e"
        return f"{prefix}{self.param:g}"

    @cached_property
    def constant(self):
        return standardization_constant(self.kind, self.k, self.param)

    @cached_property
    def _base(self):
        # law of the transformed radius computed by _to_base
        if self.kind == "gaussian":
            return dist.chi2(self.k)
        if self.kind == "student":
            return dist.fisher(self.k, self.param)
        return dist.gamma(self.k / (2.0 * self.param))

    def _to_base(self, r):
        k, c = self.k, self.constant
        if self.kind == "gaussian":
            return c * r ** 2
        if self.kind == "student":
            return c * r ** 2 / k
        return c * r ** (2.0 * self.param)

    def _from_base(self, t):
        k, c = self.k, self.constant
        if self.kind == "gaussian":
            return np.sqrt(t / c)
        if self.kind == "student":
            return np.sqrt(k * t / c)
        return (t / c) ** (1.0 / (2.0 * self.param))

    def radial_cdf(self, r):
        r = np.asarray(r, dtype=float)
        if np.any(r < 0):
            raise DomainError("radial distances are nonnegative")
        return self._base.cdf(self._to_base(r))

    def radial_sf(self, r):
        r = np.asarray(r, dtype=float)
        if np.any(r < 0):
            raise DomainError("radial distances are nonnegative")
        return self._base.sf(self._to_base(r))

    def radial_quantile(self, p):
        return _scalar(self._from_base(self._base.quantile(p)))

    def radial_isf(self, q):
        return _scalar(self._from_base(self._base.isf(q)))

    def radial_score(self, r):
        """``phi_f1(r) * r`` with ``phi_f1 = -f1'/f1``."""
        r = np.asarray(r, dtype=float)
        k, c = self.k, self.constant
        if self.kind == "gaussian":
            out = c * r ** 2
        elif self.kind == "student":
            nu = self.param
            out = (k + nu) * c * r ** 2 / (nu + c * r ** 2)
        else:
            out = 2.0 * self.param * c * r ** (2.0 * self.param)
        return _scalar(out)

    @property
    def finite_fourth_moment(self):
        return self.kind != "student" or self.param > 4

    def radial_moment(self, power):
        """``E[d^power] = int_0^1 (radial_quantile(u))^power du`` by quadrature."""
        if self.kind == "student" and power >= self.param:
            return math.inf
        lower, err1 = integrate.quad(
            lambda u: self.radial_quantile(u) ** power, 0.0, 0.5,
            epsabs=0.0, epsrel=1e-11, limit=200)

        # 1 - u = exp(-t) keeps the upper tail resolved near u = 1; the
        # integrand decays like exp(-rate * t)
        def tail(t):
            s = math.exp(-t)
            return self.radial_isf(s) ** power * s

        rate = 1.0 - power / self.param if self.kind == "student" else 1.0
        t_max = min(300.0, max(80.0, 40.0 / rate))
        upper, err2 = 0.0, 0.0
        for a, b in ((math.log(2.0), 40.0), (40.0, t_max)):
            val, err = integrate.quad(tail, a, b, epsabs=0.0, epsrel=1e-11, limit=400)
            upper += val
            err2 += err
        total = lower + upper
        if not np.isfinite(total) or err1 + err2 > 1e-8 * abs(total):
            raise QuadratureFailure(f"radial moment {power} of {self.label} did not converge")
        return total

    @cached_property
    def kurtosis(self):
        """Elliptical kurtosis ``k/(k+2) E[d^4]/E[d^2]^2 - 1``; ``inf`` without fourth moments."""
        if self.kind == "gaussian":
            return 0.0
        if not self.finite_fourth_moment:
            return math.inf
        e4 = self.radial_moment(4)
        d2 = self.radial_moment(2)
        return self.k / (self.k + 2.0) * e4 / d2 ** 2 - 1.0

    def sample_spherical(self, size, rng):
        """Draw ``d * U`` with unit scatter; returns shape ``size + (k,)``."""
        rng = np.random.default_rng(rng)
        size = (size,) if np.ndim(size) == 0 else tuple(size)
        z = rng.standard_normal(size + (self.k,))
        c = self.constant
        if self.kind == "gaussian":
            return z / math.sqrt(c)
        if self.kind == "student":
            w = rng.chisquare(self.param, size=size)
            return z / np.sqrt(c * w / self.param)[..., None]
        g = rng.standard_gamma(self.k / (2.0 * self.param), size=size)
        u = z / np.linalg.norm(z, axis=-1, keepdims=True)
        return u * ((g / c) ** (1.0 / (2.0 * self.param)))[..., None]


@dataclass(frozen=True)
class EllipticalSampleSpec:
    """Elliptical law with location, scatter matrix and standardized radial density."""

    family: EllipticalFamily
    location: np.ndarray = None
    scatter: np.ndarray = None
    _root: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        k = self.family.k
        loc = np.zeros(k) if self.location is None else np.asarray(self.location, float)
        scat = np.eye(k) if self.scatter is None else np.asarray(self.scatter, float)
        if loc.shape != (k,) or scat.shape != (k, k):
            raise InvalidParameter("location/scatter do not match the family dimension")
        _eigh_checked(scat)
        object.__setattr__(self, "location", loc)
        object.__setattr__(self, "scatter", scat)
        object.__setattr__(self, "_root", sym_sqrt(scat))

    def sample(self, n, rng):
        """Draw ``X = theta + d Sigma^{1/2} U``; ``n`` may be an int or a shape tuple."""
        eps = self.family.sample_spherical(n, rng)
        return eps @ self._root + self.location


def _scalar(a):
    return float(a) if np.ndim(a) == 0 else a
