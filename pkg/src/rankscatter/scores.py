"""Score functions for the signed-rank scatter statistics.

A score function ``K`` maps ``(0, 1)`` to the reals and integrates to ``k``.
The cataloged scores are

* ``vdw``       van der Waerden (normal) scores, the chi-square(k) quantile;
* ``student``   scores optimal at the k-variate Student t_nu;
* ``powerexp``  scores optimal at the power-exponential e_eta;
* ``power``     ``K_a(u) = k (a + 1) u^a``; a = 1 is Wilcoxon, a = 2 Spearman.
"""
import math
import re
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
from scipy import integrate

from . import distributions as dist
from .elliptical import EllipticalFamily
from .exceptions import DomainError, InvalidParameter, QuadratureFailure

KINDS = ("vdw", "student", "powerexp", "power")
QUAD_RTOL = 1e-10


def integrate_unit(func, func_upper=None):
    """Integrate ``func`` over (0, 1).

    ``func_upper(s)`` evaluates the integrand at ``u = 1 - s`` without
    cancellation; the upper half is integrated after ``s = exp(-t)``. Score
    integrands grow at most polynomially in ``t``, so the tail beyond
    ``t = 80`` is below double precision and is dropped.
    """
    if func_upper is None:
        func_upper = lambda s: func(1.0 - s)  # noqa: E731

    def tail(t):
        s = math.exp(-t)
        return func_upper(s) * s

    lo, e1 = integrate.quad(func, 0.0, 0.5, epsabs=0.0, epsrel=QUAD_RTOL, limit=200)
    hi, e2 = integrate.quad(tail, math.log(2.0), 80.0, epsabs=0.0,
                            epsrel=QUAD_RTOL, limit=400)
    total = lo + hi
    if not np.isfinite(total) or e1 + e2 > 1e-7 * max(abs(total), 1.0):
        raise QuadratureFailure("integral over (0, 1) did not reach tolerance")
    return total


@dataclass(frozen=True)
class ScoreFunction:
    kind: str
    k: int
    param: float = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidParameter(f"unknown score {self.kind!r}")
        if int(self.k) != self.k or self.k < 1:
            raise InvalidParameter("dimension must be a positive integer")
        if self.kind == "vdw":
            object.__setattr__(self, "param", None)
        elif self.param is None or not self.param > 0:
            raise InvalidParameter(f"{self.kind} scores need a positive parameter")
        else:
            object.__setattr__(self, "param", float(self.param))

    @classmethod
    def parse(cls, text, k):
        """``vdw``, ``wilcoxon``, ``spearman``, ``student:NU``, ``power:A``, ``powerexp:ETA``."""
        t = text.strip().lower()
        aliases = {"vdw": ("vdw", None), "normal": ("vdw", None),
                   "wilcoxon": ("power", 1.0), "w": ("power", 1.0),
                   "spearman": ("power", 2.0), "sp": ("power", 2.0)}
        if t in aliases:
            kind, param = aliases[t]
            return cls(kind, k, param)
        m = re.fullmatch(r"(student|t|powerexp|e|power)[:_]?([0-9.]+)", t)
        if not m:
            raise InvalidParameter(f"cannot parse score {text!r}")
        kind = {"t": "student", "e": "powerexp"}.get(m.group(1), m.group(1))
        return cls(kind, k, float(m.group(2)))

    @classmethod
    def optimal_for(cls, family):
        """The score that is locally optimal at ``family``."""
        kind = {"gaussian": "vdw", "student": "student", "powerexp": "powerexp"}[family.kind]
        return cls(kind, family.k, family.param)

    @property
    def label(self):
        if self.kind == "vdw":
            return "vdW"
        if self.kind == "power":
            return {1.0: "W", 2.0: "SP"}.get(self.param, f"K{self.param:g}")
        return f"{'t' if self.kind == 'student' else 'e'}{self.param:g}"

    @cached_property
    def _family(self):
        if self.kind == "powerexp":
            return EllipticalFamily("powerexp", self.k, self.param)
        return None

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        if np.any(~(u > 0) | ~(u < 1)):
            raise DomainError("scores are defined on the open unit interval")
        k, p = self.k, self.param
        if self.kind == "vdw":
            out = dist.chi2(k).quantile(u)
        elif self.kind == "student":
            q = dist.fisher(k, p).quantile(u)
            out = k * (k + p) * q / (p + k * q)
        elif self.kind == "powerexp":
            out = self._family.radial_score(self._family.radial_quantile(u))
        else:
            out = k * (p + 1.0) * u ** p
        return _scalar(out)

    def upper(self, s):
        """``K(1 - s)``, accurate for tiny ``s``."""
        s = np.asarray(s, dtype=float)
        k, p = self.k, self.param
        if self.kind == "vdw":
            out = dist.chi2(k).isf(s)
        elif self.kind == "student":
            q = dist.fisher(k, p).isf(s)
            out = k * (k + p) / (p / q + k)
        elif self.kind == "powerexp":
            out = self._family.radial_score(self._family.radial_isf(s))
        else:
            out = k * (p + 1.0) * (1.0 - s) ** p
        return _scalar(out)

    @cached_property
    def constants(self):
        """``(J_k(K), L_k(K))``: second moment and variance of ``K(U)``."""
        k, p = self.k, self.param
        if self.kind == "vdw":
            j = k * (k + 2.0)
        elif self.kind == "student":
            j = k * (k + 2.0) * (k + p) / (k + p + 2.0)
        elif self.kind == "power":
            j = k * k * (p + 1.0) ** 2 / (2.0 * p + 1.0)
        else:
            j = self.second_moment_by_quadrature()
        return float(j), float(j - k * k)

    @property
    def jk(self):
        return self.constants[0]

    @property
    def lk(self):
        return self.constants[1]

    def mean_by_quadrature(self):
        return integrate_unit(self, self.upper)

    def second_moment_by_quadrature(self):
        return integrate_unit(lambda u: self(u) ** 2, lambda s: self.upper(s) ** 2)

    def cross_constants(self, family):
        """``(J_k(K, g1), L_k(K, g1))`` against the optimal score of ``family``."""
        if family.k != self.k:
            raise InvalidParameter("score and family dimensions differ")
        other = ScoreFunction.optimal_for(family)
        j = integrate_unit(lambda u: self(u) * other(u),
                           lambda s: self.upper(s) * other.upper(s))
        return j, j - self.k ** 2

    def rank_scores(self, n):
        """``K(r / (n + 1))`` for ranks ``r = 1..n``."""
        return _rank_table(self, int(n))

    def at_ranks(self, ranks, n):
        """Scores at (possibly fractional) ranks among ``n`` pooled observations."""
        ranks = np.asarray(ranks)
        if np.issubdtype(ranks.dtype, np.integer):
            return self.rank_scores(n)[ranks - 1]
        return self(ranks / (n + 1.0))


@lru_cache(maxsize=256)
def _rank_table(score, n):
    table = np.asarray(score(np.arange(1, n + 1) / (n + 1.0)), dtype=float)
    table.setflags(write=False)
    return table


def _scalar(a):
    return float(a) if np.ndim(a) == 0 else a
