"""Asymptotic relative efficiencies and local powers.

Efficiencies compare a signed-rank test with the pseudo-Gaussian test under
local alternatives ``sigma_i^2 = sigma^2 (1 + s_i^2 / sqrt(n_i))`` and
``V_i = V + v_i / sqrt(n_i)``. The scale and shape components contribute
through ``r2`` and ``r3`` (:func:`noncentrality_terms`). The overall ARE is the
``xi``-mixture of the pure-scale and pure-shape AREs, with ``xi`` given by
:func:`mixing_weight`.
"""
import csv
import math
from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations
from typing import Optional

import numpy as np
from scipy import stats

from .elliptical import EllipticalFamily
from .exceptions import InfiniteKurtosis, InvalidParameter, ZeroAlternative
from .homogeneity import degrees_of_freedom
from .linalg import sym_inv
from .scores import ScoreFunction

TABLE1_SCORES = ("vdw", "wilcoxon", "spearman")
TABLE1_DENSITIES = ("t5", "t8", "t12", "N", "e2", "e3", "e5")
TABLE1_DIMENSIONS = (1, 2, 3, 4, 6, 10)
DASH = "—"


@dataclass(frozen=True)
class LocalAlternative:
    """Local perturbation of a common scale ``sigma2`` and shape ``shape``.

    ``scale_shifts[i]`` is ``s_i^2`` and ``shape_shifts[i]`` is the symmetric
    ``v_i`` with ``tr(V^{-1} v_i) = 0``.
    """

    weights: np.ndarray
    scale_shifts: np.ndarray
    shape_shifts: np.ndarray
    sigma2: float = 1.0
    shape: np.ndarray = None

    def __post_init__(self):
        lam = np.asarray(self.weights, dtype=float)
        s2 = np.asarray(self.scale_shifts, dtype=float)
        v = np.asarray(self.shape_shifts, dtype=float)
        m = lam.size
        if m < 2 or s2.shape != (m,) or v.ndim != 3 or v.shape[0] != m:
            raise InvalidParameter("need m >= 2 weights with matching shifts")
        if np.any(lam <= 0) or abs(lam.sum() - 1.0) > 1e-10:
            raise InvalidParameter("weights must be positive and sum to one")
        k = v.shape[1]
        base = np.eye(k) if self.shape is None else np.asarray(self.shape, dtype=float)
        if not np.allclose(v, np.swapaxes(v, 1, 2), rtol=0, atol=1e-12):
            raise InvalidParameter("shape shifts must be symmetric")
        traces = np.einsum("ij,mji->m", sym_inv(base), v)
        if np.any(np.abs(traces) > 1e-10):
            raise InvalidParameter("shape shifts must satisfy tr(V^-1 v_i) = 0")
        if not self.sigma2 > 0:
            raise InvalidParameter("sigma2 must be positive")
        object.__setattr__(self, "weights", lam)
        object.__setattr__(self, "scale_shifts", s2)
        object.__setattr__(self, "shape_shifts", v)
        object.__setattr__(self, "shape", base)

    @property
    def k(self):
        return self.shape.shape[0]

    @property
    def m(self):
        return self.weights.size


def noncentrality_terms(alt):
    """``(r2, r3)``: scale and shape heterogeneity of a local alternative."""
    lam, s2, v = alt.weights, alt.scale_shifts, alt.shape_shifts
    vinv = sym_inv(alt.shape)
    root = np.sqrt(lam)
    r2 = r3 = 0.0
    for i, j in combinations(range(alt.m), 2):
        w = lam[i] * lam[j]
        r2 += w / alt.sigma2 ** 2 * (s2[i] / root[i] - s2[j] / root[j]) ** 2
        a = vinv @ (v[i] / root[i] - v[j] / root[j])
        r3 += w * np.trace(a @ a)
    return float(r2), float(r3)


def _family(density, k):
    return density if isinstance(density, EllipticalFamily) else EllipticalFamily.parse(density, k)


def _score(score, k):
    return score if isinstance(score, ScoreFunction) else ScoreFunction.parse(score, k)


def _finite_kurtosis(family):
    kappa = family.kurtosis
    if not math.isfinite(kappa):
        raise InfiniteKurtosis(f"{family.label} has no finite fourth moment")
    return kappa


@lru_cache(maxsize=None)
def _cross(score, family):
    return score.cross_constants(family)


def are_pair(score, family):
    """Pure-scale and pure-shape AREs of the rank test against the pseudo-Gaussian test.

    Returns ``(inf, inf)`` when ``family`` has infinite fourth moments, and
    ``None`` for the shape ARE in dimension one.
    """
    if score.k != family.k:
        raise InvalidParameter("score and family dimensions differ")
    k = score.k
    if not family.finite_fourth_moment:
        return math.inf, (math.inf if k > 1 else None)
    kappa = family.kurtosis
    jk, lk = score.constants
    j_cross, l_cross = _cross(score, family)
    are_scale = ((k + 2) * kappa + 2) * l_cross ** 2 / (4 * k * lk)
    if k == 1:
        return are_scale, None
    are_shape = (1 + kappa) * j_cross ** 2 / (k * (k + 2) * jk)
    return are_scale, are_shape


def mixing_weight(alt, family):
    """Share ``xi`` of the shape component in the overall ARE."""
    kappa = _finite_kurtosis(family)
    r2, r3 = noncentrality_terms(alt)
    if r2 + r3 <= 0:
        raise ZeroAlternative("the alternative is a null direction")
    k = alt.k
    c = (k + 2) * kappa + 2
    return c * r3 / (2 * k * (1 + kappa) * r2 + c * r3)


def noncentrality(test, alt, family, score=None):
    """Noncentrality of the limiting chi-square under ``alt``.

    ``test`` is ``"rank"`` (requires ``score``) or ``"pseudo-gaussian"``.
    """
    r2, r3 = noncentrality_terms(alt)
    k = alt.k
    if test == "rank":
        score = _score(score, k)
        jk, lk = score.constants
        j_cross, l_cross = _cross(score, family)
        return l_cross ** 2 / (4 * lk) * r2 + j_cross ** 2 / (2 * k * (k + 2) * jk) * r3
    if test == "pseudo-gaussian":
        kappa = _finite_kurtosis(family)
        return k / ((k + 2) * kappa + 2) * r2 + r3 / (2 * (1 + kappa))
    raise InvalidParameter(f"unknown test {test!r}")


def local_power(test, alt, family, alpha=0.05, score=None):
    """Asymptotic rejection probability at level ``alpha`` under ``alt``."""
    df = degrees_of_freedom(alt.m, alt.k)
    ncp = noncentrality(test, alt, family, score)
    crit = stats.chi2.isf(alpha, df)
    if ncp == 0:
        return float(stats.chi2.sf(crit, df))
    return float(stats.ncx2.sf(crit, df, ncp))


@dataclass(frozen=True)
class AreRow:
    score: str
    k: int
    density: str
    are_scale: float
    are_shape: Optional[float]


def table1(ks=TABLE1_DIMENSIONS, densities=TABLE1_DENSITIES, scores=TABLE1_SCORES):
    """AREs of each score against the pseudo-Gaussian test over a grid."""
    rows = []
    for name in scores:
        for k in ks:
            score = _score(name, k)
            for dens in densities:
                family = _family(dens, k)
                xi0, xi1 = are_pair(score, family)
                rows.append(AreRow(score.label, k, family.label, xi0, xi1))
    return rows


def _fmt(value):
    if value is None:
        return DASH
    return "inf" if math.isinf(value) else f"{value:.3f}"


def write_csv(rows, fh):
    """Write ``score,k,density,xi0_are,xi1_are`` rows (three decimals)."""
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["score", "k", "density", "xi0_are", "xi1_are"])
    for r in rows:
        w.writerow([r.score, r.k, r.density, _fmt(r.are_scale), _fmt(r.are_shape)])


def format_table(rows):
    """Text layout: one block per score, rows ``k``/``xi``, columns densities."""
    densities = list(dict.fromkeys(r.density for r in rows))
    cells = {(r.score, r.k, r.density): r for r in rows}
    lines = ["score  k  xi  " + "".join(f"{d:>8}" for d in densities)]
    for score in dict.fromkeys(r.score for r in rows):
        for k in sorted({r.k for r in rows if r.score == score}):
            for xi in (0, 1):
                vals = []
                for d in densities:
                    r = cells.get((score, k, d))
                    v = None if r is None else (r.are_scale if xi == 0 else r.are_shape)
                    vals.append(f"{_fmt(v):>8}")
                lines.append(f"{score:<5} {k:>2}  {xi:>2}  " + "".join(vals))
    lines.append("(k -> infinity limits are not computed)")
    return "\n".join(lines)
