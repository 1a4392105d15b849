"""Monte Carlo rejection frequencies and calibrated critical values.

Group 1 has identity scatter. The last group has scatter
``(1 + l s^2)(I + l v)`` at heterogeneity level ``l``, and every location is
zero. Replication ``r`` draws its noise from ``default_rng([seed, r])``, the
same stream at every level, and is processed in a fixed chunk. Results are
therefore bit-identical for any number of worker processes.
"""
import csv
import io
import json
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from importlib import resources
from typing import Optional

import numpy as np

from . import distributions as dist
from .elliptical import EllipticalFamily, EllipticalSampleSpec
from .estimators import frame_at, hr_batch, tyler_batch, HR_TOL, TYLER_TOL
from .exceptions import ConfigError, InvalidParameter
from .homogeneity import (KURTOSIS_SCATTERS, box_m_statistic, degrees_of_freedom, pseudo_gaussian_parts,
                          rank_statistic_parts)
from .linalg import _eigh_checked
from .scores import ScoreFunction

CHUNK = 250
MAX_FAILURE_RATE = 1e-3
DEFAULT_TESTS = ("lrt", "mlrt", "gaussian", "pseudo-gaussian", "vdw", "t5", "t2", "t0.5",
                 "spearman")
_GAUSSIAN_TESTS = {"lrt": "LRT", "mlrt": "MLRT", "gaussian": "N", "pseudo-gaussian": "N*"}


def default_jobs():
    """Worker count from ``RANKSCATTER_JOBS`` (default 1)."""
    try:
        return max(1, int(os.environ.get("RANKSCATTER_JOBS", "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class TestSpec:
    """A test in a simulation roster: a Gaussian-theory test or a rank test."""

    __test__ = False  # not a pytest class

    tag: str
    score: Optional[ScoreFunction] = None

    @classmethod
    def parse(cls, text, k):
        t = text.strip().lower()
        if t in _GAUSSIAN_TESTS:
            return cls(t)
        return cls("rank", ScoreFunction.parse(t, k))

    @property
    def label(self):
        return self.score.label if self.tag == "rank" else _GAUSSIAN_TESTS[self.tag]


@dataclass(frozen=True)
class SimulationPlan:
    """One column of a rejection-frequency table.

    ``critical_values`` maps a rank-test label (e.g. ``"vdW"``) to a
    calibrated threshold; such tests are reported under both thresholds.
    ``kurtosis_scatter`` selects the covariance used for the distances in the
    kurtosis estimate of the pseudo-Gaussian test.
    """

    k: int = 2
    group_sizes: tuple = (100, 100)
    density: str = "N"
    kind: str = "scale"
    s2: float = 0.0
    v: Optional[tuple] = None
    levels: tuple = (0, 1, 2, 3)
    replications: int = 2500
    seed: int = 20240601
    tests: tuple = DEFAULT_TESTS
    alpha: float = 0.05
    critical_values: dict = field(default_factory=dict)
    kurtosis_scatter: str = "group"
    name: str = "plan"

    def __post_init__(self):
        k = int(self.k)
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "group_sizes", tuple(int(n) for n in self.group_sizes))
        object.__setattr__(self, "levels", tuple(self.levels))
        object.__setattr__(self, "tests", tuple(self.tests))
        if len(self.group_sizes) < 2 or min(self.group_sizes) <= k:
            raise ConfigError("need at least two groups with more than k observations",
                              key="group_sizes")
        if self.kind not in ("scale", "shape"):
            raise ConfigError("kind must be 'scale' or 'shape'", key="kind")
        if any(level < 0 for level in self.levels):
            raise ConfigError("levels must be nonnegative", key="levels")
        if int(self.replications) < 1:
            raise ConfigError("replications must be positive", key="replications")
        if not 0 < self.alpha < 1:
            raise ConfigError("alpha must lie in (0, 1)", key="alpha")
        if self.kurtosis_scatter not in KURTOSIS_SCATTERS:
            raise ConfigError(f"kurtosis_scatter must be one of {KURTOSIS_SCATTERS}",
                              key="kurtosis_scatter")
        v = np.zeros((k, k)) if self.v is None else np.asarray(self.v, dtype=float)
        if v.shape != (k, k) or not np.allclose(v, v.T):
            raise ConfigError("v must be a symmetric k x k matrix", key="v")
        if abs(np.trace(v)) > 1e-10:
            raise ConfigError("v must be trace-free", key="v")
        if self.kind == "scale" and np.any(v != 0):
            raise ConfigError("scale plans need v = 0", key="v")
        if self.kind == "shape" and self.s2 != 0:
            raise ConfigError("shape plans need s2 = 0", key="s2")
        object.__setattr__(self, "v", tuple(tuple(float(x) for x in r) for r in v))
        try:
            EllipticalFamily.parse(self.density, k)
        except InvalidParameter as exc:
            raise ConfigError(str(exc), key="density") from exc
        try:
            specs = [TestSpec.parse(t, k) for t in self.tests]
        except InvalidParameter as exc:
            raise ConfigError(str(exc), key="tests") from exc
        labels = {s.label for s in specs if s.tag == "rank"}
        unknown = set(self.critical_values) - labels
        if unknown:
            raise ConfigError(f"critical values for tests not in the roster: {sorted(unknown)}",
                              key="critical_values")

    @property
    def family(self):
        return EllipticalFamily.parse(self.density, self.k)

    @property
    def test_specs(self):
        return [TestSpec.parse(t, self.k) for t in self.tests]

    def to_dict(self):
        d = asdict(self)
        d["v"] = [list(r) for r in self.v]
        d["group_sizes"] = list(self.group_sizes)
        d["levels"] = list(self.levels)
        d["tests"] = list(self.tests)
        return d

    @classmethod
    def from_dict(cls, data):
        known = set(cls.__dataclass_fields__)
        for key in data:
            if key not in known:
                raise ConfigError(f"unknown plan key {key!r}", key=key)
        try:
            return cls(**data)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_json(cls, text):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"plan is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("plan must be a JSON object")
        return cls.from_dict(data)

    @classmethod
    def load(cls, source):
        """Load a plan from a path or the name of a bundled plan."""
        if os.path.exists(source):
            with open(source, encoding="utf-8") as fh:
                return cls.from_json(fh.read())
        name = source if source.endswith(".json") else source + ".json"
        try:
            text = resources.files("rankscatter").joinpath("plans").joinpath(name).read_text("utf-8")
        except FileNotFoundError:
            raise ConfigError(f"no plan file or bundled plan named {source!r}") from None
        return cls.from_json(text)

    def replace(self, **changes):
        d = self.to_dict()
        d.update(changes)
        return SimulationPlan.from_dict(d)


def bundled_plans():
    folder = resources.files("rankscatter").joinpath("plans")
    return sorted(p.name[:-5] for p in folder.iterdir() if p.name.endswith(".json"))


def build_alternative(plan, level):
    """Sampling laws of the groups at heterogeneity ``level``."""
    k = plan.k
    scatter = (1.0 + level * plan.s2) * (np.eye(k) + level * np.asarray(plan.v))
    _eigh_checked(scatter)
    family = plan.family
    m = len(plan.group_sizes)
    return [EllipticalSampleSpec(family, np.zeros(k), np.eye(k) if i < m - 1 else scatter)
            for i in range(m)]


def draw_noise(family, sizes, seed, start, stop):
    """Spherical noise for replications ``start..stop-1``, one array per group."""
    out = [np.empty((stop - start, n, family.k)) for n in sizes]
    for r in range(start, stop):
        rng = np.random.default_rng([seed, r])
        for arr, n in zip(out, sizes):
            arr[r - start] = family.sample_spherical(n, rng)
    return out


def estimate_with_retry(groups, seed=0):
    """Batched estimation; failures are retried once from a perturbed start.

    Returns ``(locations, shape, ok, retried)``.
    """
    locations, ok = [], np.ones(groups[0].shape[0], dtype=bool)
    retried = np.zeros_like(ok)
    for gi, g in enumerate(groups):
        theta, _, res, _, _ = hr_batch(g)
        bad = np.flatnonzero(~np.all(res <= HR_TOL, axis=-1))
        if bad.size:
            rng = np.random.default_rng([seed, gi, bad.size])
            sub = g[bad]
            spread = np.median(np.abs(sub - np.median(sub, axis=1, keepdims=True)), axis=1)
            start = sub.mean(axis=1) + 1e-3 * spread * rng.standard_normal(spread.shape)
            init = (start, np.broadcast_to(np.eye(g.shape[-1]), (bad.size,) + (g.shape[-1],) * 2))
            t2, _, r2, _, _ = hr_batch(sub, init=init)
            theta[bad] = t2
            good = np.all(r2 <= HR_TOL, axis=-1)
            ok[bad[~good]] = False
            retried[bad] = True
        locations.append(theta)
    centred = np.concatenate([g - t[:, None, :] for g, t in zip(groups, locations)], axis=1)
    shape, res, _ = tyler_batch(centred)
    bad = np.flatnonzero(~(res <= TYLER_TOL))
    if bad.size:
        sub = centred[bad]
        cov = np.einsum("bni,bnj->bij", sub, sub)
        cov /= np.linalg.det(cov)[:, None, None] ** (1.0 / sub.shape[-1])
        s2, r2, _ = tyler_batch(sub, init=cov, max_iter=1000)
        shape[bad] = s2
        ok[bad[~(r2 <= TYLER_TOL)]] = False
        retried[bad] = True
    return locations, shape, ok, retried


def _statistics(groups, specs, known=False, kurtosis_scatter="group"):
    """Statistic of every test in ``specs`` for a batch of data sets.

    With ``known=True`` ranks and signs use the true location 0 and shape I.
    Returns ``(dict label -> statistics, ok, retried)``.
    """
    b, k = groups[0].shape[0], groups[0].shape[-1]
    out = {}
    ok = np.ones(b, dtype=bool)
    retried = np.zeros(b, dtype=bool)
    rank_specs = [s for s in specs if s.tag == "rank"]
    if rank_specs:
        if known:
            locations = [np.zeros((b, k))] * len(groups)
            shape = np.broadcast_to(np.eye(k), (b, k, k))
        else:
            locations, shape, ok, retried = estimate_with_retry(groups)
            shape = np.where(ok[:, None, None], shape, np.eye(k))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            frame = frame_at(groups, locations, shape)
        for s in rank_specs:
            out[s.label] = rank_statistic_parts(frame, s.score).statistic
    for s in specs:
        if s.tag in ("gaussian", "pseudo-gaussian"):
            kappa = 0.0 if s.tag == "gaussian" else None
            out[s.label] = pseudo_gaussian_parts(
                groups, kappa, strict=False, kurtosis_scatter=kurtosis_scatter)[0].statistic
        elif s.tag in ("lrt", "mlrt"):
            out[s.label] = box_m_statistic(groups, "lrt" if s.tag == "lrt" else "box",
                                            strict=False)
    return out, ok, retried


def _run_chunk(args):
    plan, level, start, stop = args
    specs = plan.test_specs
    noise = draw_noise(plan.family, plan.group_sizes, plan.seed, start, stop)
    laws = build_alternative(plan, level)
    groups = [e @ law._root + law.location for e, law in zip(noise, laws)]
    stats, ok, retried = _statistics(groups, specs, kurtosis_scatter=plan.kurtosis_scatter)
    return stats, ok, retried


def _map(func, tasks, jobs):
    if jobs <= 1 or len(tasks) <= 1:
        return [func(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(func, tasks))


def _chunks(total):
    return [(s, min(s + CHUNK, total)) for s in range(0, total, CHUNK)]


@dataclass(frozen=True)
class FrequencyCell:
    test: str
    mode: str
    level: float
    replications: int
    rejections: int
    critical_value: float

    @property
    def frequency(self):
        return self.rejections / self.replications if self.replications else float("nan")

    @property
    def half_width(self):
        f = self.frequency
        return 1.96 * np.sqrt(f * (1.0 - f) / self.replications)


@dataclass(frozen=True)
class FrequencyTable:
    """Rejection frequencies per (test, critical-value mode, level)."""

    name: str
    density: str
    kind: str
    cells: tuple
    failures: dict
    retries: dict
    replications: int

    @property
    def failure_rate(self):
        total = sum(self.failures.values())
        return total / (self.replications * max(len(self.failures), 1))

    @property
    def flagged(self):
        return self.failure_rate >= MAX_FAILURE_RATE

    def frequency(self, test, level, mode="asymptotic"):
        for c in self.cells:
            if c.test == test and c.level == level and c.mode == mode:
                return c.frequency
        raise KeyError((test, level, mode))

    def cell(self, test, level, mode="asymptotic"):
        for c in self.cells:
            if c.test == test and c.level == level and c.mode == mode:
                return c
        raise KeyError((test, level, mode))

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["plan", "density", "kind", "test", "mode", "level", "replications",
                    "rejections", "frequency", "half_width", "critical_value"])
        for c in self.cells:
            w.writerow([self.name, self.density, self.kind, c.test, c.mode, f"{c.level:g}",
                        c.replications, c.rejections, f"{c.frequency:.4f}",
                        f"{c.half_width:.4f}", f"{c.critical_value:.4f}"])
        return buf.getvalue()

    def format_text(self):
        """Tests as rows, levels as columns; calibrated frequencies in parentheses."""
        levels = sorted({c.level for c in self.cells})
        tests = list(dict.fromkeys(c.test for c in self.cells))
        lines = [f"{self.name}: {self.kind} alternatives, density {self.density}",
                 f"{'test':<8}" + "".join(f"{'l=' + format(lv, 'g'):>18}" for lv in levels)]
        for t in tests:
            row = f"{t:<8}"
            for lv in levels:
                text = f"{self.frequency(t, lv):.4f}"
                try:
                    text += f" ({self.frequency(t, lv, 'calibrated'):.4f})"
                except KeyError:
                    pass
                row += f"{text:>18}"
            lines.append(row)
        total = sum(self.failures.values())
        lines.append(f"estimation failures excluded: {total} "
                     f"({100 * self.failure_rate:.3f}%){'  FLAGGED' if self.flagged else ''}")
        return "\n".join(lines)


def run_plan(plan, jobs=None):
    """Rejection frequencies of every rostered test at every level of ``plan``."""
    jobs = default_jobs() if jobs is None else jobs
    df = degrees_of_freedom(len(plan.group_sizes), plan.k)
    asym = dist.chi2(df).isf(plan.alpha)
    specs = plan.test_specs
    cells, failures, retries = [], {}, {}
    for level in plan.levels:
        tasks = [(plan, level, a, b) for a, b in _chunks(plan.replications)]
        parts = _map(_run_chunk, tasks, jobs)
        ok = np.concatenate([p[1] for p in parts])
        failures[level] = int((~ok).sum())
        retries[level] = int(np.concatenate([p[2] for p in parts]).sum())
        for s in specs:
            stat = np.concatenate([p[0][s.label] for p in parts])
            valid = ok if s.tag == "rank" else np.ones_like(ok)
            modes = [("asymptotic", asym)]
            if s.label in plan.critical_values:
                modes.append(("calibrated", float(plan.critical_values[s.label])))
            for mode, q in modes:
                cells.append(FrequencyCell(s.label, mode, level, int(valid.sum()),
                                           int(np.sum(stat[valid] > q)), q))
    table = FrequencyTable(plan.name, plan.family.label, plan.kind, tuple(cells), failures,
                           retries, plan.replications)
    if table.flagged:
        warnings.warn(f"{plan.name}: estimation failure rate {table.failure_rate:.4%} "
                      f"exceeds {MAX_FAILURE_RATE:.1%}", RuntimeWarning, stacklevel=2)
    return table


def _calibration_chunk(args):
    labels_scores, k, sizes, seed, start, stop, known = args
    family = EllipticalFamily("gaussian", k)
    groups = draw_noise(family, sizes, seed, start, stop)
    specs = [TestSpec("rank", s) for s in labels_scores]
    stats, ok, _ = _statistics(groups, specs, known=known)
    return stats, ok


def null_statistics(scores, k=2, group_sizes=(100, 100), replications=100_000, seed=7,
                    known=True, jobs=None):
    """Rank statistics on multinormal null samples.

    ``known=True`` computes signs and ranks at the true location and shape;
    ``known=False`` runs the full estimation pipeline. Returns a dict
    ``label -> statistics`` (failed estimations are dropped).
    """
    jobs = default_jobs() if jobs is None else jobs
    scores = [s if isinstance(s, ScoreFunction) else ScoreFunction.parse(s, k) for s in scores]
    tasks = [(tuple(scores), k, tuple(group_sizes), seed, a, b, known)
             for a, b in _chunks(replications)]
    parts = _map(_calibration_chunk, tasks, jobs)
    ok = np.concatenate([p[1] for p in parts])
    return {s.label: np.concatenate([p[0][s.label] for p in parts])[ok] for s in scores}


def calibrate_critical_values(scores, k=2, group_sizes=(100, 100), replications=100_000,
                              seed=7, alpha=0.05, known=True, jobs=None):
    """Empirical upper-``alpha`` null quantiles of rank statistics, keyed by label."""
    if replications < 1000:
        raise InvalidParameter("calibration needs at least 1000 replications")
    stats = null_statistics(scores, k, group_sizes, replications, seed, known, jobs)
    return {label: float(np.quantile(s, 1.0 - alpha)) for label, s in stats.items()}


def calibrate_critical_value(score, k=2, group_sizes=(100, 100), replications=100_000,
                             seed=7, alpha=0.05, known=True, jobs=None):
    """Empirical upper-``alpha`` null quantile of one rank statistic."""
    score = score if isinstance(score, ScoreFunction) else ScoreFunction.parse(score, k)
    return calibrate_critical_values([score], k, group_sizes, replications, seed, alpha,
                                     known, jobs)[score.label]
