"""Location and shape estimation, multivariate signs and pooled aligned ranks.

Per group, location is the Hettmansperger-Randles affine-equivariant median:
the point ``theta`` and unit-determinant shape ``V`` at which the signs
``U = V^{-1/2}(x - theta) / ||.||`` average to zero and have covariance
``I / k``. The common shape is Tyler's estimator computed from the pooled
group-centred data, and the scale is the median pooled radial distance.

All iterative routines broadcast over leading batch axes: ``x`` may have
shape ``(..., n, k)``.
"""
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .exceptions import ConvergenceFailure, DegenerateData, DimensionMismatch, ZeroVector
from .linalg import shape_normalize, sym_inv_sqrt

TYLER_TOL = 1e-9
TYLER_MAX_ITER = 500
HR_TOL = 1e-8
HR_MAX_ITER = 1000


@dataclass(frozen=True)
class GroupedSample:
    """``m >= 2`` groups of ``k``-variate observations."""

    groups: tuple
    labels: tuple = None

    def __post_init__(self):
        groups = tuple(np.asarray(g, dtype=float) for g in self.groups)
        if len(groups) < 2:
            raise DimensionMismatch("need at least two groups")
        k = groups[0].shape[-1]
        for i, g in enumerate(groups):
            if g.ndim != 2 or g.shape[1] != k:
                raise DimensionMismatch(f"group {i} has shape {g.shape}, expected (n_i, {k})")
            if g.shape[0] < k + 1:
                raise DegenerateData(f"group {i} has {g.shape[0]} rows; need at least {k + 1}")
            if not np.all(np.isfinite(g)):
                raise DegenerateData(f"group {i} contains non-finite values")
        labels = tuple(range(len(groups))) if self.labels is None else tuple(self.labels)
        if len(labels) != len(groups):
            raise DimensionMismatch("one label per group required")
        object.__setattr__(self, "groups", groups)
        object.__setattr__(self, "labels", labels)

    @property
    def k(self):
        return self.groups[0].shape[1]

    @property
    def m(self):
        return len(self.groups)

    @property
    def sizes(self):
        return tuple(g.shape[0] for g in self.groups)

    @property
    def n(self):
        return sum(self.sizes)

    def transform(self, a, shifts=None):
        """Apply ``x -> a x + b_i`` group-wise."""
        a = np.asarray(a, dtype=float)
        shifts = [np.zeros(self.k)] * self.m if shifts is None else shifts
        return GroupedSample([g @ a.T + b for g, b in zip(self.groups, shifts)], self.labels)


def _quad_forms(z, w):
    return np.einsum("...ni,...ij,...nj->...n", z, w, z)


def _weighted_scatter(z, weights):
    return np.einsum("...n,...ni,...nj->...ij", weights, z, z)


def _det_normalize(s):
    k = s.shape[-1]
    det = np.linalg.det(s)
    return s / (det ** (1.0 / k))[..., None, None]


def _fixed_point_residual(s, w):
    # ||V^{-1/2} S V^{-1/2} - I||_F computed as sqrt(tr((S W - I)^2))
    k = s.shape[-1]
    r = s @ w - np.eye(k)
    return np.sqrt(np.maximum(np.einsum("...ij,...ji->...", r, r), 0.0))


def _flatten_batch(a, core):
    batch = a.shape[:a.ndim - core]
    return a.reshape((-1,) + a.shape[a.ndim - core:]), batch


def tyler_batch(z, tol=TYLER_TOL, max_iter=TYLER_MAX_ITER, init=None):
    """Tyler shape iteration without raising.

    Returns ``(V, residual, n_iter)``; ``residual`` is the fixed-point
    residual at the returned ``V`` and exceeds ``tol`` where the iteration
    did not converge. Converged batch members are frozen.
    """
    z, batch = _flatten_batch(np.asarray(z, dtype=float), 2)
    b, n, k = z.shape
    v = np.tile(np.eye(k), (b, 1, 1)) if init is None \
        else np.array(np.broadcast_to(init, (b, k, k)), dtype=float)
    res = np.full(b, np.nan)
    iters = np.zeros(b, dtype=int)
    active = np.arange(b)
    for it in range(max_iter + 1):
        za, va = z[active], v[active]
        w = np.linalg.inv(va)
        q = _quad_forms(za, w)
        # zero rows (points at their centre) carry no direction and are dropped
        nz = q > 0
        weights = np.where(nz, 1.0 / np.where(nz, q, 1.0), 0.0)
        s = (k / nz.sum(axis=-1))[:, None, None] * _weighted_scatter(za, weights)
        r = _fixed_point_residual(s, w)
        res[active] = r
        iters[active] = it
        keep = ~(r <= tol) & np.isfinite(r)
        if it == max_iter or not keep.any():
            break
        active, s = active[keep], s[keep]
        v[active] = _det_normalize(s)
    return v.reshape(batch + (k, k)), res.reshape(batch), iters.reshape(batch)


def tyler_shape(z, tol=TYLER_TOL, max_iter=TYLER_MAX_ITER):
    """Tyler's shape estimate (unit determinant) of already-centred data ``z``.

    Rows that are exactly zero are ignored.
    """
    z = np.asarray(z, dtype=float)
    if np.any(np.sum(np.any(z != 0, axis=-1), axis=-1) <= z.shape[-1]):
        raise DegenerateData("too few nonzero centred observations")
    v, res, _ = tyler_batch(z, tol, max_iter)
    if np.any(~(res <= tol)):
        raise ConvergenceFailure(f"Tyler iteration did not converge in {max_iter} steps",
                                 residuals=res)
    return v


def tyler_pooled(groups, locations, tol=TYLER_TOL, max_iter=TYLER_MAX_ITER, on_zero="drop"):
    """Tyler shape of all group-centred observations ``x_ij - theta_i``.

    ``on_zero="drop"`` ignores observations equal to their group location;
    ``"raise"`` raises ``ZeroVector`` instead.
    """
    centred = np.concatenate([np.asarray(g, dtype=float) - np.asarray(t)[..., None, :]
                              for g, t in zip(groups, locations)], axis=-2)
    if on_zero == "raise" and np.any(np.all(centred == 0, axis=-1)):
        raise ZeroVector("an observation coincides with its group location")
    return tyler_shape(centred, tol, max_iter)


# relative squared distance below which an observation counts as the centre
_HIT_RTOL = 1e-24


def _polish_near_observation(x, theta, active, w):
    """Resolve the centre exactly when it is close to an observation.

    Weiszfeld steps approach an optimum at, or next to, an observation only
    sublinearly. Whiten by ``V`` and let ``x_j`` be the nearest observation
    and ``delta_c = theta - x_j``. Linearizing the other signs at ``theta``
    gives their sum ``T`` and Hessian ``H``; the sign of ``x_j`` is kept
    exact. With ``eta`` copies of ``x_j`` the centre ``x_j + delta`` solves
    ``delta = (H + eta I / t)^{-1} (T + H delta_c)`` with ``t = ||delta||``, a
    monotone scalar equation in ``t``; when ``||T + H delta_c|| <= eta`` the
    optimum is ``x_j`` itself.
    """
    z = x[active] - theta[active, None, :]
    q = _quad_forms(z, w)
    j = np.argmin(q, axis=-1)
    qmin = np.take_along_axis(q, j[:, None], axis=-1)[:, 0]
    near = np.flatnonzero(qmin < 1e-4 * np.median(q, axis=-1))
    if near.size == 0:
        return
    idx = active[near]
    m, k = near.size, x.shape[-1]
    rows = np.arange(m)
    lam, vecs = np.linalg.eigh(w[near])
    root = np.einsum("bij,bj,bkj->bik", vecs, np.sqrt(np.maximum(lam, 0.0)), vecs)
    y = np.einsum("bij,bnj->bni", root, z[near])
    d = np.linalg.norm(y, axis=-1)
    delta_c = -y[rows, j[near]]
    xj = x[idx, j[near]]
    copies = np.all(x[idx] == xj[:, None, :], axis=-1)
    eta = copies.sum(axis=-1)
    d[copies] = np.inf
    u = y / d[..., None]
    hess = np.einsum("bn,ij->bij", 1.0 / d, np.eye(k)) \
        - np.einsum("bn,bni,bnj->bij", 1.0 / d, u, u)
    target = u.sum(axis=1) + np.einsum("bij,bj->bi", hess, delta_c)
    r = np.linalg.norm(target, axis=-1)
    h, qv = np.linalg.eigh(hess)
    tt = np.einsum("bji,bj->bi", qv, target)
    # solve sum_i tt_i^2 / (h_i t + eta)^2 = 1 by bisection in log t
    lo = np.full(m, -80.0)
    hi = np.log(np.maximum(r, 1.0) / np.maximum(h[:, 0], 1e-300)) + 1.0
    e = eta[:, None].astype(float)
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        t = np.exp(mid)[:, None]
        below = np.sum(tt ** 2 / (h * t + e) ** 2, axis=-1) > 1.0
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    t = np.exp(0.5 * (lo + hi))
    delta = np.einsum("bij,bj->bi", qv, tt / (h + e / t[:, None]))
    on_point = r <= eta
    # trust the linearization only well inside the gap to the next point
    local = ~on_point & (t <= 0.5 * d.min(axis=-1))
    theta[idx[on_point]] = xj[on_point]
    step = np.linalg.solve(root[local], delta[local][..., None])[..., 0]
    theta[idx[local]] = xj[local] + step


def hr_batch(x, tol=HR_TOL, max_iter=HR_MAX_ITER, init=None):
    """Hettmansperger-Randles iteration without raising.

    Location steps are modified Weiszfeld steps (Vardi and Zhang), so that
    the iteration can settle on an observation when the affine-equivariant
    median is attained there. Shape steps are Tyler steps at the current
    centre.

    Returns
    -------
    theta : ndarray, shape (..., k)
    shape : ndarray, shape (..., k, k)
    residuals : ndarray, shape (..., 2)
        Subgradient norm of the mean sign and Frobenius distance of the sign
        covariance to ``I / k``.
    n_iter : ndarray of int
    coincident : ndarray of bool
        True where the returned centre sits on an observation.
    """
    x, batch = _flatten_batch(np.asarray(x, dtype=float), 2)
    b, n, k = x.shape
    if init is None:
        theta = np.median(x, axis=1)
        v = np.tile(np.eye(k), (b, 1, 1))
    else:
        theta = np.array(np.broadcast_to(init[0], (b, k)), dtype=float)
        v = np.array(np.broadcast_to(init[1], (b, k, k)), dtype=float)
    res = np.full((b, 2), np.nan)
    iters = np.zeros(b, dtype=int)
    hits = np.zeros(b, dtype=bool)
    active = np.arange(b)
    for it in range(max_iter + 1):
        w = np.linalg.inv(v[active])
        _polish_near_observation(x, theta, active, w)
        z = x[active] - theta[active, None, :]
        q = _quad_forms(z, w)
        hit = q <= _HIT_RTOL * np.median(q, axis=-1, keepdims=True)
        eta = hit.sum(axis=-1)
        with np.errstate(divide="ignore"):
            inv_d = np.where(hit, 0.0, 1.0 / np.sqrt(np.where(hit, 1.0, q)))
        total = np.einsum("bn,bni->bi", inv_d, z)
        r_norm = np.sqrt(np.einsum("bi,bij,bj->b", total, w, total))
        # a coincident point carries the limiting sign -total / ||total||
        limit = (eta / np.where(r_norm > 0, r_norm, 1.0) ** 2)[:, None, None] \
            * np.einsum("bi,bj->bij", total, total)
        s = (k / n) * (_weighted_scatter(z, inv_d ** 2) + limit)
        r = np.stack([np.maximum(r_norm - eta, 0.0) / n,
                      _fixed_point_residual(s, w) / k], axis=-1)
        res[active] = r
        iters[active] = it
        hits[active] = eta > 0
        keep = ~np.all(r <= tol, axis=-1) & np.all(np.isfinite(r), axis=-1)
        if it == max_iter or not keep.any():
            break
        active = active[keep]
        step = total[keep] / inv_d[keep].sum(axis=-1)[:, None]
        with np.errstate(divide="ignore", invalid="ignore"):
            factor = np.where(eta[keep] > 0,
                              np.maximum(0.0, 1.0 - eta[keep] / r_norm[keep]), 1.0)
        theta[active] += factor[:, None] * step
        vn = _det_normalize(s[keep])
        v[active] = 0.5 * (vn + np.swapaxes(vn, -1, -2))
    return (theta.reshape(batch + (k,)), v.reshape(batch + (k, k)), res.reshape(batch + (2,)),
            iters.reshape(batch), hits.reshape(batch))


def hr_estimate(x, tol=HR_TOL, max_iter=HR_MAX_ITER):
    """Affine-equivariant median and its companion shape for one group.

    Parameters
    ----------
    x : ndarray, shape (..., n, k)

    Returns
    -------
    theta : ndarray, shape (..., k)
    shape : ndarray, shape (..., k, k), unit determinant

    Raises
    ------
    DegenerateData
        If the median is attained at an observation, whose sign is undefined.
    ConvergenceFailure
        If the residuals stay above ``tol`` after ``max_iter`` steps.
    """
    theta, v, res, _, hit = hr_batch(x, tol, max_iter)
    if np.any(hit):
        raise DegenerateData("an observation coincides with the running centre")
    if np.any(~(res <= tol)):
        raise ConvergenceFailure(f"HR iteration did not converge in {max_iter} steps",
                                 residuals=res)
    return theta, v


@dataclass(frozen=True)
class AlignedFrame:
    """Signs, radial distances and pooled ranks at the estimated parameters.

    Per-group quantities are tuples indexed by group; every array may carry
    leading batch axes.
    """

    locations: tuple
    shape: np.ndarray
    scale: np.ndarray
    signs: tuple
    distances: tuple
    ranks: tuple
    sizes: tuple = field(default=None)

    @property
    def k(self):
        return self.shape.shape[-1]

    @property
    def m(self):
        return len(self.signs)

    @property
    def n(self):
        return sum(self.sizes)


def pooled_ranks(distances):
    """Ranks of the concatenated distances, split back per group.

    Ranks are integers unless ties occur, in which case midranks are used
    and a ``RuntimeWarning`` is issued.
    """
    sizes = [d.shape[-1] for d in distances]
    pooled = np.concatenate(distances, axis=-1)
    order = np.argsort(pooled, axis=-1, kind="stable")
    srt = np.take_along_axis(pooled, order, axis=-1)
    if np.any(np.diff(srt, axis=-1) == 0):
        warnings.warn("ties among radial distances; using midranks", RuntimeWarning,
                      stacklevel=2)
        ranks = rankdata(pooled, method="average", axis=-1)
    else:
        ranks = np.empty(pooled.shape, dtype=np.intp)
        np.put_along_axis(ranks, order,
                          np.broadcast_to(np.arange(1, pooled.shape[-1] + 1), pooled.shape),
                          axis=-1)
    return tuple(np.split(ranks, np.cumsum(sizes)[:-1], axis=-1))


def frame_at(groups, locations, shape, on_zero="zero"):
    """Signs, distances and ranks at given (estimated or known) parameters.

    Parameters
    ----------
    groups : sequence of ndarray, each (..., n_i, k)
    locations : sequence of ndarray, each (..., k)
    shape : ndarray, (..., k, k)
    on_zero : {"zero", "raise"}
        An observation equal to its group location has sign zero and
        distance zero under ``"zero"``; ``"raise"`` raises ``ZeroVector``.
    """
    if on_zero not in ("zero", "raise"):
        raise ValueError(f"on_zero must be 'zero' or 'raise', got {on_zero!r}")
    groups = tuple(np.asarray(g, dtype=float) for g in groups)
    shape = np.asarray(shape, dtype=float)
    root = sym_inv_sqrt(shape)
    signs, dists = [], []
    for g, theta in zip(groups, locations):
        y = (g - np.asarray(theta)[..., None, :]) @ np.swapaxes(root, -1, -2)
        d = np.linalg.norm(y, axis=-1)
        zero = d == 0
        if np.any(zero) and on_zero == "raise":
            raise ZeroVector("an observation coincides with its group location")
        signs.append(y / np.where(zero, 1.0, d)[..., None])
        dists.append(d)
    ranks = pooled_ranks(dists)
    scale = np.median(np.concatenate(dists, axis=-1), axis=-1)
    return AlignedFrame(tuple(np.asarray(t, dtype=float) for t in locations), shape, scale,
                        tuple(signs), tuple(dists), ranks, tuple(g.shape[-2] for g in groups))


def estimate_parameters(groups, hr_tol=HR_TOL, tyler_tol=TYLER_TOL,
                        hr_max_iter=HR_MAX_ITER, tyler_max_iter=TYLER_MAX_ITER):
    """Batched location and common-shape estimation without raising.

    Returns
    -------
    locations : list of ndarray, each (..., k)
    shape : ndarray, (..., k, k), unit determinant
    ok : ndarray of bool
        False where an iteration failed to converge.
    coincident : ndarray of int
        Number of groups whose median sits on an observation.
    """
    groups = [np.asarray(g, dtype=float) for g in groups]
    locations, ok, coincident = [], True, 0
    for g in groups:
        theta, _, res, _, hit = hr_batch(g, hr_tol, hr_max_iter)
        locations.append(theta)
        ok = ok & np.all(res <= hr_tol, axis=-1)
        coincident = coincident + hit
    centred = np.concatenate([g - t[..., None, :] for g, t in zip(groups, locations)], axis=-2)
    shape, res, _ = tyler_batch(centred, tyler_tol, tyler_max_iter)
    ok = ok & (res <= tyler_tol)
    return locations, shape, ok, coincident


def align(sample, hr_tol=HR_TOL, tyler_tol=TYLER_TOL, on_zero="zero"):
    """Estimate locations, common shape and scale, then build the aligned frame.

    A group median attained at an observation gives that observation sign
    zero, unless ``on_zero="raise"``.
    """
    if not isinstance(sample, GroupedSample):
        sample = GroupedSample(sample)
    locations, shape, ok, _ = estimate_parameters(sample.groups, hr_tol, tyler_tol)
    if not ok:
        raise ConvergenceFailure("location or shape iteration did not converge")
    shape, _ = shape_normalize(shape)
    return frame_at(sample.groups, locations, shape, on_zero=on_zero)
