"""Dense symmetric-matrix utilities.

Conventions
-----------
``vec`` stacks columns. ``vech`` stacks the lower triangle column by column,
so for a 3x3 matrix the order is (11, 21, 31, 22, 32, 33). ``vech_reduced``
drops the leading (1, 1) entry from ``vech``.

Most functions accept a leading batch shape ``(..., k, k)``.
"""
from dataclasses import dataclass

import numpy as np

from .exceptions import DegenerateConstraint, NotPositiveDefinite

EIG_RTOL = 1e-12


def _eigh_checked(a):
    a = np.asarray(a, dtype=float)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise ValueError(f"expected square matrices, got shape {a.shape}")
    a = 0.5 * (a + np.swapaxes(a, -1, -2))
    w, q = np.linalg.eigh(a)
    lmax = w[..., -1:]
    if np.any(~np.isfinite(w)) or np.any(w[..., :1] <= EIG_RTOL * np.maximum(lmax, 0)) \
            or np.any(lmax <= 0):
        raise NotPositiveDefinite("matrix is not positive definite")
    return w, q


def is_spd(a):
    try:
        _eigh_checked(a)
    except NotPositiveDefinite:
        return False
    return True


def _recompose(w, q):
    return np.einsum("...ij,...j,...kj->...ik", q, w, q)


def sym_sqrt(a):
    """Symmetric positive definite square root, via eigendecomposition."""
    w, q = _eigh_checked(a)
    return _recompose(np.sqrt(w), q)


def sym_inv_sqrt(a):
    """Symmetric inverse square root ``a^{-1/2}``."""
    w, q = _eigh_checked(a)
    return _recompose(1.0 / np.sqrt(w), q)


def sym_inv(a):
    w, q = _eigh_checked(a)
    return _recompose(1.0 / w, q)


def shape_normalize(a):
    """Split an SPD matrix into ``(shape, scale)`` with ``det(shape) == 1``.

    ``scale`` is ``det(a)**(1/k)`` so that ``a == scale * shape``.
    """
    w, q = _eigh_checked(a)
    scale = np.exp(np.mean(np.log(w), axis=-1))
    shape = _recompose(w / scale[..., None], q)
    if np.ndim(scale) == 0:
        scale = float(scale)
    return shape, scale


def vec(a):
    """Column-stacking vectorization of the trailing two axes."""
    a = np.asarray(a)
    return np.swapaxes(a, -1, -2).reshape(a.shape[:-2] + (-1,))


def unvec(v, k):
    v = np.asarray(v)
    return np.swapaxes(v.reshape(v.shape[:-1] + (k, k)), -1, -2)


def vech_indices(k):
    """Row and column indices of the ``vech`` ordering."""
    rows, cols = [], []
    for j in range(k):
        for i in range(j, k):
            rows.append(i)
            cols.append(j)
    return np.array(rows), np.array(cols)


def vech(a):
    a = np.asarray(a)
    r, c = vech_indices(a.shape[-1])
    return a[..., r, c]


def vech_reduced(a):
    """``vech(a)`` without its (1, 1) entry; length ``k(k+1)/2 - 1``."""
    return vech(a)[..., 1:]


def commutation_matrix(k):
    """The k^2 x k^2 matrix with ``K @ vec(A) == vec(A.T)``."""
    kk = np.zeros((k * k, k * k))
    for i in range(k):
        for j in range(k):
            kk[i * k + j, j * k + i] = 1.0
    return kk


@dataclass(frozen=True)
class TraceFreeBasis:
    """Linear lift from ``vech_reduced`` coordinates to trace-constrained matrices.

    ``mk`` has shape ``(k0, k*k)``. For symmetric ``v`` with
    ``tr(V^{-1} v) == 0``, ``mk.T @ vech_reduced(v) == vec(v)``.
    """

    dim: int
    base: np.ndarray
    mk: np.ndarray

    @property
    def k0(self):
        return self.mk.shape[0]

    def lift(self, coords):
        """Rebuild the symmetric matrix whose ``vech_reduced`` is ``coords``."""
        return unvec(np.asarray(coords) @ self.mk, self.dim)


def build_trace_free_basis(v):
    v = np.asarray(v, dtype=float)
    k = v.shape[-1]
    vinv = sym_inv(v)
    if vinv[0, 0] <= EIG_RTOL:
        raise DegenerateConstraint("(V^-1)_11 is not positive")
    rows, cols = vech_indices(k)
    k0 = len(rows) - 1
    mk = np.zeros((k0, k * k))
    for c in range(k0):
        r, s = rows[c + 1], cols[c + 1]
        e = np.zeros((k, k))
        e[r, s] = e[s, r] = 1.0
        e[0, 0] = -np.sum(vinv * e) / vinv[0, 0]
        mk[c] = vec(e)
    return TraceFreeBasis(dim=k, base=v, mk=mk)


def h_matrix(v):
    """``M (I + K)(V kron V)^{-1} M' / (4k(k+2))`` for shape matrix ``v``."""
    v = np.asarray(v, dtype=float)
    k = v.shape[-1]
    mk = build_trace_free_basis(v).mk
    vinv = sym_inv(v)
    mid = (np.eye(k * k) + commutation_matrix(k)) @ np.kron(vinv, vinv)
    h = mk @ mid @ mk.T / (4.0 * k * (k + 2))
    return 0.5 * (h + h.T)
