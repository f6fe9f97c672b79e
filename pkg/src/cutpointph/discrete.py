"""Closed-form measures of the discrete cut-point phase-type family.

Interval products ``Q_j = T_1^{a_1 - a_0} ... T_{j-1}^{a_{j-1} - a_{j-2}}`` live
in ``model.cache.prefix`` and are built by binary exponentiation.
"""

from __future__ import annotations

import numpy as np

from .errors import DomainError
from .model import DiscreteCutpointModel, _solve, interval_indices

__all__ = [
    "matrix_power",
    "pmf",
    "cdf_k",
    "survival_k",
    "pgf",
    "mean_discrete",
    "factorial_moment2",
    "variance_discrete",
]


def matrix_power(M, k: int) -> np.ndarray:
    """``M^k`` by repeated squaring (``k >= 0``)."""
    if k < 0:
        raise DomainError("negative matrix power")
    return np.linalg.matrix_power(np.asarray(M, dtype=float), int(k))


def _ints(k, lowest):
    arr = np.asarray(k)
    scalar = arr.ndim == 0
    flat = arr.reshape(-1)
    if flat.size and (np.any(flat != np.round(flat)) or np.any(flat < lowest)):
        raise DomainError(f"k must be an integer >= {lowest}")
    return flat.astype(np.int64), scalar, arr.shape


def _rows(model, k, offset):
    """``alpha Q_j T_j^{k - a_{j-1} - offset}`` for each ``k``."""
    j = interval_indices(k, model.cutpoints)
    lower = model.lower.astype(np.int64)
    rows = np.empty((len(k), model.m))
    for idx, (kk, jj) in enumerate(zip(k, j)):
        power = matrix_power(model.matrices[jj], kk - lower[jj] - offset)
        rows[idx] = model.alpha @ model.cache.prefix[jj] @ power
    return j, rows


def _out(vals, scalar, shape):
    return float(vals[0]) if scalar else vals.reshape(shape)


def pmf(model: DiscreteCutpointModel, k):
    """``P(X = k)`` for integers ``k >= 1``."""
    flat, scalar, shape = _ints(k, 1)
    j, rows = _rows(model, flat, 1)
    exits = np.stack(model.exits)
    vals = np.einsum("kj,kj->k", rows, exits[j])
    return _out(np.maximum(vals, 0.0), scalar, shape)


def survival_k(model: DiscreteCutpointModel, k):
    """``P(X > k)`` from the matrix form, ``k >= 0``."""
    flat, scalar, shape = _ints(k, 0)
    _, rows = _rows(model, flat, 0)
    vals = rows.sum(axis=1)
    vals[flat == 0] = 1.0
    return _out(np.clip(vals, 0.0, 1.0), scalar, shape)


def cdf_k(model: DiscreteCutpointModel, k):
    flat, scalar, shape = _ints(k, 0)
    vals = 1.0 - np.asarray(survival_k(model, flat))
    return _out(vals, scalar, shape)


def pgf(model: DiscreteCutpointModel, z: float) -> float:
    """``E[z^X]`` for ``|z| <= 1``."""
    if not abs(z) <= 1:
        raise DomainError("pgf needs |z| <= 1")
    eye = np.eye(model.m)
    resolved = [
        _solve(eye - z * T, t0, f"I - z T_{h + 1}")
        for h, (T, t0) in enumerate(zip(model.matrices, model.exits))
    ]
    total = z * model.alpha @ resolved[0]
    for i, a in enumerate(model.int_cutpoints):
        Q = model.cache.prefix[i + 1]
        total += z ** (a + 1) * (model.alpha @ Q @ (resolved[i + 1] - resolved[i]))
    return float(total)


def _fundamentals(model):
    eye = np.eye(model.m)
    return [
        _solve(eye - T, eye, f"I - T_{h + 1}") for h, T in enumerate(model.matrices)
    ]


def mean_discrete(model: DiscreteCutpointModel) -> float:
    R = _fundamentals(model)
    e = np.ones(model.m)
    total = model.alpha @ R[0] @ e
    for i in range(model.n):
        Q = model.cache.prefix[i + 1]
        total += model.alpha @ Q @ (R[i + 1] - R[i]) @ e
    return float(total)


def factorial_moment2(model: DiscreteCutpointModel) -> float:
    """``E[X (X - 1)]``.

    Each cut-point contributes ``2 alpha Q_{i+1} [R_{i+1}(a_i I + R_{i+1} T_{i+1})
    - R_i(a_i I + R_i T_i)] e`` with ``R_h = (I - T_h)^{-1}``; the two terms
    have the same shape so they cancel when ``T_i = T_{i+1}``.
    """
    R = _fundamentals(model)
    e = np.ones(model.m)
    eye = np.eye(model.m)
    T = model.matrices
    total = 2.0 * model.alpha @ R[0] @ R[0] @ T[0] @ e
    for i, a in enumerate(model.int_cutpoints):
        Q = model.cache.prefix[i + 1]
        upper = R[i + 1] @ (a * eye + R[i + 1] @ T[i + 1])
        lower = R[i] @ (a * eye + R[i] @ T[i])
        total += 2.0 * model.alpha @ Q @ (upper - lower) @ e
    return float(total)


def variance_discrete(model: DiscreteCutpointModel) -> float:
    mu = mean_discrete(model)
    return max(factorial_moment2(model) + mu - mu * mu, 0.0)
