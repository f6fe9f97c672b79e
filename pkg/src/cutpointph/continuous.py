"""Closed-form measures of the continuous cut-point phase-type family.

Every measure is written in terms of the ordered interval products
``P_j = exp(T_1 (a_1 - a_0)) ... exp(T_{j-1} (a_{j-1} - a_{j-2}))`` held in
``model.cache.prefix``.  Point evaluations accept scalars or arrays.
"""

from __future__ import annotations

import numpy as np

from .errors import DomainError, TailUnderflowError
from .model import (
    ContinuousCutpointModel,
    PrefixProductCache,
    _solve,
    interval_indices,
    matrix_exponential,
)

__all__ = [
    "PrefixProductCache",
    "forward_rows",
    "pdf",
    "cdf",
    "survival",
    "cumulative_hazard",
    "hazard",
    "laplace_transform",
    "mean",
    "second_moment",
    "variance",
    "quantile",
]


def _as_array(x):
    arr = np.asarray(x, dtype=float)
    return arr, arr.ndim == 0


def _finish(values, scalar):
    return float(values.reshape(-1)[0]) if scalar else values


def forward_rows(model: ContinuousCutpointModel, x):
    """Return ``(j, rows)``: zero-based interval of each ``x`` and ``alpha P_j exp(T_j (x - a_{j-1}))``.

    ``rows[k]`` is the vector of probabilities of being in each transient
    phase at time ``x[k]``.  ``x`` must be a 1-D array of non-negative values.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    j = interval_indices(x, model.cutpoints)
    rows = np.empty((len(x), model.m))
    lower = model.lower
    for h in np.unique(j):
        sel = j == h
        v = model.alpha @ model.cache.prefix[h]
        E = matrix_exponential(model.matrices[h], x[sel] - lower[h])
        rows[sel] = np.einsum("i,kij->kj", v, E)
    return j, rows


def _density(model, x):
    """Density for ``x >= 0`` (right limit at 0)."""
    j, rows = forward_rows(model, x)
    exits = np.stack(model.exits)
    vals = np.einsum("kj,kj->k", rows, exits[j])
    vals[(vals < 0) & (vals >= -1e-12)] = 0.0
    return vals


def pdf(model: ContinuousCutpointModel, x):
    """Probability density; ``x`` must be strictly positive."""
    arr, scalar = _as_array(x)
    if np.any(~(arr > 0)):
        raise DomainError("pdf is defined for x > 0")
    return _finish(_density(model, arr).reshape(arr.shape), scalar)


def survival(model: ContinuousCutpointModel, x):
    """Reliability ``P(X > x)`` from the matrix form (no subtraction)."""
    arr, scalar = _as_array(x)
    if np.any(~(arr >= 0)):
        raise DomainError("survival is defined for x >= 0")
    _, rows = forward_rows(model, arr)
    vals = rows.sum(axis=1)
    vals[arr.reshape(-1) == 0] = 1.0
    return _finish(np.clip(vals, 0.0, 1.0).reshape(arr.shape), scalar)


def cdf(model: ContinuousCutpointModel, x):
    arr, scalar = _as_array(x)
    if np.any(~(arr >= 0)):
        raise DomainError("cdf is defined for x >= 0")
    vals = 1.0 - np.asarray(survival(model, arr.reshape(-1)))
    return _finish(vals.reshape(arr.shape), scalar)


def cumulative_hazard(model: ContinuousCutpointModel, x):
    """``H(x) = -log R(x)``; raises ``TailUnderflowError`` where ``R`` is 0."""
    arr, scalar = _as_array(x)
    R = np.asarray(survival(model, arr.reshape(-1)))
    if np.any(R <= 0):
        bad = arr.reshape(-1)[R <= 0][0]
        raise TailUnderflowError(f"survival underflows to 0 at x={bad!r}")
    return _finish((-np.log(R)).reshape(arr.shape), scalar)


def hazard(model: ContinuousCutpointModel, x):
    arr, scalar = _as_array(x)
    R = np.asarray(survival(model, arr.reshape(-1)))
    if np.any(R <= 0):
        raise TailUnderflowError("survival underflows to 0")
    return _finish((np.asarray(pdf(model, arr.reshape(-1))) / R).reshape(arr.shape), scalar)


def laplace_transform(model: ContinuousCutpointModel, s: float) -> float:
    """``E[exp(-s X)]`` for ``s >= 0``.

    Telescoped sum of the per-interval integrals:
    ``-alpha R_1 t_1 + sum_i alpha P_{i+1} e^{-s a_i} (R_i t_i - R_{i+1} t_{i+1})``
    with ``R_h = (T_h - s I)^{-1}``.
    """
    if not s >= 0:
        raise DomainError("laplace_transform needs s >= 0")
    eye = np.eye(model.m)
    resolved = [
        _solve(T - s * eye, t0, f"T_{h + 1} - sI")
        for h, (T, t0) in enumerate(zip(model.matrices, model.exits))
    ]
    total = -model.alpha @ resolved[0]
    for i, a in enumerate(model.cutpoints):
        P = model.cache.prefix[i + 1]
        total += np.exp(-s * a) * (model.alpha @ P @ (resolved[i] - resolved[i + 1]))
    return float(total)


def _inverses(model):
    return [_solve(T, np.eye(model.m), f"T_{h + 1}") for h, T in enumerate(model.matrices)]


def mean(model: ContinuousCutpointModel) -> float:
    inv = _inverses(model)
    e = np.ones(model.m)
    total = -model.alpha @ inv[0] @ e
    for i in range(model.n):
        P = model.cache.prefix[i + 1]
        total += model.alpha @ P @ (inv[i] - inv[i + 1]) @ e
    return float(total)


def second_moment(model: ContinuousCutpointModel) -> float:
    inv = _inverses(model)
    e = np.ones(model.m)
    eye = np.eye(model.m)
    total = 2.0 * model.alpha @ inv[0] @ inv[0] @ e
    for i, a in enumerate(model.cutpoints):
        P = model.cache.prefix[i + 1]
        bracket = inv[i + 1] @ (a * eye - inv[i + 1]) - inv[i] @ (a * eye - inv[i])
        total -= 2.0 * model.alpha @ P @ bracket @ e
    return float(total)


def variance(model: ContinuousCutpointModel) -> float:
    mu = mean(model)
    return max(second_moment(model) - mu * mu, 0.0)


def quantile(model: ContinuousCutpointModel, p: float, rtol: float = 1e-13) -> float:
    """Smallest ``x`` with ``F(x) >= p`` by bisection (``0 < p < 1``)."""
    if not 0 < p < 1:
        raise DomainError("quantile needs 0 < p < 1")
    target = 1.0 - p
    hi = max(mean(model), 1e-12)
    while survival(model, hi) > target:
        hi *= 2.0
        if hi > 1e300:
            raise DomainError(f"quantile {p} is not reachable")
    lo = 0.0
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if survival(model, mid) > target:
            lo = mid
        else:
            hi = mid
    return hi
