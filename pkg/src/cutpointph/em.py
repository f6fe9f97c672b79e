"""Maximum-likelihood fitting of continuous cut-point PH laws by EM.

Cut-points are fixed during a run.  The E-step needs, for every observation
``y`` and interval ``h``, the flow integrals

    c_ij(y, h) = int_{a_{h-1}}^{U} a_i(u) f_j(U - u, y, h) du,
    U = max(a_{h-1}, min(y, a_h)),

which are evaluated with fixed-order Gauss-Legendre rules.  Intervals that
an observation crosses completely share the same forward vector, so their
contributions are aggregated through a backward recursion and integrated
once per interval.
"""

from __future__ import annotations

import functools
import hashlib
import itertools
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import continuous
from .errors import DomainError, FitError
from .model import (
    ContinuousCutpointModel,
    dumps,
    erlang_matrix,
    interval_indices,
    matrix_exponential,
    model_from_dict,
    model_to_dict,
)
from .simulate import substream

__all__ = [
    "SufficientStats",
    "FitConfig",
    "FitResult",
    "GridRow",
    "GridSearchResult",
    "data_hash",
    "log_likelihood",
    "forward_vector",
    "backward_vector",
    "failure_vector",
    "flow_integral",
    "e_step",
    "m_step",
    "m_step_erlang",
    "initial_model",
    "fit",
    "fit_erlang",
    "grid_search_cutpoints",
]

log = logging.getLogger(__name__)

TINY = 1e-300


# ---------------------------------------------------------------------------
# records
# ---------------------------------------------------------------------------


@dataclass
class SufficientStats:
    """Expected complete-data statistics.

    ``B[i]`` starts in phase ``i``; ``Z[i, h]`` time in ``i`` during interval
    ``h``; ``N[i, j, h]`` jumps ``i -> j`` during ``h`` (diagonal unused);
    ``N_abs[i, h]`` absorptions from ``i`` during ``h``.  Intervals are 0-based.
    """

    B: np.ndarray
    Z: np.ndarray
    N: np.ndarray
    N_abs: np.ndarray

    @classmethod
    def zeros(cls, m: int, n_intervals: int):
        return cls(
            np.zeros(m),
            np.zeros((m, n_intervals)),
            np.zeros((m, m, n_intervals)),
            np.zeros((m, n_intervals)),
        )

    def __add__(self, other):
        return SufficientStats(
            self.B + other.B, self.Z + other.Z, self.N + other.N, self.N_abs + other.N_abs
        )

    def check(self, data) -> list[str]:
        """Violated mass identities for the sample ``data`` (empty when fine)."""
        data = np.asarray(data, dtype=float)
        q = len(data)
        problems = []
        for name in ("B", "Z", "N", "N_abs"):
            if np.any(getattr(self, name) < 0):
                problems.append(f"{name} has negative entries")
        if abs(self.B.sum() - q) > 1e-8:
            problems.append(f"sum(B) = {self.B.sum()!r}, expected {q}")
        if abs(self.N_abs.sum() - q) > 1e-8:
            problems.append(f"sum(N_abs) = {self.N_abs.sum()!r}, expected {q}")
        total = data.sum()
        if abs(self.Z.sum() - total) > 1e-6 * total:
            problems.append(f"sum(Z) = {self.Z.sum()!r}, expected {total!r}")
        return problems


@dataclass(frozen=True)
class FitConfig:
    structure: str = "general"
    phases: int = 1
    cutpoints: tuple[float, ...] = ()
    epsilon: float = 1e-6
    max_iterations: int = 5000
    seed_model: Optional[ContinuousCutpointModel] = None
    seed: int = 0
    quadrature_nodes: int = 64

    def __post_init__(self):
        object.__setattr__(self, "cutpoints", tuple(float(a) for a in self.cutpoints))
        if self.structure not in ("general", "erlang"):
            raise DomainError(f"unknown structure {self.structure!r}")
        if not self.epsilon > 0:
            raise DomainError("epsilon must be positive")
        if self.phases < 1:
            raise DomainError("phases must be >= 1")
        if self.max_iterations < 1:
            raise DomainError("max_iterations must be >= 1")
        if self.quadrature_nodes < 1:
            raise DomainError("quadrature_nodes must be >= 1")
        cuts = np.asarray(self.cutpoints)
        if len(cuts) and (cuts[0] <= 0 or np.any(np.diff(cuts) <= 0)):
            raise DomainError("cut-points must be positive and strictly increasing")
        if self.seed_model is not None:
            sm = self.seed_model
            if sm.m != self.phases or not np.array_equal(sm.cutpoints, cuts):
                raise DomainError("seed_model does not match phases/cut-points")


@dataclass
class FitResult:
    model: ContinuousCutpointModel
    log_likelihood: float
    iterations: int
    converged: bool
    loglik_trace: list[float] = field(default_factory=list)
    structure: str = "general"
    data_hash: str = ""

    def to_dict(self) -> dict:
        return {
            "model": model_to_dict(self.model),
            "loglik": self.log_likelihood,
            "iterations": self.iterations,
            "converged": self.converged,
            "trace": list(self.loglik_trace),
            "structure": self.structure,
            "data_hash": self.data_hash,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FitResult":
        return cls(
            model=model_from_dict(d["model"]),
            log_likelihood=float(d["loglik"]),
            iterations=int(d["iterations"]),
            converged=bool(d["converged"]),
            loglik_trace=[float(v) for v in d.get("trace", [])],
            structure=d.get("structure", "general"),
            data_hash=d.get("data_hash", ""),
        )

    def save(self, path) -> None:
        Path(path).write_text(dumps(self.to_dict()) + "\n")

    @classmethod
    def load(cls, path) -> "FitResult":
        return cls.from_dict(json.loads(Path(path).read_text()))


def data_hash(data) -> str:
    arr = np.ascontiguousarray(np.asarray(data, dtype="<f8"))
    return hashlib.sha256(arr.tobytes()).hexdigest()


def _check_data(data) -> np.ndarray:
    y = np.asarray(data, dtype=float).reshape(-1)
    if y.size == 0:
        raise DomainError("no observations")
    bad = np.nonzero(~(y > 0) | ~np.isfinite(y))[0]
    if bad.size:
        raise DomainError(f"observation {bad[0]} is not a positive finite number: {y[bad[0]]!r}")
    return y


# ---------------------------------------------------------------------------
# likelihood and the E-step vectors
# ---------------------------------------------------------------------------


def log_likelihood(data, model: ContinuousCutpointModel) -> float:
    """Sum of log densities; ``-inf`` if any density underflows to zero."""
    y = _check_data(data)
    f = continuous._density(model, y)
    if np.any(f <= 0):
        return -np.inf
    return float(np.log(f).sum())


def forward_vector(model: ContinuousCutpointModel, y: float) -> np.ndarray:
    """Phase-occupancy row vector ``a(y)`` of the not-yet-absorbed chain."""
    if not y > 0:
        raise DomainError("forward_vector needs y > 0")
    return continuous.forward_rows(model, [y])[1][0]


def _tail_vector(model, j, y):
    """``exp(T_j (y - a_{j-1})) T_j^0`` for 0-based interval ``j``."""
    E = matrix_exponential(model.matrices[j], y - model.lower[j])
    return E @ model.exits[j]


def backward_vector(model: ContinuousCutpointModel, y: float) -> np.ndarray:
    """Column ``b(y)`` of absorption densities at ``y`` per initial phase."""
    if not y > 0:
        raise DomainError("backward_vector needs y > 0")
    j = int(interval_indices(y, model.cutpoints))
    return model.cache.prefix[j] @ _tail_vector(model, j, y)


def _bridge(model, h, j, y):
    """Column vector propagating from ``a_h`` (end of 0-based interval ``h``) to absorption at ``y``."""
    g = _tail_vector(model, j, y)
    for i in range(j - 1, h, -1):
        g = model.cache.blocks[i] @ g
    return g


def failure_vector(model: ContinuousCutpointModel, x: float, y: float, h: int) -> np.ndarray:
    """``f(x, y, h)``: start in interval ``h`` (1-based), spend ``x`` under ``T_h``,
    then follow the later generators up to absorption at ``y``."""
    if x < 0 or not y > 0:
        raise DomainError("failure_vector needs x >= 0 and y > 0")
    h0 = h - 1
    j = int(interval_indices(y, model.cutpoints))
    if not 0 <= h0 <= j:
        raise DomainError(f"y={y!r} lies in interval {j + 1}, before interval {h}")
    E = matrix_exponential(model.matrices[h0], x)
    if j == h0:
        return E @ model.exits[h0]
    return E @ _bridge(model, h0, j, y)


@functools.lru_cache(maxsize=32)
def _nodes(n):
    # symmetrized so that reversing the node order maps s to L - s exactly
    x, w = np.polynomial.legendre.leggauss(n)
    x = 0.5 * (x - x[::-1])
    w = 0.5 * (w + w[::-1])
    x.flags.writeable = False
    w.flags.writeable = False
    return x, w


def _flow_sum(T, v, G, L, weights, nodes):
    """``sum_k weights_k * int_0^{L_k} (v e^{Ts})^T (e^{T(L_k - s)} G_k)^T ds`` as an m x m matrix.

    Long ranges are split into equal panels so that ``||T||_1 * width`` stays
    below ``nodes / 2``.
    """
    x, w = _nodes(nodes)
    m = T.shape[0]
    norm = np.abs(T).sum(axis=0).max()
    panels = np.maximum(1, np.ceil(norm * L / (0.5 * nodes))).astype(int)
    out = np.zeros((m, m))
    for P in np.unique(panels):
        sel = panels == P
        width = L[sel] / P
        tau = 0.5 * width[:, None] * (x[None, :] + 1.0)
        E = matrix_exponential(T, tau)                    # (k, q, m, m)
        Ew = matrix_exponential(T, width)                 # (k, m, m)
        vp = np.empty((P, sel.sum(), m))
        gp = np.empty((P, sel.sum(), m))
        vp[0] = v
        gp[0] = G[sel]
        for p in range(1, P):
            vp[p] = np.einsum("ki,kij->kj", vp[p - 1], Ew)
            gp[p] = np.einsum("kij,kj->ki", Ew, gp[p - 1])
        rows = np.einsum("pki,kqij->pkqj", vp, E)
        cols = np.einsum("kqij,pkj->pkqi", E[:, ::-1], gp[::-1])
        scale = weights[sel] * 0.5 * width
        out += np.einsum("pkqi,pkqj,k,q->ij", rows, cols, scale, w)
    return out


def flow_integral(model: ContinuousCutpointModel, y: float, h: int, nodes: int = 64) -> np.ndarray:
    """Matrix of ``c_ij(y, h)`` for one observation (1-based ``h``)."""
    if not y > 0:
        raise DomainError("flow_integral needs y > 0")
    h0 = h - 1
    if not 0 <= h0 <= model.n:
        raise DomainError(f"interval {h} out of range")
    m = model.m
    if y <= model.lower[h0]:
        return np.zeros((m, m))
    j = int(interval_indices(y, model.cutpoints))
    v = model.alpha @ model.cache.prefix[h0]
    if j == h0:
        L, g = y - model.lower[h0], model.exits[h0]
    else:
        L, g = model.widths[h0], _bridge(model, h0, j, y)
    return _flow_sum(model.matrices[h0], v, g[None, :], np.array([L]), np.ones(1), nodes)


# ---------------------------------------------------------------------------
# E and M steps
# ---------------------------------------------------------------------------


def _e_step(y, model, nodes):
    m, K = model.m, model.n + 1
    stats = SufficientStats.zeros(m, K)
    j = interval_indices(y, model.cutpoints)
    lower = model.lower
    C = np.zeros((K, m, m))
    S = np.zeros((K, m))
    loglik = 0.0
    for h in range(K):
        sel = np.nonzero(j == h)[0]
        if sel.size == 0:
            continue
        T, t0 = model.matrices[h], model.exits[h]
        L = y[sel] - lower[h]
        E = matrix_exponential(T, L)
        v = model.alpha @ model.cache.prefix[h]
        a = np.einsum("i,kij->kj", v, E)
        beta = np.einsum("kij,j->ki", E, t0)
        f = beta @ v
        if np.any(~(f > TINY)):
            bad = sel[np.argmax(~(f > TINY))]
            raise FitError(
                f"density underflow at observation {bad} (y={y[bad]!r})", observation=int(bad)
            )
        inv = 1.0 / f
        loglik += float(np.log(f).sum())
        b = beta @ model.cache.prefix[h].T
        stats.B += model.alpha * (b * inv[:, None]).sum(axis=0)
        stats.N_abs[:, h] = t0 * (a * inv[:, None]).sum(axis=0)
        S[h] = (beta * inv[:, None]).sum(axis=0)
        G = np.broadcast_to(t0, (sel.size, m))
        C[h] += _flow_sum(T, v, G, L, inv, nodes)
    # intervals crossed completely: aggregate the backward vectors from a_h
    W = np.zeros(m)
    for h in range(K - 2, -1, -1):
        W = S[h + 1] + (model.cache.blocks[h + 1] @ W if h + 1 < model.n else 0.0)
        if np.any(W > 0):
            v = model.alpha @ model.cache.prefix[h]
            C[h] += _flow_sum(
                model.matrices[h], v, W[None, :], model.widths[h : h + 1], np.ones(1), nodes
            )
    C = np.maximum(C, 0.0)
    for h in range(K):
        stats.Z[:, h] = np.diag(C[h])
        off = model.matrices[h] * C[h]
        np.fill_diagonal(off, 0.0)
        stats.N[:, :, h] = off
    return stats, loglik


def e_step(data, model: ContinuousCutpointModel, nodes: int = 64) -> SufficientStats:
    """Conditional expectations of the sufficient statistics given ``data``."""
    return _e_step(_check_data(data), model, nodes)[0]


def m_step(
    stats: SufficientStats, q: int, previous: Optional[ContinuousCutpointModel] = None,
    cutpoints: Sequence[float] | None = None,
) -> ContinuousCutpointModel:
    """Complete-data MLE of the unconstrained structure.

    Rows with no posterior occupation keep their values from ``previous``
    (an interval never visited carries forward unchanged).
    """
    m, K = stats.Z.shape
    if cutpoints is None:
        cutpoints = previous.cutpoints if previous is not None else ()
    alpha = stats.B / q
    mats = []
    for h in range(K):
        T = np.zeros((m, m))
        for i in range(m):
            z = stats.Z[i, h]
            # expected counts are non-negative; clip quadrature round-off
            jumps = np.maximum(stats.N[i, :, h], 0.0)
            jumps[i] = 0.0
            exits = max(stats.N_abs[i, h], 0.0)
            out = jumps.sum() + exits
            if z < TINY or not out / max(z, TINY) > 0:
                if previous is None:
                    raise FitError(f"no posterior mass for phase {i} in interval {h + 1}")
                T[i] = previous.matrices[h][i]
                continue
            T[i] = jumps / z
            T[i, i] = -out / z
        mats.append(T)
    return ContinuousCutpointModel(alpha, mats, cutpoints)


def m_step_erlang(
    stats: SufficientStats, previous: ContinuousCutpointModel
) -> ContinuousCutpointModel:
    """Tied-rate MLE: events in the interval over exposure in the interval."""
    m, K = stats.Z.shape
    rates = []
    for h in range(K):
        exposure = stats.Z[:, h].sum()
        jumps = stats.N[:, :, h].sum() - np.trace(stats.N[:, :, h])
        events = jumps + stats.N_abs[:, h].sum()
        if exposure < TINY or not events > 0:
            rates.append(-previous.matrices[h][0, 0])
        else:
            rates.append(events / exposure)
    return ContinuousCutpointModel.erlang(m, rates, previous.cutpoints)


# ---------------------------------------------------------------------------
# drivers
# ---------------------------------------------------------------------------


def initial_model(data, config: FitConfig) -> ContinuousCutpointModel:
    """Deterministic starting point (scale-matched to the sample mean).

    General structure: uniform ``alpha``; every row leaves at total rate
    ``m / mean(y)``, a random 5-15% of it towards absorption and the rest
    spread over the other phases with uniform random weights.
    """
    y = _check_data(data)
    m = config.phases
    cuts = np.asarray(config.cutpoints, dtype=float)
    ybar = y.mean()
    if config.structure == "erlang":
        j = interval_indices(y, cuts)
        rates = []
        for h in range(len(cuts) + 1):
            inside = y[j == h]
            rates.append(m / inside.mean() if inside.size else m / ybar)
        return ContinuousCutpointModel.erlang(m, rates, cuts)
    rng = substream(config.seed, 0)
    outflow = m / ybar
    mats = []
    for _ in range(len(cuts) + 1):
        if m == 1:
            mats.append(np.array([[-outflow]]))
            continue
        # exit shares scatter around 10%: with one common share every phase
        # would have the same absorption rate, which EM cannot move away from
        share = rng.uniform(0.05, 0.15, m)
        off = rng.uniform(0.0, 1.0, (m, m))
        np.fill_diagonal(off, 0.0)
        off *= ((1.0 - share) * outflow / off.sum(axis=1))[:, None]
        T = off
        np.fill_diagonal(T, -outflow)
        mats.append(T)
    return ContinuousCutpointModel(np.full(m, 1.0 / m), mats, cuts)


def _distance(a: ContinuousCutpointModel, b: ContinuousCutpointModel) -> float:
    d = np.abs(a.alpha - b.alpha).sum()
    for A, B in zip(a.matrices, b.matrices):
        d += np.abs(A - B).sum()
    return float(d)


def _run(y, config, start, update, structure):
    model = start
    trace: list[float] = []
    converged = False
    iterations = 0
    q = len(y)
    for iterations in range(1, config.max_iterations + 1):
        try:
            stats, ll = _e_step(y, model, config.quadrature_nodes)
        except FitError as exc:
            raise FitError(str(exc), trace=trace, observation=exc.observation) from None
        trace.append(ll)
        new = update(stats, q, model)
        delta = _distance(new, model)
        model = new
        if delta < config.epsilon:
            converged = True
            break
    final = log_likelihood(y, model)
    if not np.isfinite(final):
        raise FitError("fitted model assigns zero density to some observation", trace=trace)
    trace.append(final)
    log.debug("EM %s: %d iterations, logL %.6f", structure, iterations, final)
    return FitResult(model, final, iterations, converged, trace, structure, data_hash(y))


def fit(data, config: FitConfig) -> FitResult:
    """EM fit with fixed cut-points; dispatches on ``config.structure``."""
    if config.structure == "erlang":
        return fit_erlang(data, config)
    y = _check_data(data)
    start = config.seed_model or initial_model(y, config)
    return _run(y, config, start, lambda s, q, prev: m_step(s, q, prev), "general")


def fit_erlang(data, config: FitConfig) -> FitResult:
    """EM fit with ``alpha = (1, 0, ..., 0)`` and one Erlang rate per interval."""
    y = _check_data(data)
    if config.structure != "erlang":
        config = replace(config, structure="erlang")
    start = config.seed_model or initial_model(y, config)
    return _run(y, config, start, lambda s, q, prev: m_step_erlang(s, prev), "erlang")


# ---------------------------------------------------------------------------
# grid search over cut-points
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GridRow:
    cutpoints: tuple[float, ...]
    log_likelihood: float
    iterations: int
    converged: bool


@dataclass
class GridSearchResult:
    best: FitResult
    table: list[GridRow]


def admissible_combinations(grids: Sequence[Sequence[float]]) -> list[tuple[float, ...]]:
    combos = []
    for g in grids:
        if np.any(np.diff(np.asarray(g, dtype=float)) <= 0):
            raise DomainError("each candidate grid must be strictly increasing")
    for combo in itertools.product(*[[float(a) for a in g] for g in grids]):
        if all(a < b for a, b in zip(combo, combo[1:])) and (not combo or combo[0] > 0):
            combos.append(combo)
    return combos


def grid_search_cutpoints(data, grids: Sequence[Sequence[float]], config: FitConfig) -> GridSearchResult:
    """Fit every admissible cut-point combination; best by log-likelihood.

    Ties go to the lexicographically smallest cut-point tuple.  The table is
    sorted by log-likelihood, best first.
    """
    y = _check_data(data)
    combos = admissible_combinations(grids)
    if not combos:
        raise DomainError("no admissible cut-point combination")
    results = {}
    for combo in combos:
        cfg = replace(config, cutpoints=combo, seed_model=None)
        results[combo] = fit(y, cfg)
    order = sorted(combos, key=lambda c: (-results[c].log_likelihood, c))
    table = [
        GridRow(c, results[c].log_likelihood, results[c].iterations, results[c].converged)
        for c in order
    ]
    return GridSearchResult(results[order[0]], table)
