"""Model types, structural validation and the matrix-exponential kernel.

Both families share the same parameterization: an initial probability row
vector ``alpha`` of length ``m``, ``n + 1`` square matrices ``T_1..T_{n+1}``
and ``n`` strictly increasing cut-points.  Interval ``h`` (1-based) is
``(a_{h-1}, a_h]`` with ``a_0 = 0`` and ``a_{n+1} = inf``; inside it the
underlying absorbing chain evolves with ``T_h``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DomainError, NumericError, StructureError

__all__ = [
    "Tolerances",
    "TOL",
    "ValidationReport",
    "PrefixProductCache",
    "ContinuousCutpointModel",
    "DiscreteCutpointModel",
    "validate",
    "exit_vector_continuous",
    "exit_vector_discrete",
    "interval_index",
    "interval_indices",
    "matrix_exponential",
    "expm",
    "erlang_matrix",
    "model_to_dict",
    "model_from_dict",
    "dumps",
    "save_model",
    "load_model",
]


@dataclass(frozen=True)
class Tolerances:
    structural: float = 1e-12
    numerical: float = 1e-10
    singular_residual: float = 1e-8


TOL = Tolerances()


# ---------------------------------------------------------------------------
# matrix exponential
# ---------------------------------------------------------------------------

_PADE13 = np.array(
    [
        64764752532480000.0,
        32382376266240000.0,
        7771770303897600.0,
        1187353796428800.0,
        129060195264000.0,
        10559470521600.0,
        670442572800.0,
        33522128640.0,
        1323241920.0,
        40840800.0,
        960960.0,
        16380.0,
        182.0,
        1.0,
    ]
)
_THETA13 = 5.371920351148152


def expm(A) -> np.ndarray:
    """Exponential of a square matrix or of a stack of them (``(..., m, m)``).

    Scaling and squaring around the [13/13] Pade approximant; every matrix in
    a stack gets its own scaling exponent from its 1-norm.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim < 2 or A.shape[-1] != A.shape[-2]:
        raise DomainError(f"expected square matrices, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise DomainError("matrix exponential of a non-finite matrix")
    shape = A.shape
    m = shape[-1]
    A = A.reshape(-1, m, m)
    norms = np.abs(A).sum(axis=1).max(axis=1)
    s = np.zeros(len(A), dtype=int)
    big = norms > _THETA13
    s[big] = np.ceil(np.log2(norms[big] / _THETA13)).astype(int)
    A = A / np.exp2(s)[:, None, None]

    b = _PADE13
    eye = np.eye(m)
    A2 = A @ A
    A4 = A2 @ A2
    A6 = A4 @ A2
    U = A @ (A6 @ (b[13] * A6 + b[11] * A4 + b[9] * A2)
             + b[7] * A6 + b[5] * A4 + b[3] * A2 + b[1] * eye)
    V = (A6 @ (b[12] * A6 + b[10] * A4 + b[8] * A2)
         + b[6] * A6 + b[4] * A4 + b[2] * A2 + b[0] * eye)
    X = np.linalg.solve(V - U, V + U)
    for r in range(int(s.max(initial=0))):
        idx = np.nonzero(s > r)[0]
        X[idx] = X[idx] @ X[idx]
    return X.reshape(shape)


def matrix_exponential(M, t=1.0) -> np.ndarray:
    """``exp(M t)``.  ``t`` may be an array, giving a stack ``t.shape + (m, m)``."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DomainError(f"expected a square matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise DomainError("matrix exponential of a non-finite matrix")
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0) or not np.all(np.isfinite(t_arr)):
        raise DomainError("t must be finite and non-negative")
    if t_arr.ndim == 0:
        if t_arr == 0.0:
            return np.eye(M.shape[0])
        return expm(M * float(t_arr))
    out = expm(M[None, :, :] * t_arr.reshape(-1, 1, 1))
    out[t_arr.reshape(-1) == 0.0] = np.eye(M.shape[0])
    return out.reshape(t_arr.shape + M.shape)


# ---------------------------------------------------------------------------
# elementary helpers
# ---------------------------------------------------------------------------


def exit_vector_continuous(T) -> np.ndarray:
    """Absorption rates ``-T e``."""
    T = np.asarray(T, dtype=float)
    problems = _continuous_matrix_problems(T, "T")
    if problems:
        raise StructureError("; ".join(problems))
    return -T.sum(axis=1)


def exit_vector_discrete(T) -> np.ndarray:
    """Absorption probabilities ``(I - T) e``."""
    T = np.asarray(T, dtype=float)
    problems = _discrete_matrix_problems(T, "T")
    if problems:
        raise StructureError("; ".join(problems))
    return 1.0 - T.sum(axis=1)


def interval_indices(x, cutpoints) -> np.ndarray:
    """Zero-based interval index ``j`` with ``a_j < x <= a_{j+1}`` (vectorized)."""
    return np.searchsorted(np.asarray(cutpoints, dtype=float), x, side="left")


def interval_index(x, cutpoints) -> int:
    """One-based ``h`` with ``a_{h-1} < x <= a_h`` (right-closed intervals)."""
    if not x > 0:
        raise DomainError(f"interval_index needs x > 0, got {x!r}")
    return int(interval_indices(x, cutpoints)) + 1


def erlang_matrix(m: int, rate: float) -> np.ndarray:
    """Bidiagonal Erlang block: ``-rate`` on the diagonal, ``rate`` above it."""
    return rate * (np.eye(m, k=1) - np.eye(m))


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok

    def __str__(self) -> str:
        return "valid" if self.ok else "; ".join(self.violations)


def _basic_problems(T, name):
    if T.ndim != 2 or T.shape[0] != T.shape[1]:
        return [f"{name} is not square (shape {T.shape})"]
    if not np.all(np.isfinite(T)):
        return [f"{name} has non-finite entries"]
    return []


def _nonsingular(M) -> bool:
    e = np.ones(M.shape[0])
    try:
        x = np.linalg.solve(M, e)
    except np.linalg.LinAlgError:
        return False
    if not np.all(np.isfinite(x)):
        return False
    resid = np.abs(M @ x - e).max()
    return resid <= TOL.singular_residual * max(np.abs(M).sum(axis=1).max(), 1.0)


def _continuous_matrix_problems(T, name):
    problems = _basic_problems(T, name)
    if problems:
        return problems
    tol = TOL.structural
    for i in np.nonzero(np.diag(T) >= 0)[0]:
        problems.append(f"{name} diagonal entry at row {i} is not strictly negative")
    off = T - np.diag(np.diag(T))
    for i, j in zip(*np.nonzero(off < 0)):
        problems.append(f"{name} off-diagonal entry ({i}, {j}) is negative")
    for i in np.nonzero(T.sum(axis=1) > tol)[0]:
        problems.append(f"{name} row sum > 0 at row {i}")
    if not problems and not _nonsingular(T):
        problems.append(f"{name} is singular")
    return problems


def _discrete_matrix_problems(T, name):
    problems = _basic_problems(T, name)
    if problems:
        return problems
    tol = TOL.structural
    for i, j in zip(*np.nonzero((T < 0) | (T > 1))):
        problems.append(f"{name} entry ({i}, {j}) outside [0, 1]")
    for i in np.nonzero(T.sum(axis=1) > 1 + tol)[0]:
        problems.append(f"{name} row sum > 1 at row {i}")
    if not problems and not _nonsingular(np.eye(T.shape[0]) - T):
        problems.append(f"I - {name} is singular")
    return problems


def _alpha_problems(alpha, m):
    problems = []
    if alpha.ndim != 1 or len(alpha) != m:
        return [f"alpha has shape {alpha.shape}, expected ({m},)"]
    if not np.all(np.isfinite(alpha)):
        return ["alpha has non-finite entries"]
    for i in np.nonzero(alpha < 0)[0]:
        problems.append(f"alpha entry {i} is negative")
    if abs(alpha.sum() - 1.0) > TOL.structural:
        problems.append(f"alpha sums to {alpha.sum()!r}, not 1")
    return problems


def _cutpoint_problems(cutpoints, n_matrices, integer):
    problems = []
    if len(cutpoints) != n_matrices - 1:
        problems.append(
            f"{n_matrices} matrices need {n_matrices - 1} cut-points, got {len(cutpoints)}"
        )
    if len(cutpoints) and not np.all(np.isfinite(cutpoints)):
        return problems + ["cut-points must be finite"]
    if len(cutpoints) and cutpoints[0] <= 0:
        problems.append("first cut-point must be positive")
    if np.any(np.diff(cutpoints) <= 0):
        problems.append("cut-points not strictly increasing")
    if integer and np.any(cutpoints != np.round(cutpoints)):
        problems.append("discrete cut-points must be integers")
    return problems


def validate(model) -> ValidationReport:
    """Collect every violated invariant of a continuous or discrete model."""
    discrete = isinstance(model, DiscreteCutpointModel)
    alpha, mats, cuts = model.alpha, model.matrices, model.cutpoints
    problems: list[str] = []
    if not mats:
        return ValidationReport(("at least one matrix is required",))
    orders = {M.shape for M in mats}
    if len(orders) != 1:
        problems.append(f"matrices have differing shapes {sorted(orders)}")
        return ValidationReport(tuple(problems))
    check = _discrete_matrix_problems if discrete else _continuous_matrix_problems
    for h, M in enumerate(mats, start=1):
        problems.extend(check(M, f"T_{h}"))
    m = mats[0].shape[0] if mats[0].ndim == 2 else 0
    problems.extend(_alpha_problems(alpha, m))
    problems.extend(_cutpoint_problems(cuts, len(mats), discrete))
    return ValidationReport(tuple(problems))


# ---------------------------------------------------------------------------
# model types
# ---------------------------------------------------------------------------


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class PrefixProductCache:
    """Per-interval exponentials and their ordered left-to-right products.

    ``blocks[j]`` is ``exp(T_{j+1} (a_{j+1} - a_j))`` for the ``n`` finite
    intervals and ``prefix[j]`` is ``P_{j+1}``; ``prefix[0]`` is the identity.
    For the discrete family ``blocks`` hold integer matrix powers instead.
    """

    blocks: tuple[np.ndarray, ...]
    prefix: tuple[np.ndarray, ...]

    @classmethod
    def from_blocks(cls, m, blocks):
        prefix = [np.eye(m)]
        for B in blocks:
            prefix.append(prefix[-1] @ B)
        for P in prefix:
            P.flags.writeable = False
        return cls(tuple(blocks), tuple(prefix))


@dataclass(frozen=True)
class _CutpointModel:
    alpha: np.ndarray
    matrices: tuple[np.ndarray, ...]
    cutpoints: np.ndarray
    check: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "alpha", _frozen(self.alpha))
        object.__setattr__(
            self, "matrices", tuple(_frozen(M) for M in self.matrices)
        )
        object.__setattr__(self, "cutpoints", _frozen(np.atleast_1d(
            np.asarray(self.cutpoints, dtype=float))))
        if self.check:
            report = validate(self)
            if not report.ok:
                raise StructureError(f"invalid {type(self).__name__}: {report}")

    @property
    def m(self) -> int:
        return self.matrices[0].shape[0]

    @property
    def n(self) -> int:
        return len(self.cutpoints)

    @property
    def widths(self) -> np.ndarray:
        """Lengths of the ``n`` finite intervals."""
        return np.diff(np.concatenate([[0.0], self.cutpoints]))

    @property
    def lower(self) -> np.ndarray:
        """Left end ``a_{h-1}`` of each of the ``n + 1`` intervals."""
        return np.concatenate([[0.0], self.cutpoints])

    def __eq__(self, other):
        if type(self) is not type(other):
            return NotImplemented
        return (
            np.array_equal(self.alpha, other.alpha)
            and len(self.matrices) == len(other.matrices)
            and all(np.array_equal(A, B) for A, B in zip(self.matrices, other.matrices))
            and np.array_equal(self.cutpoints, other.cutpoints)
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class ContinuousCutpointModel(_CutpointModel):
    """Continuous n-cut-point phase-type law ``(alpha, T_1..T_{n+1}, a_1..a_n)``."""

    def __post_init__(self):
        super().__post_init__()
        exits = tuple(_frozen(-M.sum(axis=1)) for M in self.matrices)
        object.__setattr__(self, "exits", exits)
        blocks = [
            matrix_exponential(M, w) for M, w in zip(self.matrices, self.widths)
        ]
        object.__setattr__(self, "cache", PrefixProductCache.from_blocks(self.m, blocks))

    @classmethod
    def erlang(cls, m: int, rates: Sequence[float], cutpoints: Sequence[float] = ()):
        alpha = np.zeros(m)
        alpha[0] = 1.0
        return cls(alpha, [erlang_matrix(m, r) for r in rates], cutpoints)

    @classmethod
    def exponential(cls, rate: float):
        return cls([1.0], [[[-rate]]], [])

    def with_matrices(self, matrices, alpha=None):
        return type(self)(self.alpha if alpha is None else alpha, matrices, self.cutpoints)


@dataclass(frozen=True, eq=False)
class DiscreteCutpointModel(_CutpointModel):
    """Discrete n-cut-point phase-type law with sub-stochastic ``T_h``."""

    def __post_init__(self):
        super().__post_init__()
        exits = tuple(_frozen(1.0 - M.sum(axis=1)) for M in self.matrices)
        object.__setattr__(self, "exits", exits)
        gaps = self.widths
        if self.check or np.all(gaps == np.round(gaps)):
            blocks = [
                np.linalg.matrix_power(M, int(g)) for M, g in zip(self.matrices, gaps)
            ]
            object.__setattr__(
                self, "cache", PrefixProductCache.from_blocks(self.m, blocks)
            )

    @property
    def int_cutpoints(self) -> list[int]:
        return [int(a) for a in self.cutpoints]

    @classmethod
    def geometric(cls, p_continue: float):
        return cls([1.0], [[[p_continue]]], [])


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def _fmt_float(x: float) -> str:
    if np.isnan(x):
        return "NaN"
    if np.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    return format(float(x), ".17g")


def dumps(obj, indent: int = 2, _level: int = 0) -> str:
    """JSON text with every float written to 17 significant digits."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [
            f"{pad}{json.dumps(str(k))}: {dumps(v, indent, _level + 1)}"
            for k, v in obj.items()
        ]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(not isinstance(v, (list, tuple, dict, np.ndarray)) for v in obj):
            return "[" + ", ".join(dumps(v, indent, _level + 1) for v in obj) + "]"
        items = [pad + dumps(v, indent, _level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt_float(obj)
    return json.dumps(obj)


def model_to_dict(model) -> dict:
    discrete = isinstance(model, DiscreteCutpointModel)
    cuts = model.int_cutpoints if discrete else [float(a) for a in model.cutpoints]
    return {
        "kind": "discrete" if discrete else "continuous",
        "alpha": [float(a) for a in model.alpha],
        "matrices": [M.tolist() for M in model.matrices],
        "cutpoints": cuts,
    }


def model_from_dict(d: dict):
    try:
        kind = d["kind"]
        args = (d["alpha"], d["matrices"], d.get("cutpoints", []))
    except (KeyError, TypeError) as exc:
        raise StructureError(f"model document is missing field {exc}") from None
    if kind == "continuous":
        return ContinuousCutpointModel(*args)
    if kind == "discrete":
        return DiscreteCutpointModel(*args)
    raise StructureError(f"unknown model kind {kind!r}")


def save_model(model, path) -> None:
    Path(path).write_text(dumps(model_to_dict(model)) + "\n")


def load_model(path):
    return model_from_dict(json.loads(Path(path).read_text()))


def _require_valid(model):
    report = validate(model)
    if not report.ok:
        raise StructureError(str(report))


def _solve(M, B, what="matrix"):
    try:
        X = np.linalg.solve(M, B)
    except np.linalg.LinAlgError:
        raise NumericError(f"singular {what}") from None
    if not np.all(np.isfinite(X)):
        raise NumericError(f"singular {what}")
    return X
