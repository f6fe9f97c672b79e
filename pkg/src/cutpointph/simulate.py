"""Exact sampling from the piecewise-homogeneous absorbing chains, and the
benchmark dataset generators.

Random streams
--------------
All randomness comes from PCG64 generators keyed by
``SeedSequence(seed, spawn_key=key)``.  Bulk samplers split the requested
indices into fixed chunks of ``CHUNK`` draws and give chunk ``c`` the stream
``key = (c,)``, so output depends only on ``(seed, count)`` and never on how
chunks are scheduled.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DomainError, NumericError
from .model import ContinuousCutpointModel, DiscreteCutpointModel

__all__ = [
    "CHUNK",
    "MAX_EVENTS",
    "MIXTURE_CONVENTION",
    "SamplePath",
    "substream",
    "derive_seed",
    "sample_path_continuous",
    "sample_continuous",
    "sample_discrete",
    "generate_mixture_dataset",
    "generate_frechet_dataset",
    "frechet_inverse_cdf",
    "write_values_csv",
    "read_values_csv",
]

CHUNK = 1024
MAX_EVENTS = 10**7

MIXTURE_CONVENTION = (
    "u<=0.33: Gamma(shape=20, scale=0.1); 0.33<u<=0.66: Weibull(shape=4, scale=0.8); "
    "else: LogNormal(meanlog=1.2, sdlog=0.08)"
)


def substream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for ``(seed, key)``."""
    if seed < 0 or seed >= 2**64:
        raise DomainError("seed must be an unsigned 64-bit integer")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))


def derive_seed(seed: int, *key: int) -> int:
    """A 64-bit seed for sub-task ``key`` of a job seeded with ``seed``."""
    ss = np.random.SeedSequence(seed, spawn_key=key)
    return int(ss.generate_state(1, np.uint64)[0])


def _open_uniform(rng, size=None):
    # strictly inside (0, 1) so that -log(u) is finite and positive
    k = rng.integers(0, 2**53, size=size)
    return (k + 0.5) / 2.0**53


@dataclass(frozen=True)
class SamplePath:
    """One realization: visited phases (0-based) and time spent in each."""

    states: tuple[int, ...]
    sojourns: tuple[float, ...]

    @property
    def total(self) -> float:
        return float(np.sum(self.sojourns))

    def __len__(self):
        return len(self.states)


def _jump_tables(model):
    """Holding rates ``(n+1, m)`` and cumulative jump laws ``(n+1, m, m+1)``."""
    rates = np.stack([-np.diag(T) for T in model.matrices])
    tables = []
    for T, t0, r in zip(model.matrices, model.exits, rates):
        P = T.copy()
        np.fill_diagonal(P, 0.0)
        P = np.column_stack([P, np.maximum(t0, 0.0)]) / r[:, None]
        tables.append(np.cumsum(P, axis=1))
    cum = np.stack(tables)
    cum[..., -1] = np.inf
    return rates, cum


def sample_path_continuous(model: ContinuousCutpointModel, seed: int) -> SamplePath:
    """Simulate one path until absorption.

    A holding time that would cross the next cut-point is cut there; by
    memorylessness the phase then continues under the next generator, and the
    two pieces are reported as a single sojourn.
    """
    rng = substream(seed)
    rates, cum = _jump_tables(model)
    upper = np.append(model.cutpoints, np.inf)
    state = int(np.searchsorted(np.cumsum(model.alpha), _open_uniform(rng), side="right"))
    state = min(state, model.m - 1)
    t, h, entered = 0.0, 0, 0.0
    states, sojourns = [], []
    for _ in range(MAX_EVENTS):
        hold = -np.log(_open_uniform(rng)) / rates[h, state]
        if t + hold > upper[h]:
            t = float(upper[h])
            h += 1
            continue
        t += hold
        nxt = int(np.argmax(cum[h, state] > rng.random()))
        states.append(state)
        sojourns.append(t - entered)
        entered = t
        if nxt == model.m:
            return SamplePath(tuple(states), tuple(sojourns))
        state = nxt
    raise NumericError("no absorption within the event cap")


def _continuous_chunk(model, rng, count, rates, cum, upper):
    m = model.m
    alpha_cum = np.cumsum(model.alpha)
    state = np.minimum(np.searchsorted(alpha_cum, _open_uniform(rng, count), side="right"), m - 1)
    t = np.zeros(count)
    h = np.zeros(count, dtype=np.int64)
    out = np.empty(count)
    alive = np.arange(count)
    events = 0
    while alive.size:
        events += alive.size
        if events > MAX_EVENTS:
            raise NumericError("no absorption within the event cap")
        s, hh = state[alive], h[alive]
        hold = -np.log(_open_uniform(rng, alive.size)) / rates[hh, s]
        u = rng.random(alive.size)
        cross = t[alive] + hold > upper[hh]
        ci = alive[cross]
        t[ci] = upper[hh[cross]]
        h[ci] += 1
        jump = ~cross
        ji = alive[jump]
        t[ji] += hold[jump]
        nxt = np.argmax(cum[hh[jump], s[jump]] > u[jump, None], axis=1)
        done = nxt == m
        out[ji[done]] = t[ji[done]]
        state[ji[~done]] = nxt[~done]
        alive = np.concatenate([ci, ji[~done]])
        alive.sort()
    return out


def sample_continuous(model: ContinuousCutpointModel, seed: int, count: int) -> np.ndarray:
    """``count`` independent absorption times."""
    if count < 0:
        raise DomainError("count must be non-negative")
    rates, cum = _jump_tables(model)
    upper = np.append(model.cutpoints, np.inf)
    parts = []
    for c, start in enumerate(range(0, count, CHUNK)):
        size = min(CHUNK, count - start)
        parts.append(_continuous_chunk(model, substream(seed, c), size, rates, cum, upper))
    return np.concatenate(parts) if parts else np.empty(0)


def _discrete_chunk(model, rng, count):
    m = model.m
    cuts = model.cutpoints
    tables = []
    for T, t0 in zip(model.matrices, model.exits):
        c = np.cumsum(np.column_stack([T, np.maximum(t0, 0.0)]), axis=1)
        c[:, -1] = np.inf
        tables.append(c)
    cum = np.stack(tables)
    state = np.minimum(
        np.searchsorted(np.cumsum(model.alpha), _open_uniform(rng, count), side="right"), m - 1
    )
    out = np.zeros(count, dtype=np.int64)
    alive = np.arange(count)
    k = 0
    while alive.size:
        k += 1
        if k > MAX_EVENTS:
            raise NumericError("no absorption within the step cap")
        h = int(np.searchsorted(cuts, k, side="left"))
        u = rng.random(alive.size)
        nxt = np.argmax(cum[h, state[alive]] > u[:, None], axis=1)
        done = nxt == m
        out[alive[done]] = k
        state[alive[~done]] = nxt[~done]
        alive = alive[~done]
    return out


def sample_discrete(model: DiscreteCutpointModel, seed: int, count: int) -> np.ndarray:
    """``count`` absorption steps; step ``k`` moves with ``T_h`` for the ``h`` containing ``k``."""
    if count < 0:
        raise DomainError("count must be non-negative")
    parts = [
        _discrete_chunk(model, substream(seed, c), min(CHUNK, count - start))
        for c, start in enumerate(range(0, count, CHUNK))
    ]
    return np.concatenate(parts) if parts else np.empty(0, dtype=np.int64)


# ---------------------------------------------------------------------------
# benchmark datasets
# ---------------------------------------------------------------------------


def generate_mixture_dataset(seed: int, size: int = 200) -> np.ndarray:
    """Tri-modal Gamma / Weibull / log-normal mixture (see ``MIXTURE_CONVENTION``)."""
    if size < 1:
        raise DomainError("size must be >= 1")
    rng = substream(seed)
    u = rng.random(size)
    gam = rng.gamma(shape=20.0, scale=0.1, size=size)
    wei = 0.8 * rng.weibull(4.0, size=size)
    lgn = rng.lognormal(mean=1.2, sigma=0.08, size=size)
    return np.where(u <= 0.33, gam, np.where(u <= 0.66, wei, lgn))


def frechet_inverse_cdf(u, loc=0.0, scale=0.5, shape=2.0):
    return loc + scale * (-np.log(u)) ** (-1.0 / shape)


def generate_frechet_dataset(
    seed: int, size: int = 200, loc: float = 0.0, scale: float = 0.5, shape: float = 2.0
) -> np.ndarray:
    if size < 1:
        raise DomainError("size must be >= 1")
    return frechet_inverse_cdf(_open_uniform(substream(seed), size), loc, scale, shape)


# ---------------------------------------------------------------------------
# single-column CSV
# ---------------------------------------------------------------------------


def write_values_csv(path, values, comments=(), header="value") -> None:
    """Write ``# comment`` lines, the header, then one 17-digit value per row."""
    lines = [f"# {c}" for c in comments]
    lines.append(header)
    for v in np.asarray(values).reshape(-1):
        if isinstance(v, (np.integer, int)):
            lines.append(str(int(v)))
        else:
            lines.append(format(float(v), ".17g"))
    Path(path).write_text("\n".join(lines) + "\n")


def read_values_csv(path) -> np.ndarray:
    """Read a one-column CSV with a header line; ``#`` lines are skipped."""
    path = Path(path)
    if not path.exists():
        raise DomainError(f"input file not found: {path}")
    values = []
    header_seen = False
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if not header_seen:
            if "," in line:
                raise DomainError(f"{path}:{lineno}: expected a single column header")
            header_seen = True
            continue
        try:
            if "," in line:
                raise ValueError
            values.append(float(line))
        except ValueError:
            raise DomainError(f"{path}:{lineno}: not a number: {raw!r}") from None
    if not header_seen:
        raise DomainError(f"{path}: missing header line")
    return np.asarray(values, dtype=float)
