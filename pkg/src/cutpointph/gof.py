"""Goodness of fit: K-S and A-D statistics, parametric-bootstrap p-values and
comparison tables.

Parameters are estimated from the data, so the classical null tables do not
apply; p-values come from refitting on samples drawn from the fitted model.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from . import continuous
from .em import FitConfig, FitResult, data_hash, fit
from .errors import DomainError, FitError, NumericError
from .model import ContinuousCutpointModel
from .simulate import derive_seed, sample_continuous

__all__ = [
    "AD_CLAMP",
    "GofReport",
    "BootstrapResult",
    "ks_statistic",
    "ad_statistic",
    "pvalue_from_replicates",
    "make_refitter",
    "bootstrap",
    "bootstrap_pvalue",
    "parameter_count",
    "gof_report",
    "compare_models",
    "write_comparison_csv",
]

log = logging.getLogger(__name__)

AD_CLAMP = 1e-15
MIN_REPLICATES = 99
MAX_FAILURE_RATE = 0.05


def _cdf_values(data, cdf) -> np.ndarray:
    y = np.sort(np.asarray(data, dtype=float).reshape(-1), kind="stable")
    if y.size == 0:
        raise DomainError("no observations")
    if isinstance(cdf, ContinuousCutpointModel):
        F = np.asarray(continuous.cdf(cdf, y), dtype=float)
    else:
        F = np.asarray(cdf(y), dtype=float).reshape(-1)
    if F.shape != y.shape or not np.all(np.isfinite(F)):
        raise NumericError("cdf evaluator returned non-finite values")
    return F


def ks_statistic(data, cdf) -> float:
    """Two-sided one-sample Kolmogorov-Smirnov distance.

    ``cdf`` is a fitted model or any vectorized callable.
    """
    F = _cdf_values(data, cdf)
    q = F.size
    i = np.arange(1, q + 1)
    return float(max(np.max(i / q - F), np.max(F - (i - 1) / q), 0.0))


def ad_statistic(data, cdf) -> float:
    """Anderson-Darling ``A^2`` with ``F`` clamped to ``[1e-15, 1 - 1e-15]``."""
    F = np.clip(_cdf_values(data, cdf), AD_CLAMP, 1.0 - AD_CLAMP)
    q = F.size
    i = np.arange(1, q + 1)
    s = np.sum((2 * i - 1) * (np.log(F) + np.log1p(-F[::-1])))
    return float(max(-q - s / q, 0.0))


def pvalue_from_replicates(observed: float, replicates) -> float:
    """``(1 + #{r >= observed}) / (B + 1)``."""
    r = np.asarray(replicates, dtype=float)
    return float((1 + np.count_nonzero(r >= observed)) / (r.size + 1))


def make_refitter(config: FitConfig, start: Optional[ContinuousCutpointModel] = None):
    """Refit procedure for bootstrap samples: same configuration, warm-started at ``start``."""
    cfg = config if start is None else replace(config, seed_model=start)
    return lambda sample: fit(sample, cfg)


@dataclass(frozen=True)
class BootstrapResult:
    ks_statistic: float
    ad_statistic: float
    ks_pvalue: float
    ad_pvalue: float
    ks_replicates: np.ndarray
    ad_replicates: np.ndarray
    failures: int

    @property
    def replicates(self) -> int:
        return int(self.ks_replicates.size)


def bootstrap(
    data,
    model: ContinuousCutpointModel,
    refit: Callable[[np.ndarray], FitResult],
    replicates: int = 999,
    seed: int = 0,
) -> BootstrapResult:
    """Parametric bootstrap of both statistics.

    Replicate ``b`` draws its sample with seed ``derive_seed(seed, b)``.
    Replicates whose refit fails are dropped; more than 5% failures is an error.
    """
    if replicates < MIN_REPLICATES:
        raise DomainError(f"bootstrap needs at least {MIN_REPLICATES} replicates")
    y = np.asarray(data, dtype=float).reshape(-1)
    q = y.size
    ks_obs, ad_obs = ks_statistic(y, model), ad_statistic(y, model)
    ks_rep, ad_rep = [], []
    failures = 0
    for b in range(replicates):
        sample = sample_continuous(model, derive_seed(seed, b), q)
        try:
            refitted = refit(sample).model
        except (FitError, NumericError) as exc:
            failures += 1
            log.warning("bootstrap replicate %d dropped: %s", b, exc)
            continue
        ks_rep.append(ks_statistic(sample, refitted))
        ad_rep.append(ad_statistic(sample, refitted))
    if failures > MAX_FAILURE_RATE * replicates:
        raise NumericError(f"{failures} of {replicates} bootstrap refits failed")
    ks_rep, ad_rep = np.asarray(ks_rep), np.asarray(ad_rep)
    return BootstrapResult(
        ks_obs,
        ad_obs,
        pvalue_from_replicates(ks_obs, ks_rep),
        pvalue_from_replicates(ad_obs, ad_rep),
        ks_rep,
        ad_rep,
        failures,
    )


def bootstrap_pvalue(data, model, refit, kind: str = "ks", replicates: int = 999, seed: int = 0) -> float:
    if kind not in ("ks", "ad"):
        raise DomainError(f"unknown statistic {kind!r}")
    res = bootstrap(data, model, refit, replicates, seed)
    return res.ks_pvalue if kind == "ks" else res.ad_pvalue


def parameter_count(structure: str, m: int, n: int) -> int:
    """Free parameters, cut-points excluded.

    General: ``m`` initial probabilities plus, per interval, ``m^2 - m``
    transition rates and ``m`` exit rates.  Erlang: one rate per interval.
    """
    if structure == "erlang":
        return n + 1
    if structure == "general":
        return m + (n + 1) * (m * m + m)
    raise DomainError(f"unknown structure {structure!r}")


@dataclass(frozen=True)
class GofReport:
    label: str
    parameter_count: int
    loglik: float
    ks_statistic: float
    ks_pvalue: float
    ad_statistic: float
    ad_pvalue: float
    bootstrap_replicates: int

    def row(self) -> list[str]:
        g = lambda v: format(float(v), ".17g")
        return [
            self.label, str(self.parameter_count), g(self.loglik),
            g(self.ks_statistic), g(self.ks_pvalue), g(self.ad_statistic), g(self.ad_pvalue),
        ]


def gof_report(
    data, result: FitResult, config: FitConfig, replicates: int = 999, seed: int = 0, label: str = ""
) -> GofReport:
    """Statistics and bootstrap p-values for one fitted result."""
    y = np.asarray(data, dtype=float).reshape(-1)
    if result.data_hash and result.data_hash != data_hash(y):
        raise DomainError("fit result was produced on different data")
    boot = bootstrap(y, result.model, make_refitter(config, result.model), replicates, seed)
    return GofReport(
        label or f"{result.structure} m={result.model.m} n={result.model.n}",
        parameter_count(result.structure, result.model.m, result.model.n),
        result.log_likelihood,
        boot.ks_statistic,
        boot.ks_pvalue,
        boot.ad_statistic,
        boot.ad_pvalue,
        boot.replicates,
    )


def compare_models(
    data,
    entries: Sequence[tuple[str, FitResult, FitConfig]],
    replicates: int = 999,
    seed: int = 0,
) -> list[GofReport]:
    """One report per ``(label, result, config)``, best log-likelihood first."""
    y = np.asarray(data, dtype=float).reshape(-1)
    h = data_hash(y)
    for label, res, _ in entries:
        if res.data_hash != h:
            raise DomainError(f"{label!r} was fitted on different data")
    reports = [
        gof_report(y, res, cfg, replicates, derive_seed(seed, k), label)
        for k, (label, res, cfg) in enumerate(entries)
    ]
    return sorted(reports, key=lambda r: -r.loglik)


COMPARISON_HEADER = "label,params,loglik,ks_stat,ks_p,ad_stat,ad_p"


def write_comparison_csv(path, reports: Sequence[GofReport], comments=()) -> None:
    lines = [f"# {c}" for c in comments] + [COMPARISON_HEADER]
    for r in reports:
        if "," in r.label or "\n" in r.label:
            raise DomainError(f"label {r.label!r} may not contain commas or newlines")
        lines.append(",".join(r.row()))
    Path(path).write_text("\n".join(lines) + "\n")
