"""Batch command-line front end.

    cutpointph fit      --input data.csv --phases 4 --cutpoints 0.43,0.98,3.15 --out fit.json
    cutpointph simulate --generator mixture-6.1 --size 200 --seed 1 --out data.csv
    cutpointph eval     --model fit.json --out curves.csv
    cutpointph gof      --input data.csv --model fit.json --replicates 199 --out report.json
    cutpointph grid     --input data.csv --phases 5 --grid 0.6,0.7 --grid 1.2,1.35 --out best.json

Settings come from ``--config file.json`` first; explicit flags override.
Exit codes: 0 success, 1 input or usage error, 2 fit did not converge.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from . import continuous, discrete
from .em import FitConfig, FitResult, data_hash, fit, grid_search_cutpoints, log_likelihood
from .errors import CutpointError, DomainError, FitError
from .gof import compare_models, write_comparison_csv
from .model import DiscreteCutpointModel, dumps, model_from_dict
from .simulate import (
    generate_frechet_dataset,
    generate_mixture_dataset,
    read_values_csv,
    sample_continuous,
    sample_discrete,
    write_values_csv,
)

__all__ = ["RunConfig", "main", "cmd_fit", "cmd_simulate", "cmd_eval", "cmd_gof", "cmd_grid"]

log = logging.getLogger("cutpointph")

EXIT_OK, EXIT_ERROR, EXIT_NOT_CONVERGED = 0, 1, 2

GENERATORS = {
    "mixture-6.1": generate_mixture_dataset,
    "frechet-6.2": generate_frechet_dataset,
}

# settings that are echoed into output headers (paths are left out so that
# identical runs in different directories produce identical bytes)
_PATH_FIELDS = ("input", "model", "out", "csv")


@dataclass
class RunConfig:
    input: Optional[str] = None
    model: Optional[str] = None
    out: Optional[str] = None
    csv: Optional[str] = None
    seed: int = 0
    structure: str = "general"
    phases: int = 1
    cutpoints: list = field(default_factory=list)
    epsilon: float = 1e-6
    max_iterations: int = 5000
    quadrature_nodes: int = 64
    generator: Optional[str] = None
    size: int = 200
    x_min: Optional[float] = None
    x_max: Optional[float] = None
    points: int = 512
    replicates: int = 999
    label: str = ""
    grid: list = field(default_factory=list)

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2**64:
            raise DomainError("seed must be an unsigned 64-bit integer")
        self.seed = int(self.seed)
        self.cutpoints = [float(a) for a in self.cutpoints]
        self.grid = [[float(a) for a in g] for g in self.grid]
        if self.points < 2:
            raise DomainError("points must be >= 2")
        for name in _PATH_FIELDS:
            value = getattr(self, name)
            if value is not None and not str(value):
                raise DomainError(f"{name} path is empty")

    def echo(self) -> dict:
        return {k: v for k, v in asdict(self).items() if k not in _PATH_FIELDS}

    def fit_config(self, **overrides) -> FitConfig:
        base = dict(
            structure=self.structure,
            phases=self.phases,
            cutpoints=tuple(self.cutpoints),
            epsilon=self.epsilon,
            max_iterations=self.max_iterations,
            seed=self.seed,
            quadrature_nodes=self.quadrature_nodes,
        )
        base.update(overrides)
        return FitConfig(**base)

    def require(self, *names):
        missing = [n for n in names if getattr(self, n) is None]
        if missing:
            raise DomainError("missing required setting(s): " + ", ".join("--" + n.replace("_", "-") for n in missing))


def _header(config: RunConfig, command: str) -> list[str]:
    return [f"cutpointph {command}", "config " + json.dumps(config.echo(), sort_keys=True)]


def _write_json(path, obj) -> None:
    Path(path).write_text(dumps(obj) + "\n")


def _load_document(path):
    """Model or FitResult JSON; returns ``(model, FitResult or None)``."""
    path = Path(path)
    if not path.exists():
        raise DomainError(f"model file not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DomainError(f"{path}: invalid JSON ({exc})") from None
    if isinstance(doc, dict) and "model" in doc and "loglik" in doc:
        res = FitResult.from_dict(doc)
        return res.model, res
    return model_from_dict(doc), None


def _read_data(config: RunConfig) -> np.ndarray:
    config.require("input")
    y = read_values_csv(config.input)
    if y.size == 0:
        raise DomainError(f"{config.input}: no observations")
    bad = np.nonzero(~(y > 0) | ~np.isfinite(y))[0]
    if bad.size:
        raise DomainError(f"{config.input}: observation on data row {bad[0] + 1} is not positive: {y[bad[0]]!r}")
    return y


def _summary(res: FitResult) -> str:
    lines = [
        f"logL        {res.log_likelihood:.10g}",
        f"iterations  {res.iterations}",
        f"converged   {'yes' if res.converged else 'no'}",
    ]
    mod = res.model
    if res.structure == "erlang":
        rates = ", ".join(f"{-T[0, 0]:.8g}" for T in mod.matrices)
        lines.append(f"rates       {rates}")
    elif mod.m == 1:
        rates = ", ".join(f"{-T[0, 0]:.8g}" for T in mod.matrices)
        lines.append(f"lambda      {rates}")
    if mod.n:
        lines.append("cut-points  " + ", ".join(f"{a:.8g}" for a in mod.cutpoints))
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_fit(config: RunConfig) -> int:
    config.require("out")
    y = _read_data(config)
    res = fit(y, config.fit_config())
    doc = res.to_dict()
    doc["run_config"] = config.echo()
    _write_json(config.out, doc)
    print(_summary(res))
    return EXIT_OK if res.converged else EXIT_NOT_CONVERGED


def cmd_simulate(config: RunConfig) -> int:
    config.require("out")
    if config.size < 1:
        raise DomainError("size must be >= 1")
    if config.generator is not None:
        if config.generator not in GENERATORS:
            raise DomainError(
                f"unknown generator {config.generator!r}; valid names: {', '.join(sorted(GENERATORS))}"
            )
        values = GENERATORS[config.generator](config.seed, config.size)
    elif config.model is not None:
        model, _ = _load_document(config.model)
        sampler = sample_discrete if isinstance(model, DiscreteCutpointModel) else sample_continuous
        values = sampler(model, config.seed, config.size)
    else:
        raise DomainError("simulate needs --model or --generator")
    write_values_csv(config.out, values, _header(config, "simulate"))
    return EXIT_OK


def _discrete_upper(model, p=0.999):
    k = max(int(np.ceil(discrete.mean_discrete(model))), 1)
    while discrete.survival_k(model, k) > 1 - p:
        k *= 2
        if k > 2**40:
            raise DomainError("0.999 quantile is not reachable")
    lo = 0
    while k - lo > 1:
        mid = (lo + k) // 2
        if discrete.survival_k(model, mid) > 1 - p:
            lo = mid
        else:
            k = mid
    return k


def cmd_eval(config: RunConfig) -> int:
    config.require("model", "out")
    model, _ = _load_document(config.model)
    g = lambda v: format(float(v), ".17g")
    lines = [f"# {c}" for c in _header(config, "eval")]
    if isinstance(model, DiscreteCutpointModel):
        k0 = 0 if config.x_min is None else int(np.ceil(config.x_min))
        k1 = _discrete_upper(model) if config.x_max is None else int(np.floor(config.x_max))
        if k0 < 0 or k1 < k0 + 1:
            raise DomainError("discrete grid needs 0 <= x_min < x_max")
        k = np.arange(k0, k1 + 1)
        pm = np.zeros(k.size)
        pm[k >= 1] = discrete.pmf(model, k[k >= 1])
        sv = discrete.survival_k(model, k)
        lines.append("k,pmf,cdf,survival")
        for kk, a, s in zip(k, pm, sv):
            lines.append(f"{kk},{g(a)},{g(1.0 - s)},{g(s)}")
    else:
        x0 = 0.0 if config.x_min is None else float(config.x_min)
        x1 = continuous.quantile(model, 0.999) if config.x_max is None else float(config.x_max)
        if x0 < 0 or not x1 > x0:
            raise DomainError("grid needs 0 <= x_min < x_max")
        x = np.linspace(x0, x1, config.points)
        dens = continuous._density(model, x)
        sv = np.asarray(continuous.survival(model, x))
        lines.append("x,pdf,cdf,survival,cumhazard")
        underflow = False
        for xx, d, s in zip(x, dens, sv):
            if s > 0:
                H = g(0.0 - np.log(s))
            else:
                H, underflow = "", True
            lines.append(f"{g(xx)},{g(d)},{g(1.0 - s)},{g(s)},{H}")
        if underflow:
            log.warning("survival underflows on part of the grid; cumhazard left empty there")
    Path(config.out).write_text("\n".join(lines) + "\n")
    return EXIT_OK


def cmd_gof(config: RunConfig) -> int:
    config.require("model", "out")
    y = _read_data(config)
    model, res = _load_document(config.model)
    if isinstance(model, DiscreteCutpointModel):
        raise DomainError("goodness of fit is implemented for continuous models only")
    if res is None:
        res = FitResult(model, log_likelihood(y, model), 0, True, [], config.structure, data_hash(y))
    cfg = config.fit_config(structure=res.structure, phases=model.m, cutpoints=tuple(model.cutpoints))
    label = config.label or f"{res.structure}-m{model.m}-n{model.n}"
    (report,) = compare_models(y, [(label, res, cfg)], config.replicates, config.seed)
    doc = asdict(report)
    doc["run_config"] = config.echo()
    _write_json(config.out, doc)
    if config.csv:
        write_comparison_csv(config.csv, [report], _header(config, "gof"))
    print(f"K-S {report.ks_statistic:.6g} (p = {report.ks_pvalue:.4g}), "
          f"A-D {report.ad_statistic:.6g} (p = {report.ad_pvalue:.4g}), B = {report.bootstrap_replicates}")
    return EXIT_OK


def cmd_grid(config: RunConfig) -> int:
    config.require("out")
    if not config.grid:
        raise DomainError("grid needs at least one --grid list")
    y = _read_data(config)
    result = grid_search_cutpoints(y, config.grid, config.fit_config(cutpoints=()))
    doc = result.best.to_dict()
    doc["run_config"] = config.echo()
    _write_json(config.out, doc)
    if config.csv:
        g = lambda v: format(float(v), ".17g")
        lines = [f"# {c}" for c in _header(config, "grid")] + ["cutpoints,loglik,iterations,converged"]
        for row in result.table:
            cuts = " ".join(g(a) for a in row.cutpoints)
            lines.append(f"{cuts},{g(row.log_likelihood)},{row.iterations},{int(row.converged)}")
        Path(config.csv).write_text("\n".join(lines) + "\n")
    print(_summary(result.best))
    return EXIT_OK if result.best.converged else EXIT_NOT_CONVERGED


COMMANDS = {"fit": cmd_fit, "simulate": cmd_simulate, "eval": cmd_eval, "gof": cmd_gof, "grid": cmd_grid}


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise DomainError(f"{self.prog}: {message}")


def _floats(text):
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="cutpointph", description="Multiple cut-point phase-type distributions.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config")
        s.add_argument("--seed", type=int)
        s.add_argument("--out")
        s.add_argument("-v", "--verbose", action="store_true")
        if name in ("fit", "gof", "grid"):
            s.add_argument("--input")
        if name in ("simulate", "eval", "gof"):
            s.add_argument("--model")
        if name in ("fit", "grid", "gof"):
            s.add_argument("--structure", choices=["general", "erlang"])
            s.add_argument("--epsilon", type=float)
            s.add_argument("--max-iterations", type=int)
            s.add_argument("--quadrature-nodes", type=int)
        if name in ("fit", "grid"):
            s.add_argument("--phases", type=int)
        if name == "fit":
            s.add_argument("--cutpoints", type=_floats)
        if name == "grid":
            s.add_argument("--grid", type=_floats, action="append", help="candidates for one cut-point")
        if name in ("gof", "grid"):
            s.add_argument("--csv", help="secondary CSV output")
        if name == "gof":
            s.add_argument("--replicates", type=int)
            s.add_argument("--label")
        if name == "simulate":
            s.add_argument("--generator")
            s.add_argument("--size", type=int)
        if name == "eval":
            s.add_argument("--x-min", type=float)
            s.add_argument("--x-max", type=float)
            s.add_argument("--points", type=int)
    return p


def load_config(args: argparse.Namespace) -> RunConfig:
    settings: dict = {}
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise DomainError(f"config file not found: {path}")
        try:
            settings = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise DomainError(f"{path}: invalid JSON ({exc})") from None
        if not isinstance(settings, dict):
            raise DomainError(f"{path}: expected a JSON object")
        known = {f.name for f in fields(RunConfig)}
        unknown = sorted(set(settings) - known)
        if unknown:
            raise DomainError(f"{path}: unknown setting(s) {', '.join(unknown)}")
    for key, value in vars(args).items():
        if key in ("config", "command", "verbose") or value is None:
            continue
        settings[key] = value
    return RunConfig(**settings)


def main(argv=None) -> int:
    logging.basicConfig(format="%(levelname)s: %(message)s", level=logging.WARNING)
    try:
        args = build_parser().parse_args(argv)
        if args.verbose:
            logging.getLogger().setLevel(logging.DEBUG)
        config = load_config(args)
        return COMMANDS[args.command](config)
    except FitError as exc:
        print(f"error: fit failed: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (CutpointError, ValueError, TypeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
