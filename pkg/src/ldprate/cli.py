"""Command-line entry point ``ldp-rate``.

Exit codes: 0 success, 1 invalid configuration, 2 numerical failure,
3 declared order target missed.  ``LDP_RATE_THREADS`` sets the worker count
(0 = all cores, unset = 1).
"""

from __future__ import annotations

import io
import logging
import sys
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import __version__
from .config import ConfigValidationError, RunConfig, config_to_header, parse_and_validate
from .errors import (
    ConfigurationError,
    DomainError,
    NonConvergenceError,
    NumericalFailure,
    OptimizerFailure,
    StepRestrictionError,
)
from .harness import FINE_GRID, run_convergence_study, run_tail_study
from .minimize import MinimizeOptions
from .montecarlo import SimConfig, legendre_transform, lmgf_curve, sample_terminal
from .rate import RateQuery, rate_on_grid, small_time_rate_result

__all__ = ["Table", "emit", "format_table", "run", "main"]

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_ORDER = 0, 1, 2, 3

log = logging.getLogger("ldprate")


@dataclass
class Table:
    """Rows for one CSV plus the config recorded in its header."""

    config: Optional[RunConfig]
    columns: list
    rows: list = field(default_factory=list)
    summary: list = field(default_factory=list)


def _cell(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17g}"
    return str(value)


def format_table(table: Table) -> str:
    buf = io.StringIO()
    buf.write(f"# ldprate {__version__}\n")
    if table.config is not None:
        for line in config_to_header(table.config):
            buf.write(f"# {line}\n")
    buf.write(",".join(table.columns) + "\n")
    for row in table.rows:
        buf.write(",".join(_cell(v) for v in row) + "\n")
    for key, value in table.summary:
        buf.write(f"# {key}={_cell(value)}\n")
    return buf.getvalue()


def emit(table: Table, path: Optional[str]) -> None:
    """Write ``table`` as CSV to ``path`` (stdout for None or '-')."""
    text = format_table(table)
    if path in (None, "-"):
        sys.stdout.write(text)
        return
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write output {path!r}: {exc.strerror or exc}") from exc


def _x_columns(d, name="x"):
    return [name] if d == 1 else [f"{name}{i + 1}" for i in range(d)]


def _rate_table(cfg: RunConfig, kind: str) -> Table:
    entry = cfg.model_entry()
    model = entry.model
    query = RateQuery(model, cfg.x0, cfg.T, cfg.x0, theta=cfg.theta, N=cfg.N or 1,
                      path_N=cfg.path_N, quadrature=cfg.quadrature, options=MinimizeOptions())
    results = rate_on_grid(query, cfg.x_grid, kind)
    table = Table(cfg, _x_columns(model.d) + ["value", "gradient_norm", "converged"])
    for x, (value, res) in zip(cfg.x_grid, results):
        table.rows.append([*x, value, res.gradient_norm, res.converged])
    return table


def _small_time_table(cfg: RunConfig) -> Table:
    model = cfg.model_entry().model
    table = Table(cfg, _x_columns(model.d, "y") + ["value", "gradient_norm", "converged"])
    for y in cfg.x_grid:
        value, res = small_time_rate_result(model, cfg.x0, y, cfg.h, cfg.theta)
        table.rows.append([*y, value, res.gradient_norm, res.converged])
    return table


def _sim_config(cfg: RunConfig, epsilon: float) -> SimConfig:
    return SimConfig(cfg.model_entry().model, epsilon, cfg.theta, cfg.N, cfg.T, cfg.x0,
                     cfg.samples, cfg.seed)


def _simulate_table(cfg: RunConfig) -> Table:
    sim = _sim_config(cfg, cfg.epsilon)
    terminals = sample_terminal(sim)
    table = Table(cfg, ["sample"] + _x_columns(sim.model.d))
    table.rows = [[i, *row] for i, row in enumerate(terminals)]
    return table


def _tail_table(cfg: RunConfig) -> Table:
    study = run_tail_study(cfg.model_entry(), cfg.theta, cfg.delta, cfg.epsilon_values,
                           cfg.N, cfg.samples, cfg.seed, cfg.x0, cfg.T)
    table = Table(cfg, ["epsilon", "delta", "p_hat", "log_estimate", "ci_half_width",
                        "count", "lower_bound_only"])
    for r in study.rows:
        table.rows.append([r.epsilon, r.delta, r.p_hat, r.log_estimate, r.ci_half_width,
                           r.count, r.lower_bound_only])
    table.summary.append(("C_delta", study.C_delta))
    return table


def _lmgf_table(cfg: RunConfig) -> Table:
    sim = _sim_config(cfg, cfg.epsilon)
    n = int(round((cfg.lambda_max - cfg.lambda_min) / cfg.lambda_step))
    lambdas = cfg.lambda_min + cfg.lambda_step * np.arange(n + 1)
    values = lmgf_curve(sim, lambdas)
    table = Table(cfg, ["lambda", "lmgf"])
    table.rows = [[lam, v] for lam, v in zip(lambdas, values)]
    for x in cfg.x_grid:
        res = legendre_transform(lambdas, values, x)
        label = ":".join(_cell(float(c)) for c in x)
        table.summary.append((f"legendre[{label}]", res.value))
        table.summary.append((f"legendre_boundary[{label}]", res.on_boundary))
    return table


def _converge_table(cfg: RunConfig) -> Table:
    report = run_convergence_study(
        cfg.model_entry(), cfg.theta, cfg.x_grid, cfg.h_values, cfg.reference,
        h_ref=cfg.h_ref, x0=cfg.x0, T=cfg.T,
    )
    table = Table(cfg, ["h", "sup_error"])
    table.rows = [[h, e] for h, e in zip(report.h_values, report.errors)]
    table.summary.append(("fitted_order", "undefined" if report.fitted_order is None
                          else report.fitted_order))
    if report.reference_kind == FINE_GRID:
        table.summary.append(("h_ref", report.h_ref))
    return table


_RUNNERS = {
    "rate": lambda cfg: _rate_table(cfg, "continuous"),
    "rate-discrete": lambda cfg: _rate_table(cfg, "discrete"),
    "small-time": _small_time_table,
    "simulate": _simulate_table,
    "tail": _tail_table,
    "lmgf": _lmgf_table,
    "converge": _converge_table,
}


def run(cfg: RunConfig) -> Table:
    return _RUNNERS[cfg.subcommand](cfg)


def _order_missed(cfg: RunConfig, table: Table) -> bool:
    bounds = cfg.order_bounds()
    if bounds is None or cfg.subcommand != "converge":
        return False
    order = dict(table.summary)["fitted_order"]
    if order == "undefined":
        return True
    lo, hi = bounds
    return not lo <= order <= hi


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        cfg = parse_and_validate(argv)
    except ConfigValidationError as exc:
        for violation in exc.violations:
            print(f"error: {violation}", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        table = run(cfg)
    except (ConfigurationError, StepRestrictionError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (NumericalFailure, NonConvergenceError, OptimizerFailure) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    try:
        emit(table, cfg.output)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    for key, value in table.summary:
        if cfg.output not in (None, "-"):
            print(f"{key}={_cell(value)}")
    if _order_missed(cfg, table):
        print(f"error: fitted order misses declared target {cfg.order_target}", file=sys.stderr)
        return EXIT_ORDER
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
