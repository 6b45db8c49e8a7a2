"""Run configuration: INI files, command-line overrides and validation.

Config files are INI; keys from a ``[common]`` section apply to every
subcommand and a section named after the subcommand (``[converge]``,
``[rate-discrete]``, ...) overrides them.  Command-line flags override both.

List values are comma separated (``h_values = 1/8, 1/16``); fractions are
accepted wherever a real number is.  Points in R^d with d > 1 separate
coordinates with ``:`` (``x_grid = 1:0, 0:1``).
"""

from __future__ import annotations

import argparse
import configparser
import re
from dataclasses import dataclass, field, fields
from fractions import Fraction
from typing import Optional

from .errors import LdpError, UnknownModelError
from .model import builtin_model

__all__ = [
    "RunConfig",
    "ConfigValidationError",
    "SUBCOMMANDS",
    "parse_and_validate",
    "config_from_mapping",
    "config_to_header",
    "config_from_header",
    "build_parser",
]

SUBCOMMANDS = ("rate", "rate-discrete", "small-time", "simulate", "tail", "lmgf", "converge")
MODEL_PARAMS = ("a", "d", "rate", "offset")


class ConfigValidationError(LdpError, ValueError):
    """Every violation found in a configuration, not just the first."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


@dataclass
class RunConfig:
    subcommand: str
    model: str = "brownian"
    model_params: dict = field(default_factory=dict)
    x0: tuple = (0.0,)
    T: float = 1.0
    x_grid: list = field(default_factory=list)
    theta: float = 0.0
    N: Optional[int] = None
    h: Optional[float] = None
    h_values: list = field(default_factory=list)
    h_ref: Optional[float] = None
    reference: str = "closed-form"
    path_N: int = 256
    quadrature: str = "gauss-legendre-2"
    epsilon: Optional[float] = None
    epsilon_values: list = field(default_factory=list)
    delta: Optional[float] = None
    samples: Optional[int] = None
    seed: int = 0
    lambda_min: float = -4.0
    lambda_max: float = 4.0
    lambda_step: float = 0.01
    order_target: Optional[str] = None
    output: Optional[str] = None

    def model_entry(self):
        return builtin_model(self.model, **self.model_params)

    @property
    def step(self) -> Optional[float]:
        if self.N:
            return self.T / self.N
        return self.h

    def order_bounds(self):
        """``(low, high)`` from ``order_target`` = ``"lo:hi"`` or ``"lo"``."""
        if self.order_target is None:
            return None
        lo, _, hi = str(self.order_target).partition(":")
        return float(Fraction(lo)), (float(Fraction(hi)) if hi else float("inf"))


# key -> kind; order here is the order used in CSV headers
_KEYS = {
    "model": "str",
    "a": "float",
    "d": "int",
    "rate": "float",
    "offset": "float",
    "x0": "point",
    "T": "float",
    "x": "points",
    "x_grid": "points",
    "theta": "float",
    "N": "int",
    "h": "float",
    "h_values": "floats",
    "h_ref": "float",
    "reference": "str",
    "path_N": "int",
    "quadrature": "str",
    "epsilon": "float",
    "epsilon_values": "floats",
    "delta": "float",
    "samples": "int",
    "seed": "int",
    "lambda_min": "float",
    "lambda_max": "float",
    "lambda_step": "float",
    "order_target": "str",
}
_ALIASES = {"t": "T", "n": "N", "y": "x", "y0": "x0", "y_grid": "x_grid", "path_n": "path_N"}


def _real(text) -> float:
    return float(Fraction(str(text).strip()))


def _point(text):
    return tuple(_real(c) for c in str(text).split(":"))


def _convert(key, kind, raw):
    if kind == "str":
        return str(raw).strip()
    if kind == "float":
        return _real(raw)
    if kind == "int":
        value = _real(raw)
        if value != int(value):
            raise ValueError(f"{raw!r} is not an integer")
        return int(value)
    if kind == "floats":
        return [_real(v) for v in str(raw).split(",") if v.strip()]
    if kind == "point":
        return _point(raw)
    if kind == "points":
        return [_point(v) for v in str(raw).split(",") if v.strip()]
    raise AssertionError(kind)


def _canonical(key: str) -> str:
    key = key.strip().replace("-", "_")
    return _ALIASES.get(key.lower(), _ALIASES.get(key, key))


def read_config_file(path: str, subcommand: Optional[str]) -> dict:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    with open(path, encoding="utf-8") as fh:
        parser.read_file(fh)
    raw = {}
    for section in ("common", subcommand):
        if section and parser.has_section(section):
            raw.update({_canonical(k): v for k, v in parser.items(section)})
    if subcommand is None and parser.has_option("common", "subcommand"):
        raw["subcommand"] = parser.get("common", "subcommand")
    return raw


def config_from_mapping(subcommand: str, raw: dict) -> RunConfig:
    """Convert and validate string/number values; raises ConfigValidationError."""
    violations = []
    if subcommand not in SUBCOMMANDS:
        raise ConfigValidationError(
            [f"subcommand: unknown subcommand {subcommand!r} (expected one of {', '.join(SUBCOMMANDS)})"]
        )
    values = {}
    for key, value in raw.items():
        key = _canonical(key)
        if value is None or key in ("config", "subcommand"):
            continue
        if key == "output":
            values["output"] = str(value)
            continue
        kind = _KEYS.get(key)
        if kind is None:
            violations.append(f"{key}: unknown setting")
            continue
        try:
            values[key] = value if not isinstance(value, str) else _convert(key, kind, value)
        except (ValueError, ZeroDivisionError):
            violations.append(f"{key}: cannot parse {value!r} as {kind}")

    cfg = RunConfig(subcommand)
    cfg.model_params = {k: values.pop(k) for k in MODEL_PARAMS if k in values}
    if "x" in values:
        values["x_grid"] = values.pop("x")
    for key, value in values.items():
        setattr(cfg, key, value)
    _validate(cfg, violations)
    if violations:
        raise ConfigValidationError(violations)
    return cfg


def _validate(cfg: RunConfig, violations: list) -> None:
    entry = None
    try:
        entry = cfg.model_entry()
    except UnknownModelError as exc:
        violations.append(f"model: {exc}")
    except (TypeError, ValueError) as exc:
        violations.append(f"model: invalid parameters ({exc})")
    d = entry.model.d if entry else len(cfg.x0)
    L = entry.model.lipschitz_L if entry else None
    sub = cfg.subcommand

    def need(name, present):
        if not present:
            violations.append(f"{name}: required for {sub}")

    if not (cfg.T > 0):
        violations.append("T: must be positive")
    if not 0.0 <= cfg.theta <= 1.0:
        violations.append("theta: must satisfy theta ∈ [0,1]")
    if len(cfg.x0) != d:
        violations.append(f"x0: must have {d} coordinates")
    if any(len(p) != d for p in cfg.x_grid):
        violations.append(f"x_grid: every point must have {d} coordinates")

    # an empty x_grid is legal for the rate subcommands and yields a header-only CSV
    if sub == "rate":
        if cfg.path_N < 1:
            violations.append("path_N: must be a positive integer")
        if cfg.quadrature not in ("midpoint", "gauss-legendre-2", "gauss-legendre-3"):
            violations.append("quadrature: must be midpoint, gauss-legendre-2 or gauss-legendre-3")
    if sub in ("rate-discrete", "simulate", "tail", "lmgf"):
        if cfg.N is None and cfg.h is not None and cfg.T > 0:
            n = round(cfg.T / cfg.h)
            if n >= 1 and abs(n * cfg.h - cfg.T) <= 1e-9 * cfg.T:
                cfg.N = int(n)
            else:
                violations.append("h: T/h must be a positive integer")
        need("N", cfg.N is not None or cfg.h is not None)
        if cfg.N is not None and cfg.N < 1:
            violations.append("N: must be a positive integer")
    if sub == "rate-discrete" and L and cfg.N and cfg.N >= 1 and cfg.T > 0:
        if cfg.T / cfg.N > (1 + 1e-12) / (2 * L):
            violations.append(f"h: step h={cfg.T / cfg.N:g} violates h ≤ 1/(2L) = {1 / (2 * L):g}")
    if sub == "small-time":
        need("h", cfg.h is not None)
        if cfg.h is not None:
            n = round(1.0 / cfg.h) if cfg.h > 0 else 0
            if not (0 < cfg.h <= 1) or abs(n * cfg.h - 1.0) > 1e-12:
                violations.append("h: small-time step must lie in (0, 1] with 1/h an integer")
    if sub in ("simulate", "tail", "lmgf"):
        need("samples", cfg.samples is not None)
        if cfg.samples is not None and cfg.samples < 1:
            violations.append("samples: must be a positive integer")
        if L and cfg.N and cfg.N >= 1 and cfg.T > 0 and cfg.T / cfg.N * L * cfg.theta >= 1:
            violations.append("h: implicit step needs h·L·theta < 1")
    if sub in ("simulate", "lmgf"):
        need("epsilon", cfg.epsilon is not None)
        if cfg.epsilon is not None and not cfg.epsilon > 0:
            violations.append("epsilon: must be positive")
    if sub == "tail":
        need("epsilon_values", cfg.epsilon_values)
        need("delta", cfg.delta is not None)
        if any(not e > 0 for e in cfg.epsilon_values):
            violations.append("epsilon_values: every epsilon must be positive")
        if cfg.delta is not None and cfg.delta < 0:
            violations.append("delta: must be non-negative")
    if sub == "lmgf":
        if not (cfg.lambda_step > 0 and cfg.lambda_max >= cfg.lambda_min):
            violations.append("lambda_step: need lambda_step > 0 and lambda_max >= lambda_min")
        if d != 1:
            violations.append("model: the lmgf subcommand supports d = 1 only")
    if sub == "converge":
        need("h_values", cfg.h_values)
        hs = cfg.h_values
        if any(b >= a for a, b in zip(hs, hs[1:])):
            violations.append("h_values: must be strictly decreasing")
        if L and any(h > (1 + 1e-12) / (2 * L) for h in hs):
            violations.append(f"h_values: every h must satisfy h ≤ 1/(2L) = {1 / (2 * L):g}")
        for h in hs:
            n = round(cfg.T / h) if h > 0 else 0
            if n < 1 or abs(n * h - cfg.T) > 1e-9 * cfg.T:
                violations.append(f"h_values: T/h must be an integer (h={h:g})")
                break
        if cfg.reference not in ("closed-form", "fine-grid"):
            violations.append("reference: must be closed-form or fine-grid")
        elif cfg.reference == "closed-form" and entry and entry.exact_rate is None:
            violations.append(f"reference: model {cfg.model} has no closed-form rate; use fine-grid")
        if cfg.h_ref is not None and hs and cfg.h_ref > min(hs) / 8 * (1 + 1e-12):
            violations.append("h_ref: must satisfy h_ref ≤ min(h_values)/8")
        if not cfg.x_grid:
            violations.append("x_grid: required for converge")
    if cfg.order_target is not None:
        try:
            cfg.order_bounds()
        except (ValueError, ZeroDivisionError):
            violations.append("order_target: expected 'low' or 'low:high'")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ldp-rate", description="One-point large-deviations rate functions of small-noise SDEs.")
    sub = parser.add_subparsers(dest="subcommand", metavar="subcommand")
    sub.required = True
    for name in SUBCOMMANDS:
        p = sub.add_parser(name, argument_default=argparse.SUPPRESS)
        p.add_argument("--config", help="INI configuration file")
        p.add_argument("--output", "-o", help="CSV output path (default: stdout)")
        p.add_argument("--model", help="brownian, ou-additive or mult-sine")
        for param in MODEL_PARAMS:
            p.add_argument(f"--{param}")
        p.add_argument("--x0", "--y0", dest="x0")
        p.add_argument("--T", dest="T")
        p.add_argument("--x", "--y", dest="x", help="evaluation point(s), comma separated")
        p.add_argument("--x-grid", "--y-grid", dest="x_grid")
        p.add_argument("--theta")
        p.add_argument("--N", dest="N")
        p.add_argument("--h")
        p.add_argument("--h-values", dest="h_values")
        p.add_argument("--h-ref", dest="h_ref")
        p.add_argument("--reference")
        p.add_argument("--path-N", dest="path_N")
        p.add_argument("--quadrature")
        p.add_argument("--epsilon")
        p.add_argument("--epsilon-values", dest="epsilon_values")
        p.add_argument("--delta")
        p.add_argument("--samples")
        p.add_argument("--seed")
        p.add_argument("--lambda-min", dest="lambda_min")
        p.add_argument("--lambda-max", dest="lambda_max")
        p.add_argument("--lambda-step", dest="lambda_step")
        p.add_argument("--order-target", dest="order_target")
    return parser


_NEGATIVE_VALUE = re.compile(r"^-[\d.]")


def _attach_negative_values(argv):
    """Rewrite ``--x -2,0.5`` as ``--x=-2,0.5`` so argparse sees a value, not a flag."""
    out = []
    for token in argv:
        if out and out[-1].startswith("--") and "=" not in out[-1] and _NEGATIVE_VALUE.match(token):
            out[-1] = f"{out[-1]}={token}"
        else:
            out.append(token)
    return out


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigValidationError([f"subcommand: {message}"])


def parse_and_validate(argv, config_file: Optional[str] = None) -> RunConfig:
    """Flags override file values; raises ConfigValidationError listing all problems."""
    argv = list(argv)
    if argv and not argv[0].startswith("-") and argv[0] not in SUBCOMMANDS:
        raise ConfigValidationError(
            [f"subcommand: unknown subcommand {argv[0]!r} (expected one of {', '.join(SUBCOMMANDS)})"]
        )
    ns = vars(build_parser().parse_args(_attach_negative_values(argv)))
    subcommand = ns.pop("subcommand")
    config_file = ns.pop("config", config_file)
    raw = {}
    if config_file:
        try:
            raw.update(read_config_file(config_file, subcommand))
        except (OSError, configparser.Error) as exc:
            raise ConfigValidationError([f"config: cannot read {config_file!r}: {exc}"]) from exc
    raw.update(ns)
    return config_from_mapping(subcommand, raw)


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return f"{value:.17g}"
    if isinstance(value, tuple):
        return ":".join(_fmt(float(v)) for v in value)
    if isinstance(value, list):
        return ",".join(_fmt(v) for v in value)
    return str(value)


def config_to_header(cfg: RunConfig) -> list:
    """``key=value`` lines in a fixed order (output path excluded)."""
    lines = [f"subcommand={cfg.subcommand}", f"model={cfg.model}"]
    for key in MODEL_PARAMS:
        if key in cfg.model_params:
            lines.append(f"{key}={_fmt(cfg.model_params[key])}")
    for f in fields(RunConfig):
        if f.name in ("subcommand", "model", "model_params", "output"):
            continue
        value = getattr(cfg, f.name)
        if value is None or value == []:
            continue
        lines.append(f"{f.name}={_fmt(value)}")
    return lines


def config_from_header(text: str) -> RunConfig:
    """Rebuild a RunConfig from the ``# key=value`` block of an emitted CSV."""
    raw = {}
    for line in text.splitlines():
        if not line.startswith("#"):
            break
        body = line[1:].strip()
        if "=" in body:
            key, _, value = body.partition("=")
            raw[key.strip()] = value.strip()
    subcommand = raw.pop("subcommand", "")
    return config_from_mapping(subcommand, raw)
