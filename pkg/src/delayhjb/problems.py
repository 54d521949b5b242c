"""Builtin problem families.

Each family fixes the coefficient shapes and certifies its own Lipschitz
constant, so parameters are plain numbers rather than expressions.

    memoryless_affine   F = c1 x + c2 u 1,              a = 0, b = 0
    pure_delay          F = 0,                          b = b I
    memory_scalar       F = c1 x + c2 (a, x)_H 1 + c3 u 1, a(theta) = (theta + tau) 1

The default cost is q = 0, phi(x) = sum(x).  The ``_quadratic`` variants (alias ``_quadratic_cost``) use
q = kappa |u|^2 and phi(x) = |x|^2 instead.
"""

from __future__ import annotations

import math
from typing import Mapping

import numpy as np

from .delay_dynamics import ProblemSpec
from .errors import ConfigError, GridError

COMMON = {"dim": 1, "tau": 1.0, "horizon": 1.0, "dt": 0.25, "controls": "-1,1"}
FAMILY_DEFAULTS = {
    "memoryless_affine": {"c1": 0.0, "c2": 1.0},
    "pure_delay": {"b": 1.0, "controls": "0"},
    "memory_scalar": {"c1": -0.5, "c2": 0.5, "c3": 1.0},
}
QUADRATIC_DEFAULTS = {"kappa": 0.0, "controls": "-1,0,1"}
MAX_COEF = 100.0


def family_names() -> list:
    base = sorted(FAMILY_DEFAULTS)
    return base + [f"{b}_quadratic" for b in base]


def _split(name: str):
    base, quad = name, False
    for suffix in ("_quadratic_cost", "_quadratic"):
        if name.endswith(suffix):
            base, quad = name[: -len(suffix)], True
            break
    if base not in FAMILY_DEFAULTS:
        raise ConfigError(f"unknown problem family '{name}'; known: {', '.join(family_names())}")
    return base, quad


def parse_controls(text) -> tuple:
    if isinstance(text, (list, tuple)):
        vals = [float(v) for v in text]
    else:
        try:
            vals = [float(v) for v in str(text).split(",") if v.strip()]
        except ValueError as exc:
            raise ConfigError(f"bad control list '{text}'") from exc
    if not vals or len(set(vals)) != len(vals):
        raise ConfigError("control set must be nonempty without repeats")
    if not all(math.isfinite(v) and abs(v) <= MAX_COEF for v in vals):
        raise ConfigError(f"controls must be finite with |u| <= {MAX_COEF:g}")
    return tuple(vals)


def _number(params, key):
    try:
        v = float(params[key])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"parameter {key}={params[key]!r} is not a number") from exc
    if not math.isfinite(v):
        raise ConfigError(f"parameter {key} must be finite")
    return v


def defaults(name: str) -> dict:
    base, quad = _split(name)
    out = dict(COMMON)
    out.update(FAMILY_DEFAULTS[base])
    if quad:
        out.update(QUADRATIC_DEFAULTS)
    return out


def load_problem(name: str, params: Mapping = None) -> ProblemSpec:
    """Instantiate a builtin family; unknown or out-of-range parameters raise ConfigError."""
    base, quad = _split(name)
    allowed = defaults(name)
    params = dict(params or {})
    extra = set(params) - set(allowed)
    if extra:
        raise ConfigError(f"unknown parameters for {name}: {', '.join(sorted(extra))}")
    merged = {**allowed, **params}

    dim = int(_number(merged, "dim"))
    if dim != _number(merged, "dim") or not 1 <= dim <= 4:
        raise ConfigError("dim must be an integer in [1, 4]")
    tau, T, dt = (_number(merged, k) for k in ("tau", "horizon", "dt"))
    if not (tau > 0 and T > 0 and dt > 0):
        raise ConfigError("tau, horizon and dt must be positive")
    controls = parse_controls(merged["controls"])
    coef = {k: _number(merged, k) for k in FAMILY_DEFAULTS[base] if k != "controls"}
    if any(abs(v) > MAX_COEF for v in coef.values()):
        raise ConfigError(f"coefficients must satisfy |c| <= {MAX_COEF:g}")
    one = np.ones(dim)
    root = math.sqrt(dim)

    weight = None
    delay = None
    if base == "memoryless_affine":
        c1, c2 = coef["c1"], coef["c2"]

        def drift(s, x, y, u):
            return c1 * x + c2 * u * one

        L = max(abs(c1), abs(c2) * root, 1.0)
    elif base == "pure_delay":
        bmat = coef["b"] * np.eye(dim)

        def drift(s, x, y, u):
            return np.zeros(dim)

        def delay(s):
            return bmat

        L = 1.0
    else:
        c1, c2, c3 = coef["c1"], coef["c2"], coef["c3"]

        def drift(s, x, y, u):
            return c1 * x + (c2 * y + c3 * u) * one

        def weight(theta):
            return (theta + tau) * one

        L = max(abs(c1), abs(c2) * root, abs(c3) * root, 1.0)

    if quad:
        kappa = _number(merged, "kappa")
        if kappa < 0 or kappa > MAX_COEF:
            raise ConfigError(f"kappa must lie in [0, {MAX_COEF:g}]")

        def running(s, x, u):
            return kappa * u * u

        def terminal(x):
            return float(x @ x)
    else:
        def running(s, x, u):
            return 0.0

        def terminal(x):
            return float(np.sum(x))

    try:
        return ProblemSpec(
            dim=dim, tau=tau, horizon=T, dt=dt, drift=drift, controls=controls, lipschitz=L,
            weight=weight, delay=delay, running_cost=running, terminal_cost=terminal, name=name,
        )
    except GridError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
