"""Command-line driver: flat key=value configs in, CSV files out.

    delayhjb <command> --config run.cfg --out results/ --seed 0

Commands: solve, cost, value, dpp-check, hjb-residual, compare-harness.
Every failure prints one line ``error_code=<code> detail=<text>`` to stderr.
"""

from __future__ import annotations

import argparse
import csv
import math
import os
import sys
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import problems
from .candidates import build_candidates
from .comparison_harness import comparison_diagnostics
from .control_problem import cost, hamiltonian
from .delay_dynamics import ControlSignal, segment_at, solve_euler, solve_picard
from .dyn_programming import DEFAULT_BUDGET, dpp_residual, value_bruteforce
from .errors import ConfigError, DelayHJBError, GridError
from .generator_hjb import affine_present, b_type, h_type, hjb_residual
from .segment_space import Segment

COMMANDS = ("solve", "cost", "value", "dpp-check", "hjb-residual", "compare-harness")

EXIT_CODES = {
    "parse": 2,
    "usage": 2,
    "config": 3,
    "grid": 4,
    "budget": 5,
    "blowup": 6,
    "convergence": 7,
    "error": 1,
}

# run options per command, with defaults; everything else goes to the problem family
RUN_OPTIONS = {
    "family": None,
    "t": "0",
    "history": "0",
    "history_file": "",
    "control": "",
    "solver": "euler",
    "picard_tol": "1e-10",
    "picard_max_iter": "500",
    "budget": str(DEFAULT_BUDGET),
    "s": "",
    "x0_list": "",
    "tf_kind": "affine",
    "tf_grad": "1",
    "tf_time": "0",
    "tf_const": "0",
    "tf_scale": "1",
    "tf_center": "0",
    "alphas": "1,10,100,1000",
    "radius": "2",
    "lattice_step": "0.5",
    "probes": "4",
    "epsilon": "1e-3",
    "delta": "1e-2",
    "w_shift": "0",
    "w_jump": "0",
    "tol": "1e-9",
}


class ParseError(DelayHJBError):
    code = "parse"


@dataclass
class RunConfig:
    command: str
    family: str
    params: dict
    options: dict
    out: str
    seed: int = 0
    source: Optional[str] = field(default=None, repr=False)


def parse_config_text(text: str) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment; duplicate keys are an error."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"line {lineno}: expected key=value")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ParseError(f"line {lineno}: empty key")
        if key in out:
            raise ParseError(f"line {lineno}: duplicate key '{key}'")
        out[key] = value
    if not out:
        raise ParseError("config is empty")
    return out


def make_config(command: str, entries: dict, out: str, seed: int = 0) -> RunConfig:
    if command not in COMMANDS:
        raise ParseError(f"unknown command '{command}'")
    if "family" not in entries:
        raise ConfigError("config must set family")
    options = dict(RUN_OPTIONS)
    params = {}
    for k, v in entries.items():
        if k in RUN_OPTIONS:
            options[k] = v
        else:
            params[k] = v
    return RunConfig(command, entries["family"], params, options, out, seed)


# --- option helpers ---------------------------------------------------


def _float(cfg, key):
    try:
        v = float(cfg.options[key])
    except ValueError as exc:
        raise ConfigError(f"{key}={cfg.options[key]!r} is not a number") from exc
    if not math.isfinite(v):
        raise ConfigError(f"{key} must be finite")
    return v


def _floats(cfg, key):
    text = cfg.options[key].strip()
    if not text:
        return []
    try:
        return [float(v) for v in text.split(",")]
    except ValueError as exc:
        raise ConfigError(f"{key}={text!r} is not a list of numbers") from exc


def _history(cfg, p) -> Segment:
    path = cfg.options["history_file"]
    if path:
        if cfg.source and not os.path.isabs(path):
            path = os.path.join(os.path.dirname(cfg.source), path)
        with open(path) as fh:
            x = Segment.from_text(fh.read())
        if not (abs(x.tau - p.tau) < 1e-12 and abs(x.dt - p.dt) < 1e-12 * p.dt and x.dim == p.dim):
            raise GridError("history file grid does not match the problem")
        return x
    c = _floats(cfg, "history")
    if len(c) == 1:
        c = c * p.dim
    if len(c) != p.dim:
        raise ConfigError(f"history needs 1 or {p.dim} values")
    return Segment.constant(np.array(c), p.tau, p.dt)


def _control(cfg, p, t) -> ControlSignal:
    n = p.steps(t)
    vals = _floats(cfg, "control") or [p.controls[0]]
    if len(vals) == 1:
        vals = vals * n
    if len(vals) != n:
        raise ConfigError(f"control needs 1 or {n} values, got {len(vals)}")
    return ControlSignal(t, p.dt, tuple(vals))


def _fmt(v) -> str:
    if isinstance(v, (list, tuple, np.ndarray)):
        return ";".join(_fmt(x) for x in np.ravel(v))
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    return repr(float(v))


def _write_csv(cfg, name, header, rows) -> str:
    os.makedirs(cfg.out, exist_ok=True)
    path = os.path.join(cfg.out, f"{name}.csv")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])
    return path


# --- commands -----------------------------------------------------------


def _cmd_solve(cfg, p):
    t = _float(cfg, "t")
    x, u = _history(cfg, p), _control(cfg, p, t)
    solver = cfg.options["solver"]
    if solver == "euler":
        tr = solve_euler(p, t, x, u)
    elif solver == "picard":
        tr = solve_picard(p, t, x, u, tol=_float(cfg, "picard_tol"), max_iter=int(_float(cfg, "picard_max_iter")))
    else:
        raise ConfigError(f"solver must be euler or picard, got '{solver}'")
    header = ["s"] + [f"X_{i + 1}" for i in range(p.dim)]
    rows = [[s] + list(v) for s, v in zip(tr.times, tr.values)]
    return _write_csv(cfg, "solve", header, rows)


def _cmd_cost(cfg, p):
    t = _float(cfg, "t")
    x, u = _history(cfg, p), _control(cfg, p, t)
    tr = solve_euler(p, t, x, u)
    rows = []
    for k in range(len(u) + 1):
        s = t + k * p.dt
        rep = cost(p, s, segment_at(tr, s), u.restrict(s))
        rows.append([s, rep.running, rep.terminal, rep.total])
    return _write_csv(cfg, "cost", ["t", "running", "terminal", "total"], rows)


def _cmd_value(cfg, p):
    t, budget = _float(cfg, "t"), int(_float(cfg, "budget"))
    x = _history(cfg, p)
    res = value_bruteforce(p, t, x, budget)
    tr = solve_euler(p, t, x, res.control)
    rows, running = [], 0.0
    for k in range(len(res.control) + 1):
        s = t + k * p.dt
        v = value_bruteforce(p, s, segment_at(tr, s), budget).value
        # along the optimal path, V(t, x) = running cost so far + V(s, X_s)
        rows.append([t, s, v, res.value - (running + v)])
        if k < len(res.control):
            running += float(p.running_cost(s, tr.values[k], res.control.values[k])) * p.dt
    return _write_csv(cfg, "value", ["t", "s", "V", "residual"], rows)


def _cmd_dpp(cfg, p):
    t, budget = _float(cfg, "t"), int(_float(cfg, "budget"))
    x = _history(cfg, p)
    v = value_bruteforce(p, t, x, budget).value
    svals = _floats(cfg, "s") or [t + k * p.dt for k in range(p.steps(t) + 1)]
    rows = [[t, s, v, dpp_residual(p, t, x, s, budget)] for s in svals]
    return _write_csv(cfg, "dpp_check", ["t", "s", "V", "residual"], rows)


def _test_function(cfg, p):
    kind = cfg.options["tf_kind"]
    scale = _float(cfg, "tf_scale")
    if kind == "affine":
        g = _floats(cfg, "tf_grad")
        g = g * p.dim if len(g) == 1 else g
        if len(g) != p.dim:
            raise ConfigError(f"tf_grad needs 1 or {p.dim} values")
        return affine_present(g, _float(cfg, "tf_time"), _float(cfg, "tf_const"))
    if kind == "h":
        return h_type(lambda t, r: scale * r, lambda t, r: 0.0, lambda t, r: scale)
    if kind == "b":
        c = _floats(cfg, "tf_center")
        c = c * p.dim if len(c) == 1 else c
        center = Segment.constant(np.array(c), p.tau, p.dt)
        return b_type(lambda r: scale * r, lambda r: scale, center)
    raise ConfigError(f"tf_kind must be affine, h or b, got '{kind}'")


def _cmd_hjb(cfg, p):
    t0 = _float(cfg, "t")
    x = _history(cfg, p)
    tf = _test_function(cfg, p)
    x0s = _floats(cfg, "x0_list") or [float(x.present[0])]
    rows = []
    for k in range(p.steps(t0)):
        t = t0 + k * p.dt
        for c in x0s:
            z = x.with_present(np.full(p.dim, c))
            _, arg = hamiltonian(p, t, z, tf.grad_at(t, z))
            rows.append([t, c, hjb_residual(p, tf, t, z), arg])
    return _write_csv(cfg, "hjb_residual", ["t", "x0", "residual", "hamiltonian_minimizer"], rows)


def _cmd_compare(cfg, p):
    budget = int(_float(cfg, "budget"))
    radius = _float(cfg, "radius")
    shift, jump = _float(cfg, "w_shift"), _float(cfg, "w_jump")
    cache = {}

    def V(t, x):
        k = (round(t / p.dt), x.key())
        if k not in cache:
            cache[k] = value_bruteforce(p, t, x, budget).value
        return cache[k]

    def W(t, x):
        return V(t, x) + shift + (jump if float(x.present[0]) > 0 else 0.0)

    cand = build_candidates(p, radius, _float(cfg, "lattice_step"), probes=int(_float(cfg, "probes")), seed=cfg.seed)
    rep = comparison_diagnostics(p, W, V, _floats(cfg, "alphas"), radius, cand,
                                 epsilon=_float(cfg, "epsilon"), delta=_float(cfg, "delta"), tol=_float(cfg, "tol"))
    header = ["alpha", "half_alpha_d", "alpha_b_gap_sq", "t_hat", "s_hat", "x0_hat", "y0_hat", "interior_flag"]
    rows = [[r.alpha, r.half_alpha_d, r.alpha_b_gap_sq, r.t_hat, r.s_hat, r.x0_hat, r.y0_hat, r.interior]
            for r in rep.rows]
    return _write_csv(cfg, "compare_harness", header, rows)


HANDLERS = {
    "solve": _cmd_solve,
    "cost": _cmd_cost,
    "value": _cmd_value,
    "dpp-check": _cmd_dpp,
    "hjb-residual": _cmd_hjb,
    "compare-harness": _cmd_compare,
}


def run(cfg: RunConfig) -> str:
    """Execute one command and return the CSV path."""
    p = problems.load_problem(cfg.family, cfg.params)
    return HANDLERS[cfg.command](cfg, p)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ParseError(message)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="delayhjb", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True, help="key=value config file")
    ap.add_argument("--out", default=".", help="output directory for CSV files")
    ap.add_argument("--seed", type=int, default=0)
    return ap


def _fail(exc) -> int:
    code = getattr(exc, "code", "error")
    detail = " ".join(str(exc).split()) or type(exc).__name__
    print(f"error_code={code} detail={detail}", file=sys.stderr)
    return EXIT_CODES.get(code, 1)


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        try:
            with open(args.config) as fh:
                text = fh.read()
        except OSError as exc:
            raise ParseError(f"cannot read config: {exc.strerror}") from exc
        cfg = make_config(args.command, parse_config_text(text), args.out, args.seed)
        cfg.source = args.config
        path = run(cfg)
    except DelayHJBError as exc:
        return _fail(exc)
    except (ValueError, ArithmeticError, OSError) as exc:
        return _fail(exc)
    print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
