"""Value function by exhaustive search over grid controls, and DPP checks.

The state is a whole segment, so tabulating V over a state mesh is out of the
question.  Instead every piecewise-constant control on the grid is enumerated
as a depth-first walk of the control tree; shared prefixes are integrated once.
On the grid this makes the dynamic programming identity hold exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .delay_dynamics import ControlSignal, ProblemSpec, _check_state, _Rates, _ratio_stable
from .errors import BudgetExceededError, GridError
from .segment_space import Segment, grid_index, h_norm, sup_tail_integral

DEFAULT_BUDGET = 10 ** 6


@dataclass(frozen=True)
class ValueResult:
    value: float
    control: ControlSignal
    n_enumerated: int


def _check_budget(p: ProblemSpec, n: int, budget: int) -> None:
    if len(p.controls) ** n > budget:
        raise BudgetExceededError(f"|U|^steps = {len(p.controls)}^{n} exceeds the budget {budget}")


def _search(p: ProblemSpec, t: float, x: Segment, n: int, leaf: Callable[[float, np.ndarray], float]):
    """Minimize sum_k q dt + leaf(s_n, X_{s_n}) over all control sequences of length n.

    Returns (value, argmin sequence, number of leaves).  Ties keep the first
    sequence in lexicographic order of U, earliest step first.
    """
    if x.dim != p.dim or x.m != p.m or abs(x.dt - p.dt) > 1e-12 * p.dt:
        raise GridError("segment grid does not match the problem")
    m, dt, U = p.m, p.dt, p.controls
    i0 = p.time_index(t)
    rates = _Rates(p)
    path = np.empty((m + n + 1, p.dim))
    path[: m + 1] = x.values
    seq = [None] * n
    best = [np.inf, None, 0]

    def walk(k, running):
        if k == n:
            total = running + leaf((i0 + n) * dt, path[n: n + m + 1])
            best[2] += 1
            if total < best[0]:
                best[0], best[1] = total, tuple(seq)
            return
        s = (i0 + k) * dt
        window = path[k: k + m + 1]
        mem = rates.memory(window)
        lag = rates.delay_term(s, window)
        state = path[m + k].copy()
        for u in U:
            nxt = state + dt * (rates.drift(s, window, mem, u) + lag)
            _check_state(nxt, s + dt)
            path[m + k + 1] = nxt
            seq[k] = u
            walk(k + 1, running + float(p.running_cost(s, state, u)) * dt)

    walk(0, 0.0)
    return best[0], best[1], best[2]


def value_bruteforce(p: ProblemSpec, t: float, x: Segment, budget: int = DEFAULT_BUDGET) -> ValueResult:
    """V(t, x) as the minimum cost over every grid control on [t, T]."""
    n = p.steps(t)
    _check_budget(p, n, budget)

    def terminal(s, window):
        return float(p.terminal_cost(window[-1]))

    val, seq, count = _search(p, t, x, n, terminal)
    return ValueResult(val, ControlSignal(t, p.dt, seq), count)


def dpp_rhs(p: ProblemSpec, t: float, x: Segment, s: float, budget: int = DEFAULT_BUDGET) -> float:
    """min over controls on [t, s] of  int_t^s q + V(s, X_s)."""
    n = p.steps(t)
    j = grid_index(s - t, p.dt, "s - t")
    if not 0 <= j <= n:
        raise GridError(f"s={s} must lie in [t, T]")
    _check_budget(p, n, budget)

    def inner(time, window):
        return value_bruteforce(p, time, Segment(window, p.tau, p.dt), budget).value

    val, _, _ = _search(p, t, x, j, inner)
    return val


def dpp_residual(p: ProblemSpec, t: float, x: Segment, s: float, budget: int = DEFAULT_BUDGET) -> float:
    """V(t, x) minus the right-hand side of the dynamic programming principle at s."""
    return value_bruteforce(p, t, x, budget).value - dpp_rhs(p, t, x, s, budget)


@dataclass(frozen=True)
class ValueContinuityReport:
    """Fitted constants for the growth and continuity bounds of V, at dt and dt/2.

    ``growth``: |V(t,x)| / (1 + |x(0)| + |x|_H).
    ``lipschitz``: |V(t,x) - V(t,y)| / (|x(0) - y(0)| + |x - y|_H), same-time pairs.
    ``holder``: |V(t,x) - V(s,y)| over the product factor with |s - t|^(1/2).
    """

    growth: float
    growth_refined: float
    lipschitz: float
    lipschitz_refined: float
    holder: float
    holder_refined: float
    zero_factor_ok: bool
    stable: bool


def _value_fit(p, pairs, budget):
    cache = {}

    def V(t, x):
        key = (round(t / p.dt), x.key())
        if key not in cache:
            cache[key] = value_bruteforce(p, t, x, budget).value
        return cache[key]

    growth = lip = hol = 0.0
    ok = True
    for (t, x), (s, y) in pairs:
        vx, vy = V(t, x), V(s, y)
        for z, vz in ((x, vx), (y, vy)):
            growth = max(growth, abs(vz) / (1.0 + float(np.linalg.norm(z.present)) + h_norm(z)))
        diff = abs(vx - vy)
        jump = float(np.linalg.norm(x.present - y.present))
        if t == s:
            den = jump + h_norm(x - y)
            if den > 0:
                lip = max(lip, diff / den)
            elif diff > 0:
                ok = False
        pref = 1.0 + float(np.linalg.norm(x.present)) + float(np.linalg.norm(y.present)) + h_norm(x) + h_norm(y)
        fac = pref * (jump + np.sqrt(abs(s - t)) + sup_tail_integral(x - y))
        if fac > 0:
            hol = max(hol, diff / fac)
        elif diff > 0:
            ok = False
    return growth, lip, hol, ok


def value_continuity_report(p: ProblemSpec, pairs: Sequence, budget: int = DEFAULT_BUDGET) -> ValueContinuityReport:
    """Evaluate the value-function estimates on ((t, x), (s, y)) pairs."""
    if not pairs:
        raise ValueError("need at least one pair")
    g, l, h, ok = _value_fit(p, pairs, budget)
    fine = [((t, x.refine(2)), (s, y.refine(2))) for (t, x), (s, y) in pairs]
    gf, lf, hf, okf = _value_fit(p.with_dt(p.dt / 2), fine, budget)
    stable = _ratio_stable(g, gf) and _ratio_stable(l, lf) and _ratio_stable(h, hf)
    return ValueContinuityReport(g, gf, l, lf, h, hf, ok and okf, stable)
