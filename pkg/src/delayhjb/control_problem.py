"""Cost functional and Hamiltonian."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Tuple

import numpy as np

from .delay_dynamics import ControlSignal, ProblemSpec, solve_euler
from .segment_space import Segment, h_inner


@dataclass(frozen=True)
class CostReport:
    running: float
    terminal: float
    total: float


def cost(p: ProblemSpec, t: float, x: Segment, u: ControlSignal) -> CostReport:
    """J(t, x, u): left-endpoint sum of the running cost plus the terminal cost."""
    tr = solve_euler(p, t, x, u)
    times, states = tr.times, tr.values
    running = 0.0
    for k, v in enumerate(u.values):
        running += float(p.running_cost(times[k], states[k], v)) * p.dt
    terminal = float(p.terminal_cost(states[-1]))
    return CostReport(running, terminal, running + terminal)


def drift_at_present(p: ProblemSpec, t: float, x: Segment, u: Any) -> np.ndarray:
    """F(t, x(0), (a, x)_H, u) + b(t) x(-tau): the velocity of the theta = 0 atom."""
    y = h_inner(p.weight_segment, x)
    f = np.asarray(p.drift(t, x.present, y, u), dtype=float).reshape(p.dim)
    return f + np.atleast_2d(p.delay(t)) @ x.oldest


def hamiltonian(p: ProblemSpec, t: float, x: Segment, p0) -> Tuple[float, Any]:
    """Minimum over U of drift . p0 + q(t, x(0), u), with its first minimizer.

    ``p0`` is the gradient in the present-value direction; the pairing with
    the atom at theta = 0 reduces to a Euclidean inner product.
    """
    p0 = np.broadcast_to(np.asarray(p0, dtype=float), (p.dim,))
    y = h_inner(p.weight_segment, x)
    delay_part = np.atleast_2d(p.delay(t)) @ x.oldest
    best, arg = np.inf, None
    for u in p.controls:
        f = np.asarray(p.drift(t, x.present, y, u), dtype=float).reshape(p.dim) + delay_part
        val = float(f @ p0) + float(p.running_cost(t, x.present, u))
        if val < best:
            best, arg = val, u
    return best, arg
