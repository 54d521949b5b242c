"""Controlled delay equations on the segment space.

    dX(s) = F(s, X(s), (a, X_s)_H, u(s)) ds + b(s) X(s - tau) ds,   X_t = x.

Two solvers share one time grid: an explicit Euler march and the Picard
fixed-point iteration of the integral form.  Because the Picard integrals use
the same left-endpoint rule, its fixed point is the Euler solution; the pair
cross-validates each other.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Any, Callable, Optional, Sequence, Union

import numpy as np

from .errors import BlowUpError, ConvergenceError, GridError
from .segment_space import (
    Segment,
    b_norm,
    grid_index,
    h_norm,
    sup_head_integral,
    sup_tail_integral,
    w12_norm,
)

BLOWUP_LIMIT = 1e12

Drift = Callable[[float, np.ndarray, float, Any], np.ndarray]
DelayMatrix = Callable[[float], np.ndarray]
RunningCost = Callable[[float, np.ndarray, Any], float]
TerminalCost = Callable[[np.ndarray], float]


def _zero_delay(dim):
    z = np.zeros((dim, dim))
    return lambda s: z


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """Coefficients of the control problem plus its discretization.

    ``weight`` is either a :class:`Segment` on the ``dt`` grid or a callable
    ``theta -> R^d`` (resampled whenever the grid is refined).  ``None`` means
    a = 0.  ``controls`` is the finite control set U, in the order used for
    tie-breaking.
    """

    dim: int
    tau: float
    horizon: float
    dt: float
    drift: Drift
    controls: tuple
    lipschitz: float
    weight: Union[Segment, Callable[[float], Any], None] = None
    delay: Optional[DelayMatrix] = None
    running_cost: RunningCost = field(default=lambda s, x, u: 0.0)
    terminal_cost: TerminalCost = field(default=lambda x: 0.0)
    delay_lipschitz: float = 0.0
    require_hyp: bool = True
    name: str = "custom"

    def __post_init__(self):
        if not self.tau > 0 or not self.horizon > 0 or not self.dt > 0:
            raise ValueError("tau, horizon and dt must be positive")
        if len(self.controls) == 0:
            raise ValueError("control set U must be nonempty")
        if not self.lipschitz > 0:
            raise ValueError("declared Lipschitz constant must be positive")
        grid_index(self.tau, self.dt, "tau")
        grid_index(self.horizon, self.dt, "horizon")
        object.__setattr__(self, "controls", tuple(self.controls))
        if self.delay is None:
            object.__setattr__(self, "delay", _zero_delay(self.dim))
        a = self.weight_segment
        if a.dim != self.dim:
            raise ValueError(f"weight has dim {a.dim}, problem has dim {self.dim}")
        if self.require_hyp and np.any(a.oldest != 0.0):
            raise ValueError("weight must vanish at theta = -tau")

    @property
    def m(self) -> int:
        return grid_index(self.tau, self.dt, "tau")

    @property
    def weight_segment(self) -> Segment:
        w = self.weight
        if w is None:
            return Segment.constant(np.zeros(self.dim), self.tau, self.dt)
        if isinstance(w, Segment):
            if abs(w.dt - self.dt) > 1e-12 * self.dt:
                k = grid_index(w.dt, self.dt, "weight grid")
                return w.refine(k)
            return w
        return Segment.from_function(w, self.tau, self.dt)

    def steps(self, t: float) -> int:
        n = grid_index(self.horizon - t, self.dt, "T - t")
        if n < 0:
            raise GridError(f"start time {t} is past the horizon {self.horizon}")
        return n

    def time_index(self, t: float) -> int:
        return grid_index(t, self.dt, "t")

    def time_at(self, index: int) -> float:
        return index * self.dt

    def with_dt(self, dt: float) -> "ProblemSpec":
        return replace(self, dt=dt)

    def sup_delay(self) -> float:
        """sup_s |b(s)| (spectral norm), sampled on the time grid."""
        n = self.steps(0.0)
        return max(float(np.linalg.norm(np.atleast_2d(self.delay(k * self.dt)), 2)) for k in range(n + 1))

    def picard_beta(self) -> float:
        """Exponential weight making the Picard map a 1/2-contraction."""
        a = self.weight_segment
        L, bsup = self.lipschitz, self.sup_delay()
        nominal = L + bsup + self.delay_lipschitz * np.sqrt(self.horizon) + 2 * L * self.tau * w12_norm(a)
        l1 = a.dt * float(np.sum(np.linalg.norm(a.cells, axis=1)))
        return 2.0 * max(nominal, L * (1.0 + l1) + bsup)


@dataclass(frozen=True, eq=False)
class ControlSignal:
    """Piecewise-constant control: ``values[k]`` acts on [start + k dt, start + (k+1) dt)."""

    start: float
    dt: float
    values: tuple

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(self.values))

    @classmethod
    def constant(cls, u, start: float, n_steps: int, dt: float) -> "ControlSignal":
        return cls(start, dt, (u,) * n_steps)

    def __len__(self):
        return len(self.values)

    def restrict(self, s: float) -> "ControlSignal":
        """The tail of the signal on [s, end)."""
        k = grid_index(s - self.start, self.dt, "restriction time")
        if not 0 <= k <= len(self.values):
            raise GridError(f"restriction time {s} outside the signal")
        return ControlSignal(s, self.dt, self.values[k:])

    def refine(self, factor: int = 2) -> "ControlSignal":
        return ControlSignal(self.start, self.dt / factor, tuple(v for v in self.values for _ in range(factor)))


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Solution on [t, T] together with its initial history.

    ``path`` has ``m + n + 1`` rows: the ``m`` history cells followed by the
    states X(t), X(t + dt), ..., X(T).  The segment X_s is the window of
    ``m + 1`` rows ending at X(s).
    """

    start: float
    dt: float
    tau: float
    path: np.ndarray
    control: ControlSignal
    iteration_gaps: tuple = ()

    @property
    def m(self) -> int:
        return grid_index(self.tau, self.dt, "tau")

    @property
    def history(self) -> Segment:
        return Segment(self.path[: self.m + 1], self.tau, self.dt)

    @property
    def values(self) -> np.ndarray:
        return self.path[self.m:]

    @property
    def times(self) -> np.ndarray:
        i0 = grid_index(self.start, self.dt, "t")
        return (i0 + np.arange(self.values.shape[0])) * self.dt

    @property
    def end(self) -> float:
        return self.times[-1]


def segment_at(tr: Trajectory, s: float) -> Segment:
    """X_s(theta) = X(s + theta), with history values before the start time."""
    k = grid_index(s - tr.start, tr.dt, "s - t")
    n = tr.values.shape[0] - 1
    if not 0 <= k <= n:
        raise GridError(f"s={s} outside [{tr.start}, {tr.end}]")
    return Segment(tr.path[k: k + tr.m + 1], tr.tau, tr.dt)


def _check_inputs(p: ProblemSpec, t: float, x: Segment, u: ControlSignal) -> int:
    if x.dim != p.dim:
        raise GridError(f"history has dim {x.dim}, problem has dim {p.dim}")
    if abs(x.dt - p.dt) > 1e-12 * p.dt or x.m != p.m:
        raise GridError("history grid does not match the problem time grid")
    n = p.steps(t)
    p.time_index(t)
    if len(u) != n:
        raise GridError(f"control has {len(u)} steps, horizon needs {n}")
    if abs(u.start - t) > 1e-9 * max(1.0, abs(t)) or abs(u.dt - p.dt) > 1e-12 * p.dt:
        raise GridError("control signal is not aligned with the time grid")
    for v in u.values:
        if not any(np.array_equal(np.asarray(v), np.asarray(c)) for c in p.controls):
            raise ValueError(f"control value {v!r} is not in U")
    return n


class _Rates:
    """Evaluates the right-hand side on a window of the path."""

    def __init__(self, p: ProblemSpec):
        self.p = p
        self.a = p.weight_segment.cells
        self.m = p.m
        self.dt = p.dt

    def memory(self, window: np.ndarray) -> float:
        return float(self.dt * np.sum(self.a * window[: self.m]))

    def delay_term(self, s: float, window: np.ndarray) -> np.ndarray:
        return np.atleast_2d(self.p.delay(s)) @ window[0]

    def drift(self, s: float, window: np.ndarray, y: float, u) -> np.ndarray:
        return np.asarray(self.p.drift(s, window[-1], y, u), dtype=float).reshape(self.p.dim)

    def __call__(self, s: float, window: np.ndarray, u) -> np.ndarray:
        return self.drift(s, window, self.memory(window), u) + self.delay_term(s, window)


def _check_state(value: np.ndarray, s: float) -> None:
    if not np.all(np.isfinite(value)) or np.linalg.norm(value) > BLOWUP_LIMIT:
        raise BlowUpError(f"state left the admissible range at s={s}")


def solve_euler(p: ProblemSpec, t: float, x: Segment, u: ControlSignal) -> Trajectory:
    """Explicit Euler march of the state equation on the ``p.dt`` grid."""
    n = _check_inputs(p, t, x, u)
    m, dt = p.m, p.dt
    i0 = p.time_index(t)
    rates = _Rates(p)
    path = np.empty((m + n + 1, p.dim))
    path[: m + 1] = x.values
    for k in range(n):
        s = (i0 + k) * dt
        nxt = path[m + k] + dt * rates(s, path[k: k + m + 1], u.values[k])
        _check_state(nxt, s + dt)
        path[m + k + 1] = nxt
    return Trajectory(t, dt, p.tau, path, u)


def solve_picard(
    p: ProblemSpec,
    t: float,
    x: Segment,
    u: ControlSignal,
    tol: float = 1e-10,
    max_iter: int = 500,
) -> Trajectory:
    """Fixed point of the integral map, iterated from X = x(0).

    Stops once the exponentially weighted sup-norm of successive differences,
    sup_s exp(-beta (s - t)) |X_{k+1}(s) - X_k(s)|, drops to ``tol``.  The gaps
    are recorded in ``Trajectory.iteration_gaps``.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    n = _check_inputs(p, t, x, u)
    m, dt = p.m, p.dt
    i0 = p.time_index(t)
    rates = _Rates(p)
    beta = p.picard_beta()
    weights = np.exp(-beta * dt * np.arange(n + 1))

    path = np.empty((m + n + 1, p.dim))
    path[: m + 1] = x.values
    path[m + 1:] = x.present
    gaps = []
    for _ in range(max_iter):
        incr = np.empty((n, p.dim))
        for k in range(n):
            incr[k] = dt * rates((i0 + k) * dt, path[k: k + m + 1], u.values[k])
        new = np.empty((n + 1, p.dim))
        new[0] = x.present
        new[1:] = x.present + np.cumsum(incr, axis=0)
        if not np.all(np.isfinite(new)) or np.max(np.linalg.norm(new, axis=1)) > BLOWUP_LIMIT:
            raise BlowUpError("Picard iterate left the admissible range")
        gap = float(np.max(weights * np.linalg.norm(new - path[m:], axis=1)))
        gaps.append(gap)
        path[m:] = new
        if gap <= tol:
            return Trajectory(t, dt, p.tau, path, u, tuple(gaps))
    raise ConvergenceError(f"Picard iteration did not reach tol={tol} in {max_iter} iterations", gap=gaps[-1])


# --- estimate reports ------------------------------------------------------


def _ratio_stable(a: float, b: float, factor: float = 2.0) -> bool:
    if not (np.isfinite(a) and np.isfinite(b)):
        return False
    if a == 0.0 and b == 0.0:
        return True
    lo, hi = sorted((abs(a), abs(b)))
    return lo > 0 and hi / lo < factor


@dataclass(frozen=True)
class GrowthReport:
    """Fitted constant of sup|X| <= C (1 + |x(0)| + |x|_H) at dt and dt/2."""

    ratios: tuple
    constant: float
    constant_refined: float
    stable: bool


def _growth_ratios(p, samples):
    out = []
    for t, x, u in samples:
        tr = solve_euler(p, t, x, u)
        sup = float(np.max(np.linalg.norm(tr.values, axis=1)))
        out.append(sup / (1.0 + float(np.linalg.norm(x.present)) + h_norm(x)))
    return out


def growth_bound_report(p: ProblemSpec, samples: Sequence) -> GrowthReport:
    """Check the linear-growth bound of the state over (t, x, u) samples."""
    if not samples:
        raise ValueError("need at least one sample")
    coarse = _growth_ratios(p, samples)
    fine = _growth_ratios(p.with_dt(p.dt / 2), [(t, x.refine(2), u.refine(2)) for t, x, u in samples])
    c, cf = max(coarse), max(fine)
    return GrowthReport(tuple(coarse), c, cf, _ratio_stable(c, cf))


@dataclass(frozen=True)
class ContinuityReport:
    """Fitted constants for the two continuity estimates of the state.

    ``c_time`` fits sup|X1 - X2| against
    (1 + |x1(0)| + |x2(0)| + |x1|_H + |x2|_H)(|x1(0) - x2(0)| + |t2 - t1|^(1/2) + sup_l |int_l^0 (x1 - x2)|);
    ``c_same`` fits same-start pairs against |x1(0) - x2(0)| + |x1 - x2|_H.
    """

    lhs: tuple
    factors: tuple
    c_time: float
    c_time_refined: float
    c_same: float
    c_same_refined: float
    zero_factor_ok: bool
    stable: bool


def _continuity_fit(p, pairs, controls):
    lhs_all, fac_all = [], []
    c_time = c_same = 0.0
    zero_ok = True
    for (t1, x1), (t2, x2) in pairs:
        t0, tl = min(t1, t2), max(t1, t2)
        n0 = p.steps(t0)
        sigs = controls if controls is not None else [ControlSignal.constant(v, t0, n0, p.dt) for v in p.controls]
        lhs = 0.0
        for sig in sigs:
            tr1 = solve_euler(p, t1, x1, sig.restrict(t1))
            tr2 = solve_euler(p, t2, x2, sig.restrict(t2))
            k1 = grid_index(tl - t1, p.dt)
            k2 = grid_index(tl - t2, p.dt)
            diff = tr1.values[k1:] - tr2.values[k2:]
            lhs = max(lhs, float(np.max(np.linalg.norm(diff, axis=1))))
        dx = x1 - x2
        jump = float(np.linalg.norm(x1.present - x2.present))
        pref = 1.0 + float(np.linalg.norm(x1.present)) + float(np.linalg.norm(x2.present)) + h_norm(x1) + h_norm(x2)
        factor = pref * (jump + np.sqrt(abs(t2 - t1)) + sup_tail_integral(dx))
        lhs_all.append(lhs)
        fac_all.append(factor)
        if factor > 0:
            c_time = max(c_time, lhs / factor)
        elif lhs > 0:
            zero_ok = False
        if t1 == t2:
            same = jump + h_norm(dx)
            if same > 0:
                c_same = max(c_same, lhs / same)
            elif lhs > 0:
                zero_ok = False
    return lhs_all, fac_all, c_time, c_same, zero_ok


def continuity_report(p: ProblemSpec, pairs: Sequence, controls: Optional[Sequence[ControlSignal]] = None) -> ContinuityReport:
    """Fit the continuity constants over ((t1, x1), (t2, x2)) pairs, at dt and dt/2.

    ``controls`` default to the constant controls, one per element of U.
    """
    if not pairs:
        raise ValueError("need at least one pair")
    lhs, fac, ct, cs, ok = _continuity_fit(p, pairs, controls)
    fine_pairs = [((t1, x1.refine(2)), (t2, x2.refine(2))) for (t1, x1), (t2, x2) in pairs]
    fine_controls = None if controls is None else [c.refine(2) for c in controls]
    _, _, ctf, csf, okf = _continuity_fit(p.with_dt(p.dt / 2), fine_pairs, fine_controls)
    return ContinuityReport(
        tuple(lhs), tuple(fac), ct, ctf, cs, csf, ok and okf, _ratio_stable(ct, ctf) and _ratio_stable(cs, csf)
    )


def head_growth_factor(x: Segment) -> float:
    """1 + |x(0)| + sup_l |int_{-tau}^l x| + |x|_B, the sharper growth factor."""
    return 1.0 + float(np.linalg.norm(x.present)) + sup_head_integral(x) + b_norm(x)
