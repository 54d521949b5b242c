"""Doubling of variables: penalty, auxiliary function, left maximization, diagnostics.

All suprema run over a finite universe of quad points: the start point and
its splices with grid times crossed with a candidate segment family, in both
the (t, x) and the (s, y) slot.  A point Q is a future extension of P when Q
is the splice of P with Q's own timed segment, i.e. Q's history agrees with
P's path.  That relation is reflexive and transitive, so the future sets are
nested and the halving step of the left maximization is exact on the universe.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .candidates import CandidateSet
from .control_problem import hamiltonian
from .delay_dynamics import ProblemSpec
from .errors import ConfigError
from .segment_space import (
    Segment,
    TimedSegment,
    _b_nodes,
    b_gram,
    b_norm_sq,
    concat,
    h_inner,
    w12_norm,
)

Functional = Callable[[float, Segment], float]


@dataclass(frozen=True)
class QuadPoint:
    t: float
    x: Segment
    s: float
    y: Segment

    def __post_init__(self):
        self.x.check_grid(self.y)

    @property
    def left(self) -> TimedSegment:
        return TimedSegment(self.t, self.x)

    @property
    def right(self) -> TimedSegment:
        return TimedSegment(self.s, self.y)


def concat_quad(base: QuadPoint, head: QuadPoint) -> QuadPoint:
    a = concat(base.left, head.left)
    b = concat(base.right, head.right)
    return QuadPoint(a.time, a.segment, b.time, b.segment)


@dataclass(frozen=True)
class DoublingConfig:
    """Penalty weights of the doubling argument.

    ``epsilon`` is the requested value; ``epsilon_used`` is the value after
    clamping to 9 L^2 eps / (8 mu T (1 + L)^2) <= c / 2.
    """

    alpha: float
    epsilon: float
    epsilon_used: float
    delta: float
    mu: float
    c_bar: float
    a_bar: float
    c: float
    horizon: float
    clamped: bool

    @classmethod
    def from_problem(cls, p: ProblemSpec, alpha: float, epsilon: float = 1e-3, delta: float = 1e-2) -> "DoublingConfig":
        if not (alpha > 0 and epsilon > 0 and delta > 0):
            raise ConfigError("alpha, epsilon and delta must be positive")
        T, L = p.horizon, p.lipschitz
        c_bar = 1.0 + p.tau * w12_norm(p.weight_segment) + p.sup_delay()
        mu = 1.0 + 1.0 / (4.0 * T * (1.0 + L) ** 2 * c_bar ** 2)
        a_bar = min(1.0 / (8.0 * (1.0 + L) ** 2 * c_bar ** 2), p.tau / 2.0)
        c = delta / T ** 2
        eps_max = 4.0 * c * mu * T * (1.0 + L) ** 2 / (9.0 * L ** 2) if L > 0 else math.inf
        used = min(epsilon, eps_max)
        return cls(alpha, epsilon, used, delta, mu, c_bar, a_bar, c, T, used < epsilon)

    def with_alpha(self, alpha: float) -> "DoublingConfig":
        if not alpha > 0:
            raise ConfigError("alpha must be positive")
        return DoublingConfig(alpha, self.epsilon, self.epsilon_used, self.delta, self.mu, self.c_bar,
                              self.a_bar, self.c, self.horizon, self.clamped)

    def weight(self, t: float) -> float:
        mt = self.mu * self.horizon
        return self.epsilon_used * (mt - t) / mt


def doubling_distance(pt: QuadPoint) -> float:
    """|x(0) - y(0)|^2 + |x - y|_B^2 + |s - t|^2."""
    dz = pt.x.present - pt.y.present
    return float(dz @ dz) + b_norm_sq(pt.x - pt.y) + (pt.s - pt.t) ** 2


def _size(x: Segment) -> float:
    return h_inner(x, x) + float(x.present @ x.present)


def psi(W: Functional, V: Functional, cfg: DoublingConfig, pt: QuadPoint) -> float:
    """W(t,x) - V(s,y) - alpha d / 2 - the two epsilon growth penalties."""
    return (W(pt.t, pt.x) - V(pt.s, pt.y) - 0.5 * cfg.alpha * doubling_distance(pt)
            - cfg.weight(pt.t) * _size(pt.x) - cfg.weight(pt.s) * _size(pt.y))


def strict_subsolution(W: Functional, delta: float) -> Functional:
    """W - delta / t; turns a subsolution into a strict one with slack delta / T^2."""
    if not delta > 0:
        raise ValueError("delta must be positive")

    def Wd(t, x):
        return -math.inf if t <= 0 else W(t, x) - delta / t

    return Wd


# --- finite universe ---------------------------------------------------


@dataclass
class _Side:
    """Distinct timed segments of one slot, with cached features."""

    times: np.ndarray
    segs: list
    present: np.ndarray
    nodes: np.ndarray
    size: np.ndarray
    cells: np.ndarray

    @classmethod
    def build(cls, start: TimedSegment, candidates: CandidateSet):
        items, seen = [start], {(round(start.time / start.segment.dt), start.segment.key())}
        for t in candidates.times:
            if t < start.time - 1e-12:
                continue
            for seg in candidates.segments:
                ts = concat(start, TimedSegment(t, seg))
                k = (round(ts.time / seg.dt), ts.segment.key())
                if k not in seen:
                    seen.add(k)
                    items.append(ts)
        head, rest = items[0], items[1:]
        rest.sort(key=lambda ts: ts.time)  # stable: family order within a time
        items = [head] + rest
        segs = [ts.segment for ts in items]
        dt = start.segment.dt
        vals = np.stack([s.values for s in segs])
        return cls(
            times=np.array([ts.time for ts in items]),
            segs=segs,
            present=vals[:, -1, :],
            nodes=np.stack([_b_nodes(v, dt) for v in vals]),
            size=np.array([_size(s) for s in segs]),
            cells=vals[:, :-1, :],
        )

    def __len__(self):
        return len(self.segs)

    def future_mask(self, i: int) -> np.ndarray:
        """Elements whose history agrees with the path of element i."""
        dt = self.segs[0].dt
        m = self.segs[0].m
        j = np.rint((self.times - self.times[i]) / dt).astype(int)
        ok = j >= 0
        base = self.cells[i]
        for k in np.nonzero(ok)[0]:
            jk = j[k]
            if jk < m and not np.array_equal(self.cells[k, : m - jk], base[jk:]):
                ok[k] = False
        return ok


@dataclass
class _Table:
    """A quad functional over the product of the two sides, as a dense matrix."""

    left: _Side
    right: _Side
    values: np.ndarray


def _psi_parts(W, V, cfg, left: _Side, right: _Side, gram: np.ndarray):
    """Split Psi into its alpha-free part and the doubling distance d."""
    w = np.array([W(t, x) for t, x in zip(left.times, left.segs)], dtype=float)
    v = np.array([V(s, y) for s, y in zip(right.times, right.segs)], dtype=float)
    if not (np.all(np.isfinite(w)) and np.all(np.isfinite(v))):
        raise ValueError("W or V is not finite on the candidate universe")

    # |x - y|_B^2 = |x|_B^2 + |y|_B^2 - 2 <x, y>_B via the node Gram matrix
    def self_b(side):
        return np.einsum("nid,ij,njd->n", side.nodes, gram, side.nodes)

    cross = np.einsum("aid,ij,bjd->ab", left.nodes, gram, right.nodes)
    bsq = np.maximum(self_b(left)[:, None] + self_b(right)[None, :] - 2.0 * cross, 0.0)
    dp = left.present[:, None, :] - right.present[None, :, :]
    d = np.einsum("abd,abd->ab", dp, dp) + bsq + (right.times[None, :] - left.times[:, None]) ** 2
    pen_l = np.array([cfg.weight(t) for t in left.times]) * left.size
    pen_r = np.array([cfg.weight(s) for s in right.times]) * right.size
    rest = w[:, None] - v[None, :] - pen_l[:, None] - pen_r[None, :]
    return rest, d


@dataclass(frozen=True)
class LeftMaxResult:
    point: QuadPoint
    value: float
    log: tuple  # (m_i, mbar_i) pairs
    universe_size: int

    @property
    def gaps(self):
        return [mb - mi for mi, mb in self.log]


def _left_maximize_table(table: _Table, start_idx, tol: float, max_iter: int):
    vals = table.values
    i, j = start_idx
    log = []
    for _ in range(max_iter):
        m_i = float(vals[i, j])
        fi, fj = table.left.future_mask(i), table.right.future_mask(j)
        sub = vals[np.ix_(fi, fj)]
        mbar = float(sub.max())
        log.append((m_i, mbar))
        if mbar - m_i <= tol:
            return (i, j), log
        # scan order: left slot index, then right slot index
        target = 0.5 * (m_i + mbar)
        rows, cols = np.nonzero(fi)[0], np.nonzero(fj)[0]
        hit = np.argwhere(sub >= target)[0]
        i, j = int(rows[hit[0]]), int(cols[hit[1]])
    raise RuntimeError("left maximization did not terminate")


def left_maximize_quad(v: Callable[[QuadPoint], float], start: QuadPoint, candidates: CandidateSet,
                       tol: float = 1e-9, max_iter: int = 200) -> LeftMaxResult:
    """Left maximization of an arbitrary quad functional over the candidate universe."""
    if len(candidates.times) == 0 or len(candidates.segments) == 0:
        raise ValueError("candidate set is empty")
    left = _Side.build(start.left, candidates)
    right = _Side.build(start.right, candidates)
    vals = np.empty((len(left), len(right)))
    for a in range(len(left)):
        for b in range(len(right)):
            vals[a, b] = v(QuadPoint(left.times[a], left.segs[a], right.times[b], right.segs[b]))
    if not np.all(np.isfinite(vals)):
        raise ValueError("functional is not finite on the candidate universe")
    (i, j), log = _left_maximize_table(_Table(left, right, vals), (0, 0), tol, max_iter)
    pt = QuadPoint(left.times[i], left.segs[i], right.times[j], right.segs[j])
    return LeftMaxResult(pt, float(vals[i, j]), tuple(log), vals.size)


def left_maximize(W: Functional, V: Functional, cfg: DoublingConfig, start: QuadPoint,
                  candidates: CandidateSet, tol: float = 1e-9, max_iter: int = 200) -> LeftMaxResult:
    """Left maximization of Psi, vectorized over the product universe."""
    if len(candidates.times) == 0 or len(candidates.segments) == 0:
        raise ValueError("candidate set is empty")
    left = _Side.build(start.left, candidates)
    right = _Side.build(start.right, candidates)
    rest, d = _psi_parts(W, V, cfg, left, right, b_gram(start.x.m, start.x.dt))
    table = _Table(left, right, rest - 0.5 * cfg.alpha * d)
    (i, j), log = _left_maximize_table(table, (0, 0), tol, max_iter)
    pt = QuadPoint(left.times[i], left.segs[i], right.times[j], right.segs[j])
    return LeftMaxResult(pt, float(table.values[i, j]), tuple(log), table.values.size)


# --- diagnostics -------------------------------------------------------


@dataclass(frozen=True)
class DiagnosticRow:
    alpha: float
    half_alpha_d: float
    alpha_b_gap_sq: float
    t_hat: float
    s_hat: float
    x0_hat: np.ndarray
    y0_hat: np.ndarray
    interior: bool
    hamiltonian_gap: float
    psi_max: float
    iterations: int


@dataclass(frozen=True)
class ComparisonReport:
    rows: tuple
    penalty_decreasing: bool
    b_gap_decreasing: bool
    penalty_small: bool
    interior_tail: bool
    threshold_index: Optional[int]
    epsilon_clamped: bool

    @property
    def converged(self) -> bool:
        return self.penalty_decreasing and self.b_gap_decreasing and self.penalty_small and self.interior_tail


def _nonincreasing(xs, rtol=1e-9):
    return all(b <= a + rtol * max(1.0, abs(a)) for a, b in zip(xs, xs[1:]))


def comparison_diagnostics(p: ProblemSpec, W: Functional, V: Functional, alphas: Sequence[float],
                           radius: float, candidates: CandidateSet, start: Optional[QuadPoint] = None,
                           epsilon: float = 1e-3, delta: float = 1e-2, tol: float = 1e-9) -> ComparisonReport:
    """Run the left maximization of Psi along an increasing alpha schedule.

    The penalty alpha d / 2 and alpha |b(t)x(-tau) - b(s)y(-tau)|^2 should both
    fall toward zero; the maximizers should stay at t, s < T with |x(0)|, |y(0)| < M
    from some index on (the fitted threshold).
    """
    alphas = [float(a) for a in alphas]
    if not alphas or any(b <= a for a, b in zip(alphas, alphas[1:])):
        raise ValueError("alpha schedule must be nonempty and increasing")
    if start is None:
        zero = Segment.constant(np.zeros(p.dim), p.tau, p.dt)
        start = QuadPoint(0.0, zero, 0.0, zero)
    cfg0 = DoublingConfig.from_problem(p, alphas[0], epsilon, delta)
    left = _Side.build(start.left, candidates)
    right = _Side.build(start.right, candidates)
    gram = b_gram(p.m, p.dt)
    wc, vc = {}, {}

    def cached(f, cache):
        def g(t, x):
            k = (round(t / p.dt), x.key())
            if k not in cache:
                cache[k] = float(f(t, x))
            return cache[k]
        return g

    rest, dist = _psi_parts(cached(W, wc), cached(V, vc), cfg0, left, right, gram)
    rows = []
    for a in alphas:
        table = _Table(left, right, rest - 0.5 * a * dist)
        (i, j), log = _left_maximize_table(table, (0, 0), tol, 500)
        pt = QuadPoint(left.times[i], left.segs[i], right.times[j], right.segs[j])
        d = doubling_distance(pt)
        bx = np.atleast_2d(p.delay(pt.t)) @ pt.x.oldest
        by = np.atleast_2d(p.delay(pt.s)) @ pt.y.oldest
        bgap = a * float((bx - by) @ (bx - by))
        T = p.horizon
        interior = (pt.t < T - 1e-12 and pt.s < T - 1e-12
                    and np.linalg.norm(pt.x.present) < radius and np.linalg.norm(pt.y.present) < radius)
        hgap = math.nan
        if pt.t < T - 1e-12 and pt.s < T - 1e-12:
            # Hamiltonian difference at the penalty gradient alpha (x(0) - y(0))
            grad = a * (pt.x.present - pt.y.present)
            hgap = hamiltonian(p, pt.s, pt.y, grad)[0] - hamiltonian(p, pt.t, pt.x, grad)[0]
        rows.append(DiagnosticRow(a, 0.5 * a * d, bgap, pt.t, pt.s, pt.x.present.copy(), pt.y.present.copy(),
                                  bool(interior), float(hgap), float(table.values[i, j]), len(log)))

    pen = [r.half_alpha_d for r in rows]
    bg = [r.alpha_b_gap_sq for r in rows]
    tail = slice(max(0, len(rows) - 3), None)
    small = pen[-1] <= 0.1 * pen[0] if pen[0] > 0 else pen[-1] <= 1e-12
    threshold = None
    for k in range(len(rows)):
        if all(r.interior for r in rows[k:]):
            threshold = k
            break
    return ComparisonReport(
        rows=tuple(rows),
        penalty_decreasing=_nonincreasing(pen[tail]),
        b_gap_decreasing=_nonincreasing(bg[tail]),
        penalty_small=bool(small),
        interior_tail=threshold is not None,
        threshold_index=threshold,
        epsilon_clamped=cfg0.clamped,
    )
