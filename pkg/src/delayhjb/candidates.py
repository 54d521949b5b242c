"""Finite candidate sets standing in for [s, T] x D_Qbar.

Touching conditions and the left maximization principle quantify over every
bounded right-continuous path with values in a closed ball.  Numerically we
scan a declared family instead: constant segments on a lattice of the ball,
caller-supplied segments (e.g. pieces of system trajectories), a few random
piecewise-constant probes, and, for every one of these, the present-value
jumps x + e 1_0 that move x(0) onto the lattice.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .delay_dynamics import ControlSignal, ProblemSpec, segment_at, solve_euler
from .segment_space import Segment, grid_index, sup_norm


@dataclass(frozen=True)
class CandidateSet:
    times: tuple
    segments: tuple

    def __len__(self):
        return len(self.times) * len(self.segments)


def ball_lattice(dim: int, radius: float, step: float, extra: Iterable = ()) -> list:
    """Points of step * Z^dim inside the closed ball, plus ``extra`` points inside it."""
    n = int(np.floor(radius / step + 1e-12))
    ticks = step * np.arange(-n, n + 1)
    pts = [np.array(c) for c in itertools.product(ticks, repeat=dim) if np.linalg.norm(c) <= radius + 1e-12]
    for e in extra:
        e = np.atleast_1d(np.asarray(e, dtype=float))
        if np.linalg.norm(e) <= radius + 1e-12 and not any(np.array_equal(e, q) for q in pts):
            pts.append(e)
    return pts


def trajectory_segments(p: ProblemSpec, t: float, z: Segment, radius: float) -> list:
    """Segments X_s of constant-control trajectories from (t, z) that stay in the ball."""
    n = p.steps(t)
    out = []
    for u in p.controls:
        tr = solve_euler(p, t, z, ControlSignal.constant(u, t, n, p.dt))
        for k in range(1, n + 1):
            seg = segment_at(tr, t + k * p.dt)
            if sup_norm(seg) <= radius + 1e-12:
                out.append(seg)
    return out


def build_candidates(
    p: ProblemSpec,
    radius: float,
    step: float,
    t_min: float = 0.0,
    time_stride: int = 1,
    extra_segments: Sequence[Segment] = (),
    extra_points: Iterable = (),
    probes: int = 0,
    jumps: bool = True,
    seed: Optional[int] = 0,
) -> CandidateSet:
    """Grid times in [t_min, T] and a deduplicated segment family inside the ball."""
    i0 = grid_index(t_min, p.dt, "t_min")
    n = p.steps(t_min)
    times = tuple((i0 + k) * p.dt for k in range(0, n + 1, time_stride))
    if times[-1] != (i0 + n) * p.dt:
        times = times + ((i0 + n) * p.dt,)

    pts = ball_lattice(p.dim, radius, step, extra_points)
    base = [Segment.constant(c, p.tau, p.dt) for c in pts]
    base += [s for s in extra_segments if sup_norm(s) <= radius + 1e-12]
    rng = np.random.default_rng(seed)
    for _ in range(probes):
        cuts = np.sort(rng.integers(0, p.m + 1, size=2))
        vals = np.empty((p.m + 1, p.dim))
        for lo, hi in zip((0, cuts[0], cuts[1]), (cuts[0], cuts[1], p.m + 1)):
            vals[lo:hi] = pts[rng.integers(len(pts))]
        base.append(Segment(vals, p.tau, p.dt))

    family, seen = [], set()

    def add(seg):
        k = seg.key()
        if k not in seen:
            seen.add(k)
            family.append(seg)

    for seg in base:
        add(seg)
        if jumps:
            for e in pts:
                add(seg.with_present(e))
    return CandidateSet(times, tuple(family))
