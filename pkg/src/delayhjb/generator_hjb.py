"""Weak infinitesimal generator, test functions, HJB residuals and viscosity checks.

The generator acts along the hold-constant extension of a segment:

    S(f)(x) = lim_{h -> 0+} (f(x_hat_h) - f(x)) / h.

Test functions have the structured form phi(t, x) = phi0(t, x(0), x).  The
Hamiltonian pairs the gradient only with the atom at theta = 0, so a test
function must expose its present-value gradient; the path gradient is kept
for diagnostics.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .candidates import CandidateSet
from .control_problem import hamiltonian
from .delay_dynamics import ProblemSpec
from .segment_space import (
    Segment,
    TimedSegment,
    b_inner,
    b_norm_sq,
    concat,
    extend_hat,
    h_inner,
    sup_norm,
)

Functional = Callable[[float, Segment], float]


def default_h_schedule(x: Segment) -> list:
    """tau/8, tau/16, tau/32, tau/64, keeping only values on the segment grid."""
    hs = []
    for k in (8, 16, 32, 64):
        h = x.tau / k
        if h >= x.dt * (1 - 1e-12) and abs(h / x.dt - round(h / x.dt)) < 1e-9:
            hs.append(h)
    if len(hs) < 2:
        hs = [j * x.dt for j in (4, 2, 1) if j <= x.m]
    return hs


@dataclass(frozen=True)
class GeneratorEstimate:
    """Difference quotients of S(f)(x) along a decreasing h schedule.

    ``estimate`` is the Richardson extrapolation of the last two quotients
    (first-order error model); ``rate`` is the observed order of the quotient
    sequence from its last three terms (``inf`` when the last difference vanishes).
    """

    h: tuple
    quotients: tuple
    estimate: float
    rate: float


def s_finite_difference(f: Callable[[Segment], float], x: Segment, h_list: Optional[Sequence[float]] = None) -> GeneratorEstimate:
    hs = list(h_list) if h_list is not None else default_h_schedule(x)
    if len(hs) < 2 or any(b >= a for a, b in zip(hs, hs[1:])):
        raise ValueError("h_list needs at least two strictly decreasing values")
    f0 = float(f(x))
    if not np.isfinite(f0):
        raise ValueError("functional is not finite at x")
    qs = []
    for h in hs:
        fh = float(f(extend_hat(x, h)))
        if not np.isfinite(fh):
            raise ValueError(f"functional is not finite at the extension h={h}")
        qs.append((fh - f0) / h)
    h1, h2 = hs[-2], hs[-1]
    est = qs[-1] + (qs[-1] - qs[-2]) * h2 / (h1 - h2)
    rate = float("nan")
    if len(qs) >= 3:
        d1, d2 = abs(qs[-3] - qs[-2]), abs(qs[-2] - qs[-1])
        if d2 == 0.0:
            rate = float("inf")
        elif d1 > 0.0:
            rate = float(np.log(d1 / d2) / np.log(hs[-2] / hs[-1]))
    return GeneratorEstimate(tuple(hs), tuple(qs), float(est), rate)


def s_closed_h(g0_prime: Callable[[float, float], float], t: float, x: Segment) -> float:
    """S of g0(t, |x|_H^2): g0'(t, |x|_H^2) (|x(0)|^2 - |x(-tau)|^2)."""
    r = h_inner(x, x)
    return float(g0_prime(t, r)) * float(x.present @ x.present - x.oldest @ x.oldest)


def s_closed_b(psi0_prime: Callable[[float], float], x: Segment, a_hat: Segment) -> float:
    """S of psi0(|x - a_hat|_B^2): 2 psi0'(.) (B(x - a_hat), x(0) 1 - x)_H."""
    x.check_grid(a_hat)
    z = x - a_hat
    hold = Segment.constant(x.present, x.tau, x.dt)
    return 2.0 * float(psi0_prime(b_norm_sq(z))) * b_inner(z, hold - x)


# --- test functions -----------------------------------------------------


@dataclass(frozen=True, eq=False)
class TestFunction:
    """phi(t, x) = phi0(t, x(0), x) with its derivatives.

    ``generator`` is a closed form ``(t, x) -> S(phi)(t, x)``; when ``None`` the
    generator is estimated by finite differences.
    """

    __test__ = False

    value: Callable[[float, np.ndarray, Segment], float]
    time_derivative: Callable[[float, np.ndarray, Segment], float]
    grad_present: Callable[[float, np.ndarray, Segment], np.ndarray]
    generator: Optional[Callable[[float, Segment], float]] = None
    grad_path: Optional[Callable[[float, np.ndarray, Segment], Segment]] = None
    kind: str = "custom"

    def __call__(self, t: float, x: Segment) -> float:
        return float(self.value(t, x.present, x))

    def dt_at(self, t, x):
        return float(self.time_derivative(t, x.present, x))

    def grad_at(self, t, x):
        return np.atleast_1d(np.asarray(self.grad_present(t, x.present, x), dtype=float))

    def s_action(self, t: float, x: Segment, h_list=None) -> float:
        if self.generator is not None:
            return float(self.generator(t, x))
        return s_finite_difference(lambda z: self(t, z), x, h_list).estimate

    def __add__(self, other: "TestFunction") -> "TestFunction":
        gens = (self.generator, other.generator)
        gen = None
        if all(g is not None for g in gens):
            gen = lambda t, x: gens[0](t, x) + gens[1](t, x)  # noqa: E731
        return TestFunction(
            value=lambda t, x0, x: self.value(t, x0, x) + other.value(t, x0, x),
            time_derivative=lambda t, x0, x: self.time_derivative(t, x0, x) + other.time_derivative(t, x0, x),
            grad_present=lambda t, x0, x: np.add(self.grad_present(t, x0, x), other.grad_present(t, x0, x)),
            generator=gen,
            kind=f"{self.kind}+{other.kind}",
        )

    def scale(self, c: float) -> "TestFunction":
        gen = None if self.generator is None else (lambda t, x: c * self.generator(t, x))
        return TestFunction(
            value=lambda t, x0, x: c * self.value(t, x0, x),
            time_derivative=lambda t, x0, x: c * self.time_derivative(t, x0, x),
            grad_present=lambda t, x0, x: c * np.asarray(self.grad_present(t, x0, x), dtype=float),
            generator=gen,
            kind=self.kind if c == 1 else f"{c:g}*{self.kind}",
        )

    def __neg__(self) -> "TestFunction":
        return self.scale(-1.0)


def point_type(g, g_t, g_x) -> TestFunction:
    """phi = g(t, x(0)).  The hold extension never moves x(0), so S(phi) = 0."""
    return TestFunction(
        value=lambda t, x0, x: g(t, x0),
        time_derivative=lambda t, x0, x: g_t(t, x0),
        grad_present=lambda t, x0, x: g_x(t, x0),
        generator=lambda t, x: 0.0,
        kind="point",
    )


def h_type(g0, g0_t, g0_r) -> TestFunction:
    """phi = g0(t, |x|_H^2)."""
    return TestFunction(
        value=lambda t, x0, x: g0(t, h_inner(x, x)),
        time_derivative=lambda t, x0, x: g0_t(t, h_inner(x, x)),
        grad_present=lambda t, x0, x: np.zeros_like(np.atleast_1d(x0), dtype=float),
        generator=lambda t, x: s_closed_h(g0_r, t, x),
        grad_path=lambda t, x0, x: x * (2.0 * g0_r(t, h_inner(x, x))),
        kind="h",
    )


def b_type(psi0, psi0_prime, a_hat: Segment) -> TestFunction:
    """phi = psi0(|x - a_hat|_B^2), time independent."""
    return TestFunction(
        value=lambda t, x0, x: psi0(b_norm_sq(x - a_hat)),
        time_derivative=lambda t, x0, x: 0.0,
        grad_present=lambda t, x0, x: np.zeros_like(np.atleast_1d(x0), dtype=float),
        generator=lambda t, x: s_closed_b(psi0_prime, x, a_hat),
        kind="b",
    )


def time_type(l, l_prime) -> TestFunction:
    """phi = l(t); contributes only to the time derivative."""
    return TestFunction(
        value=lambda t, x0, x: l(t),
        time_derivative=lambda t, x0, x: l_prime(t),
        grad_present=lambda t, x0, x: np.zeros_like(np.atleast_1d(x0), dtype=float),
        generator=lambda t, x: 0.0,
        kind="time",
    )


def affine_present(grad, time_coef: float = 0.0, const: float = 0.0) -> TestFunction:
    """phi = grad . x(0) + time_coef * t + const."""
    g = np.atleast_1d(np.asarray(grad, dtype=float))
    return point_type(
        lambda t, x0: float(g @ np.atleast_1d(x0)) + time_coef * t + const,
        lambda t, x0: time_coef,
        lambda t, x0: g,
    )


# --- HJB residual and viscosity checks --------------------------------


def hjb_residual(p: ProblemSpec, tf: TestFunction, t: float, x: Segment, h_list=None) -> float:
    """d/dt phi + S(phi) + H(t, x, grad_x0 phi) at an interior time."""
    if t >= p.horizon - 1e-12 * max(1.0, p.horizon):
        raise ValueError("the HJB residual is only defined for t < T; check V(T, x) = phi(x(0)) instead")
    ham, _ = hamiltonian(p, t, x, tf.grad_at(t, x))
    return tf.dt_at(t, x) + tf.s_action(t, x, h_list) + ham


@dataclass(frozen=True, eq=False)
class TouchingCertificate:
    """Outcome of a sampled sub- or supersolution test at (s, z).

    A sampled certificate can only falsify: ``touching`` means no sampled
    extension beat (s, z) by more than the tolerance; ``valid`` means touching
    holds and the residual inequality is satisfied.
    """

    time: float
    point: Segment
    direction: str
    radius: float
    gap: float
    touching: bool
    residual: Optional[float]
    satisfied: Optional[bool]
    terminal_ok: bool
    n_sampled: int
    violating: Optional[TimedSegment] = None

    @property
    def valid(self) -> bool:
        return self.touching and bool(self.satisfied) and self.terminal_ok

    @property
    def consistent(self) -> bool:
        return self.terminal_ok and (not self.touching or bool(self.satisfied))


def _viscosity_check(p, W, tf, radius, candidates, s, z, tol, direction):
    if not float(np.linalg.norm(z.present)) < radius:
        raise ValueError("z(0) must lie in the open ball Q")
    if sup_norm(z) > radius + 1e-12:
        raise ValueError("z must take values in the closed ball")
    # sub: maximize W - phi; super: minimize W + phi, i.e. maximize -(W + phi)
    def objective(t, x):
        return W(t, x) - tf(t, x) if direction == "sub" else -(W(t, x) + tf(t, x))

    base = objective(s, z)
    best, arg, count = -np.inf, None, 0
    start = TimedSegment(s, z)
    for t in candidates.times:
        if t < s - 1e-12:
            continue
        for seg in candidates.segments:
            ext = concat(start, TimedSegment(t, seg))
            val = objective(ext.time, ext.segment)
            count += 1
            if val > best:
                best, arg = val, ext
    gap = max(best - base, 0.0)
    touching = gap <= tol

    terminal_ok = True
    T = p.horizon
    for seg in candidates.segments:
        wT, phiT = W(T, seg), float(p.terminal_cost(seg.present))
        if (direction == "sub" and wT > phiT + tol) or (direction == "super" and wT < phiT - tol):
            terminal_ok = False
            break

    residual = satisfied = None
    if touching:
        test = tf if direction == "sub" else -tf
        residual = hjb_residual(p, test, s, z)
        satisfied = residual >= -tol if direction == "sub" else residual <= tol
    return TouchingCertificate(
        s, z, direction, radius, gap, touching, residual, satisfied, terminal_ok, count,
        None if touching else arg,
    )


def subsolution_check(p: ProblemSpec, W: Functional, tf: TestFunction, radius: float,
                      candidates: CandidateSet, s: float, z: Segment, tol: float = 1e-9) -> TouchingCertificate:
    """Sampled subsolution test: if W - phi is maximal at (s, z) over the sampled
    extensions, require phi_t + S(phi) + H(s, z, grad phi) >= 0."""
    return _viscosity_check(p, W, tf, radius, candidates, s, z, tol, "sub")


def supersolution_check(p: ProblemSpec, W: Functional, tf: TestFunction, radius: float,
                        candidates: CandidateSet, s: float, z: Segment, tol: float = 1e-9) -> TouchingCertificate:
    """Sampled supersolution test: if W + phi is minimal at (s, z) over the sampled
    extensions, require -phi_t - S(phi) + H(s, z, -grad phi) <= 0."""
    return _viscosity_check(p, W, tf, radius, candidates, s, z, tol, "super")
