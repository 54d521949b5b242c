"""Segments: right-continuous, piecewise-constant R^d-valued functions on [-tau, 0].

A segment with ``m`` cells of width ``dt`` stores ``m + 1`` rows.  Row ``k < m``
is the value on ``[-tau + k*dt, -tau + (k+1)*dt)`` and row ``m`` is the value at
``theta = 0``.  The last row carries zero measure, so it never enters an
integral, but it is the "present" state ``x(0)`` of a delayed system.

All integrals below are exact on this representation (up to rounding).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from .errors import GridError

_GRID_RTOL = 1e-9

ArrayLike = Union[float, np.ndarray, list]


def grid_index(value: float, dt: float, what: str = "value") -> int:
    """Return ``value / dt`` as an integer, or raise if it is off the grid."""
    ratio = value / dt
    k = int(round(ratio))
    if abs(ratio - k) > _GRID_RTOL * max(1.0, abs(ratio)):
        raise GridError(f"{what}={value!r} is not a multiple of the grid step {dt!r}")
    return k


@dataclass(frozen=True, eq=False)
class Segment:
    """An element of the segment space, sampled on a uniform grid.

    Parameters
    ----------
    values : ndarray, shape (m + 1, d)
        Cell values followed by the value at ``theta = 0``.
    tau : float
        Length of the window.
    dt : float
        Cell width; ``tau`` must be an integer multiple of it.
    """

    values: np.ndarray
    tau: float
    dt: float

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        if vals.ndim != 2:
            raise ValueError("segment values must have shape (m + 1, d)")
        if not self.dt > 0 or not self.tau > 0:
            raise GridError("tau and dt must be positive")
        m = grid_index(self.tau, self.dt, "tau")
        if m < 1:
            raise GridError("tau must span at least one cell")
        if vals.shape[0] != m + 1:
            raise GridError(f"expected {m + 1} rows for tau/dt={m}, got {vals.shape[0]}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("segment values must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "tau", float(self.tau))
        object.__setattr__(self, "dt", float(self.dt))

    # --- construction -------------------------------------------------

    @classmethod
    def constant(cls, c: ArrayLike, tau: float, dt: float) -> "Segment":
        c = np.atleast_1d(np.asarray(c, dtype=float))
        m = grid_index(tau, dt, "tau")
        return cls(np.tile(c, (m + 1, 1)), tau, dt)

    @classmethod
    def from_function(cls, f: Callable[[float], ArrayLike], tau: float, dt: float) -> "Segment":
        """Sample ``f`` at the left cell endpoints and at ``theta = 0``."""
        m = grid_index(tau, dt, "tau")
        thetas = -tau + dt * np.arange(m + 1)
        thetas[-1] = 0.0
        rows = [np.atleast_1d(np.asarray(f(th), dtype=float)) for th in thetas]
        return cls(np.vstack(rows), tau, dt)

    # --- basic accessors ----------------------------------------------

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def m(self) -> int:
        return self.values.shape[0] - 1

    @property
    def present(self) -> np.ndarray:
        """x(0)."""
        return self.values[-1]

    @property
    def oldest(self) -> np.ndarray:
        """x(-tau)."""
        return self.values[0]

    @property
    def cells(self) -> np.ndarray:
        """The m cell values, excluding the theta = 0 sample."""
        return self.values[:-1]

    @property
    def thetas(self) -> np.ndarray:
        th = -self.tau + self.dt * np.arange(self.m + 1)
        th[-1] = 0.0
        return th

    def key(self) -> bytes:
        """Hashable fingerprint of the grid values (for caches)."""
        return self.values.tobytes()

    def same_grid(self, other: "Segment") -> bool:
        return (
            self.values.shape == other.values.shape
            and abs(self.dt - other.dt) <= _GRID_RTOL * self.dt
        )

    def check_grid(self, other: "Segment") -> None:
        if not self.same_grid(other):
            raise GridError(
                f"incompatible segments: shape {self.values.shape} dt={self.dt} "
                f"vs shape {other.values.shape} dt={other.dt}"
            )

    def equals(self, other: "Segment") -> bool:
        """Exact equality at every grid point."""
        return self.same_grid(other) and np.array_equal(self.values, other.values)

    def with_present(self, value: ArrayLike) -> "Segment":
        """Copy with x(0) replaced, i.e. ``x + e * 1_0`` for the matching e."""
        vals = self.values.copy()
        vals[-1] = np.broadcast_to(np.asarray(value, dtype=float), (self.dim,))
        return Segment(vals, self.tau, self.dt)

    def refine(self, factor: int = 2) -> "Segment":
        """The same function on a grid ``factor`` times finer."""
        vals = np.vstack([np.repeat(self.cells, factor, axis=0), self.present[None, :]])
        return Segment(vals, self.tau, self.dt / factor)

    # --- arithmetic ---------------------------------------------------

    def __add__(self, other: "Segment") -> "Segment":
        self.check_grid(other)
        return Segment(self.values + other.values, self.tau, self.dt)

    def __sub__(self, other: "Segment") -> "Segment":
        self.check_grid(other)
        return Segment(self.values - other.values, self.tau, self.dt)

    def __mul__(self, c: float) -> "Segment":
        return Segment(self.values * float(c), self.tau, self.dt)

    __rmul__ = __mul__

    def __neg__(self) -> "Segment":
        return Segment(-self.values, self.tau, self.dt)

    # --- text format --------------------------------------------------

    def to_text(self) -> str:
        lines = [f"{self.dim} {self.tau!r} {self.dt!r}"]
        lines += [" ".join(f"{v:.17g}" for v in row) for row in self.values]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "Segment":
        rows = [ln.split() for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
        if not rows:
            raise ValueError("empty segment file")
        try:
            d, tau, dt = int(rows[0][0]), float(rows[0][1]), float(rows[0][2])
            vals = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float)
        except (IndexError, ValueError) as exc:
            raise ValueError(f"malformed segment file: {exc}") from None
        if vals.ndim != 2 or vals.shape[1] != d:
            raise ValueError(f"segment rows must each hold {d} floats")
        return cls(vals, tau, dt)


@dataclass(frozen=True, eq=False)
class TimedSegment:
    """A pair (t, x) in [0, T] x D."""

    time: float
    segment: Segment


# --- norms and inner products -------------------------------------------


def sup_norm(x: Segment) -> float:
    """|x|_D = sup over theta of the Euclidean norm."""
    return float(np.max(np.linalg.norm(x.values, axis=1)))


def h_inner(a: Segment, x: Segment) -> float:
    """L2 inner product on [-tau, 0]; the theta = 0 sample carries no mass."""
    a.check_grid(x)
    return float(x.dt * np.sum(a.cells * x.cells))


def h_norm(x: Segment) -> float:
    return float(np.sqrt(max(h_inner(x, x), 0.0)))


def _b_nodes(values: np.ndarray, dt: float) -> np.ndarray:
    # y_k = int_{theta_k}^0 x; exact cumulative sums from the right, y_m = 0.
    cells = values[..., :-1, :]
    tail = np.flip(np.cumsum(np.flip(cells, axis=-2), axis=-2), axis=-2) * dt
    zero = np.zeros(values.shape[:-2] + (1, values.shape[-1]))
    return np.concatenate([tail, zero], axis=-2)


def b_transform(x: Segment) -> Segment:
    """(Bx)(s) = int_s^0 x(theta) dtheta, evaluated at the grid nodes.

    Between nodes Bx is linear; the returned segment holds the node values.
    """
    return Segment(_b_nodes(x.values, x.dt), x.tau, x.dt)


def b_gram(m: int, dt: float) -> np.ndarray:
    """Gram matrix of the piecewise-linear hat basis on m cells.

    For node values y of a continuous piecewise-linear function,
    ``y @ G @ y`` is its exact squared L2 norm.
    """
    g = np.zeros((m + 1, m + 1))
    idx = np.arange(m)
    g[idx, idx] += dt / 3.0
    g[idx + 1, idx + 1] += dt / 3.0
    g[idx, idx + 1] += dt / 6.0
    g[idx + 1, idx] += dt / 6.0
    return g


def b_norm_sq(x: Segment) -> float:
    y = _b_nodes(x.values, x.dt)
    y0, y1 = y[:-1], y[1:]
    return float(x.dt / 3.0 * np.sum(y0 * y0 + y0 * y1 + y1 * y1))


def b_norm(x: Segment) -> float:
    """|x|_B = (int (Bx)^2)^(1/2), exact for piecewise-linear Bx."""
    return float(np.sqrt(max(b_norm_sq(x), 0.0)))


def b_inner(z: Segment, w: Segment) -> float:
    """(Bz, w)_H, exact: Bz is linear and w constant on each cell."""
    z.check_grid(w)
    y = _b_nodes(z.values, z.dt)
    mid = 0.5 * (y[:-1] + y[1:])
    return float(z.dt * np.sum(mid * w.cells))


def sup_tail_integral(x: Segment) -> float:
    """sup_l |int_l^0 x|, attained at a grid node."""
    return float(np.max(np.linalg.norm(_b_nodes(x.values, x.dt), axis=1)))


def sup_head_integral(x: Segment) -> float:
    """sup_l |int_{-tau}^l x|, attained at a grid node."""
    y = _b_nodes(x.values, x.dt)
    return float(np.max(np.linalg.norm(y[0] - y, axis=1)))


def w12_norm(a: Segment) -> float:
    """Sobolev W^{1,2} norm of the piecewise-linear interpolant of the samples."""
    slopes = np.diff(a.values, axis=0) / a.dt
    return float(np.sqrt(h_inner(a, a) + a.dt * np.sum(slopes * slopes)))


# --- concatenation and hold extension --------------------------------


def concat(base: TimedSegment, head: TimedSegment) -> TimedSegment:
    """(t, w) (x) (t_bar, w_bar): head values on [t - t_bar, 0], shifted base below."""
    if head.time < base.time - _GRID_RTOL * max(1.0, abs(base.time)):
        raise GridError(f"concat needs base.time <= head.time, got {base.time} > {head.time}")
    x, y = base.segment, head.segment
    x.check_grid(y)
    j = grid_index(head.time - base.time, x.dt, "splice offset")
    m = x.m
    if j >= m:
        return TimedSegment(head.time, y)
    vals = np.empty_like(x.values)
    vals[: m - j] = x.values[j:m]
    vals[m - j:] = y.values[m - j:]
    return TimedSegment(head.time, Segment(vals, x.tau, x.dt))


def extend_hat(x: Segment, h: float) -> Segment:
    """Shift of the hold-constant extension: theta -> x(h + theta), x(0) for h + theta >= 0."""
    if h < 0:
        raise GridError("extension length must be nonnegative")
    j = grid_index(h, x.dt, "h")
    m = x.m
    if j == 0:
        return x
    vals = np.empty_like(x.values)
    if j < m:
        vals[: m - j] = x.values[j:m]
        vals[m - j:] = x.present
    else:
        vals[:] = x.present
    return Segment(vals, x.tau, x.dt)
