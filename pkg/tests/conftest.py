import numpy as np
import pytest
from hypothesis import strategies as st

from delayhjb.delay_dynamics import ProblemSpec
from delayhjb.segment_space import Segment


def random_segment(rng, m=8, dim=1, tau=1.0, scale=1.0):
    return Segment(scale * rng.standard_normal((m + 1, dim)), tau, tau / m)


@st.composite
def segments(draw, m=st.sampled_from([1, 2, 4, 8, 16]), dim=st.sampled_from([1, 2]), tau=1.0, bound=10.0):
    mm, dd = draw(m), draw(dim)
    vals = draw(st.lists(st.floats(-bound, bound, allow_nan=False, allow_infinity=False),
                         min_size=(mm + 1) * dd, max_size=(mm + 1) * dd))
    return Segment(np.array(vals).reshape(mm + 1, dd), tau, tau / mm)


def quadratic_benchmark(dt=0.5, horizon=1.0, controls=(-1.0, 0.0, 1.0), kappa=0.0):
    """x' = u, phi = x^2, q = kappa u^2 on tau = 1."""
    return ProblemSpec(
        dim=1, tau=1.0, horizon=horizon, dt=dt,
        drift=lambda s, x, y, u: np.array([u], dtype=float),
        controls=controls, lipschitz=1.0,
        running_cost=lambda s, x, u: kappa * u * u,
        terminal_cost=lambda x: float(x @ x),
        name="quadratic_benchmark",
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
