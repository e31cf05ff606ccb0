import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nssg.nonsmooth import (
    EvaluationError,
    FdSchedule,
    NonConvergenceError,
    SuperdiffVertexSet,
    fd_directional_derivative,
    support_min,
)

finite = st.floats(-3.0, 3.0, allow_nan=False)


def test_abs_kink_one_sided():
    # |x| at 0 has derivative |h| in both directions
    f = lambda x: abs(x[0])
    assert fd_directional_derivative(f, [0.0], [1.0]) == pytest.approx(1.0, abs=1e-12)
    assert fd_directional_derivative(f, [0.0], [-1.0]) == pytest.approx(1.0, abs=1e-12)


def test_smooth_quadratic():
    f = lambda x: float(x @ x)
    x = np.array([1.0, -2.0])
    h = np.array([0.5, 0.25])
    assert fd_directional_derivative(f, x, h) == pytest.approx(2 * x @ h, abs=1e-9)


def test_concave_min_of_linear():
    f = lambda x: min(x[0], x[1])
    assert fd_directional_derivative(f, [0.0, 0.0], [1.0, -1.0]) == pytest.approx(-1.0, abs=1e-12)


def test_zero_direction_short_circuits():
    calls = []
    f = lambda x: calls.append(1) or 1.0
    assert fd_directional_derivative(f, [1.0], [0.0]) == 0.0
    assert not calls


def test_direction_not_normalized():
    f = lambda x: 3.0 * x[0]
    assert fd_directional_derivative(f, [0.0], [2.0]) == pytest.approx(6.0)


def test_nonfinite_value_raises():
    with pytest.raises(EvaluationError):
        fd_directional_derivative(lambda x: math.inf, [0.0], [1.0])


def test_nonfinite_direction_raises():
    with pytest.raises(EvaluationError):
        fd_directional_derivative(lambda x: 0.0, [0.0], [math.nan])


def test_oscillating_function_does_not_converge():
    f = lambda x: x[0] * math.sin(1.0 / x[0]) if x[0] else 0.0
    with pytest.raises(NonConvergenceError) as info:
        fd_directional_derivative(f, [0.0], [1.0])
    assert info.value.spread > 0
    assert len(info.value.estimates) == 3


def test_richardson_beats_plain_on_curvature():
    f = lambda x: math.exp(x[0])
    plain = FdSchedule(alphas=(1e-2, 1e-3, 1e-4, 1e-5, 1e-6), richardson=False, rtol=1e-3)
    rich = FdSchedule()
    e_plain = abs(fd_directional_derivative(f, [0.0], [1.0], plain) - 1.0)
    e_rich = abs(fd_directional_derivative(f, [0.0], [1.0], rich) - 1.0)
    assert e_rich < e_plain


@pytest.mark.parametrize(
    "kw",
    [
        dict(alphas=(1e-2,)),
        dict(alphas=(1e-3, 1e-2, 1e-4)),
        dict(alphas=(1e-2, 0.0, -1.0)),
        dict(alphas=(1e-2, 1e-3), richardson=True),
    ],
)
def test_schedule_validation(kw):
    with pytest.raises(ValueError):
        FdSchedule(**kw)


def test_support_min_segment():
    s = SuperdiffVertexSet([[1.0, 0.0], [-1.0, 0.0]])
    assert support_min(s, [1.0, 5.0]) == -1.0
    assert support_min([[2.0, 3.0]], [1.0, 1.0]) == 5.0


def test_vertex_set_validation():
    with pytest.raises(ValueError):
        SuperdiffVertexSet(np.zeros((0, 3)))
    with pytest.raises(ValueError):
        SuperdiffVertexSet([[math.nan, 0.0]])
    with pytest.raises(ValueError):
        support_min([[1.0, 0.0]], [math.inf, 0.0])


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(finite, finite), min_size=1, max_size=5), finite, finite)
def test_support_min_matches_min_of_linear_directional_derivative(vertices, h1, h2):
    # min over a finite set of linear maps: its one-sided derivative at 0 is the support minimum
    v = np.array(vertices)
    f = lambda x: float(np.min(v @ x))
    h = np.array([h1, h2])
    exact = support_min(v, h)
    assert fd_directional_derivative(f, [0.0, 0.0], h) == pytest.approx(exact, abs=1e-9)
