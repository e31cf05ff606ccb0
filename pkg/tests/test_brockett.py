import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from nssg import brockett as b
from nssg.nonsmooth import fd_directional_derivative, support_min

P = b.BrockettControllerParams(gamma=0.1)
coord = st.floats(-2.0, 2.0, allow_nan=False)


def generic_points(rng, n, lo=0.05):
    pts = []
    while len(pts) < n:
        x = rng.uniform(-2, 2, 3)
        if math.hypot(x[0], x[1]) >= lo and abs(x[2]) >= lo:
            pts.append(x)
    return np.array(pts)


@pytest.mark.parametrize(
    "x,u,expected",
    [
        ((0, 0, 0), (1, 1), (1, 1, 0)),
        ((1, 0, 0), (0, 1), (0, 1, 1)),
        ((0.2, 0.2, 0.2), (-0.1, 0), (-0.1, 0, 0.02)),
    ],
)
def test_rhs(x, u, expected):
    assert np.allclose(b.rhs(x, u), expected, atol=1e-15)


@pytest.mark.parametrize(
    "x,q", [((0, 0, 0), 0.0), ((0, 0, 1), 2.0), ((0.2, 0.2, 0.2), 0.046862915010152)]
)
def test_goal_q(x, q):
    assert b.goal_q(x) == pytest.approx(q, abs=1e-14)


@pytest.mark.parametrize(
    "x,h,d",
    [
        ((0, 0, 1), (1, 0, 0), -2.0),
        ((1, 0, 0), (1, 0, 0), 2.0),
        ((1, 0, 0), (0, 0, 1), -2.0),
    ],
)
def test_dirderiv_examples(x, h, d):
    assert b.goal_q_dirderiv(x, h) == pytest.approx(d, abs=1e-15)


def test_grad_u_omega_examples():
    g, tag = b.grad_u_omega((1, 0, 1))
    assert tag is b.BranchTag.GENERIC and np.allclose(g, [0, 2], atol=1e-15)
    g, tag = b.grad_u_omega((1, 2, 0))
    assert tag is b.BranchTag.PLANE_X3_ZERO and np.allclose(g, [2, 4])
    g, tag = b.grad_u_omega((0, 0, 0.5))
    assert tag is b.BranchTag.AXIS_SIGMA_ZERO and np.allclose(g, [-1, 0])
    g, tag = b.grad_u_omega((0, 0, 0))
    assert tag is b.BranchTag.ORIGIN and not g.any()


def test_component_can_vanish_off_axis():
    # one partial derivative vanishes at (1,0,1); only the joint norm is nonzero
    g = b.grad_u_omega_expanded((1.0, 0.0, 1.0))
    assert g[0] == 0.0 and g[1] == 2.0


@pytest.mark.parametrize(
    "x,u",
    [
        ((1, 0, 0), (-0.1, 0)),
        ((0, 0, 1), (0.1, 0)),
        ((1, 0, 1), (0, -0.1)),
        ((0, 0, 0), (0, 0)),
    ],
)
def test_control_examples(x, u):
    assert np.allclose(b.control(x, P), u, atol=1e-15)


def test_control_axis_uses_selector():
    p = b.BrockettControllerParams(0.2, v_selector=lambda x3: (0.0, math.copysign(1.0, x3)))
    assert np.allclose(b.control((0, 0, -1), p), [0, -0.2])


def test_selector_must_be_unit():
    p = b.BrockettControllerParams(0.1, v_selector=lambda x3: (2.0, 0.0))
    with pytest.raises(ValueError):
        b.control((0, 0, 1), p)


@pytest.mark.parametrize("gamma", [0.0, -0.1, math.nan])
def test_params_validation(gamma):
    with pytest.raises(ValueError):
        b.BrockettControllerParams(gamma)


def test_singular_gradient_guard():
    # on the diagonal sigma = x3 the gradient norm is 2 sigma^2, below the guard here
    with pytest.raises(b.SingularGradientError):
        b.control((1e-7, 0.0, 1e-7), P, branch=b.BranchTag.GENERIC)


def test_reduced_rates_examples():
    dx3, ds = b.reduced_rates((1, 0, 1), P)
    assert dx3 == pytest.approx(-0.1, abs=1e-15) and ds == 0.0
    assert b.reduced_rates((2, 0, 1), P)[1] < 0
    assert b.reduced_rates((0.5, 0, 1), P)[1] > 0


@pytest.mark.parametrize("x", [(0, 0, 1), (1, 0, 0), (0, 0, 0)])
def test_reduced_rates_domain(x):
    with pytest.raises(b.DomainError):
        b.reduced_rates(x, P)


def test_reduced_rates_match_vector_field():
    rng = np.random.default_rng(3)
    for x in generic_points(rng, 500):
        dx3, ds = b.reduced_rates(x, P)
        f = b.closed_loop_field(x, P)
        s = math.hypot(x[0], x[1])
        assert f[2] == pytest.approx(dx3, abs=1e-13)
        assert (x[0] * f[0] + x[1] * f[1]) / s == pytest.approx(ds, abs=1e-13)


def test_factored_gradient_matches_partial_derivatives():
    rng = np.random.default_rng(11)
    for x in generic_points(rng, 2000, lo=1e-3):
        g, _ = b.grad_u_omega(x)
        ref = b.grad_u_omega_expanded(x)
        assert np.linalg.norm(g - ref) <= 1e-12 * max(1.0, np.linalg.norm(ref))


def test_factored_norm_identity():
    rng = np.random.default_rng(5)
    for x in generic_points(rng, 500):
        s = math.hypot(x[0], x[1])
        a = 2 * (1 - abs(x[2]) / s)
        bb = 2 * math.copysign(1, x[2]) * (s - 2 * abs(x[2]))
        assert np.linalg.norm(b.grad_u_omega(x)[0]) == pytest.approx(s * math.hypot(a, bb), rel=1e-13)


@settings(max_examples=200, deadline=None)
@given(coord, coord, coord)
def test_gradient_nonvanishing_off_axis(x1, x2, x3):
    assume(math.hypot(x1, x2) > 1e-6 and abs(x3) > 1e-6)
    g, tag = b.grad_u_omega((x1, x2, x3))
    assert tag is b.BranchTag.GENERIC
    assert np.linalg.norm(g) > 0


@settings(max_examples=200, deadline=None)
@given(coord, coord, coord)
def test_descent_identity_and_unit_gain(x1, x2, x3):
    x = (x1, x2, x3)
    assume(math.hypot(x1, x2) > 1e-6 or abs(x3) > 1e-6)
    g, _ = b.grad_u_omega(x, P)
    u = b.control(x, P)
    assert np.linalg.norm(u) == pytest.approx(P.gamma, abs=1e-15)
    psi = u / P.gamma
    assert g @ psi == pytest.approx(-np.linalg.norm(g), rel=1e-12, abs=1e-15)


def _branch_points(rng, branch, n):
    out = []
    for _ in range(n):
        x = rng.uniform(-1, 1, 3)
        if branch == "axis":
            x[:2] = 0.0
            x[2] = math.copysign(max(abs(x[2]), 0.1), x[2])
        elif branch == "plane":
            x[2] = 0.0
            if math.hypot(x[0], x[1]) < 0.1:
                x[0] = 0.5
        else:
            if math.hypot(x[0], x[1]) < 0.1:
                x[0] = 0.5
            x[2] = math.copysign(max(abs(x[2]), 0.1), x[2])
        out.append((x, rng.uniform(-1, 1, 3)))
    return out


@pytest.mark.parametrize("branch", ["axis", "plane", "generic"])
def test_dirderiv_matches_finite_difference(branch):
    rng = np.random.default_rng({"axis": 1, "plane": 2, "generic": 3}[branch])
    for x, h in _branch_points(rng, branch, 200):
        fd = fd_directional_derivative(b.goal_q, x, h)
        assert b.goal_q_dirderiv(x, h) == pytest.approx(fd, abs=1e-6)


def test_superdiff_support_matches_dirderiv():
    rng = np.random.default_rng(9)
    for x, h in _branch_points(rng, "plane", 100) + _branch_points(rng, "generic", 100):
        assert support_min(b.goal_q_superdiff(x), h) == pytest.approx(b.goal_q_dirderiv(x, h), abs=1e-12)
    with pytest.raises(b.DomainError):
        b.goal_q_superdiff((0, 0, 1))
    assert support_min(b.goal_q_superdiff((0, 0, 0)), (1, 1, 1)) == 0.0


def test_plane_superdifferential_inequality():
    rng = np.random.default_rng(4)
    for _ in range(500):
        x = np.array([*rng.uniform(-1, 1, 2), 0.0])
        u = rng.uniform(-1, 1, 2)
        omega = 2 * x[0] * u[0] + 2 * x[1] * u[1]
        assert b.goal_q_dirderiv(x, b.rhs(x, u)) <= omega + 1e-15


@pytest.mark.parametrize("x3", [1.0, -0.5])
def test_limit_circle(x3):
    v = (0.6, 0.8)
    p = b.BrockettControllerParams(0.1, v_selector=lambda _: v)
    errs = []
    for k in range(3, 9):
        a = 10.0 ** -k
        errs.append(np.linalg.norm(b.control((a * v[0], a * v[1], x3), p) - 0.1 * np.array(v)))
    assert all(e2 <= e1 for e1, e2 in zip(errs, errs[1:]))
    assert errs[-1] < 1e-7


def test_plane_closed_form_rate():
    for x in [(1, 0, 0), (0.3, -0.4, 0), (-2, 1, 0)]:
        f = b.closed_loop_field(x, P)
        s = math.hypot(x[0], x[1])
        assert (x[0] * f[0] + x[1] * f[1]) / s == pytest.approx(-P.gamma, abs=1e-15)
        assert abs(f[2]) <= 1e-16


def test_classify_and_excluded_set():
    assert b.classify((0, 0, 0)) is b.BranchTag.ORIGIN
    assert b.classify((1, 0, 0)) is b.BranchTag.PLANE_X3_ZERO
    assert b.classify((0, 0, 1)) is b.BranchTag.AXIS_SIGMA_ZERO
    assert b.classify((1, 0, 1)) is b.BranchTag.GENERIC
    assert b.in_excluded_set((0, 0, 1)) and not b.in_excluded_set((0, 0, 0))
    assert not b.in_excluded_set((1e-300, 0, 1))


def test_make_system_rejects_unknown_integrator():
    with pytest.raises(ValueError):
        b.make_system(P, integrator="euler")


@pytest.mark.parametrize("x", [(0.0, 2.225073858507e-311, 1.0), (5e-324, 0.0, -0.3), (1e-300, 1e-300, 2.0)])
def test_generic_control_finite_for_subnormal_sigma(x):
    u = b.control(x, P)
    g, tag = b.grad_u_omega(x)
    assert tag is b.BranchTag.GENERIC and np.isfinite(g).all()
    assert np.linalg.norm(u) == pytest.approx(P.gamma, abs=1e-15)
