"""Pure-Python closed-loop kernels.

Mirror of ``_ckernels.pyx``; every function here has the same signature and
the same arithmetic as its compiled twin. Used when the extension is not
built or when ``NSSG_PURE_PYTHON=1``.

Brockett modes: 0 origin, 1 plane (x3 = 0), 2 axis (sigma = 0), 3 generic.
String modes: sign(H - H*) held over a step (-1, 0, 1).
"""

import math

ORIGIN, PLANE, AXIS, GENERIC = 0, 1, 2, 3

_S6 = math.sqrt(6.0)
RADAU_A = (
    ((88.0 - 7.0 * _S6) / 360.0, (296.0 - 169.0 * _S6) / 1800.0, (-2.0 + 3.0 * _S6) / 225.0),
    ((296.0 + 169.0 * _S6) / 1800.0, (88.0 + 7.0 * _S6) / 360.0, (-2.0 - 3.0 * _S6) / 225.0),
    ((16.0 - _S6) / 36.0, (16.0 + _S6) / 36.0, 1.0 / 9.0),
)
NEWTON_MAXITER = 60
NEWTON_XTOL = 1e-14


class KernelError(ArithmeticError):
    pass


def brockett_mode(x1, x2, x3, axis_eps=0.0, plane_eps=0.0):
    s = math.hypot(x1, x2)
    on_axis = s <= axis_eps
    on_plane = abs(x3) <= plane_eps
    if on_axis and on_plane:
        return ORIGIN
    if on_plane:
        return PLANE
    if on_axis:
        return AXIS
    return GENERIC


def brockett_control(x1, x2, x3, gamma, v1, v2, mode):
    if mode == ORIGIN:
        return 0.0, 0.0
    s = math.hypot(x1, x2)
    if mode == PLANE:
        if s == 0.0:
            return 0.0, 0.0
        return -gamma * x1 / s, -gamma * x2 / s
    if mode == AXIS:
        return gamma * v1, gamma * v2
    # sigma-scaled factors on unit vectors: no overflow for subnormal sigma
    ax3 = abs(x3)
    sg = math.copysign(1.0, x3)
    e1, e2 = x1 / s, x2 / s
    a = 2.0 * (s - ax3)
    b = 2.0 * sg * s * (s - 2.0 * ax3)
    g1 = a * e1 + b * e2
    g2 = a * e2 - b * e1
    n = math.hypot(g1, g2)
    return -gamma * g1 / n, -gamma * g2 / n


def brockett_field(x1, x2, x3, gamma, v1, v2, mode):
    u1, u2 = brockett_control(x1, x2, x3, gamma, v1, v2, mode)
    return u1, u2, x1 * u2 - x2 * u1


def brockett_rk4(x1, x2, x3, gamma, v1, v2, mode, dt):
    h2 = 0.5 * dt
    a1, a2, a3 = brockett_field(x1, x2, x3, gamma, v1, v2, mode)
    b1, b2, b3 = brockett_field(x1 + h2 * a1, x2 + h2 * a2, x3 + h2 * a3, gamma, v1, v2, mode)
    c1, c2, c3 = brockett_field(x1 + h2 * b1, x2 + h2 * b2, x3 + h2 * b3, gamma, v1, v2, mode)
    d1, d2, d3 = brockett_field(x1 + dt * c1, x2 + dt * c2, x3 + dt * c3, gamma, v1, v2, mode)
    w = dt / 6.0
    return (
        x1 + w * (a1 + 2.0 * b1 + 2.0 * c1 + d1),
        x2 + w * (a2 + 2.0 * b2 + 2.0 * c2 + d2),
        x3 + w * (a3 + 2.0 * b3 + 2.0 * c3 + d3),
    )


def _cyl_field(s, x3, gamma):
    # full Cartesian field at (s, 0, x3): (dsigma/dt, dx3/dt, dphi/dt)
    f1, f2, f3 = brockett_field(s, 0.0, x3, gamma, 1.0, 0.0, GENERIC)
    return f1, f3, f2 / s


def _solve(m, r, n):
    # Gaussian elimination with partial pivoting; m is n*n row-major, r length n
    m = list(m)
    r = list(r)
    for k in range(n):
        p = k
        best = abs(m[k * n + k])
        for i in range(k + 1, n):
            v = abs(m[i * n + k])
            if v > best:
                best, p = v, i
        if best == 0.0:
            raise KernelError("singular Newton matrix")
        if p != k:
            for j in range(n):
                m[k * n + j], m[p * n + j] = m[p * n + j], m[k * n + j]
            r[k], r[p] = r[p], r[k]
        piv = m[k * n + k]
        for i in range(k + 1, n):
            f = m[i * n + k] / piv
            if f != 0.0:
                for j in range(k, n):
                    m[i * n + j] -= f * m[k * n + j]
                r[i] -= f * r[k]
    x = [0.0] * n
    for i in range(n - 1, -1, -1):
        acc = r[i]
        for j in range(i + 1, n):
            acc -= m[i * n + j] * x[j]
        x[i] = acc / m[i * n + i]
    return x


def _residual(s, x3, z, dt, gamma):
    f = []
    for i in range(3):
        si = s + z[2 * i]
        if not si > 0.0:
            return None
        fs, fx, _ = _cyl_field(si, x3 + z[2 * i + 1], gamma)
        f.append((fs, fx))
    res = [0.0] * 6
    for k in range(3):
        acc_s = 0.0
        acc_x = 0.0
        for i in range(3):
            acc_s += RADAU_A[k][i] * f[i][0]
            acc_x += RADAU_A[k][i] * f[i][1]
        res[2 * k] = z[2 * k] - dt * acc_s
        res[2 * k + 1] = z[2 * k + 1] - dt * acc_x
    for v in res:
        if not math.isfinite(v):
            return None
    return res


def _jac(s, x3, gamma):
    f0s, f0x, _ = _cyl_field(s, x3, gamma)
    hs = 1.49e-8 * abs(s) or 1e-12
    hx = 1.49e-8 * abs(x3) or 1e-12
    fs, fx, _ = _cyl_field(s + hs, x3, gamma)
    gs, gx, _ = _cyl_field(s, x3 + hx, gamma)
    return ((fs - f0s) / hs, (gs - f0s) / hx), ((fx - f0x) / hs, (gx - f0x) / hx)


def brockett_radau5(x1, x2, x3, gamma, v1, v2, mode, dt, z0):
    """One fixed Radau IIA step; generic branch only, otherwise RK4.

    ``z0`` is the 6-vector of stage increments (sigma, x3 per stage) used as
    the Newton starting guess. Returns ``(state, z)``.
    """
    if mode != GENERIC:
        return brockett_rk4(x1, x2, x3, gamma, v1, v2, mode, dt), z0
    s = math.hypot(x1, x2)
    phi = math.atan2(x2, x1)
    scale = max(s, abs(x3))
    z = list(z0)
    res = _residual(s, x3, z, dt, gamma)
    if res is None:
        z = [0.0] * 6
        res = _residual(s, x3, z, dt, gamma)
        if res is None:
            raise KernelError("non-finite Radau stage")
    r = max(abs(v) for v in res)
    converged = r == 0.0
    it = 0
    while not converged:
        if it >= NEWTON_MAXITER:
            raise KernelError("Radau Newton iteration did not converge")
        it += 1
        m = [0.0] * 36
        for i in range(6):
            m[i * 6 + i] = 1.0
        for i in range(3):
            j = _jac(s + z[2 * i], x3 + z[2 * i + 1], gamma)
            for k in range(3):
                c = dt * RADAU_A[k][i]
                for p in range(2):
                    for q in range(2):
                        m[(2 * k + p) * 6 + 2 * i + q] -= c * j[p][q]
        dz = _solve(m, [-v for v in res], 6)
        lam = 1.0
        while True:
            zn = [z[i] + lam * dz[i] for i in range(6)]
            rn = _residual(s, x3, zn, dt, gamma)
            if rn is not None:
                rnorm = max(abs(v) for v in rn)
                if rnorm < r or lam < 1e-3:
                    break
            elif lam < 1e-3:
                raise KernelError("Radau line search left the generic branch")
            lam *= 0.5
        z, res, r = zn, rn, rnorm
        step = max(abs(lam * v) for v in dz)
        converged = step <= NEWTON_XTOL * scale or r == 0.0
    dphi = 0.0
    for i in range(3):
        dphi += RADAU_A[2][i] * _cyl_field(s + z[2 * i], x3 + z[2 * i + 1], gamma)[2]
    s_new = s + z[4]
    phi_new = phi + dt * dphi
    return (s_new * math.cos(phi_new), s_new * math.sin(phi_new), x3 + z[5]), tuple(z)


def string_control(q1, q2, p1, p2, omega0, stiff, gamma, h_star, mode, smooth):
    if smooth:
        r2 = q1 * q1 + q2 * q2
        w2 = omega0 * omega0
        h = 0.5 * (p1 * p1 + p2 * p2) + 0.5 * w2 * r2 + 0.25 * w2 * stiff * r2 * r2
        c = -gamma * (h - h_star)
    else:
        c = -gamma * mode
    return c * p1, c * p2


def string_field(q1, q2, p1, p2, omega0, stiff, gamma, h_star, mode, smooth):
    u1, u2 = string_control(q1, q2, p1, p2, omega0, stiff, gamma, h_star, mode, smooth)
    k = -omega0 * omega0 * (1.0 + stiff * (q1 * q1 + q2 * q2))
    return p1, p2, k * q1 + u1, k * q2 + u2


def string_rk4(q1, q2, p1, p2, omega0, stiff, gamma, h_star, mode, smooth, dt):
    h2 = 0.5 * dt
    a = string_field(q1, q2, p1, p2, omega0, stiff, gamma, h_star, mode, smooth)
    b = string_field(q1 + h2 * a[0], q2 + h2 * a[1], p1 + h2 * a[2], p2 + h2 * a[3],
                     omega0, stiff, gamma, h_star, mode, smooth)
    c = string_field(q1 + h2 * b[0], q2 + h2 * b[1], p1 + h2 * b[2], p2 + h2 * b[3],
                     omega0, stiff, gamma, h_star, mode, smooth)
    d = string_field(q1 + dt * c[0], q2 + dt * c[1], p1 + dt * c[2], p2 + dt * c[3],
                     omega0, stiff, gamma, h_star, mode, smooth)
    w = dt / 6.0
    return (
        q1 + w * (a[0] + 2.0 * b[0] + 2.0 * c[0] + d[0]),
        q2 + w * (a[1] + 2.0 * b[1] + 2.0 * c[1] + d[1]),
        p1 + w * (a[2] + 2.0 * b[2] + 2.0 * c[2] + d[2]),
        p2 + w * (a[3] + 2.0 * b[3] + 2.0 * c[3] + d[3]),
    )
