# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled closed-loop kernels.

Same signatures and arithmetic as ``_pykernels``; see that module for the
mode numbering.
"""

from libc.math cimport sqrt, hypot, fabs, copysign, atan2, cos, sin, isfinite

cdef enum:
    ORIGIN_ = 0
    PLANE_ = 1
    AXIS_ = 2
    GENERIC_ = 3

ORIGIN = ORIGIN_
PLANE = PLANE_
AXIS = AXIS_
GENERIC = GENERIC_

cdef int MAXITER_ = 60
cdef double XTOL_ = 1e-14
NEWTON_MAXITER = MAXITER_
NEWTON_XTOL = XTOL_

cdef double S6 = sqrt(6.0)
cdef double RA[3][3]
RA[0][0] = (88.0 - 7.0 * S6) / 360.0
RA[0][1] = (296.0 - 169.0 * S6) / 1800.0
RA[0][2] = (-2.0 + 3.0 * S6) / 225.0
RA[1][0] = (296.0 + 169.0 * S6) / 1800.0
RA[1][1] = (88.0 + 7.0 * S6) / 360.0
RA[1][2] = (-2.0 - 3.0 * S6) / 225.0
RA[2][0] = (16.0 - S6) / 36.0
RA[2][1] = (16.0 + S6) / 36.0
RA[2][2] = 1.0 / 9.0

RADAU_A = tuple(tuple(RA[i][j] for j in range(3)) for i in range(3))


class KernelError(ArithmeticError):
    pass


cpdef int brockett_mode(double x1, double x2, double x3,
                        double axis_eps=0.0, double plane_eps=0.0):
    cdef double s = hypot(x1, x2)
    cdef bint on_axis = s <= axis_eps
    cdef bint on_plane = fabs(x3) <= plane_eps
    if on_axis and on_plane:
        return ORIGIN_
    if on_plane:
        return PLANE_
    if on_axis:
        return AXIS_
    return GENERIC_


cdef inline void _control(double x1, double x2, double x3, double gamma,
                          double v1, double v2, int mode,
                          double* u1, double* u2) noexcept nogil:
    cdef double s, ax3, sg, a, b, e1, e2, g1, g2, n
    if mode == ORIGIN_:
        u1[0] = 0.0
        u2[0] = 0.0
        return
    s = hypot(x1, x2)
    if mode == PLANE_:
        if s == 0.0:
            u1[0] = 0.0
            u2[0] = 0.0
        else:
            u1[0] = -gamma * x1 / s
            u2[0] = -gamma * x2 / s
        return
    if mode == AXIS_:
        u1[0] = gamma * v1
        u2[0] = gamma * v2
        return
    # sigma-scaled factors on unit vectors: no overflow for subnormal sigma
    ax3 = fabs(x3)
    sg = copysign(1.0, x3)
    e1 = x1 / s
    e2 = x2 / s
    a = 2.0 * (s - ax3)
    b = 2.0 * sg * s * (s - 2.0 * ax3)
    g1 = a * e1 + b * e2
    g2 = a * e2 - b * e1
    n = hypot(g1, g2)
    u1[0] = -gamma * g1 / n
    u2[0] = -gamma * g2 / n


cdef inline void _bfield(double x1, double x2, double x3, double gamma,
                         double v1, double v2, int mode, double* f) noexcept nogil:
    cdef double u1, u2
    _control(x1, x2, x3, gamma, v1, v2, mode, &u1, &u2)
    f[0] = u1
    f[1] = u2
    f[2] = x1 * u2 - x2 * u1


def brockett_control(double x1, double x2, double x3, double gamma,
                     double v1, double v2, int mode):
    cdef double u1, u2
    _control(x1, x2, x3, gamma, v1, v2, mode, &u1, &u2)
    return u1, u2


def brockett_field(double x1, double x2, double x3, double gamma,
                   double v1, double v2, int mode):
    cdef double f[3]
    _bfield(x1, x2, x3, gamma, v1, v2, mode, f)
    return f[0], f[1], f[2]


cdef void _brk4(double* x, double gamma, double v1, double v2, int mode,
                double dt) noexcept nogil:
    cdef double a[3]
    cdef double b[3]
    cdef double c[3]
    cdef double d[3]
    cdef double h2 = 0.5 * dt
    cdef double w = dt / 6.0
    _bfield(x[0], x[1], x[2], gamma, v1, v2, mode, a)
    _bfield(x[0] + h2 * a[0], x[1] + h2 * a[1], x[2] + h2 * a[2], gamma, v1, v2, mode, b)
    _bfield(x[0] + h2 * b[0], x[1] + h2 * b[1], x[2] + h2 * b[2], gamma, v1, v2, mode, c)
    _bfield(x[0] + dt * c[0], x[1] + dt * c[1], x[2] + dt * c[2], gamma, v1, v2, mode, d)
    x[0] = x[0] + w * (a[0] + 2.0 * b[0] + 2.0 * c[0] + d[0])
    x[1] = x[1] + w * (a[1] + 2.0 * b[1] + 2.0 * c[1] + d[1])
    x[2] = x[2] + w * (a[2] + 2.0 * b[2] + 2.0 * c[2] + d[2])


def brockett_rk4(double x1, double x2, double x3, double gamma,
                 double v1, double v2, int mode, double dt):
    cdef double x[3]
    x[0] = x1
    x[1] = x2
    x[2] = x3
    _brk4(x, gamma, v1, v2, mode, dt)
    return x[0], x[1], x[2]


cdef inline void _cyl(double s, double x3, double gamma, double* out) noexcept nogil:
    cdef double f[3]
    _bfield(s, 0.0, x3, gamma, 1.0, 0.0, GENERIC_, f)
    out[0] = f[0]
    out[1] = f[2]
    out[2] = f[1] / s


cdef bint _residual(double s, double x3, double* z, double dt, double gamma,
                    double* res) noexcept nogil:
    cdef double f[3][3]
    cdef int i, k
    cdef double si, acc_s, acc_x
    for i in range(3):
        si = s + z[2 * i]
        if not si > 0.0:
            return False
        _cyl(si, x3 + z[2 * i + 1], gamma, f[i])
    for k in range(3):
        acc_s = 0.0
        acc_x = 0.0
        for i in range(3):
            acc_s += RA[k][i] * f[i][0]
            acc_x += RA[k][i] * f[i][1]
        res[2 * k] = z[2 * k] - dt * acc_s
        res[2 * k + 1] = z[2 * k + 1] - dt * acc_x
    for i in range(6):
        if not isfinite(res[i]):
            return False
    return True


cdef void _jac(double s, double x3, double gamma, double* j) noexcept nogil:
    cdef double f0[3]
    cdef double fs[3]
    cdef double fx[3]
    cdef double hs = 1.49e-8 * fabs(s)
    cdef double hx = 1.49e-8 * fabs(x3)
    if hs == 0.0:
        hs = 1e-12
    if hx == 0.0:
        hx = 1e-12
    _cyl(s, x3, gamma, f0)
    _cyl(s + hs, x3, gamma, fs)
    _cyl(s, x3 + hx, gamma, fx)
    j[0] = (fs[0] - f0[0]) / hs
    j[1] = (fx[0] - f0[0]) / hx
    j[2] = (fs[1] - f0[1]) / hs
    j[3] = (fx[1] - f0[1]) / hx


cdef bint _solve6(double* m, double* r, double* x) noexcept nogil:
    cdef int n = 6
    cdef int i, j, k, p
    cdef double best, v, piv, f, acc, tmp
    for k in range(n):
        p = k
        best = fabs(m[k * n + k])
        for i in range(k + 1, n):
            v = fabs(m[i * n + k])
            if v > best:
                best = v
                p = i
        if best == 0.0:
            return False
        if p != k:
            for j in range(n):
                tmp = m[k * n + j]
                m[k * n + j] = m[p * n + j]
                m[p * n + j] = tmp
            tmp = r[k]
            r[k] = r[p]
            r[p] = tmp
        piv = m[k * n + k]
        for i in range(k + 1, n):
            f = m[i * n + k] / piv
            if f != 0.0:
                for j in range(k, n):
                    m[i * n + j] -= f * m[k * n + j]
                r[i] -= f * r[k]
    for i in range(n - 1, -1, -1):
        acc = r[i]
        for j in range(i + 1, n):
            acc -= m[i * n + j] * x[j]
        x[i] = acc / m[i * n + i]
    return True


cdef inline double _maxabs(double* v, int n) noexcept nogil:
    cdef double out = 0.0
    cdef int i
    for i in range(n):
        if fabs(v[i]) > out:
            out = fabs(v[i])
    return out


cdef int _bradau(double* x, double gamma, double dt, double* z) noexcept nogil:
    # 0 ok, 1 non-finite stage, 2 Newton failure, 3 singular matrix, 4 line search
    cdef double s = hypot(x[0], x[1])
    cdef double phi = atan2(x[1], x[0])
    cdef double scale = s if s > fabs(x[2]) else fabs(x[2])
    cdef double res[6]
    cdef double rn[6]
    cdef double zn[6]
    cdef double dz[6]
    cdef double rhs[6]
    cdef double m[36]
    cdef double jac[4]
    cdef double r, rnorm, lam, c, dphi, s_new, phi_new
    cdef double fc[3]
    cdef int i, k, p, q, it
    cdef bint ok, converged
    if not _residual(s, x[2], z, dt, gamma, res):
        for i in range(6):
            z[i] = 0.0
        if not _residual(s, x[2], z, dt, gamma, res):
            return 1
    r = _maxabs(res, 6)
    converged = r == 0.0
    it = 0
    while not converged:
        if it >= MAXITER_:
            return 2
        it += 1
        for i in range(36):
            m[i] = 0.0
        for i in range(6):
            m[i * 6 + i] = 1.0
        for i in range(3):
            _jac(s + z[2 * i], x[2] + z[2 * i + 1], gamma, jac)
            for k in range(3):
                c = dt * RA[k][i]
                for p in range(2):
                    for q in range(2):
                        m[(2 * k + p) * 6 + 2 * i + q] -= c * jac[2 * p + q]
        for i in range(6):
            rhs[i] = -res[i]
        if not _solve6(m, rhs, dz):
            return 3
        lam = 1.0
        while True:
            for i in range(6):
                zn[i] = z[i] + lam * dz[i]
            ok = _residual(s, x[2], zn, dt, gamma, rn)
            if ok:
                rnorm = _maxabs(rn, 6)
                if rnorm < r or lam < 1e-3:
                    break
            elif lam < 1e-3:
                return 4
            lam *= 0.5
        for i in range(6):
            z[i] = zn[i]
            res[i] = rn[i]
        r = rnorm
        converged = lam * _maxabs(dz, 6) <= XTOL_ * scale or r == 0.0
    dphi = 0.0
    for i in range(3):
        _cyl(s + z[2 * i], x[2] + z[2 * i + 1], gamma, fc)
        dphi += RA[2][i] * fc[2]
    s_new = s + z[4]
    phi_new = phi + dt * dphi
    x[0] = s_new * cos(phi_new)
    x[1] = s_new * sin(phi_new)
    x[2] = x[2] + z[5]
    return 0


_RADAU_ERRORS = {
    1: "non-finite Radau stage",
    2: "Radau Newton iteration did not converge",
    3: "singular Newton matrix",
    4: "Radau line search left the generic branch",
}


def brockett_radau5(double x1, double x2, double x3, double gamma,
                    double v1, double v2, int mode, double dt, z0):
    """One fixed Radau IIA step; generic branch only, otherwise RK4."""
    cdef double x[3]
    cdef double z[6]
    cdef int i, status
    x[0] = x1
    x[1] = x2
    x[2] = x3
    if mode != GENERIC_:
        _brk4(x, gamma, v1, v2, mode, dt)
        return (x[0], x[1], x[2]), z0
    for i in range(6):
        z[i] = z0[i]
    status = _bradau(x, gamma, dt, z)
    if status != 0:
        raise KernelError(_RADAU_ERRORS[status])
    return (x[0], x[1], x[2]), (z[0], z[1], z[2], z[3], z[4], z[5])


cdef inline double _sham(double q1, double q2, double p1, double p2,
                         double omega0, double stiff) noexcept nogil:
    cdef double r2 = q1 * q1 + q2 * q2
    cdef double w2 = omega0 * omega0
    return 0.5 * (p1 * p1 + p2 * p2) + 0.5 * w2 * r2 + 0.25 * w2 * stiff * r2 * r2


cdef inline void _sfield(double* y, double omega0, double stiff, double gamma,
                         double h_star, int mode, bint smooth, double* f) noexcept nogil:
    cdef double c, k
    if smooth:
        c = -gamma * (_sham(y[0], y[1], y[2], y[3], omega0, stiff) - h_star)
    else:
        c = -gamma * mode
    k = -omega0 * omega0 * (1.0 + stiff * (y[0] * y[0] + y[1] * y[1]))
    f[0] = y[2]
    f[1] = y[3]
    f[2] = k * y[0] + c * y[2]
    f[3] = k * y[1] + c * y[3]


def string_control(double q1, double q2, double p1, double p2, double omega0,
                   double stiff, double gamma, double h_star, int mode, bint smooth):
    cdef double c
    if smooth:
        c = -gamma * (_sham(q1, q2, p1, p2, omega0, stiff) - h_star)
    else:
        c = -gamma * mode
    return c * p1, c * p2


def string_field(double q1, double q2, double p1, double p2, double omega0,
                 double stiff, double gamma, double h_star, int mode, bint smooth):
    cdef double y[4]
    cdef double f[4]
    y[0] = q1
    y[1] = q2
    y[2] = p1
    y[3] = p2
    _sfield(y, omega0, stiff, gamma, h_star, mode, smooth, f)
    return f[0], f[1], f[2], f[3]


def string_rk4(double q1, double q2, double p1, double p2, double omega0,
               double stiff, double gamma, double h_star, int mode, bint smooth,
               double dt):
    cdef double y[4]
    cdef double t[4]
    cdef double a[4]
    cdef double b[4]
    cdef double c[4]
    cdef double d[4]
    cdef double h2 = 0.5 * dt
    cdef double w = dt / 6.0
    cdef int i
    y[0] = q1
    y[1] = q2
    y[2] = p1
    y[3] = p2
    _sfield(y, omega0, stiff, gamma, h_star, mode, smooth, a)
    for i in range(4):
        t[i] = y[i] + h2 * a[i]
    _sfield(t, omega0, stiff, gamma, h_star, mode, smooth, b)
    for i in range(4):
        t[i] = y[i] + h2 * b[i]
    _sfield(t, omega0, stiff, gamma, h_star, mode, smooth, c)
    for i in range(4):
        t[i] = y[i] + dt * c[i]
    _sfield(t, omega0, stiff, gamma, h_star, mode, smooth, d)
    for i in range(4):
        y[i] = y[i] + w * (a[i] + 2.0 * b[i] + 2.0 * c[i] + d[i])
    return y[0], y[1], y[2], y[3]
