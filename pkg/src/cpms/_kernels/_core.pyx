# cython: language_level=3
"""Compiled kernels.  Scalar twins of the routines in ``_fallback.py``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs, pow, floor, hypot, INFINITY

cnp.import_array()

cdef double ARMIJO = 1e-4
cdef int MAX_HALVINGS = 60
cdef int MAX_DOUBLINGS = 200
cdef double DIVERGENCE_FACTOR = 1e6
# 1 / prod_{l != k} (k - l) for six equispaced nodes
cdef double LAGRANGE_DEN[6]
LAGRANGE_DEN[:] = [-1.0 / 120, 1.0 / 24, -1.0 / 12, 1.0 / 12, -1.0 / 24, 1.0 / 120]


cdef struct Prof:
    int family
    double complex c
    double p
    double eps
    double complex c1


cdef Prof _prof(const double[:] code):
    cdef Prof pr
    pr.family = <int>code[0]
    pr.c = code[1] + 1j * code[2]
    pr.p = code[3]
    pr.eps = code[4]
    pr.c1 = code[5] + 1j * code[6]
    return pr


cdef inline double _rpow(double r, double e) noexcept nogil:
    if e == 0.0:
        return 1.0
    if r > 0:
        if e == 1.0:
            return r
        if e == 2.0:
            return r * r
        return pow(r, e)
    return 0.0


cdef inline double _abs(double complex z) noexcept nogil:
    return sqrt(z.real * z.real + z.imag * z.imag)


cdef inline double complex _gval(Prof* pr, double r) noexcept nogil:
    if pr.family == 0:
        return pr.c + pr.eps
    if pr.family == 1:
        return 1j * _rpow(r, pr.p - 1.0) + pr.eps
    return pr.c + pr.c1 * r / (1.0 + r) + pr.eps


cdef inline void _g(Prof* pr, double r, double complex* g, double complex* g1,
                    double complex* g2) noexcept nogil:
    cdef double q
    if pr.family == 0:
        g[0] = pr.c + pr.eps
        g1[0] = 0
        g2[0] = 0
    elif pr.family == 1:
        q = pr.p - 1.0
        g[0] = 1j * _rpow(r, q) + pr.eps
        if q == 0.0:
            g1[0] = 0
            g2[0] = 0
        else:
            g1[0] = 1j * q * _rpow(r, q - 1.0)
            if q == 1.0:
                g2[0] = 0
            else:
                g2[0] = 1j * q * (q - 1.0) * _rpow(r, q - 2.0)
    else:
        g[0] = pr.c + pr.c1 * r / (1.0 + r) + pr.eps
        g1[0] = pr.c1 / ((1.0 + r) * (1.0 + r))
        g2[0] = -2.0 * pr.c1 / ((1.0 + r) * (1.0 + r) * (1.0 + r))


cdef inline double _rdot(double complex a, double complex b) noexcept nogil:
    return a.real * b.real + a.imag * b.imag


cdef inline double complex _beta(Prof* pr, double complex u) noexcept nogil:
    return _gval(pr, _abs(u)) * u


cdef inline double _phi(Prof* pr, double complex z1, double complex z2,
                        double complex u) noexcept nogil:
    # Re<u, beta(u)> in closed form; the expanded pairing cancels badly for large |u|
    cdef double r = _abs(u)
    cdef double complex g = _gval(pr, r)
    return _rdot(z1, z2) - _rdot(z1, g * u) - _rdot(u, z2) + g.real * r * r


cdef inline void _eval(Prof* pr, double complex z1, double complex z2,
                       double complex u, double* out) noexcept nogil:
    cdef double r = _abs(u)
    cdef double complex n, g, g1, g2, bx, by, bxx, byy, bxy
    cdef double nx, ny, s, q2
    if r > 0:
        n = u.real / r + 1j * (u.imag / r)
    else:
        n = 1.0
    _g(pr, r, &g, &g1, &g2)
    nx = n.real
    ny = n.imag
    bx = g1 * nx * u + g
    by = g1 * ny * u + 1j * g
    bxx = g2 * nx * nx * u + g1 * ny * ny * n + 2.0 * g1 * nx
    byy = g2 * ny * ny * u + g1 * nx * nx * n + 2.0j * g1 * ny
    bxy = g2 * nx * ny * u - g1 * nx * ny * n + g1 * ny + 1j * g1 * nx
    s = 2.0 * g.real + r * g1.real
    q2 = 2.0 * g.real + 4.0 * r * g1.real + r * r * g2.real
    out[0] = _rdot(z1, z2) - _rdot(z1, g * u) - _rdot(u, z2) + g.real * r * r
    out[1] = -_rdot(z1, bx) - z2.real + s * r * nx
    out[2] = -_rdot(z1, by) - z2.imag + s * r * ny
    out[3] = -_rdot(z1, bxx) + q2 * nx * nx + s * ny * ny
    out[4] = -_rdot(z1, bxy) + (q2 - s) * nx * ny
    out[5] = -_rdot(z1, byy) + q2 * ny * ny + s * nx * nx


cdef inline double _min_eig(double a, double b, double c, double* vx, double* vy) noexcept nogil:
    """Smallest eigenvalue of [[a, b], [b, c]] and a unit eigenvector."""
    cdef double m = 0.5 * (a + c), r = hypot(0.5 * (a - c), b), lam, x1, y1, x2, y2, n1, n2
    lam = m - r
    x1 = b
    y1 = lam - a
    x2 = lam - c
    y2 = b
    n1 = hypot(x1, y1)
    n2 = hypot(x2, y2)
    if n1 >= n2 and n1 > 0:
        vx[0] = x1 / n1
        vy[0] = y1 / n1
    elif n2 > 0:
        vx[0] = x2 / n2
        vy[0] = y2 / n2
    else:
        vx[0] = 1.0
        vy[0] = 0.0
    return lam


cdef int _fitz_point(Prof* pr, double complex z1, double complex z2, int max_iter,
                     double gtol, double* value, double complex* arg) noexcept nogil:
    cdef double scale = 1.0 + _abs(z1) + _abs(z2)
    cdef double radius = DIVERGENCE_FACTOR * scale
    cdef double complex u = z1, d, cand
    cdef double st[6]
    cdef double gn, det, dx, dy, slope, t, trial, cur, t2, noise, lam, vx, vy, ctol
    cdef bint pd, accepted, curv
    cdef int it, k, status = -1
    _eval(pr, z1, z2, u, st)
    for it in range(max_iter):
        gn = hypot(st[1], st[2])
        noise = 1e-15 * (1.0 + fabs(st[0]) + scale * scale)
        curv = False
        pd = False
        if gn <= gtol * scale:
            lam = _min_eig(st[3], st[4], st[5], &vx, &vy)
            ctol = 1e-9 * (1.0 + fabs(st[3]) + fabs(st[4]) + fabs(st[5]))
            if lam >= -ctol:
                status = 0
                break
            # stationary but not a minimum: follow negative curvature
            curv = True
            if vx * st[1] + vy * st[2] > 0:
                vx = -vx
                vy = -vy
            dx = vx * scale
            dy = vy * scale
        else:
            det = st[3] * st[5] - st[4] * st[4]
            pd = st[3] > 0 and st[5] > 0 and det > 1e-14 * (st[3] + st[5]) * (st[3] + st[5])
            if pd:
                dx = -(st[5] * st[1] - st[4] * st[2]) / det
                dy = -(-st[4] * st[1] + st[3] * st[2]) / det
            else:
                dx = -st[1]
                dy = -st[2]
        d = dx + 1j * dy
        slope = st[1] * dx + st[2] * dy
        t = 1.0
        accepted = False
        for k in range(MAX_HALVINGS):
            trial = _phi(pr, z1, z2, u + t * d)
            if curv:
                if trial < st[0] - noise:
                    accepted = True
                    break
            elif trial <= st[0] + ARMIJO * t * slope + noise:
                accepted = True
                break
            t *= 0.5
        if accepted and t * hypot(dx, dy) <= 1e-15 * scale:
            accepted = False
        if not accepted:
            status = 0 if (curv or gn <= 1e-8 * scale) else 2
            break
        if not pd and t == 1.0:
            cur = trial
            for k in range(MAX_DOUBLINGS):
                t2 = 2.0 * t
                cand = u + t2 * d
                trial = _phi(pr, z1, z2, cand)
                if trial <= st[0] + ARMIJO * t2 * slope and trial < cur:
                    if _abs(cand) > radius:
                        status = 1
                        break
                    t = t2
                    cur = trial
                else:
                    break
            if status == 1:
                break
        u = u + t * d
        _eval(pr, z1, z2, u, st)
        if _abs(u) > radius:
            status = 1
            break
    if status == -1:
        status = 2
    arg[0] = u
    if status == 1:
        value[0] = INFINITY
    else:
        value[0] = _rdot(z1, z2) - st[0]
    return status


def fitzpatrick(const double[:] code, z1, z2, int max_iter=200, double gtol=1e-12):
    z1a, z2a = np.broadcast_arrays(np.atleast_1d(np.asarray(z1, dtype=complex)).ravel(),
                                   np.atleast_1d(np.asarray(z2, dtype=complex)).ravel())
    cdef const double complex[:] Z1 = np.ascontiguousarray(z1a)
    cdef const double complex[:] Z2 = np.ascontiguousarray(z2a)
    cdef Py_ssize_t n = Z1.shape[0], i
    value = np.empty(n)
    arg = np.empty(n, dtype=complex)
    status = np.empty(n, dtype=np.int8)
    cdef double[:] V = value
    cdef double complex[:] A = arg
    cdef cnp.int8_t[:] S = status
    cdef Prof pr = _prof(code)
    with nogil:
        for i in range(n):
            S[i] = _fitz_point(&pr, Z1[i], Z2[i], max_iter, gtol, &V[i], &A[i])
    return value, arg, status


def resolvent(const double[:] code, a, w, int max_iter=200, double tol=1e-12):
    wa = np.ascontiguousarray(np.atleast_1d(np.asarray(w, dtype=complex)).ravel())
    aa = np.ascontiguousarray(np.broadcast_to(np.asarray(a, dtype=float), wa.shape))
    cdef const double complex[:] W = wa
    cdef const double[:] AA = aa
    cdef Py_ssize_t n = W.shape[0], i
    z_out = np.empty(n, dtype=complex)
    r_out = np.empty(n)
    it_out = np.zeros(n, dtype=np.int64)
    cdef double complex[:] Z = z_out
    cdef double[:] R = r_out
    cdef cnp.int64_t[:] IT = it_out
    cdef Prof pr = _prof(code)
    cdef double complex z, F, Ft, zt, g, g1, g2, n_, bx, by, d
    cdef double r, target, res, j11, j12, j21, j22, det, t, f0, ai
    cdef int it, k
    cdef bint moved
    with nogil:
        for i in range(n):
            z = W[i]
            ai = AA[i]
            target = 1e-14 * (1.0 + _abs(W[i]))
            F = z + ai * _beta(&pr, z) - W[i]
            res = _abs(F)
            for it in range(max_iter):
                if res <= target:
                    break
                r = _abs(z)
                if r > 0:
                    n_ = z.real / r + 1j * (z.imag / r)
                else:
                    n_ = 1.0
                _g(&pr, r, &g, &g1, &g2)
                bx = g1 * n_.real * z + g
                by = g1 * n_.imag * z + 1j * g
                j11 = 1.0 + ai * bx.real
                j21 = ai * bx.imag
                j12 = ai * by.real
                j22 = 1.0 + ai * by.imag
                det = j11 * j22 - j12 * j21
                d = (-(j22 * F.real - j12 * F.imag) / det) + 1j * (-(-j21 * F.real + j11 * F.imag) / det)
                t = 1.0
                f0 = res * res
                moved = False
                for k in range(MAX_HALVINGS):
                    zt = z + t * d
                    Ft = zt + ai * _beta(&pr, zt) - W[i]
                    if Ft.real * Ft.real + Ft.imag * Ft.imag <= (1.0 - 2.0 * ARMIJO * t) * f0:
                        moved = True
                        break
                    t *= 0.5
                IT[i] += 1
                if not moved:
                    break
                z = zt
                F = Ft
                res = _abs(F)
            Z[i] = z
            R[i] = res
    return z_out, r_out, it_out


def hungarian(cost):
    cdef const double[:, :] C = np.ascontiguousarray(cost, dtype=float)
    cdef Py_ssize_t n = C.shape[0]
    if C.shape[1] != n:
        raise ValueError("cost matrix must be square")
    u_a = np.zeros(n + 1)
    v_a = np.zeros(n + 1)
    p_a = np.zeros(n + 1, dtype=np.int64)
    way_a = np.zeros(n + 1, dtype=np.int64)
    minv_a = np.empty(n + 1)
    used_a = np.zeros(n + 1, dtype=np.uint8)
    cdef double[:] u = u_a, v = v_a, minv = minv_a
    cdef cnp.int64_t[:] p = p_a, way = way_a
    cdef cnp.uint8_t[:] used = used_a
    cdef Py_ssize_t i, j, j0, j1, i0
    cdef double delta, cur
    with nogil:
        for i in range(1, n + 1):
            p[0] = i
            j0 = 0
            for j in range(n + 1):
                minv[j] = INFINITY
                used[j] = 0
            while True:
                used[j0] = 1
                i0 = p[j0]
                delta = INFINITY
                j1 = 0
                for j in range(1, n + 1):
                    if not used[j]:
                        cur = C[i0 - 1, j - 1] - u[i0] - v[j]
                        if cur < minv[j]:
                            minv[j] = cur
                            way[j] = j0
                        if minv[j] < delta:
                            delta = minv[j]
                            j1 = j
                for j in range(n + 1):
                    if used[j]:
                        u[p[j]] += delta
                        v[j] -= delta
                    else:
                        minv[j] -= delta
                j0 = j1
                if p[j0] == 0:
                    break
            while True:
                j1 = way[j0]
                p[j0] = p[j1]
                j0 = j1
                if j0 == 0:
                    break
    perm = np.empty(n, dtype=np.int64)
    for j in range(1, n + 1):
        perm[p[j] - 1] = j - 1
    return perm


def interp_quintic(values, double x0, double h, points):
    vals = np.ascontiguousarray(values, dtype=complex)
    pts = np.ascontiguousarray(np.asarray(points, dtype=float).ravel())
    cdef const double complex[:] V = vals
    cdef const double[:] P = pts
    cdef Py_ssize_t n = V.shape[0], m = P.shape[0], q, start, k, l
    if n < 6:
        raise ValueError("quintic interpolation needs at least 6 nodes")
    out = np.empty(m, dtype=complex)
    cdef double complex[:] O = out
    cdef double s, loc, w
    cdef double complex acc
    with nogil:
        for q in range(m):
            s = (P[q] - x0) / h
            start = <Py_ssize_t>floor(s) - 2
            if start < 0:
                start = 0
            if start > n - 6:
                start = n - 6
            loc = s - start
            acc = 0
            for k in range(6):
                w = LAGRANGE_DEN[k]
                for l in range(6):
                    if l != k:
                        w *= loc - l
                acc = acc + w * V[start + k]
            O[q] = acc
    return out.reshape(np.shape(points))
