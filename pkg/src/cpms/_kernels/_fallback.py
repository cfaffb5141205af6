"""Pure numpy implementations of the hot kernels.

Every routine here has a line-for-line scalar twin in ``_core.pyx``; the two
are cross-checked in the test-suite and timed against each other in
``benchmarks/bench_kernels.py``.

Radial maps are ``beta(u) = g(|u|) u`` with ``g: R+ -> C``.  A profile is an
object exposing vectorised ``g(r)``, ``g1(r)`` (first derivative) and
``g2(r)`` (second derivative).
"""
from __future__ import annotations

import numpy as np

ARMIJO = 1e-4
MAX_HALVINGS = 60
MAX_DOUBLINGS = 200
DIVERGENCE_FACTOR = 1e6

# fitzpatrick status codes
CONVERGED, UNBOUNDED, MAXITER = 0, 1, 2


class CodedProfile:
    """Radial profile described by the 8-slot code shared with the C kernels.

    Layout: ``[family, c_re, c_im, p, eps, c1_re, c1_im, 0]``
      family 0: g = c
      family 1: g = i r^(p-1)
      family 2: g = c + c1 r / (1 + r)
    and ``eps`` is added to g in all cases.
    """

    def __init__(self, code):
        code = np.ascontiguousarray(code, dtype=float)
        self.code = code
        self.family = int(code[0])
        self.c = complex(code[1], code[2])
        self.p = float(code[3])
        self.eps = float(code[4])
        self.c1 = complex(code[5], code[6])

    def g(self, r):
        r = np.asarray(r, dtype=float)
        if self.family == 0:
            out = np.full(r.shape, self.c, dtype=complex)
        elif self.family == 1:
            out = 1j * _pow(r, self.p - 1.0)
        else:
            out = self.c + self.c1 * r / (1.0 + r)
        return out + self.eps

    def g1(self, r):
        r = np.asarray(r, dtype=float)
        if self.family == 0:
            return np.zeros(r.shape, dtype=complex)
        if self.family == 1:
            q = self.p - 1.0
            if q == 0.0:
                return np.zeros(r.shape, dtype=complex)
            return 1j * q * _pow(r, q - 1.0)
        return self.c1 / (1.0 + r) ** 2

    def g2(self, r):
        r = np.asarray(r, dtype=float)
        if self.family == 0:
            return np.zeros(r.shape, dtype=complex)
        if self.family == 1:
            q = self.p - 1.0
            if q == 0.0 or q == 1.0:
                return np.zeros(r.shape, dtype=complex)
            return 1j * q * (q - 1.0) * _pow(r, q - 2.0)
        return -2.0 * self.c1 / (1.0 + r) ** 3


def _pow(r, e):
    # 0**negative is taken as 0: those terms always multiply a vanishing factor
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(r > 0, np.power(np.maximum(r, 1e-300), e), 0.0 if e != 0 else 1.0)
    return out


def _unit(u):
    r = np.abs(u)
    # componentwise real division; 1/r overflows for subnormal r
    safe = np.where(r > 0, r, 1.0)
    n = np.where(r > 0, u.real / safe + 1j * (u.imag / safe), 1.0 + 0j)
    return r, n


def beta_eval(prof, u):
    r = np.abs(u)
    return prof.g(r) * u


def beta_jacobian(prof, u):
    """Complex partials d beta/dx and d beta/dy (u = x + i y)."""
    r, n = _unit(u)
    g = prof.g(r)
    g1 = prof.g1(r)
    dx = g1 * n.real * u + g
    dy = g1 * n.imag * u + 1j * g
    return dx, dy


def _rdot(a, b):
    return a.real * b.real + a.imag * b.imag


# Re<u, beta(u)> = Re g(|u|) |u|^2 is kept in closed form; expanding it as a
# pairing loses everything to cancellation once |u| is large.
def _fitz_phi(prof, z1, z2, u):
    r = np.abs(u)
    g = prof.g(r)
    return _rdot(z1, z2) - _rdot(z1, g * u) - _rdot(u, z2) + g.real * r * r


def _fitz_eval(prof, z1, z2, u):
    r, n = _unit(u)
    g = prof.g(r)
    g1 = prof.g1(r)
    g2 = prof.g2(r)
    nx, ny = n.real, n.imag
    bx = g1 * nx * u + g
    by = g1 * ny * u + 1j * g
    bxx = g2 * nx * nx * u + g1 * ny * ny * n + 2.0 * g1 * nx
    byy = g2 * ny * ny * u + g1 * nx * nx * n + 2.0j * g1 * ny
    bxy = g2 * nx * ny * u - g1 * nx * ny * n + g1 * ny + 1j * g1 * nx
    # radial part q(r) = Re g r^2: q' / r and q''
    s = 2.0 * g.real + r * g1.real
    q2 = 2.0 * g.real + 4.0 * r * g1.real + r * r * g2.real
    phi = _rdot(z1, z2) - _rdot(z1, g * u) - _rdot(u, z2) + g.real * r * r
    gx = -_rdot(z1, bx) - z2.real + s * r * nx
    gy = -_rdot(z1, by) - z2.imag + s * r * ny
    hxx = -_rdot(z1, bxx) + q2 * nx * nx + s * ny * ny
    hyy = -_rdot(z1, byy) + q2 * ny * ny + s * nx * nx
    hxy = -_rdot(z1, bxy) + (q2 - s) * nx * ny
    return phi, gx, gy, hxx, hxy, hyy


def _min_eig(a, b, c):
    """Smallest eigenvalue of [[a, b], [b, c]] with a unit eigenvector."""
    m = 0.5 * (a + c)
    r = np.hypot(0.5 * (a - c), b)
    lam = m - r
    x1, y1 = b, lam - a
    x2, y2 = lam - c, b
    n1 = np.hypot(x1, y1)
    n2 = np.hypot(x2, y2)
    first = (n1 >= n2) & (n1 > 0)
    second = ~first & (n2 > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        vx = np.where(first, x1 / n1, np.where(second, x2 / n2, 1.0))
        vy = np.where(first, y1 / n1, np.where(second, y2 / n2, 0.0))
    return lam, vx, vy


def fitzpatrick(prof, z1, z2, max_iter=200, gtol=1e-12):
    """Fitzpatrick value ``Re<z1,z2> - inf_u Re<z1-u, z2-beta(u)>``.

    Returns ``(value, argmin, status)``; ``value`` is ``+inf`` where the
    infimum was detected to be ``-inf``.  Stationary points that are not
    minima are left along the direction of negative curvature.
    """
    z1 = np.atleast_1d(np.asarray(z1, dtype=complex)).ravel()
    z2 = np.atleast_1d(np.asarray(z2, dtype=complex)).ravel()
    z1, z2 = (a.copy() for a in np.broadcast_arrays(z1, z2))
    n = z1.size
    scale = 1.0 + np.abs(z1) + np.abs(z2)
    radius = DIVERGENCE_FACTOR * scale
    u = z1.copy()
    status = np.full(n, -1, dtype=np.int8)
    phi, gx, gy, hxx, hxy, hyy = _fitz_eval(prof, z1, z2, u)

    for _ in range(max_iter):
        idx = np.nonzero(status == -1)[0]
        if idx.size == 0:
            break
        g_x, g_y = gx[idx], gy[idx]
        a, b_, c = hxx[idx], hxy[idx], hyy[idx]
        gn = np.hypot(g_x, g_y)
        sc = scale[idx]
        phi0 = phi[idx]
        noise = 1e-15 * (1.0 + np.abs(phi0) + sc ** 2)
        small = gn <= gtol * sc
        lam, vx, vy = _min_eig(a, b_, c)
        ctol = 1e-9 * (1.0 + np.abs(a) + np.abs(b_) + np.abs(c))
        done = small & (lam >= -ctol)
        status[idx[done]] = CONVERGED
        curv = small & ~done
        flip = vx * g_x + vy * g_y > 0
        vx = np.where(flip, -vx, vx)
        vy = np.where(flip, -vy, vy)
        det = a * c - b_ * b_
        pd = ~small & (a > 0) & (c > 0) & (det > 1e-14 * (a + c) ** 2)
        with np.errstate(divide="ignore", invalid="ignore"):
            ndx = -(c * g_x - b_ * g_y) / det
            ndy = -(-b_ * g_x + a * g_y) / det
        dx = np.where(pd, ndx, np.where(curv, vx * sc, -g_x))
        dy = np.where(pd, ndy, np.where(curv, vy * sc, -g_y))
        d = dx + 1j * dy
        slope = g_x * dx + g_y * dy

        live = ~done
        t = np.ones(idx.size)
        accepted = np.zeros(idx.size, dtype=bool)
        pending = live.copy()
        for _h in range(MAX_HALVINGS):
            k = np.nonzero(pending)[0]
            if k.size == 0:
                break
            trial = _fitz_phi(prof, z1[idx[k]], z2[idx[k]], u[idx[k]] + t[k] * d[k])
            ok = np.where(curv[k], trial < phi0[k] - noise[k],
                          trial <= phi0[k] + ARMIJO * t[k] * slope[k] + noise[k])
            accepted[k[ok]] = True
            pending[k[ok]] = False
            t[k[~ok]] *= 0.5
        # an accepted but negligible step means the search has stalled
        accepted &= t * np.abs(d) > 1e-15 * sc
        stalled = live & ~accepted
        near = curv | (gn <= 1e-8 * sc)
        status[idx[stalled & near]] = CONVERGED
        status[idx[stalled & ~near]] = MAXITER

        grow = accepted & ~pd & (t == 1.0)
        unbounded = np.zeros(idx.size, dtype=bool)
        if grow.any():
            k_all = np.nonzero(grow)[0]
            cur_phi = np.full(idx.size, np.nan)
            cur_phi[k_all] = _fitz_phi(prof, z1[idx[k_all]], z2[idx[k_all]], u[idx[k_all]] + d[k_all])
            pending = grow.copy()
            for _d in range(MAX_DOUBLINGS):
                k = np.nonzero(pending)[0]
                if k.size == 0:
                    break
                t2 = 2.0 * t[k]
                cand = u[idx[k]] + t2 * d[k]
                trial = _fitz_phi(prof, z1[idx[k]], z2[idx[k]], cand)
                ok = (trial <= phi0[k] + ARMIJO * t2 * slope[k]) & (trial < cur_phi[k])
                far = ok & (np.abs(cand) > radius[idx[k]])
                unbounded[k[far]] = True
                pending[k[far | ~ok]] = False
                step = ok & ~far
                t[k[step]] = t2[step]
                cur_phi[k[step]] = trial[step]
        status[idx[unbounded]] = UNBOUNDED
        move = accepted & ~unbounded
        m_idx = idx[move]
        if m_idx.size:
            u[m_idx] = u[m_idx] + t[move] * d[move]
            vals = _fitz_eval(prof, z1[m_idx], z2[m_idx], u[m_idx])
            for arr, v in zip((phi, gx, gy, hxx, hxy, hyy), vals):
                arr[m_idx] = v
            far_now = np.abs(u[m_idx]) > radius[m_idx]
            status[m_idx[far_now]] = UNBOUNDED
    status[status == -1] = MAXITER
    value = _rdot(z1, z2) - phi
    value = np.where(status == UNBOUNDED, np.inf, value)
    return value, u, status


def resolvent(prof, a, w, max_iter=200, tol=1e-12):
    """Solve ``z + a beta(z) = w`` pointwise by damped Newton on R^2.

    Returns ``(z, residual, iterations)``.
    """
    w = np.atleast_1d(np.asarray(w, dtype=complex)).ravel()
    a = np.broadcast_to(np.asarray(a, dtype=float), w.shape).copy()
    z = w.copy()
    target = 1e-14 * (1.0 + np.abs(w))
    F = z + a * beta_eval(prof, z) - w
    res = np.abs(F)
    iters = np.zeros(w.size, dtype=np.int64)
    active = res > target
    for it in range(max_iter):
        idx = np.nonzero(active)[0]
        if idx.size == 0:
            break
        bx, by = beta_jacobian(prof, z[idx])
        ai = a[idx]
        j11 = 1.0 + ai * bx.real
        j21 = ai * bx.imag
        j12 = ai * by.real
        j22 = 1.0 + ai * by.imag
        det = j11 * j22 - j12 * j21
        fr, fi = F[idx].real, F[idx].imag
        dx = -(j22 * fr - j12 * fi) / det
        dy = -(-j21 * fr + j11 * fi) / det
        d = dx + 1j * dy
        t = np.ones(idx.size)
        f0 = res[idx] ** 2
        pending = np.ones(idx.size, dtype=bool)
        newF = F[idx].copy()
        for _h in range(MAX_HALVINGS):
            k = np.nonzero(pending)[0]
            if k.size == 0:
                break
            zt = z[idx[k]] + t[k] * d[k]
            Ft = zt + ai[k] * beta_eval(prof, zt) - w[idx[k]]
            ok = np.abs(Ft) ** 2 <= (1.0 - 2.0 * ARMIJO * t[k]) * f0[k]
            newF[k[ok]] = Ft[ok]
            pending[k[ok]] = False
            t[k[~ok]] *= 0.5
        moved = ~pending
        upd = idx[moved]
        z[upd] = z[upd] + t[moved] * d[moved]
        F[upd] = newF[moved]
        res[upd] = np.abs(F[upd])
        iters[idx] += 1
        active[idx[~moved]] = False
        active[upd] = res[upd] > target[upd]
    return z, res, iters


def hungarian(cost):
    """Minimum-cost perfect assignment for a square matrix (row -> column).

    Shortest augmenting path with dual potentials, O(n^3).
    """
    cost = np.asarray(cost, dtype=float)
    n = cost.shape[0]
    if cost.shape != (n, n):
        raise ValueError("cost matrix must be square")
    INF = np.inf
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    p = np.zeros(n + 1, dtype=np.int64)  # p[j]: row matched to column j (1-based, 0 = none)
    way = np.zeros(n + 1, dtype=np.int64)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(n + 1, INF)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            free = ~used[1:]
            cur = cost[i0 - 1] - u[i0] - v[1:]
            better = free & (cur < minv[1:])
            minv[1:][better] = cur[better]
            way[1:][better] = j0
            cand = np.where(free, minv[1:], INF)
            j1 = int(np.argmin(cand)) + 1
            delta = cand[j1 - 1]
            usedj = np.nonzero(used)[0]
            u[p[usedj]] += delta
            v[usedj] -= delta
            minv[1:][free] -= delta
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


def interp_quintic(values, x0, h, points):
    """Six-point Lagrange interpolation on a uniform grid ``x0 + h k``."""
    values = np.asarray(values)
    pts = np.asarray(points, dtype=float)
    n = values.shape[0]
    if n < 6:
        raise ValueError("quintic interpolation needs at least 6 nodes")
    s = (pts - x0) / h
    i = np.floor(s).astype(np.int64)
    start = np.clip(i - 2, 0, n - 6)
    loc = s - start
    out = np.zeros(pts.shape, dtype=np.result_type(values.dtype, float))
    for k in range(6):
        w = np.ones(pts.shape)
        for m in range(6):
            if m != k:
                w *= (loc - m) / (k - m)
        out = out + w * values[start + k]
    return out
