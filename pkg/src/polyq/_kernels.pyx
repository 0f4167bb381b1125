# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled billiard kernels (twin of ``_kernels_py``)."""
from libc.math cimport sqrt, hypot, exp, sin, cos, fabs, fmax, INFINITY, NAN

import numpy as np

BACKEND = "cython"

DEF ST_OK = 0
DEF ST_VERTEX = 1
DEF ST_STUCK = 2
DEF ST_MAXBOUNCE = 3
DEF ST_CAPACITY = 4
DEF T_MIN = 1e-12
DEF SIMPSON_TOL = 1e-10
DEF SIMPSON_DEPTH = 40


cdef struct Hit:
    double t
    int side
    double hx
    double hy
    int status
    int vertex


cdef struct FlowState:
    double x
    double y
    double dx
    double dy
    int last_side
    double integral
    long bounces
    double elapsed
    int status
    int vertex


cdef inline double _smooth_step(double t) nogil:
    cdef double f, g
    if t <= 0.0:
        return 0.0
    if t >= 1.0:
        return 1.0
    f = exp(-1.0 / t)
    g = exp(-1.0 / (1.0 - t))
    return f / (f + g)


cdef inline double _sinc(double z) nogil:
    if fabs(z) < 1e-4:
        return 1.0 - z * z / 6.0
    return sin(z) / z


cdef inline double _bump_at(const double[::1] p, double x, double y) nogil:
    cdef double r = hypot(x - p[0], y - p[1])
    return _smooth_step((p[2] - r) / (p[2] - p[3]))


cdef double _simpson_rec(const double[::1] p, double x, double y, double dx, double dy,
                         double a, double b, double fa, double fm, double fb,
                         double whole, double tol, int depth) nogil:
    cdef double m = 0.5 * (a + b)
    cdef double lm = 0.5 * (a + m)
    cdef double rm = 0.5 * (m + b)
    cdef double flm = _bump_at(p, x + lm * dx, y + lm * dy)
    cdef double frm = _bump_at(p, x + rm * dx, y + rm * dy)
    cdef double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
    cdef double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
    cdef double delta = left + right - whole
    if depth <= 0 or fabs(delta) <= 15.0 * tol:
        return left + right + delta / 15.0
    return (_simpson_rec(p, x, y, dx, dy, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + _simpson_rec(p, x, y, dx, dy, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1))


cdef inline double _chord_table(const double[::1] p, double rho) nogil:
    # Clenshaw sum of the Chebyshev series in u = 2 rho - 1
    cdef int n = <int>p[6]
    cdef double u = 2.0 * rho - 1.0
    cdef double b0 = 0.0, b1 = 0.0, b2 = 0.0
    cdef int k
    for k in range(n - 1, 0, -1):
        b2 = b1
        b1 = b0
        b0 = p[7 + k] + 2.0 * u * b1 - b2
    return p[7] + u * b0 - b1


cdef double _bump_line_integral(const double[::1] p, double x, double y,
                                double dx, double dy, double L) nogil:
    cdef double qx = x - p[0]
    cdef double qy = y - p[1]
    cdef double R = p[2]
    cdef double b = qx * dx + qy * dy
    cdef double c = qx * qx + qy * qy - R * R
    cdef double disc = b * b - c
    cdef double total = p[5] * L
    cdef double sq, s1, s2, acc, h, a0, b0, fa, fb, fm, mid, whole
    cdef int i, npan = 8
    if disc <= 0.0:
        return total
    sq = sqrt(disc)
    s1 = -b - sq
    if s1 < 0.0:
        s1 = 0.0
    s2 = -b + sq
    if s2 > L:
        s2 = L
    if s2 <= s1:
        return total
    if <int>p[6] > 0 and s1 == -b - sq and s2 == -b + sq:
        # the segment crosses the whole disk: tabulated chord integral
        return total + p[4] * _chord_table(p, sqrt(fmax(c + R * R - b * b, 0.0)) / R)
    acc = 0.0
    h = (s2 - s1) / npan
    for i in range(npan):
        a0 = s1 + i * h
        b0 = a0 + h
        fa = _bump_at(p, x + a0 * dx, y + a0 * dy)
        fb = _bump_at(p, x + b0 * dx, y + b0 * dy)
        mid = 0.5 * (a0 + b0)
        fm = _bump_at(p, x + mid * dx, y + mid * dy)
        whole = h / 6.0 * (fa + 4.0 * fm + fb)
        acc += _simpson_rec(p, x, y, dx, dy, a0, b0, fa, fm, fb, whole,
                            SIMPSON_TOL / npan, SIMPSON_DEPTH)
    return total + p[4] * acc


cdef double _segment_integral(int code, const double[::1] p, const long[::1] off,
                              double x, double y, double dx, double dy, double L) nogil:
    cdef double acc, half, kx, ky, ca, sb, alpha, w, sc, ph
    cdef double qx, qy, b, c, disc, sq, s1, s2, lo, hi, nx, ny, cc, num, den, s
    cdef Py_ssize_t j, nterms, pc, npieces
    if code == 0:
        return p[0] * L
    if code == 1:
        acc = p[0] * L
        nterms = (p.shape[0] - 1) // 4
        half = 0.5 * L
        for j in range(nterms):
            kx = p[1 + 4 * j]
            ky = p[2 + 4 * j]
            ca = p[3 + 4 * j]
            sb = p[4 + 4 * j]
            alpha = kx * x + ky * y
            w = kx * dx + ky * dy
            sc = L * _sinc(w * half)
            ph = alpha + w * half
            acc += ca * sc * cos(ph) + sb * sc * sin(ph)
        return acc
    if code == 2:
        return _bump_line_integral(p, x, y, dx, dy, L)
    if code == 3:
        qx = x - p[0]
        qy = y - p[1]
        b = qx * dx + qy * dy
        c = qx * qx + qy * qy - p[2] * p[2]
        disc = b * b - c
        if disc <= 0.0:
            return 0.0
        sq = sqrt(disc)
        s1 = -b - sq
        if s1 < 0.0:
            s1 = 0.0
        s2 = -b + sq
        if s2 > L:
            s2 = L
        if s2 > s1:
            return s2 - s1
        return 0.0
    if code == 4:
        acc = 0.0
        npieces = off.shape[0] - 1
        for pc in range(npieces):
            lo = 0.0
            hi = L
            for j in range(off[pc], off[pc + 1]):
                nx = p[3 * j]
                ny = p[3 * j + 1]
                cc = p[3 * j + 2]
                num = cc - (nx * x + ny * y)
                den = nx * dx + ny * dy
                if den == 0.0:
                    if num < 0.0:
                        hi = -1.0
                        break
                elif den > 0.0:
                    s = num / den
                    if s < hi:
                        hi = s
                else:
                    s = num / den
                    if s > lo:
                        lo = s
            if hi > lo:
                acc += hi - lo
        return acc
    return NAN


cdef Hit _next_hit(const double[:, ::1] v, double x, double y, double dx, double dy,
                   int last_side, double vertex_radius) nogil:
    cdef Hit h
    cdef Py_ssize_t k = v.shape[0]
    cdef Py_ssize_t j, jn
    cdef double best_t = INFINITY
    cdef int best_side = -1
    cdef double best_u = 0.0
    cdef double ax, ay, sx, sy, den, apx, apy, t, u, slen, utol
    for j in range(k):
        if j == last_side:
            continue
        ax = v[j, 0]
        ay = v[j, 1]
        jn = j + 1 if j + 1 < k else 0
        sx = v[jn, 0] - ax
        sy = v[jn, 1] - ay
        den = dx * sy - dy * sx
        if den == 0.0:
            continue
        apx = ax - x
        apy = ay - y
        t = (apx * sy - apy * sx) / den
        if t <= T_MIN or t >= best_t:
            continue
        u = (apx * dy - apy * dx) / den
        slen = hypot(sx, sy)
        utol = vertex_radius / slen
        if u < -utol or u > 1.0 + utol:
            continue
        best_t = t
        best_side = <int>j
        best_u = u
    h.vertex = -1
    if best_side < 0:
        h.t = 0.0
        h.side = -1
        h.hx = x
        h.hy = y
        h.status = ST_STUCK
        return h
    j = best_side
    jn = j + 1 if j + 1 < k else 0
    ax = v[j, 0]
    ay = v[j, 1]
    sx = v[jn, 0] - ax
    sy = v[jn, 1] - ay
    slen = hypot(sx, sy)
    h.t = best_t
    h.side = best_side
    h.hx = ax + best_u * sx
    h.hy = ay + best_u * sy
    h.status = ST_OK
    if best_u * slen < vertex_radius:
        h.status = ST_VERTEX
        h.vertex = <int>j
    elif (1.0 - best_u) * slen < vertex_radius:
        h.status = ST_VERTEX
        h.vertex = <int>jn
    return h


cdef inline void _reflect(double* dx, double* dy, double nx, double ny) nogil:
    cdef double dot = dx[0] * nx + dy[0] * ny
    cdef double rx = dx[0] - 2.0 * dot * nx
    cdef double ry = dy[0] - 2.0 * dot * ny
    cdef double nrm = hypot(rx, ry)
    dx[0] = rx / nrm
    dy[0] = ry / nrm


cdef FlowState _flow(const double[:, ::1] v, const double[:, ::1] nrm,
                     double x, double y, double dx, double dy, double T, int last_side,
                     double vertex_radius, long max_bounces, int code,
                     const double[::1] p, const long[::1] off) nogil:
    cdef FlowState s
    cdef Hit h
    cdef double rem
    s.elapsed = 0.0
    s.integral = 0.0
    s.bounces = 0
    s.vertex = -1
    while True:
        h = _next_hit(v, x, y, dx, dy, last_side, vertex_radius)
        if h.status == ST_STUCK:
            s.status = ST_STUCK
            break
        if s.elapsed + h.t >= T:
            rem = T - s.elapsed
            s.integral += _segment_integral(code, p, off, x, y, dx, dy, rem)
            x += rem * dx
            y += rem * dy
            last_side = -1
            s.elapsed = T
            s.status = ST_OK
            break
        s.integral += _segment_integral(code, p, off, x, y, dx, dy, h.t)
        s.elapsed += h.t
        x = h.hx
        y = h.hy
        if h.status == ST_VERTEX:
            last_side = h.side
            s.status = ST_VERTEX
            s.vertex = h.vertex
            break
        if s.bounces >= max_bounces:
            last_side = h.side
            s.status = ST_MAXBOUNCE
            break
        _reflect(&dx, &dy, nrm[h.side, 0], nrm[h.side, 1])
        last_side = h.side
        s.bounces += 1
    s.x = x
    s.y = y
    s.dx = dx
    s.dy = dy
    s.last_side = last_side
    return s


def segment_integral(int code, const double[::1] params, const long[::1] offsets,
                     double x, double y, double dx, double dy, double L):
    return _segment_integral(code, params, offsets, x, y, dx, dy, L)


def next_hit(const double[:, ::1] verts, double x, double y, double dx, double dy,
             int last_side, double vertex_radius):
    cdef Hit h = _next_hit(verts, x, y, dx, dy, last_side, vertex_radius)
    return h.t, h.side, h.hx, h.hy, h.status, h.vertex


def flow(const double[:, ::1] verts, const double[:, ::1] normals, double x, double y,
         double dx, double dy, double T, int last_side, double vertex_radius,
         long max_bounces, int code, const double[::1] params, const long[::1] offsets):
    cdef FlowState s
    with nogil:
        s = _flow(verts, normals, x, y, dx, dy, T, last_side, vertex_radius,
                  max_bounces, code, params, offsets)
    return (s.x, s.y, s.dx, s.dy, s.last_side, s.integral, s.bounces, s.elapsed,
            s.status, s.vertex)


def trace(const double[:, ::1] verts, const double[:, ::1] normals, double x, double y,
          double dx, double dy, double T, int last_side, double vertex_radius,
          double[:, ::1] out):
    cdef Py_ssize_t cap = out.shape[0]
    cdef Py_ssize_t n = 0
    cdef double elapsed = 0.0
    cdef double rem, ex, ey
    cdef Hit h
    cdef int status = ST_OK
    cdef int vertex = -1
    with nogil:
        while True:
            if n >= cap:
                status = ST_CAPACITY
                break
            h = _next_hit(verts, x, y, dx, dy, last_side, vertex_radius)
            if h.status == ST_STUCK:
                status = ST_STUCK
                break
            if elapsed + h.t >= T:
                rem = T - elapsed
                ex = x + rem * dx
                ey = y + rem * dy
                out[n, 0] = x
                out[n, 1] = y
                out[n, 2] = ex
                out[n, 3] = ey
                out[n, 4] = dx
                out[n, 5] = dy
                out[n, 6] = -1.0
                out[n, 7] = elapsed
                n += 1
                x = ex
                y = ey
                last_side = -1
                elapsed = T
                status = ST_OK
                break
            out[n, 0] = x
            out[n, 1] = y
            out[n, 2] = h.hx
            out[n, 3] = h.hy
            out[n, 4] = dx
            out[n, 5] = dy
            out[n, 6] = <double>h.side
            out[n, 7] = elapsed
            n += 1
            elapsed += h.t
            x = h.hx
            y = h.hy
            if h.status == ST_VERTEX:
                last_side = h.side
                status = ST_VERTEX
                vertex = h.vertex
                break
            _reflect(&dx, &dy, normals[h.side, 0], normals[h.side, 1])
            last_side = h.side
    return n, x, y, dx, dy, last_side, elapsed, status, vertex


def batch_time_average(const double[:, ::1] verts, const double[:, ::1] normals,
                       const double[:, ::1] starts, double T, double vertex_radius,
                       long max_bounces, int code, const double[::1] params,
                       const long[::1] offsets, double[::1] out, int[::1] status):
    cdef Py_ssize_t i
    cdef FlowState f, b
    with nogil:
        for i in range(starts.shape[0]):
            f = _flow(verts, normals, starts[i, 0], starts[i, 1], starts[i, 2],
                      starts[i, 3], T, -1, vertex_radius, max_bounces, code, params,
                      offsets)
            if f.status != ST_OK:
                status[i] = f.status
                out[i] = NAN
                continue
            b = _flow(verts, normals, starts[i, 0], starts[i, 1], -starts[i, 2],
                      -starts[i, 3], T, -1, vertex_radius, max_bounces, code, params,
                      offsets)
            if b.status != ST_OK:
                status[i] = b.status
                out[i] = NAN
                continue
            status[i] = ST_OK
            out[i] = (f.integral + b.integral) / (2.0 * T)
