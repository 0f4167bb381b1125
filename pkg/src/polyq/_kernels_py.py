"""Pure-Python billiard kernels.

Reference twin of ``_kernels.pyx``: same functions, same arguments, same
floating point operations in the same order.  Used when the compiled
extension is unavailable or ``POLYQ_PURE_PYTHON=1`` is set.
"""
import math

import numpy as np

BACKEND = "python"

ST_OK = 0
ST_VERTEX = 1
ST_STUCK = 2
ST_MAXBOUNCE = 3
ST_CAPACITY = 4

T_MIN = 1e-12
SIMPSON_TOL = 1e-10
SIMPSON_DEPTH = 40


def _smooth_step(t):
    if t <= 0.0:
        return 0.0
    if t >= 1.0:
        return 1.0
    f = math.exp(-1.0 / t)
    g = math.exp(-1.0 / (1.0 - t))
    return f / (f + g)


def _sinc(z):
    if abs(z) < 1e-4:
        return 1.0 - z * z / 6.0
    return math.sin(z) / z


def _bump_at(params, x, y):
    r = math.hypot(x - params[0], y - params[1])
    return _smooth_step((params[2] - r) / (params[2] - params[3]))


def _simpson_rec(params, x, y, dx, dy, a, b, fa, fm, fb, whole, tol, depth):
    m = 0.5 * (a + b)
    lm = 0.5 * (a + m)
    rm = 0.5 * (m + b)
    flm = _bump_at(params, x + lm * dx, y + lm * dy)
    frm = _bump_at(params, x + rm * dx, y + rm * dy)
    left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
    right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
    delta = left + right - whole
    if depth <= 0 or abs(delta) <= 15.0 * tol:
        return left + right + delta / 15.0
    return (_simpson_rec(params, x, y, dx, dy, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + _simpson_rec(params, x, y, dx, dy, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1))


def _chord_table(params, rho):
    # Clenshaw sum of the Chebyshev series in u = 2 rho - 1
    n = int(params[6])
    u = 2.0 * rho - 1.0
    b0 = b1 = b2 = 0.0
    for k in range(n - 1, 0, -1):
        b2 = b1
        b1 = b0
        b0 = params[7 + k] + 2.0 * u * b1 - b2
    return params[7] + u * b0 - b1


def _bump_line_integral(params, x, y, dx, dy, L):
    qx = x - params[0]
    qy = y - params[1]
    R = params[2]
    b = qx * dx + qy * dy
    c = qx * qx + qy * qy - R * R
    disc = b * b - c
    total = params[5] * L
    if disc <= 0.0:
        return total
    sq = math.sqrt(disc)
    s1 = max(-b - sq, 0.0)
    s2 = min(-b + sq, L)
    if s2 <= s1:
        return total
    if int(params[6]) > 0 and s1 == -b - sq and s2 == -b + sq:
        # the segment crosses the whole disk: tabulated chord integral
        return total + params[4] * _chord_table(params, math.sqrt(max(c + R * R - b * b, 0.0)) / R)
    acc = 0.0
    npan = 8
    h = (s2 - s1) / npan
    for i in range(npan):
        a0 = s1 + i * h
        b0 = a0 + h
        fa = _bump_at(params, x + a0 * dx, y + a0 * dy)
        fb = _bump_at(params, x + b0 * dx, y + b0 * dy)
        mid = 0.5 * (a0 + b0)
        fm = _bump_at(params, x + mid * dx, y + mid * dy)
        whole = h / 6.0 * (fa + 4.0 * fm + fb)
        acc += _simpson_rec(params, x, y, dx, dy, a0, b0, fa, fm, fb, whole,
                            SIMPSON_TOL / npan, SIMPSON_DEPTH)
    return total + params[4] * acc


def segment_integral(code, params, offsets, x, y, dx, dy, L):
    """Integral of a0 along the segment x + s*d, 0 <= s <= L."""
    if code == 0:
        return params[0] * L
    if code == 1:
        acc = params[0] * L
        nterms = (len(params) - 1) // 4
        half = 0.5 * L
        for j in range(nterms):
            kx = params[1 + 4 * j]
            ky = params[2 + 4 * j]
            ca = params[3 + 4 * j]
            sb = params[4 + 4 * j]
            alpha = kx * x + ky * y
            w = kx * dx + ky * dy
            sc = L * _sinc(w * half)
            ph = alpha + w * half
            acc += ca * sc * math.cos(ph) + sb * sc * math.sin(ph)
        return acc
    if code == 2:
        return _bump_line_integral(params, x, y, dx, dy, L)
    if code == 3:
        qx = x - params[0]
        qy = y - params[1]
        b = qx * dx + qy * dy
        c = qx * qx + qy * qy - params[2] * params[2]
        disc = b * b - c
        if disc <= 0.0:
            return 0.0
        sq = math.sqrt(disc)
        s1 = max(-b - sq, 0.0)
        s2 = min(-b + sq, L)
        return s2 - s1 if s2 > s1 else 0.0
    if code == 4:
        acc = 0.0
        npieces = len(offsets) - 1
        for pc in range(npieces):
            lo = 0.0
            hi = L
            for j in range(offsets[pc], offsets[pc + 1]):
                nx = params[3 * j]
                ny = params[3 * j + 1]
                cc = params[3 * j + 2]
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
    raise ValueError(f"unknown observable code {code}")


def next_hit(verts, x, y, dx, dy, last_side, vertex_radius):
    """First boundary crossing of the ray x + t*d.

    Returns ``(t, side, hx, hy, status, vertex_index)``; status is ST_OK,
    ST_VERTEX (hit within ``vertex_radius`` of a vertex) or ST_STUCK.
    """
    k = len(verts)
    best_t = math.inf
    best_side = -1
    best_u = 0.0
    for j in range(k):
        if j == last_side:
            continue
        ax = verts[j][0]
        ay = verts[j][1]
        jn = j + 1 if j + 1 < k else 0
        sx = verts[jn][0] - ax
        sy = verts[jn][1] - ay
        den = dx * sy - dy * sx
        if den == 0.0:
            continue
        apx = ax - x
        apy = ay - y
        t = (apx * sy - apy * sx) / den
        if t <= T_MIN or t >= best_t:
            continue
        u = (apx * dy - apy * dx) / den
        slen = math.hypot(sx, sy)
        utol = vertex_radius / slen
        if u < -utol or u > 1.0 + utol:
            continue
        best_t = t
        best_side = j
        best_u = u
    if best_side < 0:
        return 0.0, -1, x, y, ST_STUCK, -1
    j = best_side
    jn = j + 1 if j + 1 < k else 0
    ax = verts[j][0]
    ay = verts[j][1]
    sx = verts[jn][0] - ax
    sy = verts[jn][1] - ay
    slen = math.hypot(sx, sy)
    hx = ax + best_u * sx
    hy = ay + best_u * sy
    if best_u * slen < vertex_radius:
        return best_t, j, hx, hy, ST_VERTEX, j
    if (1.0 - best_u) * slen < vertex_radius:
        return best_t, j, hx, hy, ST_VERTEX, jn
    return best_t, j, hx, hy, ST_OK, -1


def _reflect(dx, dy, nx, ny):
    dot = dx * nx + dy * ny
    rx = dx - 2.0 * dot * nx
    ry = dy - 2.0 * dot * ny
    nrm = math.hypot(rx, ry)
    return rx / nrm, ry / nrm


def flow(verts, normals, x, y, dx, dy, T, last_side, vertex_radius, max_bounces,
         code, params, offsets):
    """Flow for time T integrating the observable.

    Returns ``(x, y, dx, dy, last_side, integral, bounces, elapsed, status, vertex)``.
    """
    verts = np.asarray(verts).tolist()
    normals = np.asarray(normals).tolist()
    params = np.asarray(params, dtype=float).tolist()
    offsets = np.asarray(offsets).tolist()
    elapsed = 0.0
    integral = 0.0
    bounces = 0
    while True:
        t, side, hx, hy, st, vidx = next_hit(verts, x, y, dx, dy, last_side, vertex_radius)
        if st == ST_STUCK:
            return x, y, dx, dy, last_side, integral, bounces, elapsed, ST_STUCK, -1
        if elapsed + t >= T:
            rem = T - elapsed
            integral += segment_integral(code, params, offsets, x, y, dx, dy, rem)
            x += rem * dx
            y += rem * dy
            return x, y, dx, dy, -1, integral, bounces, T, ST_OK, -1
        integral += segment_integral(code, params, offsets, x, y, dx, dy, t)
        elapsed += t
        x = hx
        y = hy
        if st == ST_VERTEX:
            return x, y, dx, dy, side, integral, bounces, elapsed, ST_VERTEX, vidx
        if bounces >= max_bounces:
            return x, y, dx, dy, side, integral, bounces, elapsed, ST_MAXBOUNCE, -1
        dx, dy = _reflect(dx, dy, normals[side][0], normals[side][1])
        last_side = side
        bounces += 1


def trace(verts, normals, x, y, dx, dy, T, last_side, vertex_radius, out):
    """Record segments into ``out`` (rows x0, y0, x1, y1, dx, dy, side, t0).

    Stops when time T is used up, the buffer is full (ST_CAPACITY), or a
    vertex is struck.  Returns
    ``(n, x, y, dx, dy, last_side, elapsed, status, vertex)``.
    """
    verts = np.asarray(verts).tolist()
    normals = np.asarray(normals).tolist()
    cap = out.shape[0]
    elapsed = 0.0
    n = 0
    while True:
        if n >= cap:
            return n, x, y, dx, dy, last_side, elapsed, ST_CAPACITY, -1
        t, side, hx, hy, st, vidx = next_hit(verts, x, y, dx, dy, last_side, vertex_radius)
        if st == ST_STUCK:
            return n, x, y, dx, dy, last_side, elapsed, ST_STUCK, -1
        if elapsed + t >= T:
            rem = T - elapsed
            ex = x + rem * dx
            ey = y + rem * dy
            out[n] = (x, y, ex, ey, dx, dy, -1.0, elapsed)
            return n + 1, ex, ey, dx, dy, -1, T, ST_OK, -1
        out[n] = (x, y, hx, hy, dx, dy, float(side), elapsed)
        n += 1
        elapsed += t
        x = hx
        y = hy
        if st == ST_VERTEX:
            return n, x, y, dx, dy, side, elapsed, ST_VERTEX, vidx
        dx, dy = _reflect(dx, dy, normals[side][0], normals[side][1])
        last_side = side


def batch_time_average(verts, normals, starts, T, vertex_radius, max_bounces,
                       code, params, offsets, out, status):
    """Two-sided time averages (1/2T) * integral_{-T}^{T} a0 for each start row (x, y, dx, dy)."""
    verts_l = np.asarray(verts).tolist()
    normals_l = np.asarray(normals).tolist()
    params_l = np.asarray(params, dtype=float).tolist()
    offsets_l = np.asarray(offsets).tolist()
    for i in range(starts.shape[0]):
        x, y, dx, dy = (float(v) for v in starts[i])
        f = flow(verts_l, normals_l, x, y, dx, dy, T, -1, vertex_radius, max_bounces,
                 code, params_l, offsets_l)
        if f[8] != ST_OK:
            status[i] = f[8]
            out[i] = math.nan
            continue
        b = flow(verts_l, normals_l, x, y, -dx, -dy, T, -1, vertex_radius, max_bounces,
                 code, params_l, offsets_l)
        if b[8] != ST_OK:
            status[i] = b[8]
            out[i] = math.nan
            continue
        status[i] = ST_OK
        out[i] = (f[5] + b[5]) / (2.0 * T)
