"""Compiled inner loops for table interpolation and kernel draws."""
from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True, inline="always")
def _spline_at(c, x0, dx, n, x):
    pos = (x - x0) / dx
    if pos < 0.0 or pos > n - 1:
        return 0.0
    i = int(pos)
    if i > n - 2:
        i = n - 2
    f = pos - i
    g = 1.0 - f
    f2 = f * f
    f3 = f2 * f
    v = (
        c[i + 1] * (g * g * g)
        + c[i + 2] * (3.0 * f3 - 6.0 * f2 + 4.0)
        + c[i + 3] * (-3.0 * f3 + 3.0 * f2 + 3.0 * f + 1.0)
        + c[i + 4] * f3
    ) / 6.0
    return v if v > 0.0 else 0.0


@njit(cache=True)
def spline_eval(c, x0, dx, n, x):
    """Cubic B-spline with padded coefficients ``c``; zero outside ``[x0, x0 + (n-1) dx]``."""
    flat = x.ravel()
    out = np.empty(flat.size)
    for k in range(flat.size):
        out[k] = _spline_at(c, x0, dx, n, flat[k])
    return out.reshape(x.shape)


@njit(cache=True)
def draw_rows(x, z, s_a, s_b, offsets, ca, x0a, dxa, na, cb, x0b, dxb, nb, uniforms, floor):
    """Inverse-CDF draws from ``y -> f_a(y - x) f_b(z - y)`` for every start value in ``x``.

    Nodes are the merge of ``x + s_a * offsets`` and ``z + s_b * offsets``.
    Returns the draws and the trapezoid mass per row; rows whose mass is
    below ``floor`` get NaN and must be handled by the caller.
    """
    n = x.size
    m = offsets.size
    out = np.empty(n)
    totals = np.empty(n)
    nodes = np.empty(2 * m)
    dens = np.empty(2 * m)
    cells = np.empty(2 * m - 1)
    for p in range(n):
        xp = x[p]
        i = 0
        j = 0
        k = 0
        while i < m or j < m:
            if j >= m or (i < m and xp + s_a * offsets[i] <= z + s_b * offsets[j]):
                nodes[k] = xp + s_a * offsets[i]
                i += 1
            else:
                nodes[k] = z + s_b * offsets[j]
                j += 1
            k += 1
        for k in range(2 * m):
            y = nodes[k]
            dens[k] = _spline_at(ca, x0a, dxa, na, y - xp) * _spline_at(cb, x0b, dxb, nb, z - y)
        total = 0.0
        for k in range(2 * m - 1):
            cells[k] = 0.5 * (dens[k] + dens[k + 1]) * (nodes[k + 1] - nodes[k])
            total += cells[k]
        totals[p] = total
        if not total > floor:
            out[p] = np.nan
            continue
        target = uniforms[p] * total
        acc = 0.0
        k = 0
        while k < 2 * m - 2 and acc + cells[k] < target:
            acc += cells[k]
            k += 1
        mass = target - acc
        h = nodes[k + 1] - nodes[k]
        d0 = dens[k]
        slope = (dens[k + 1] - d0) / h if h > 0 else 0.0
        disc = d0 * d0 + 2.0 * slope * mass
        disc = np.sqrt(disc) if disc > 0 else 0.0
        denom = d0 + disc
        s = 2.0 * mass / denom if denom > 0 else 0.0
        if s < 0.0:
            s = 0.0
        if s > h:
            s = h
        out[p] = nodes[k] + s
    return out, totals
