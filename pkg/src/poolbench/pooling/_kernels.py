"""Compiled window loops.

Every kernel works on a ``(C, T, H, W)`` view; 2D pooling runs with a unit
time axis.  Forward reductions iterate "offset-outer": for one output row
they sweep each in-bounds kernel offset across the whole row, which keeps
the inner loop contiguous in the output and lets LLVM vectorise it.
Backward kernels instead walk cells in row-major order and slots in window
order, so overlapping contributions are summed in region order.

Accumulation happens in float64 regardless of the tensor precision.
"""

from __future__ import annotations

import numpy as np
from numba import njit

SUM = 0
MEAN = 1
MAX = 2
POW = 3

_OPTS = dict(nogil=True, cache=True)


@njit(**_OPTS)
def _col_ranges(W, Wo, kw, sw, pw):
    # lo[dx]..hi[dx]: output columns whose window offset dx is in bounds
    lo = np.zeros(kw, np.int64)
    hi = np.zeros(kw, np.int64)
    for dx in range(kw):
        a = 0
        while a < Wo and a * sw - pw + dx < 0:
            a += 1
        b = Wo
        while b > a and (b - 1) * sw - pw + dx >= W:
            b -= 1
        lo[dx] = a
        hi[dx] = b
    return lo, hi


@njit(**_OPTS)
def window_reduce(x, kt, kh, kw, st, sh, sw, pt, ph, pw, mode, p, out):
    C, T, H, W = x.shape
    To, Ho, Wo = out.shape[1], out.shape[2], out.shape[3]
    lo, hi = _col_ranges(W, Wo, kw, sw, pw)
    ncols = np.zeros(Wo, np.int64)
    for dx in range(kw):
        for oj in range(lo[dx], hi[dx]):
            ncols[oj] += 1
    acc = np.empty(Wo, np.float64)
    macc = np.empty(Wo, x.dtype)
    # means sum deviations from the region's first cell, so a constant
    # region averages to exactly its value
    pivot = np.zeros(Wo, np.float64)
    inv_p = 1.0 / p
    for c in range(C):
        for ot in range(To):
            t0 = ot * st - pt
            ta = max(t0, 0)
            tb = min(t0 + kt, T)
            for oi in range(Ho):
                y0 = oi * sh - ph
                ya = max(y0, 0)
                yb = min(y0 + kh, H)
                if mode == MAX:
                    macc[:] = -np.inf
                else:
                    acc[:] = 0.0
                if mode == MEAN:
                    for oj in range(Wo):
                        pivot[oj] = x[c, ta, ya, max(oj * sw - pw, 0)]
                for tt in range(ta, tb):
                    for yy in range(ya, yb):
                        row = x[c, tt, yy]
                        for dx in range(kw):
                            off = dx - pw
                            a = lo[dx]
                            b = hi[dx]
                            if mode == MAX:
                                for oj in range(a, b):
                                    macc[oj] = max(macc[oj], row[oj * sw + off])
                            elif mode == POW:
                                for oj in range(a, b):
                                    acc[oj] += abs(np.float64(row[oj * sw + off])) ** p
                            elif mode == MEAN:
                                for oj in range(a, b):
                                    acc[oj] += row[oj * sw + off] - pivot[oj]
                            else:
                                for oj in range(a, b):
                                    acc[oj] += row[oj * sw + off]
                nrows = (tb - ta) * (yb - ya)
                if mode == MAX:
                    for oj in range(Wo):
                        out[c, ot, oi, oj] = macc[oj]
                elif mode == MEAN:
                    for oj in range(Wo):
                        out[c, ot, oi, oj] = pivot[oj] + acc[oj] / (nrows * ncols[oj])
                elif mode == POW:
                    for oj in range(Wo):
                        s = acc[oj]
                        if s == np.inf or s == 0.0:
                            s = _pow_cell(x, c, ta, tb, ya, yb, oj * sw - pw, kw, W, p)
                        else:
                            s = s ** inv_p
                        out[c, ot, oi, oj] = s
                else:
                    for oj in range(Wo):
                        out[c, ot, oi, oj] = acc[oj]


@njit(**_OPTS)
def _pow_cell(x, c, ta, tb, ya, yb, x0, kw, W, p):
    # overflow-safe power mean of one region: m * (sum (|a|/m)^p)^(1/p)
    xa = max(x0, 0)
    xb = min(x0 + kw, W)
    m = 0.0
    for tt in range(ta, tb):
        for yy in range(ya, yb):
            for xx in range(xa, xb):
                m = max(m, abs(np.float64(x[c, tt, yy, xx])))
    if m == 0.0:
        return 0.0
    s = 0.0
    for tt in range(ta, tb):
        for yy in range(ya, yb):
            for xx in range(xa, xb):
                s += (abs(np.float64(x[c, tt, yy, xx])) / m) ** p
    return m * s ** (1.0 / p)


@njit(**_OPTS)
def softpool_shift(x, kt, kh, kw, st, sh, sw, pt, ph, pw, z, mx):
    """z[c, slot, t, i, j] = a - max(region), or -inf for padded slots; mx gets the maxima."""
    C, T, H, W = x.shape
    To, Ho, Wo = z.shape[2], z.shape[3], z.shape[4]
    lo, hi = _col_ranges(W, Wo, kw, sw, pw)
    for c in range(C):
        for ot in range(To):
            t0 = ot * st - pt
            ta = max(t0, 0)
            tb = min(t0 + kt, T)
            for oi in range(Ho):
                y0 = oi * sh - ph
                ya = max(y0, 0)
                yb = min(y0 + kh, H)
                m = mx[c, ot, oi]
                m[:] = -np.inf
                for tt in range(ta, tb):
                    for yy in range(ya, yb):
                        row = x[c, tt, yy]
                        for dx in range(kw):
                            off = dx - pw
                            for oj in range(lo[dx], hi[dx]):
                                m[oj] = max(m[oj], row[oj * sw + off])
                for dt in range(kt):
                    tt = t0 + dt
                    for dy in range(kh):
                        yy = y0 + dy
                        for dx in range(kw):
                            zr = z[c, (dt * kh + dy) * kw + dx, ot, oi]
                            if tt < 0 or tt >= T or yy < 0 or yy >= H:
                                zr[:] = -np.inf
                                continue
                            row = x[c, tt, yy]
                            off = dx - pw
                            a = lo[dx]
                            b = hi[dx]
                            for oj in range(0, a):
                                zr[oj] = -np.inf
                            for oj in range(a, b):
                                zr[oj] = row[oj * sw + off] - m[oj]
                            for oj in range(b, Wo):
                                zr[oj] = -np.inf


@njit(**_OPTS)
def softpool_reduce(x, kt, kh, kw, st, sh, sw, pt, ph, pw, z, mx, floor, out):
    """Turn exponentials in z into weights (in place) and write the weighted sums.

    The sum is formed as ``max + sum w * (a - max)``: every term is <= 0, so
    no output can round above its region maximum, and a constant region
    returns its value exactly.
    """
    C, T, H, W = x.shape
    K = z.shape[1]
    To, Ho, Wo = z.shape[2], z.shape[3], z.shape[4]
    lo, hi = _col_ranges(W, Wo, kw, sw, pw)
    den = np.empty(Wo, np.float64)
    num = np.empty(Wo, np.float64)
    for c in range(C):
        for ot in range(To):
            t0 = ot * st - pt
            for oi in range(Ho):
                y0 = oi * sh - ph
                den[:] = 0.0
                num[:] = 0.0
                for s in range(K):
                    zr = z[c, s, ot, oi]
                    for oj in range(Wo):
                        den[oj] += zr[oj]
                for oj in range(Wo):
                    den[oj] = 1.0 / max(den[oj], floor)
                m = mx[c, ot, oi]
                for dt in range(kt):
                    tt = t0 + dt
                    for dy in range(kh):
                        yy = y0 + dy
                        if tt < 0 or tt >= T or yy < 0 or yy >= H:
                            continue
                        row = x[c, tt, yy]
                        for dx in range(kw):
                            zr = z[c, (dt * kh + dy) * kw + dx, ot, oi]
                            off = dx - pw
                            for oj in range(lo[dx], hi[dx]):
                                w = zr[oj] * den[oj]
                                zr[oj] = w
                                num[oj] += w * (row[oj * sw + off] - m[oj])
                for oj in range(Wo):
                    out[c, ot, oi, oj] = np.float64(m[oj]) + num[oj]


@njit(**_OPTS)
def softpool_backward(x, kt, kh, kw, st, sh, sw, pt, ph, pw, wts, up, exact, grad):
    C, T, H, W = x.shape
    To, Ho, Wo = up.shape[1], up.shape[2], up.shape[3]
    for c in range(C):
        for ot in range(To):
            t0 = ot * st - pt
            ta = max(t0, 0)
            tb = min(t0 + kt, T)
            for oi in range(Ho):
                y0 = oi * sh - ph
                ya = max(y0, 0)
                yb = min(y0 + kh, H)
                for oj in range(Wo):
                    x0 = oj * sw - pw
                    xa = max(x0, 0)
                    xb = min(x0 + kw, W)
                    u = up[c, ot, oi, oj]
                    if exact:
                        # same max-relative form as the forward reduction
                        top = -np.inf
                        for tt in range(ta, tb):
                            for yy in range(ya, yb):
                                for xx in range(xa, xb):
                                    top = max(top, np.float64(x[c, tt, yy, xx]))
                        pooled = 0.0
                        for tt in range(ta, tb):
                            for yy in range(ya, yb):
                                for xx in range(xa, xb):
                                    s = ((tt - t0) * kh + (yy - y0)) * kw + (xx - x0)
                                    pooled += np.float64(wts[c, s, ot, oi, oj]) * (x[c, tt, yy, xx] - top)
                        pooled += top
                    for tt in range(ta, tb):
                        for yy in range(ya, yb):
                            for xx in range(xa, xb):
                                s = ((tt - t0) * kh + (yy - y0)) * kw + (xx - x0)
                                w = wts[c, s, ot, oi, oj]
                                if exact:
                                    g = np.float64(w) * (1.0 + x[c, tt, yy, xx] - pooled) * u
                                    grad[c, tt, yy, xx] += g
                                else:
                                    grad[c, tt, yy, xx] += w * u


@njit(**_OPTS)
def simple_backward(x, kt, kh, kw, st, sh, sw, pt, ph, pw, mode, up, grad):
    """Backward of SUM, MEAN and MAX (argmax, first index wins ties)."""
    C, T, H, W = x.shape
    To, Ho, Wo = up.shape[1], up.shape[2], up.shape[3]
    for c in range(C):
        for ot in range(To):
            t0 = ot * st - pt
            ta = max(t0, 0)
            tb = min(t0 + kt, T)
            for oi in range(Ho):
                y0 = oi * sh - ph
                ya = max(y0, 0)
                yb = min(y0 + kh, H)
                for oj in range(Wo):
                    x0 = oj * sw - pw
                    xa = max(x0, 0)
                    xb = min(x0 + kw, W)
                    u = up[c, ot, oi, oj]
                    if mode == MAX:
                        bt, by, bx = ta, ya, xa
                        best = x[c, ta, ya, xa]
                        for tt in range(ta, tb):
                            for yy in range(ya, yb):
                                for xx in range(xa, xb):
                                    if x[c, tt, yy, xx] > best:
                                        best = x[c, tt, yy, xx]
                                        bt, by, bx = tt, yy, xx
                        grad[c, bt, by, bx] += u
                        continue
                    if mode == MEAN:
                        g = np.float64(u) / ((tb - ta) * (yb - ya) * (xb - xa))
                    else:
                        g = np.float64(u)
                    for tt in range(ta, tb):
                        for yy in range(ya, yb):
                            for xx in range(xa, xb):
                                grad[c, tt, yy, xx] += g


@njit(**_OPTS)
def stochastic_pick(x, kt, kh, kw, st, sh, sw, pt, ph, pw, u, out):
    """Sample one activation per region with probability max(a,0)/sum; uniform if the sum is 0."""
    C, T, H, W = x.shape
    To, Ho, Wo = out.shape[1], out.shape[2], out.shape[3]
    r = 0
    for c in range(C):
        for ot in range(To):
            t0 = ot * st - pt
            ta = max(t0, 0)
            tb = min(t0 + kt, T)
            for oi in range(Ho):
                y0 = oi * sh - ph
                ya = max(y0, 0)
                yb = min(y0 + kh, H)
                for oj in range(Wo):
                    x0 = oj * sw - pw
                    xa = max(x0, 0)
                    xb = min(x0 + kw, W)
                    total = 0.0
                    n = 0
                    last = x[c, ta, ya, xa]
                    for tt in range(ta, tb):
                        for yy in range(ya, yb):
                            for xx in range(xa, xb):
                                v = x[c, tt, yy, xx]
                                if v > 0:
                                    total += v
                                    last = v
                                n += 1
                    if total > 0.0:
                        target = u[r] * total
                        pick = last
                        cum = 0.0
                        done = False
                        for tt in range(ta, tb):
                            if done:
                                break
                            for yy in range(ya, yb):
                                if done:
                                    break
                                for xx in range(xa, xb):
                                    v = x[c, tt, yy, xx]
                                    if v > 0:
                                        cum += v
                                        if cum > target:
                                            pick = v
                                            done = True
                                            break
                    else:
                        want = min(int(u[r] * n), n - 1)
                        i = 0
                        pick = last
                        for tt in range(ta, tb):
                            for yy in range(ya, yb):
                                for xx in range(xa, xb):
                                    if i == want:
                                        pick = x[c, tt, yy, xx]
                                    i += 1
                    out[c, ot, oi, oj] = pick
                    r += 1
