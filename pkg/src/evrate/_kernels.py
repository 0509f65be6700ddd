"""Compiled inner loops for contrast scoring.

Both kernels keep a running sum of squares while voting, so one pass over
the events gives S = sum(I**2) without a second pass over the image.
The scratch image is zeroed again before returning.
"""

import math

import numba
import numpy as np


@numba.njit(cache=True)
def grid_scores(x, y, dt, k, us, vs, width, height, scratch, touched):
    """Nearest-pixel (S, sum I) for every candidate velocity (us[i], vs[i])."""
    n_cand = us.size
    n = x.size
    S = np.zeros(n_cand)
    T = np.zeros(n_cand)
    for c in range(n_cand):
        u = us[c]
        v = vs[c]
        s = 0.0
        tot = 0.0
        m = 0
        for i in range(n):
            xi = math.floor(x[i] - u * dt[i] + 0.5)
            yi = math.floor(y[i] - v * dt[i] + 0.5)
            if xi < 0 or xi >= width or yi < 0 or yi >= height:
                continue
            idx = yi * width + xi
            a = scratch[idx]
            kk = k[i]
            s += 2.0 * a * kk + kk * kk
            tot += kk
            scratch[idx] = a + kk
            touched[m] = idx
            m += 1
        for j in range(m):
            scratch[touched[j]] = 0.0
        S[c] = s
        T[c] = tot
    return S, T


@numba.njit(cache=True)
def bilinear_score(x, y, dt, k, u, v, width, height, scratch, touched):
    """(S, sum I) with each event split over its four neighbouring pixels."""
    n = x.size
    s = 0.0
    tot = 0.0
    m = 0
    for i in range(n):
        xw = x[i] - u * dt[i]
        yw = y[i] - v * dt[i]
        x0 = math.floor(xw)
        y0 = math.floor(yw)
        fx = xw - x0
        fy = yw - y0
        kk = k[i]
        for oy in range(2):
            py = y0 + oy
            if py < 0 or py >= height:
                continue
            wy = fy if oy == 1 else 1.0 - fy
            for ox in range(2):
                px = x0 + ox
                if px < 0 or px >= width:
                    continue
                wx = fx if ox == 1 else 1.0 - fx
                val = kk * wx * wy
                idx = py * width + px
                a = scratch[idx]
                s += 2.0 * a * val + val * val
                tot += val
                scratch[idx] = a + val
                touched[m] = idx
                m += 1
    for j in range(m):
        scratch[touched[j]] = 0.0
    return s, tot


@numba.njit(cache=True)
def gaussian_score(x, y, dt, k, u, v, width, height, sigma, radius, scratch, touched):
    """(S, sum I) with each event splatted by a Gaussian tapered to zero at
    ``radius`` px, which keeps S continuous in (u, v)."""
    n = x.size
    s = 0.0
    tot = 0.0
    m = 0
    inv = 0.5 / (sigma * sigma)
    floor_w = math.exp(-radius * radius * inv)
    r = int(math.ceil(radius))
    wxs = np.empty(2 * r + 1)
    wys = np.empty(2 * r + 1)
    for i in range(n):
        xw = x[i] - u * dt[i]
        yw = y[i] - v * dt[i]
        cx = math.floor(xw)
        cy = math.floor(yw)
        for o in range(2 * r + 1):
            d = cx - r + 1 + o - xw
            wxs[o] = math.exp(-d * d * inv) - floor_w if abs(d) < radius else 0.0
            d = cy - r + 1 + o - yw
            wys[o] = math.exp(-d * d * inv) - floor_w if abs(d) < radius else 0.0
        kk = k[i]
        for oy in range(2 * r + 1):
            wy = wys[oy]
            py = cy - r + 1 + oy
            if wy <= 0.0 or py < 0 or py >= height:
                continue
            for ox in range(2 * r + 1):
                wx = wxs[ox]
                px = cx - r + 1 + ox
                if wx <= 0.0 or px < 0 or px >= width:
                    continue
                val = kk * wx * wy
                idx = py * width + px
                a = scratch[idx]
                s += 2.0 * a * val + val * val
                tot += val
                scratch[idx] = a + val
                touched[m] = idx
                m += 1
    for j in range(m):
        scratch[touched[j]] = 0.0
    return s, tot
