"""Per-pixel LGI kernels compiled with numba.

Everything here works on plain float64 arrays so the kernels can run
row-partitioned on worker threads (``nogil``) with output that does not
depend on the partitioning.
"""
import math

import numpy as np
from numba import njit

# frustum constraint ids, reported as the "active" limit of a ray
CAP = -1
NEAR = 0
LEFT = 1
RIGHT = 2
TOP = 3
BOTTOM = 4
FAR = 5

FOOTPRINT = 0.5 + 1e-7


@njit(cache=True, nogil=True, error_model="numpy")
def _tighten(a, b, k, s_max, active):
    """Fold constraint a + s*b >= 0 into the running limit; k < 0 flags a violated start."""
    if a < 0.0:
        return 0.0, k, True
    if b < 0.0:
        s = -a / b
        if s < s_max:
            return s, k, False
    return s_max, active, False


@njit(cache=True, nogil=True, error_model="numpy")
def frustum_limit(px, py, pz, dx, dy, dz, fx, fy, cx, cy, width, height, z_near, z_far, cap):
    """Largest s in [0, cap] keeping p + s*d inside the camera frustum.

    Every bound is linear in s once multiplied through by z, so the limit is a
    min over closed-form crossings. Returns (s_max, active_constraint_id).
    """
    s_max = cap
    active = CAP
    s_max, active, bad = _tighten(pz - z_near, dz, NEAR, s_max, active)
    if bad:
        return s_max, active
    s_max, active, bad = _tighten(fx * px + (cx + 0.5) * pz, fx * dx + (cx + 0.5) * dz, LEFT, s_max, active)
    if bad:
        return s_max, active
    s_max, active, bad = _tighten(
        (width - 0.5 - cx) * pz - fx * px, (width - 0.5 - cx) * dz - fx * dx, RIGHT, s_max, active
    )
    if bad:
        return s_max, active
    s_max, active, bad = _tighten(fy * py + (cy + 0.5) * pz, fy * dy + (cy + 0.5) * dz, TOP, s_max, active)
    if bad:
        return s_max, active
    s_max, active, bad = _tighten(
        (height - 0.5 - cy) * pz - fy * py, (height - 0.5 - cy) * dz - fy * dy, BOTTOM, s_max, active
    )
    if bad:
        return s_max, active
    s_max, active, bad = _tighten(z_far - pz, -dz, FAR, s_max, active)
    return s_max, active


@njit(cache=True, nogil=True, error_model="numpy")
def _constraint_gradient(k, fx, fy, cx, cy, width, height):
    g = np.zeros(3)
    if k == NEAR:
        g[2] = 1.0
    elif k == LEFT:
        g[0] = fx
        g[2] = cx + 0.5
    elif k == RIGHT:
        g[0] = -fx
        g[2] = width - 0.5 - cx
    elif k == TOP:
        g[1] = fy
        g[2] = cy + 0.5
    elif k == BOTTOM:
        g[1] = -fy
        g[2] = height - 0.5 - cy
    elif k == FAR:
        g[2] = -1.0
    return g


@njit(cache=True, nogil=True, error_model="numpy")
def _asin_ratio(wz, norm):
    r = wz / norm
    if r > 1.0:
        r = 1.0
    elif r < -1.0:
        r = -1.0
    return math.asin(r)


@njit(cache=True, nogil=True, error_model="numpy")
def _asin_ratio_tangent(wx, wy, wz, dwx, dwy, dwz):
    """Directional derivative of asin(w_z / |w|)."""
    r2 = wx * wx + wy * wy + wz * wz
    r = math.sqrt(r2)
    f = wz / r
    df = dwz / r - wz * (wx * dwx + wy * dwy + wz * dwz) / (r2 * r)
    denom = 1.0 - f * f
    if denom <= 0.0:
        return 0.0
    return df / math.sqrt(denom)


@njit(cache=True, nogil=True, error_model="numpy")
def _nearest_index(coord, size):
    i = int(math.floor(coord + 0.5))
    if i < 0:
        i = 0
    elif i > size - 1:
        i = size - 1
    return i


@njit(cache=True, nogil=True, error_model="numpy")
def _cell_origin(coord, size):
    """Left/top corner of the bilinear cell containing the clamped coordinate."""
    c = min(max(coord, 0.0), size - 1.0)
    if size == 1:
        return 0, 0, 0.0, c
    i0 = int(math.floor(c))
    if i0 > size - 2:
        i0 = size - 2
    return i0, i0 + 1, c - i0, c


@njit(cache=True, nogil=True, error_model="numpy")
def fetch_depth(depth, valid, u, v, bilinear):
    """Depth at sub-pixel (u, v).

    Returns (d, cell_code, d_du, d_dv). ``cell_code`` identifies the sampling
    stencil: >= 0 for a bilinear cell, < 0 for a nearest-pixel fetch. ``d`` is
    NaN when the fetched depth is invalid.
    """
    height, width = depth.shape
    if bilinear:
        x0, x1, ax, uc = _cell_origin(u, width)
        y0, y1, ay, vc = _cell_origin(v, height)
        if valid[y0, x0] and valid[y0, x1] and valid[y1, x0] and valid[y1, x1]:
            d00 = depth[y0, x0]
            d10 = depth[y0, x1]
            d01 = depth[y1, x0]
            d11 = depth[y1, x1]
            d = (1.0 - ax) * (1.0 - ay) * d00 + ax * (1.0 - ay) * d10 + (1.0 - ax) * ay * d01 + ax * ay * d11
            ddu = (1.0 - ay) * (d10 - d00) + ay * (d11 - d01)
            ddv = (1.0 - ax) * (d01 - d00) + ax * (d11 - d10)
            # clamped coordinates do not move the fetch
            if u != uc:
                ddu = 0.0
            if v != vc:
                ddv = 0.0
            return d, y0 * width + x0, ddu, ddv
    iu = _nearest_index(u, width)
    iv = _nearest_index(v, height)
    code = -(iv * width + iu) - 1
    if not valid[iv, iu]:
        return np.nan, code, 0.0, 0.0
    return depth[iv, iu], code, 0.0, 0.0


@njit(cache=True, nogil=True, error_model="numpy")
def lgi_rows(
    depth, valid, fx, fy, cx, cy, is_point, lvec, n_samples, z_near, z_far, bilinear,
    row0, row1, want_tangent, dlvec,
    out_c1, out_c2, out_c3, out_valid, out_dc3, out_argmin, out_cell, out_active,
):
    height, width = depth.shape
    for v in range(row0, row1):
        for u in range(width):
            out_c1[v, u] = 0.0
            out_c2[v, u] = 0.0
            out_c3[v, u] = 0.0
            out_valid[v, u] = False
            out_dc3[v, u] = 0.0
            out_argmin[v, u] = 0
            out_cell[v, u] = 0
            out_active[v, u] = CAP
            if not valid[v, u]:
                continue
            d0 = depth[v, u]
            px = (u - cx) * d0 / fx
            py = (v - cy) * d0 / fy
            pz = d0
            if is_point:
                dx = lvec[0] - px
                dy = lvec[1] - py
                dz = lvec[2] - pz
                cap = 1.0
            else:
                dx = lvec[0]
                dy = lvec[1]
                dz = lvec[2]
                cap = np.inf
            dnorm = math.sqrt(dx * dx + dy * dy + dz * dz)
            if dnorm == 0.0:
                continue
            e_light = _asin_ratio(dz, dnorm)
            s_max, active = frustum_limit(px, py, pz, dx, dy, dz, fx, fy, cx, cy, width, height, z_near, z_far, cap)
            out_active[v, u] = active
            if not (s_max > 0.0) or s_max == np.inf:
                continue
            lo = np.inf
            hi = -np.inf
            best = np.inf
            best_val = 0.0
            best_n = 0
            best_cell = 0
            for n in range(1, n_samples + 1):
                s = (n * s_max) / n_samples
                sx = px + s * dx
                sy = py + s * dy
                sz = pz + s * dz
                up = fx * sx / sz + cx
                vp = fy * sy / sz + cy
                # samples still inside the source pixel's footprint; the slack keeps
                # samples lying exactly on the footprint edge (e.g. the image border)
                # from flipping with rounding
                if abs(up - u) <= FOOTPRINT and abs(vp - v) <= FOOTPRINT:
                    continue
                dd, cell, _, _ = fetch_depth(depth, valid, up, vp, bilinear)
                if not (dd > 0.0):
                    continue
                wx = (up - cx) * dd / fx - px
                wy = (vp - cy) * dd / fy - py
                wz = dd - pz
                wn = math.sqrt(wx * wx + wy * wy + wz * wz)
                if wn == 0.0:
                    continue
                ed = _asin_ratio(wz, wn) - e_light
                if ed < lo:
                    lo = ed
                if ed > hi:
                    hi = ed
                if abs(ed) < best:
                    best = abs(ed)
                    best_val = ed
                    best_n = n
                    best_cell = cell
            if best_n == 0:
                continue
            out_c1[v, u] = lo
            out_c2[v, u] = hi
            out_c3[v, u] = best_val
            out_valid[v, u] = True
            out_argmin[v, u] = best_n
            out_cell[v, u] = best_cell
            if want_tangent and is_point:
                out_dc3[v, u] = _c3_tangent(
                    depth, valid, fx, fy, cx, cy, width, height, bilinear,
                    px, py, pz, dx, dy, dz, dlvec, s_max, active, best_n, n_samples,
                )


@njit(cache=True, nogil=True, error_model="numpy")
def _c3_tangent(depth, valid, fx, fy, cx, cy, width, height, bilinear,
                px, py, pz, dx, dy, dz, dl, s_max, active, n, n_samples):
    """Forward-mode derivative of c3 for a point light moved along ``dl``.

    Differentiates the winning sample through the frustum limit, projection,
    depth fetch, relift and both elevation angles. The argmin index and the
    fetch stencil are held fixed (they are locally constant almost everywhere).
    """
    de_light = _asin_ratio_tangent(dx, dy, dz, dl[0], dl[1], dl[2])
    ds_max = 0.0
    if active != CAP:
        g = _constraint_gradient(active, fx, fy, cx, cy, width, height)
        bk = g[0] * dx + g[1] * dy + g[2] * dz
        ds_max = -s_max * (g[0] * dl[0] + g[1] * dl[1] + g[2] * dl[2]) / bk
    s = (n * s_max) / n_samples
    ds = n * ds_max / n_samples
    sx = px + s * dx
    sy = py + s * dy
    sz = pz + s * dz
    dsx = ds * dx + s * dl[0]
    dsy = ds * dy + s * dl[1]
    dsz = ds * dz + s * dl[2]
    up = fx * sx / sz + cx
    vp = fy * sy / sz + cy
    dup = fx * (dsx * sz - sx * dsz) / (sz * sz)
    dvp = fy * (dsy * sz - sy * dsz) / (sz * sz)
    dd, _, ddu, ddv = fetch_depth(depth, valid, up, vp, bilinear)
    ddd = ddu * dup + ddv * dvp
    wx = (up - cx) * dd / fx - px
    wy = (vp - cy) * dd / fy - py
    wz = dd - pz
    dwx = (dup * dd + (up - cx) * ddd) / fx
    dwy = (dvp * dd + (vp - cy) * ddd) / fy
    dwz = ddd
    return _asin_ratio_tangent(wx, wy, wz, dwx, dwy, dwz) - de_light
