"""Compiled scalar and grid kernels shared by the pointwise and voxel paths.

Both paths must produce bit-identical sums: features are accumulated in
list order (pores, then tunnels), truncated values contribute exactly 0.0,
and the pore kernel is evaluated as a product of per-axis exponentials so the
grid path can reuse 1D factors.
"""
import math

import numpy as np
from numba import njit


@njit(cache=True)
def pore_value(px, py, pz, cx, cy, cz, w, eps):
    dx = px - cx
    dy = py - cy
    dz = pz - cz
    v = math.exp(-w * dx * dx) * math.exp(-w * dy * dy) * math.exp(-w * dz * dz)
    if v < eps:
        return 0.0
    return v


@njit(cache=True)
def segment_distance(px, py, pz, ax, ay, az, bx, by, bz):
    ux = bx - ax
    uy = by - ay
    uz = bz - az
    wx = px - ax
    wy = py - ay
    wz = pz - az
    den = ux * ux + uy * uy + uz * uz
    t = 0.0
    if den > 0.0:
        t = (wx * ux + wy * uy + wz * uz) / den
        if t < 0.0:
            t = 0.0
        elif t > 1.0:
            t = 1.0
    rx = wx - t * ux
    ry = wy - t * uy
    rz = wz - t * uz
    return math.sqrt(rx * rx + ry * ry + rz * rz)


@njit(cache=True)
def tunnel_value(px, py, pz, ax, ay, az, bx, by, bz, mu, eps):
    v = math.exp(-mu * segment_distance(px, py, pz, ax, ay, az, bx, by, bz))
    if v < eps:
        return 0.0
    return v


@njit(cache=True)
def field_at_points(pts, centers, weights, seg_a, seg_b, mus, eps):
    n = pts.shape[0]
    out = np.zeros(n)
    for k in range(n):
        px = pts[k, 0]
        py = pts[k, 1]
        pz = pts[k, 2]
        s = 0.0
        for i in range(centers.shape[0]):
            s += pore_value(px, py, pz, centers[i, 0], centers[i, 1], centers[i, 2],
                            weights[i], eps)
        for j in range(seg_a.shape[0]):
            s += tunnel_value(px, py, pz, seg_a[j, 0], seg_a[j, 1], seg_a[j, 2],
                              seg_b[j, 0], seg_b[j, 1], seg_b[j, 2], mus[j], eps)
        out[k] = s
    return out


@njit(cache=True)
def field_on_grid(out, origin, pitch, centers, weights, seg_a, seg_b, mus, eps):
    nx, ny, nz = out.shape
    xs = np.empty(nx)
    ys = np.empty(ny)
    zs = np.empty(nz)
    for i in range(nx):
        xs[i] = origin[0] + (i + 0.5) * pitch[0]
    for i in range(ny):
        ys[i] = origin[1] + (i + 0.5) * pitch[1]
    for i in range(nz):
        zs[i] = origin[2] + (i + 0.5) * pitch[2]
    field_on_axes(out, xs, ys, zs, centers, weights, seg_a, seg_b, mus, eps)


@njit(cache=True)
def field_on_axes(out, xs, ys, zs, centers, weights, seg_a, seg_b, mus, eps):
    """Field on the tensor grid ``xs x ys x zs``; each axis must be ascending."""
    nx = xs.shape[0]
    ny = ys.shape[0]
    nz = zs.shape[0]
    ex = np.empty(nx)
    ey = np.empty(ny)
    ez = np.empty(nz)
    for p in range(centers.shape[0]):
        w = weights[p]
        cx = centers[p, 0]
        cy = centers[p, 1]
        cz = centers[p, 2]
        for i in range(nx):
            d = xs[i] - cx
            ex[i] = math.exp(-w * d * d)
        for i in range(ny):
            d = ys[i] - cy
            ey[i] = math.exp(-w * d * d)
        for i in range(nz):
            d = zs[i] - cz
            ez[i] = math.exp(-w * d * d)
        for i in range(nx):
            if ex[i] < eps:
                continue
            for j in range(ny):
                exy = ex[i] * ey[j]
                if exy < eps:
                    continue
                for k in range(nz):
                    v = exy * ez[k]
                    if v >= eps:
                        out[i, j, k] += v
    for t in range(seg_a.shape[0]):
        mu = mus[t]
        if eps > 0.0:
            r = math.log(1.0 / eps) / mu
            r = r * (1.0 + 1e-9) + 1e-12
        else:
            r = np.inf
        ax = seg_a[t, 0]
        ay = seg_a[t, 1]
        az = seg_a[t, 2]
        bx = seg_b[t, 0]
        by = seg_b[t, 1]
        bz = seg_b[t, 2]
        # only grid lines within r of the segment's bounding box can be reached
        i0 = np.searchsorted(xs, min(ax, bx) - r)
        i1 = np.searchsorted(xs, max(ax, bx) + r, side="right")
        j0 = np.searchsorted(ys, min(ay, by) - r)
        j1 = np.searchsorted(ys, max(ay, by) + r, side="right")
        k0 = np.searchsorted(zs, min(az, bz) - r)
        k1 = np.searchsorted(zs, max(az, bz) + r, side="right")
        for i in range(i0, i1):
            for j in range(j0, j1):
                for k in range(k0, k1):
                    d = segment_distance(xs[i], ys[j], zs[k], ax, ay, az, bx, by, bz)
                    if d > r:
                        continue
                    v = math.exp(-mu * d)
                    if v >= eps:
                        out[i, j, k] += v


@njit(cache=True)
def _owns_edge(ex, ey):
    # half-open rule for rays through a shared edge: count it on one side only
    return ey > 0.0 or (ey == 0.0 and ex < 0.0)


@njit(cache=True)
def column_crossings(tris, x, y, out):
    """Heights where the vertical line through ``(x, y)`` crosses the triangles.

    Writes into ``out`` and returns the count.  Triangles seen edge-on are
    skipped; a line through a shared edge or vertex is counted exactly once.
    """
    n = 0
    for t in range(tris.shape[0]):
        ax = tris[t, 0, 0]
        ay = tris[t, 0, 1]
        bx = tris[t, 1, 0]
        by = tris[t, 1, 1]
        cx = tris[t, 2, 0]
        cy = tris[t, 2, 1]
        area = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
        if area == 0.0:
            continue
        if area < 0.0:
            bx, cx = cx, bx
            by, cy = cy, by
        w0 = (bx - x) * (cy - y) - (by - y) * (cx - x)
        w1 = (cx - x) * (ay - y) - (cy - y) * (ax - x)
        w2 = (ax - x) * (by - y) - (ay - y) * (bx - x)
        if w0 < 0.0 or w1 < 0.0 or w2 < 0.0:
            continue
        if w0 == 0.0 and not _owns_edge(cx - bx, cy - by):
            continue
        if w1 == 0.0 and not _owns_edge(ax - cx, ay - cy):
            continue
        if w2 == 0.0 and not _owns_edge(bx - ax, by - ay):
            continue
        s = w0 + w1 + w2
        az = tris[t, 0, 2]
        if area < 0.0:
            bz = tris[t, 2, 2]
            cz = tris[t, 1, 2]
        else:
            bz = tris[t, 1, 2]
            cz = tris[t, 2, 2]
        out[n] = (w0 * az + w1 * bz + w2 * cz) / s
        n += 1
    return n


@njit(cache=True)
def crossing_counts(tris, pts):
    """Crossings strictly above each point, and the total along its vertical line."""
    m = pts.shape[0]
    above = np.zeros(m, dtype=np.int64)
    total = np.zeros(m, dtype=np.int64)
    buf = np.empty(tris.shape[0])
    for k in range(m):
        n = column_crossings(tris, pts[k, 0], pts[k, 1], buf)
        total[k] = n
        c = 0
        for i in range(n):
            if buf[i] > pts[k, 2]:
                c += 1
        above[k] = c
    return above, total
