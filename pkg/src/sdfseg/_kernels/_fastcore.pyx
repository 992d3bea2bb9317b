# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the hot kernels.

Same semantics and iteration orders as ``_fallback``; the distance
transform and marching cubes match it bit-exactly, the convolutions up to
floating-point summation order.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

from .._mc_tables import EDGE_GLOBAL, EDGE_TABLE, TRI_TABLE

cdef const int[::1] _EDGETAB = np.ascontiguousarray(EDGE_TABLE, dtype=np.int32)
cdef const signed char[:, ::1] _TRITAB = np.ascontiguousarray(TRI_TABLE, dtype=np.int8)
cdef const signed char[:, ::1] _EDGEGLB = np.ascontiguousarray(EDGE_GLOBAL, dtype=np.int8)

DEF INF = 1e308


# ---------------------------------------------------------------------------
# exact squared Euclidean distance transform (two-pass, per slice)
# ---------------------------------------------------------------------------

def edt2d_sq(mask, int target_label):
    cdef const unsigned char[:, ::1] m = np.ascontiguousarray(mask, dtype=np.uint8)
    cdef Py_ssize_t h = m.shape[0]
    cdef Py_ssize_t w = m.shape[1]
    out_arr = np.empty((h, w), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    g_arr = np.empty((h, w), dtype=np.float64)
    cdef double[:, ::1] g = g_arr
    cdef Py_ssize_t x, y, q, k, j, p
    cdef double fq, s, big = <double> (h + w + 1)
    cdef long long[::1] v = np.empty(w, dtype=np.int64)
    cdef double[::1] z = np.empty(w + 1, dtype=np.float64)
    cdef double[::1] f = np.empty(w, dtype=np.float64)

    # pass 1: per column, |dy| to the nearest target pixel
    for x in range(w):
        g[0, x] = 0.0 if m[0, x] == target_label else INF
    for y in range(1, h):
        for x in range(w):
            if m[y, x] == target_label:
                g[y, x] = 0.0
            else:
                g[y, x] = g[y - 1, x] + 1.0 if g[y - 1, x] < INF else INF
    for y in range(h - 2, -1, -1):
        for x in range(w):
            if g[y + 1, x] + 1.0 < g[y, x]:
                g[y, x] = g[y + 1, x] + 1.0

    # pass 2: per row, lower envelope of parabolas x -> (x-v)^2 + g[v]^2
    for y in range(h):
        for x in range(w):
            f[x] = g[y, x] * g[y, x] if g[y, x] < INF else INF
        k = -1
        for q in range(w):
            fq = f[q]
            if fq == INF:
                continue
            if k < 0:
                k = 0
                v[0] = q
                z[0] = -INF
                z[1] = INF
                continue
            while True:
                p = v[k]
                s = (fq + q * q - (f[p] + p * p)) / (2.0 * (q - p))
                if s > z[k]:
                    break
                k -= 1
                if k < 0:
                    break
            k += 1
            v[k] = q
            z[k] = s if k > 0 else -INF
            z[k + 1] = INF
        if k < 0:
            for q in range(w):
                out[y, q] = big * big
            continue
        j = 0
        for q in range(w):
            while z[j + 1] < q:
                j += 1
            p = v[j]
            out[y, q] = (q - p) * (q - p) + f[p]
    return out_arr


# ---------------------------------------------------------------------------
# marching cubes core
# ---------------------------------------------------------------------------

cdef inline Py_ssize_t _edge_vertex(
    int axis, Py_ssize_t gx, Py_ssize_t gy, Py_ssize_t gz,
    const double[:, :, ::1] field, double iso,
    Py_ssize_t nx, Py_ssize_t ny, Py_ssize_t nz,
    long long[::1] edge_vid, double[:, ::1] verts, Py_ssize_t* nverts,
):
    cdef Py_ssize_t key = ((axis * nz + gz) * ny + gy) * nx + gx
    cdef long long vid = edge_vid[key]
    cdef double f0, f1, t, px, py, pz
    if vid >= 0:
        return <Py_ssize_t> vid
    f0 = field[gz, gy, gx]
    if axis == 0:
        f1 = field[gz, gy, gx + 1]
    elif axis == 1:
        f1 = field[gz, gy + 1, gx]
    else:
        f1 = field[gz + 1, gy, gx]
    t = 0.5 if f0 == f1 else (iso - f0) / (f1 - f0)
    px = <double> gx
    py = <double> gy
    pz = <double> gz
    if axis == 0:
        px += t
    elif axis == 1:
        py += t
    else:
        pz += t
    vid = nverts[0]
    verts[vid, 0] = px
    verts[vid, 1] = py
    verts[vid, 2] = pz
    edge_vid[key] = vid
    nverts[0] += 1
    return <Py_ssize_t> vid


def mc_core(field, double iso):
    cdef const double[:, :, ::1] fld = np.ascontiguousarray(field, dtype=np.float64)
    cdef Py_ssize_t nz = fld.shape[0]
    cdef Py_ssize_t ny = fld.shape[1]
    cdef Py_ssize_t nx = fld.shape[2]
    cdef long long[::1] edge_vid = np.full(3 * nz * ny * nx, -1, dtype=np.int64)

    cdef Py_ssize_t vcap = 4096, tcap = 8192
    verts_arr = np.empty((vcap, 3), dtype=np.float64)
    tris_arr = np.empty((tcap, 3), dtype=np.int32)
    cdef double[:, ::1] verts = verts_arr
    cdef int[:, ::1] tris = tris_arr
    cdef Py_ssize_t nverts = 0, ntris = 0

    cdef Py_ssize_t x, y, z, i, j, e
    cdef int case
    cdef int axis
    cdef Py_ssize_t ia, ib, ic
    cdef const signed char* eg
    for z in range(nz - 1):
        for y in range(ny - 1):
            for x in range(nx - 1):
                case = 0
                if fld[z, y, x] < iso:
                    case |= 1
                if fld[z, y, x + 1] < iso:
                    case |= 2
                if fld[z, y + 1, x + 1] < iso:
                    case |= 4
                if fld[z, y + 1, x] < iso:
                    case |= 8
                if fld[z + 1, y, x] < iso:
                    case |= 16
                if fld[z + 1, y, x + 1] < iso:
                    case |= 32
                if fld[z + 1, y + 1, x + 1] < iso:
                    case |= 64
                if fld[z + 1, y + 1, x] < iso:
                    case |= 128
                if case == 0 or case == 255:
                    continue
                # grow output buffers before the worst case (12 verts, 5 tris)
                if nverts + 12 > vcap:
                    vcap *= 2
                    new_v = np.empty((vcap, 3), dtype=np.float64)
                    new_v[:nverts] = verts_arr[:nverts]
                    verts_arr = new_v
                    verts = verts_arr
                if ntris + 5 > tcap:
                    tcap *= 2
                    new_t = np.empty((tcap, 3), dtype=np.int32)
                    new_t[:ntris] = tris_arr[:ntris]
                    tris_arr = new_t
                    tris = tris_arr
                i = 0
                while _TRITAB[case, i] >= 0:
                    e = _TRITAB[case, i]
                    ia = _edge_vertex(
                        _EDGEGLB[e, 0], x + _EDGEGLB[e, 1], y + _EDGEGLB[e, 2],
                        z + _EDGEGLB[e, 3], fld, iso, nx, ny, nz,
                        edge_vid, verts, &nverts,
                    )
                    e = _TRITAB[case, i + 1]
                    ib = _edge_vertex(
                        _EDGEGLB[e, 0], x + _EDGEGLB[e, 1], y + _EDGEGLB[e, 2],
                        z + _EDGEGLB[e, 3], fld, iso, nx, ny, nz,
                        edge_vid, verts, &nverts,
                    )
                    e = _TRITAB[case, i + 2]
                    ic = _edge_vertex(
                        _EDGEGLB[e, 0], x + _EDGEGLB[e, 1], y + _EDGEGLB[e, 2],
                        z + _EDGEGLB[e, 3], fld, iso, nx, ny, nz,
                        edge_vid, verts, &nverts,
                    )
                    # same winding flip as the fallback: normals toward
                    # increasing field values
                    if ia != ib and ib != ic and ia != ic:
                        tris[ntris, 0] = <int> ia
                        tris[ntris, 1] = <int> ic
                        tris[ntris, 2] = <int> ib
                        ntris += 1
                    i += 3
    if nverts == 0:
        return np.zeros((0, 3), dtype=np.float64), np.zeros((0, 3), dtype=np.int32)
    return verts_arr[:nverts].copy(), tris_arr[:ntris].copy()


# ---------------------------------------------------------------------------
# 3x3 SAME convolution, forward and backward
# ---------------------------------------------------------------------------

def conv3x3_forward(x, w, b):
    cdef const double[:, :, :, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef const double[:, :, :, ::1] wv = np.ascontiguousarray(w, dtype=np.float64)
    cdef const double[::1] bv = np.ascontiguousarray(b, dtype=np.float64)
    cdef Py_ssize_t B = xv.shape[0], C = xv.shape[1], H = xv.shape[2], W = xv.shape[3]
    cdef Py_ssize_t F = wv.shape[0]
    y_arr = np.empty((B, F, H, W), dtype=np.float64)
    cdef double[:, :, :, ::1] y = y_arr
    pad_arr = np.zeros((C, H + 2, W + 2), dtype=np.float64)
    cdef double[:, :, ::1] xpad = pad_arr
    cdef Py_ssize_t bb, c, f, i, j, ky
    cdef double w0, w1, w2, acc
    cdef const double[::1] xr
    cdef double[::1] yr

    for bb in range(B):
        for c in range(C):
            for i in range(H):
                for j in range(W):
                    xpad[c, i + 1, j + 1] = xv[bb, c, i, j]
        for f in range(F):
            for i in range(H):
                yr = y[bb, f, i]
                for j in range(W):
                    yr[j] = bv[f]
                for c in range(C):
                    for ky in range(3):
                        xr = xpad[c, i + ky]
                        w0 = wv[f, c, ky, 0]
                        w1 = wv[f, c, ky, 1]
                        w2 = wv[f, c, ky, 2]
                        for j in range(W):
                            yr[j] += w0 * xr[j] + w1 * xr[j + 1] + w2 * xr[j + 2]
    return y_arr


def conv3x3_backward(x, w, dy):
    cdef const double[:, :, :, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef const double[:, :, :, ::1] wv = np.ascontiguousarray(w, dtype=np.float64)
    cdef const double[:, :, :, ::1] dyv = np.ascontiguousarray(dy, dtype=np.float64)
    cdef Py_ssize_t B = xv.shape[0], C = xv.shape[1], H = xv.shape[2], W = xv.shape[3]
    cdef Py_ssize_t F = wv.shape[0]
    dx_arr = np.empty((B, C, H, W), dtype=np.float64)
    dw_arr = np.zeros((F, C, 3, 3), dtype=np.float64)
    db_arr = np.zeros(F, dtype=np.float64)
    cdef double[:, :, :, ::1] dx = dx_arr
    cdef double[:, :, :, ::1] dw = dw_arr
    cdef double[::1] db = db_arr
    xpad_arr = np.zeros((C, H + 2, W + 2), dtype=np.float64)
    dxpad_arr = np.empty((C, H + 2, W + 2), dtype=np.float64)
    cdef double[:, :, ::1] xpad = xpad_arr
    cdef double[:, :, ::1] dxpad = dxpad_arr
    cdef Py_ssize_t bb, c, f, i, j, ky
    cdef double w0, w1, w2, g, s0, s1, s2, acc
    cdef const double[::1] dyr
    cdef const double[::1] xr
    cdef double[::1] dxr

    for bb in range(B):
        for c in range(C):
            for i in range(H):
                for j in range(W):
                    xpad[c, i + 1, j + 1] = xv[bb, c, i, j]
        dxpad_arr[:] = 0.0
        for f in range(F):
            for i in range(H):
                dyr = dyv[bb, f, i]
                acc = 0.0
                for j in range(W):
                    acc += dyr[j]
                db[f] += acc
                for c in range(C):
                    for ky in range(3):
                        xr = xpad[c, i + ky]
                        dxr = dxpad[c, i + ky]
                        w0 = wv[f, c, ky, 0]
                        w1 = wv[f, c, ky, 1]
                        w2 = wv[f, c, ky, 2]
                        s0 = 0.0
                        s1 = 0.0
                        s2 = 0.0
                        for j in range(W):
                            g = dyr[j]
                            s0 += xr[j] * g
                            s1 += xr[j + 1] * g
                            s2 += xr[j + 2] * g
                            dxr[j] += w0 * g
                            dxr[j + 1] += w1 * g
                            dxr[j + 2] += w2 * g
                        dw[f, c, ky, 0] += s0
                        dw[f, c, ky, 1] += s1
                        dw[f, c, ky, 2] += s2
        for c in range(C):
            for i in range(H):
                for j in range(W):
                    dx[bb, c, i, j] = dxpad[c, i + 1, j + 1]
    return dx_arr, dw_arr, db_arr
