"""Numpy implementations of the hot kernels.

These are the reference semantics; the compiled module in ``_fastcore.pyx``
must produce identical results (bit-exact for the distance transform and
marching cubes, same floating point formulas for the convolutions up to
summation order).
"""

from __future__ import annotations

import numpy as np

from .._mc_tables import EDGE_GLOBAL, TRI_TABLE


def edt2d_sq(mask: np.ndarray, target_label: int) -> np.ndarray:
    """Exact squared Euclidean distance to the nearest target_label pixel.

    Two-pass separable transform: a per-column scan gives the vertical
    distance to the nearest target pixel, then a per-row lower envelope of
    parabolas minimizes over horizontal displacement. Distances are
    pixel-center to pixel-center, so the outputs are exact integers.
    """
    mask = np.ascontiguousarray(mask, dtype=np.uint8)
    h, w = mask.shape
    hit = mask == target_label

    # pass 1: per column, |dy| to nearest hit (inf if the column has none)
    big = np.float64(h + w + 1)
    g = np.where(hit, 0.0, np.inf)
    for y in range(1, h):
        g[y] = np.minimum(g[y], g[y - 1] + 1.0)
    for y in range(h - 2, -1, -1):
        g[y] = np.minimum(g[y], g[y + 1] + 1.0)

    # pass 2: per row, lower envelope of parabolas x -> (x-v)^2 + g[v]^2
    out = np.empty((h, w), dtype=np.float64)
    v = np.empty(w, dtype=np.int64)  # parabola apexes on the envelope
    z = np.empty(w + 1, dtype=np.float64)  # envelope cell boundaries
    for y in range(h):
        f = g[y]
        f = f * f  # inf stays inf
        k = -1
        for q in range(w):
            fq = f[q]
            if fq == np.inf:
                continue
            if k < 0:
                k = 0
                v[0] = q
                z[0] = -np.inf
                z[1] = np.inf
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
            z[k] = s if k > 0 else -np.inf
            z[k + 1] = np.inf
        if k < 0:
            out[y] = big * big  # row unreachable; caller guards this
            continue
        j = 0
        row = out[y]
        for q in range(w):
            while z[j + 1] < q:
                j += 1
            p = v[j]
            row[q] = (q - p) * (q - p) + f[p]
    return out


def mc_core(field: np.ndarray, iso: float):
    """Marching cubes over voxel-corner cubes; index-space vertices.

    Returns (vertices [n,3] float64 in (x, y, z) index coordinates,
    triangles [m,3] int32). A corner is classified "below" when its value
    is strictly less than iso. Vertices on shared cube edges are welded:
    each global grid edge owns at most one vertex, interpolated from its
    lower corner toward +axis with t = (iso - f0)/(f1 - f0) (0.5 when
    f0 == f1). Cubes are visited z-major, so vertex indexing is
    deterministic.
    """
    field = np.asarray(field, dtype=np.float64)
    nz, ny, nx = field.shape
    iso = float(iso)

    below = field < iso
    # case index per cube from the 8 corner bits, all vectorized
    b = below.astype(np.uint16)
    cidx = (
        b[:-1, :-1, :-1]
        | (b[:-1, :-1, 1:] << 1)
        | (b[:-1, 1:, 1:] << 2)
        | (b[:-1, 1:, :-1] << 3)
        | (b[1:, :-1, :-1] << 4)
        | (b[1:, :-1, 1:] << 5)
        | (b[1:, 1:, 1:] << 6)
        | (b[1:, 1:, :-1] << 7)
    )
    active = np.argwhere((cidx != 0) & (cidx != 255))  # (z, y, x), lexicographic

    # vertex id per global edge; axis-major so ids fit one flat array
    edge_vid = np.full(3 * nz * ny * nx, -1, dtype=np.int64)
    verts: list[tuple[float, float, float]] = []
    tris: list[tuple[int, int, int]] = []

    # python ints: the int8 table entries would overflow in key arithmetic
    eg = [tuple(int(v) for v in row) for row in EDGE_GLOBAL]
    tt = TRI_TABLE

    def vertex_on_edge(axis, gx, gy, gz):
        key = ((axis * nz + gz) * ny + gy) * nx + gx
        vid = edge_vid[key]
        if vid >= 0:
            return vid
        f0 = field[gz, gy, gx]
        if axis == 0:
            f1 = field[gz, gy, gx + 1]
        elif axis == 1:
            f1 = field[gz, gy + 1, gx]
        else:
            f1 = field[gz + 1, gy, gx]
        t = 0.5 if f0 == f1 else (iso - f0) / (f1 - f0)
        px, py, pz = float(gx), float(gy), float(gz)
        if axis == 0:
            px += t
        elif axis == 1:
            py += t
        else:
            pz += t
        vid = len(verts)
        verts.append((px, py, pz))
        edge_vid[key] = vid
        return vid

    for z, y, x in active:
        z, y, x = int(z), int(y), int(x)
        case = cidx[z, y, x]
        row = tt[case]
        i = 0
        while row[i] >= 0:
            ids = []
            for j in (i, i + 1, i + 2):
                e = row[j]
                axis, dx, dy, dz = eg[e]
                ids.append(vertex_on_edge(axis, x + dx, y + dy, z + dz))
            # table order winds toward below-iso; flip so normals point
            # toward increasing field values
            if ids[0] != ids[1] and ids[1] != ids[2] and ids[0] != ids[2]:
                tris.append((ids[0], ids[2], ids[1]))
            i += 3

    if not verts:
        return np.zeros((0, 3), dtype=np.float64), np.zeros((0, 3), dtype=np.int32)
    return np.array(verts, dtype=np.float64), np.array(tris, dtype=np.int32)


_OFFSETS = [(ky, kx) for ky in range(3) for kx in range(3)]


def _im2col(xp: np.ndarray, H: int, W: int) -> np.ndarray:
    """Padded input [B,C,H+2,W+2] -> columns [B, 9C, HW], offset-major."""
    B, C = xp.shape[:2]
    cols = np.empty((B, 9 * C, H * W), dtype=xp.dtype)
    for k, (ky, kx) in enumerate(_OFFSETS):
        cols[:, k * C : (k + 1) * C, :] = xp[:, :, ky : ky + H, kx : kx + W].reshape(
            B, C, H * W
        )
    return cols


def _weights2d(w: np.ndarray) -> np.ndarray:
    """[F,C,3,3] -> [F, 9C] matching the _im2col block layout."""
    F, C = w.shape[:2]
    return w.transpose(2, 3, 0, 1).reshape(9, F, C).transpose(1, 0, 2).reshape(F, 9 * C)


def conv3x3_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """SAME zero-padded 3x3 cross-correlation. x [B,C,H,W], w [F,C,3,3]."""
    B, C, H, W = x.shape
    F = w.shape[0]
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    cols = _im2col(xp, H, W)
    y = (_weights2d(w) @ cols).reshape(B, F, H, W)
    y += b[None, :, None, None]
    return y


def conv3x3_backward(x: np.ndarray, w: np.ndarray, dy: np.ndarray):
    """Gradients of conv3x3_forward. Returns (dx, dw, db)."""
    B, C, H, W = x.shape
    F = w.shape[0]
    dy = np.ascontiguousarray(dy)
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    db = dy.sum(axis=(0, 2, 3))
    dy2 = dy.reshape(B, F, H * W)
    cols = _im2col(xp, H, W)
    dw2 = np.matmul(dy2, cols.transpose(0, 2, 1)).sum(axis=0)  # [F, 9C]
    dw = (
        dw2.reshape(F, 9, C)
        .transpose(1, 0, 2)
        .reshape(3, 3, F, C)
        .transpose(2, 3, 0, 1)
        .copy()
    )
    dcols = np.matmul(_weights2d(w).T, dy2)  # [B, 9C, HW]
    dxp = np.zeros_like(xp)
    for k, (ky, kx) in enumerate(_OFFSETS):
        dxp[:, :, ky : ky + H, kx : kx + W] += dcols[:, k * C : (k + 1) * C, :].reshape(
            B, C, H, W
        )
    dx = dxp[:, :, 1 : H + 1, 1 : W + 1]
    return dx, dw, db
