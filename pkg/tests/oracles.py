"""Independent brute-force oracles shared by the test modules.

These deliberately avoid the library's algorithms: distances are computed
by exhaustive pairwise minimization, gradients by central finite
differences, percentiles by the order-statistics rule spelled out by hand.
"""

import numpy as np


def edt_sq_brute(mask: np.ndarray, target_label: int) -> np.ndarray:
    """All-pairs squared distance to the nearest target_label pixel.

    Exhaustive minimum over every target pixel, chunked to bound memory;
    int32 arithmetic is exact at these sizes.
    """
    mask = np.asarray(mask)
    h, w = mask.shape
    ty, tx = np.nonzero(mask == target_label)
    assert len(ty) > 0
    yy, xx = np.mgrid[0:h, 0:w].astype(np.int32)
    yy = yy.reshape(-1, 1)
    xx = xx.reshape(-1, 1)
    best = np.full(h * w, np.iinfo(np.int32).max, dtype=np.int32)
    for i in range(0, len(ty), 256):
        cy = ty[i : i + 256].astype(np.int32)
        cx = tx[i : i + 256].astype(np.int32)
        d2 = (yy - cy) ** 2 + (xx - cx) ** 2
        np.minimum(best, d2.min(axis=1), out=best)
    return best.reshape(h, w).astype(np.float64)


def sdf_brute(mask: np.ndarray, offset: float = 0.5) -> np.ndarray:
    """Signed distance via the brute-force transform (non-degenerate masks)."""
    mask = np.asarray(mask)
    d_fg = np.sqrt(edt_sq_brute(mask, 1))
    d_bg = np.sqrt(edt_sq_brute(mask, 0))
    return np.where(mask == 1, -(d_bg - offset), d_fg - offset)


def directed_brute(src_pts: np.ndarray, dst_pts: np.ndarray) -> np.ndarray:
    """Exhaustive nearest-neighbor distances from each src point."""
    diff = src_pts[:, None, :] - dst_pts[None, :, :]
    return np.sqrt((diff**2).sum(axis=2)).min(axis=1)


def surface_points_brute(mask3d: np.ndarray, spacing=(1.0, 1.0, 1.0), origin=(0.0, 0.0, 0.0)):
    """Voxel-by-voxel six-connectivity boundary scan; physical coords."""
    nz, ny, nx = mask3d.shape
    pts = []
    for z in range(nz):
        for y in range(ny):
            for x in range(nx):
                if not mask3d[z, y, x]:
                    continue
                on_surface = False
                for dz, dy, dx in (
                    (-1, 0, 0), (1, 0, 0), (0, -1, 0), (0, 1, 0), (0, 0, -1), (0, 0, 1),
                ):
                    z2, y2, x2 = z + dz, y + dy, x + dx
                    if not (0 <= z2 < nz and 0 <= y2 < ny and 0 <= x2 < nx):
                        on_surface = True
                        break
                    if not mask3d[z2, y2, x2]:
                        on_surface = True
                        break
                if on_surface:
                    pts.append(
                        (
                            origin[0] + x * spacing[0],
                            origin[1] + y * spacing[1],
                            origin[2] + z * spacing[2],
                        )
                    )
    return np.asarray(pts, dtype=np.float64).reshape(-1, 3)


def percentile_brute(values: np.ndarray, q: float) -> float:
    """Order-statistics percentile, linear between closest ranks."""
    x = np.sort(np.asarray(values, dtype=np.float64))
    n = len(x)
    if n == 1:
        return float(x[0])
    r = q / 100.0 * (n - 1)
    lo = int(np.floor(r))
    hi = min(lo + 1, n - 1)
    return float(x[lo] + (r - lo) * (x[hi] - x[lo]))


def fd_gradient(func, x: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    """Central finite differences of a scalar function, element by element."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        f_plus = func(x)
        flat[i] = orig - eps
        f_minus = func(x)
        flat[i] = orig
        gflat[i] = (f_plus - f_minus) / (2.0 * eps)
    return g


def rel_err(a: np.ndarray, b: np.ndarray) -> float:
    """Relative error between two gradient fields, scale-protected."""
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / denom)
