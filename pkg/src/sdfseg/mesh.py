"""Marching-cubes surface extraction and mesh export.

Triangles are wound counter-clockwise seen from the side of increasing
field values, so meshing a signed distance field at iso 0 gives outward
normals. Vertices on shared cube edges are welded through an exact
edge-index map (no epsilon matching), and cube traversal order is fixed,
so vertex indexing is reproducible.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _kernels
from .errors import ShapeError, ValidationError
from .volgrid import MASK, SCALAR, VolumeGrid


@dataclass(frozen=True)
class TriangleMesh:
    """Indexed triangle surface in physical (millimeter) coordinates."""

    vertices: np.ndarray  # [n, 3] float64
    triangles: np.ndarray  # [m, 3] int32
    vertex_scalar: np.ndarray | None = None  # optional [n] float64

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        t = np.asarray(self.triangles, dtype=np.int32).reshape(-1, 3)
        if t.size:
            if t.min() < 0 or t.max() >= len(v):
                raise ValidationError("triangle index out of range")
            if (
                (t[:, 0] == t[:, 1]) | (t[:, 1] == t[:, 2]) | (t[:, 0] == t[:, 2])
            ).any():
                raise ValidationError("triangle repeats a vertex index")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)
        if self.vertex_scalar is not None:
            s = np.asarray(self.vertex_scalar, dtype=np.float64).reshape(-1)
            if len(s) != len(v):
                raise ValidationError(
                    f"vertex_scalar length {len(s)} != vertex count {len(v)}"
                )
            object.__setattr__(self, "vertex_scalar", s)

    def with_scalar(self, scalar) -> "TriangleMesh":
        return TriangleMesh(self.vertices, self.triangles, vertex_scalar=scalar)


def marching_cubes(field: VolumeGrid, iso: float) -> TriangleMesh:
    """Extract the iso-surface of a scalar grid as a triangle mesh.

    Classic 256-case table over voxel-corner cubes; edge vertices by
    linear interpolation (t = 0.5 when both corner values are equal).
    Saddle-face ambiguities are resolved as the table dictates.
    """
    nx, ny, nz = field.dims
    if min(nx, ny, nz) < 2:
        raise ShapeError(f"marching cubes needs at least 2 voxels per axis, got {field.dims}")
    if not np.isfinite(iso):
        raise ValidationError(f"iso level must be finite, got {iso}")
    verts_idx, tris = _kernels.mc_core(np.asarray(field.data, dtype=np.float64), float(iso))
    verts = np.asarray(field.origin) + verts_idx * np.asarray(field.spacing)
    return TriangleMesh(vertices=verts, triangles=tris)


def mask_to_field(mask: VolumeGrid) -> VolumeGrid:
    """Binary grid as a 0/1 scalar field; mesh the result at iso 0.5."""
    if mask.element_kind == SCALAR:
        return mask
    return VolumeGrid(
        data=mask.data.astype(np.float32),
        spacing=mask.spacing,
        origin=mask.origin,
        element_kind=SCALAR,
    )


@dataclass(frozen=True)
class TopologyReport:
    vertex_count: int
    edge_count: int
    triangle_count: int
    euler_characteristic: int
    boundary_edge_count: int
    non_manifold_edge_count: int


def mesh_topology_report(mesh: TriangleMesh) -> TopologyReport:
    """Count edges by multiplicity: boundary = 1 use, non-manifold >= 3."""
    t = mesh.triangles
    if len(t) == 0:
        return TopologyReport(len(mesh.vertices), 0, 0, len(mesh.vertices), 0, 0)
    pairs = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
    pairs = np.sort(pairs, axis=1)
    _, counts = np.unique(pairs, axis=0, return_counts=True)
    v = len(mesh.vertices)
    e = len(counts)
    f = len(t)
    return TopologyReport(
        vertex_count=v,
        edge_count=e,
        triangle_count=f,
        euler_characteristic=v - e + f,
        boundary_edge_count=int((counts == 1).sum()),
        non_manifold_edge_count=int((counts >= 3).sum()),
    )


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------


def _fmt(x: float) -> str:
    return repr(float(x))


def _write_obj(mesh: TriangleMesh, path: Path) -> None:
    lines = [f"v {_fmt(v[0])} {_fmt(v[1])} {_fmt(v[2])}" for v in mesh.vertices]
    lines += [f"f {t[0] + 1} {t[1] + 1} {t[2] + 1}" for t in mesh.triangles]
    path.write_text("\n".join(lines) + ("\n" if lines else ""))


def _facet_normals(mesh: TriangleMesh) -> np.ndarray:
    v = mesh.vertices
    t = mesh.triangles
    n = np.cross(v[t[:, 1]] - v[t[:, 0]], v[t[:, 2]] - v[t[:, 0]])
    lens = np.linalg.norm(n, axis=1)
    safe = lens > 0
    n[safe] /= lens[safe, None]
    n[~safe] = 0.0
    return n


def _write_stl(mesh: TriangleMesh, path: Path) -> None:
    header = b"sdfseg binary stl".ljust(80, b"\0")
    normals = _facet_normals(mesh) if len(mesh.triangles) else np.zeros((0, 3))
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(struct.pack("<I", len(mesh.triangles)))
        for tri, nrm in zip(mesh.triangles, normals):
            rec = [*nrm]
            for idx in tri:
                rec.extend(mesh.vertices[idx])
            fh.write(struct.pack("<12fH", *[float(x) for x in rec], 0))


def scalar_to_red_blue(scalar: np.ndarray) -> np.ndarray:
    """Linear red->blue map: min value -> (255,0,0), max -> (0,0,255).

    A constant channel (zero range) maps everything to red.
    """
    s = np.asarray(scalar, dtype=np.float64)
    lo, hi = (s.min(), s.max()) if s.size else (0.0, 0.0)
    t = np.zeros_like(s) if hi == lo else (s - lo) / (hi - lo)
    rgb = np.zeros((len(s), 3), dtype=np.uint8)
    rgb[:, 0] = np.rint(255.0 * (1.0 - t)).astype(np.uint8)
    rgb[:, 2] = np.rint(255.0 * t).astype(np.uint8)
    return rgb


def _write_ply(mesh: TriangleMesh, path: Path) -> None:
    if mesh.vertex_scalar is None:
        raise ValueError("ply_with_scalar export requires a vertex_scalar channel")
    rgb = scalar_to_red_blue(mesh.vertex_scalar)
    lines = [
        "ply",
        "format ascii 1.0",
        f"element vertex {len(mesh.vertices)}",
        "property float x",
        "property float y",
        "property float z",
        "property uchar red",
        "property uchar green",
        "property uchar blue",
        f"element face {len(mesh.triangles)}",
        "property list uchar int vertex_indices",
        "end_header",
    ]
    for v, c in zip(mesh.vertices, rgb):
        lines.append(f"{_fmt(v[0])} {_fmt(v[1])} {_fmt(v[2])} {c[0]} {c[1]} {c[2]}")
    for t in mesh.triangles:
        lines.append(f"3 {t[0]} {t[1]} {t[2]}")
    path.write_text("\n".join(lines) + "\n")


MESH_FORMATS = ("obj", "stl_binary", "ply_with_scalar")


def export_mesh(mesh: TriangleMesh, path, format: str) -> None:
    """Write the mesh as ascii OBJ, binary STL, or ascii PLY with colors.

    OBJ uses 1-based indices; STL gets computed facet normals; PLY colors
    come from the red-blue map of ``vertex_scalar`` (required).
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if format == "obj":
        _write_obj(mesh, path)
    elif format == "stl_binary":
        _write_stl(mesh, path)
    elif format == "ply_with_scalar":
        _write_ply(mesh, path)
    else:
        raise ValueError(f"unknown mesh format {format!r}; expected one of {MESH_FORMATS}")
