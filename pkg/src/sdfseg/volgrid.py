"""Volumetric data types and the on-disk container format.

A volume is stored as a pair of files: ``<name>.svol.json`` (text header)
plus a raw little-endian payload named by the header's ``data`` field.
Layout is fixed globally: row-major with x fastest and z slowest, which is
C order for an array indexed ``[z, y, x]``.

Payload encoding by kind:
  * ``mask``: one byte per voxel, values 0 or 1.
  * ``f32``: 32-bit little-endian IEEE-754.

Both ``VolumeGrid`` and ``SliceField`` are immutable after construction
(their arrays are marked read-only), so they are safe to share across
threads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError, ShapeError, SizeError, ValidationError

MASK = "binary_mask"
SCALAR = "scalar_f32"

# wire names used in the JSON header
_KIND_TO_WIRE = {MASK: "mask", SCALAR: "f32"}
_WIRE_TO_KIND = {v: k for k, v in _KIND_TO_WIRE.items()}

_HEADER_SUFFIX = ".svol.json"


def _check_spacing(spacing):
    if len(spacing) != 3:
        raise ValidationError(f"spacing must have 3 components, got {len(spacing)}")
    for s in spacing:
        if not np.isfinite(s) or s <= 0:
            raise ValidationError(f"spacing components must be positive and finite, got {spacing}")


def _canonical_array(values, kind, ndim):
    arr = np.asarray(values)
    if arr.ndim != ndim:
        raise ShapeError(f"expected {ndim}-d data, got shape {arr.shape}")
    if kind in (MASK, "binary"):
        if arr.size and not np.isin(arr, (0, 1)).all():
            bad = arr[np.isin(arr, (0, 1)) == False].flat[0]  # noqa: E712
            raise ValidationError(f"binary data contains value {bad!r}, only 0/1 allowed")
        arr = arr.astype(np.uint8, copy=True)
    else:
        arr = arr.astype(np.float32, copy=True)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class VolumeGrid:
    """3D scalar or binary voxel grid with physical spacing.

    ``data`` is indexed ``[z, y, x]``; voxel (ix, iy, iz) sits at physical
    position ``origin + (ix*sx, iy*sy, iz*sz)`` millimeters.
    """

    data: np.ndarray
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)
    element_kind: str = SCALAR

    def __post_init__(self):
        if self.element_kind not in (MASK, SCALAR):
            raise ValidationError(f"unknown element_kind {self.element_kind!r}")
        _check_spacing(self.spacing)
        arr = _canonical_array(self.data, self.element_kind, ndim=3)
        if min(arr.shape) < 1:
            raise ShapeError(f"all dims must be positive, got {self.dims}")
        object.__setattr__(self, "data", arr)
        object.__setattr__(self, "spacing", tuple(float(s) for s in self.spacing))
        object.__setattr__(self, "origin", tuple(float(o) for o in self.origin))

    @property
    def dims(self) -> tuple[int, int, int]:
        """(nx, ny, nz) voxel counts."""
        nz, ny, nx = self.data.shape
        return (nx, ny, nz)


@dataclass(frozen=True)
class SliceField:
    """One 2D xy-plane, binary or real, indexed ``values[y, x]``."""

    values: np.ndarray
    kind: str = "real"

    def __post_init__(self):
        if self.kind not in ("binary", "real"):
            raise ValidationError(f"unknown slice kind {self.kind!r}")
        arr = np.asarray(self.values)
        if self.kind == "binary":
            arr = _canonical_array(arr, "binary", ndim=2)
        else:
            arr = arr.astype(np.float64, copy=True)
            if arr.ndim != 2:
                raise ShapeError(f"expected 2-d data, got shape {arr.shape}")
            arr.flags.writeable = False
        if min(arr.shape) < 1:
            raise ShapeError(f"slice dims must be positive, got {arr.shape}")
        object.__setattr__(self, "values", arr)

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]


def extract_slice(grid: VolumeGrid, z: int) -> SliceField:
    """Return the z-th xy-plane of the grid."""
    nz = grid.data.shape[0]
    if not 0 <= z < nz:
        raise IndexError(f"slice index {z} out of range for nz={nz}")
    kind = "binary" if grid.element_kind == MASK else "real"
    return SliceField(values=grid.data[z], kind=kind)


def stack_slices(slices, spacing=(1.0, 1.0, 1.0), origin=(0.0, 0.0, 0.0)) -> VolumeGrid:
    """Stack an ordered list of same-shape slices into a volume (slice i at z=i)."""
    slices = list(slices)
    if not slices:
        raise ValueError("cannot stack an empty slice list")
    first = slices[0]
    for s in slices[1:]:
        if (s.width, s.height) != (first.width, first.height):
            raise ShapeError(
                f"slice dims mismatch: {(s.width, s.height)} vs {(first.width, first.height)}"
            )
        if s.kind != first.kind:
            raise ShapeError(f"slice kind mismatch: {s.kind} vs {first.kind}")
    data = np.stack([s.values for s in slices], axis=0)
    kind = MASK if first.kind == "binary" else SCALAR
    return VolumeGrid(data=data, spacing=spacing, origin=origin, element_kind=kind)


def _payload_name(header_path: Path) -> str:
    name = header_path.name
    if name.endswith(_HEADER_SUFFIX):
        return name[: -len(_HEADER_SUFFIX)] + ".raw"
    return name + ".raw"


def save_volume(grid: VolumeGrid, path) -> None:
    """Write header + raw payload. ``path`` names the header file.

    The payload goes to a sibling file (``<name>.raw``). Two saves of the
    same grid produce byte-identical files.
    """
    path = Path(path)
    raw_name = _payload_name(path)
    header = {
        "dims": list(grid.dims),
        "spacing": list(grid.spacing),
        "origin": list(grid.origin),
        "kind": _KIND_TO_WIRE[grid.element_kind],
        "data": raw_name,
    }
    if grid.element_kind == MASK:
        payload = grid.data.astype(np.uint8).tobytes()
    else:
        payload = grid.data.astype("<f4").tobytes()
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(header, sort_keys=True, separators=(",", ":")) + "\n")
    (path.parent / raw_name).write_bytes(payload)


def load_volume(path) -> VolumeGrid:
    """Load a volume saved by :func:`save_volume`. Inverts it bit-exactly."""
    path = Path(path)
    try:
        header = json.loads(path.read_text())
    except OSError as exc:
        raise FormatError(f"cannot read header {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"garbled JSON header in {path}: {exc}") from exc
    if not isinstance(header, dict):
        raise FormatError(f"header in {path} is not a JSON object")

    for key in ("dims", "spacing", "origin", "kind", "data"):
        if key not in header:
            raise FormatError(f"header field {key!r} missing in {path}")

    dims = header["dims"]
    if (
        not isinstance(dims, list)
        or len(dims) != 3
        or not all(isinstance(d, int) and d > 0 for d in dims)
    ):
        raise FormatError(f"header field 'dims' must be 3 positive integers, got {dims!r}")
    kind_wire = header["kind"]
    if kind_wire not in _WIRE_TO_KIND:
        raise FormatError(f"header field 'kind' must be 'mask' or 'f32', got {kind_wire!r}")
    try:
        spacing = tuple(float(s) for s in header["spacing"])
        origin = tuple(float(o) for o in header["origin"])
    except (TypeError, ValueError) as exc:
        raise FormatError(f"header fields 'spacing'/'origin' must be numeric: {exc}") from exc
    if len(spacing) != 3 or len(origin) != 3:
        raise FormatError("header fields 'spacing' and 'origin' must have 3 components")

    nx, ny, nz = dims
    raw_path = path.parent / header["data"]
    try:
        payload = raw_path.read_bytes()
    except OSError as exc:
        raise FormatError(f"cannot read payload {raw_path}: {exc}") from exc

    n = nx * ny * nz
    kind = _WIRE_TO_KIND[kind_wire]
    itemsize = 1 if kind == MASK else 4
    if len(payload) != n * itemsize:
        raise SizeError(
            f"payload {raw_path} holds {len(payload) // itemsize} elements, "
            f"dims {dims} require {n}"
        )
    if kind == MASK:
        arr = np.frombuffer(payload, dtype=np.uint8)
        if arr.size and not np.isin(arr, (0, 1)).all():
            bad = int(arr[~np.isin(arr, (0, 1))][0])
            raise ValidationError(f"mask payload {raw_path} contains value {bad}")
    else:
        arr = np.frombuffer(payload, dtype="<f4")
    return VolumeGrid(
        data=arr.reshape(nz, ny, nx),
        spacing=spacing,
        origin=origin,
        element_kind=kind,
    )
