"""Per-slice signed distance transforms and their normalization.

Sign convention: negative strictly inside the foreground, positive
strictly outside. Raw magnitudes are pixel-center Euclidean distances to
the nearest opposite-label pixel minus half a pixel, which puts the zero
level midway between adjacent opposite-label pixels and makes
boundary-adjacent magnitudes symmetric (+-0.5). Distances are in pixel
units; physical spacing never enters here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import EmptyLabelError, ValidationError
from .volgrid import MASK, SCALAR, SliceField, VolumeGrid


@dataclass(frozen=True)
class SignedDistanceSlice:
    """2D signed distance field, raw (pixels) or normalized to [-1, 1].

    ``scale`` is the max-absolute raw value divided out during
    normalization; it is meaningful only when ``normalized`` is True.
    """

    values: np.ndarray
    normalized: bool = False
    scale: float = 1.0

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]


def _binary_values(mask) -> np.ndarray:
    if isinstance(mask, SliceField):
        if mask.kind != "binary":
            raise ValidationError("expected a binary slice")
        return mask.values
    arr = np.asarray(mask)
    if arr.ndim != 2 or (arr.size and not np.isin(arr, (0, 1)).all()):
        raise ValidationError("expected a 2D binary array")
    return arr.astype(np.uint8)


def edt_squared(mask, target_label: int) -> SliceField:
    """Exact squared Euclidean distance to the nearest target_label pixel.

    Pixel-center to pixel-center, so every output is an exact integer.
    Raises EmptyLabelError when no pixel carries target_label.
    """
    values = _binary_values(mask)
    if target_label not in (0, 1):
        raise ValidationError(f"target_label must be 0 or 1, got {target_label}")
    if not (values == target_label).any():
        raise EmptyLabelError(f"no pixel with label {target_label}")
    return SliceField(values=_kernels.edt2d_sq(values, target_label), kind="real")


def sdf_from_mask(mask, half_pixel_offset: bool = True) -> SignedDistanceSlice:
    """Raw signed distance field of a binary slice.

    Outside pixels get +(d - 0.5), inside pixels -(d - 0.5), where d is
    the Euclidean distance to the nearest opposite-label pixel center.
    ``half_pixel_offset=False`` drops the -0.5 (plain pixel-center
    distances) for comparison runs.

    Single-label slices saturate instead of failing: the missing-label
    distance is taken as the slice diagonal sqrt(w^2 + h^2), so an
    all-background slice is uniformly positive and an all-foreground one
    uniformly negative.
    """
    values = _binary_values(mask)
    h, w = values.shape
    offset = 0.5 if half_pixel_offset else 0.0
    diag = float(np.hypot(w, h))

    fg = values == 1
    if fg.all():
        return SignedDistanceSlice(np.full((h, w), -(diag - offset)))
    if not fg.any():
        return SignedDistanceSlice(np.full((h, w), +(diag - offset)))

    d_to_fg = np.sqrt(_kernels.edt2d_sq(values, 1))
    d_to_bg = np.sqrt(_kernels.edt2d_sq(values, 0))
    raw = np.where(fg, -(d_to_bg - offset), d_to_fg - offset)
    return SignedDistanceSlice(raw)


def normalize_sdf(raw: SignedDistanceSlice) -> SignedDistanceSlice:
    """Divide by the slice's max absolute value; record it as ``scale``."""
    if raw.normalized:
        raise ValidationError("slice is already normalized")
    scale = float(np.abs(raw.values).max())
    if scale == 0.0:
        return SignedDistanceSlice(np.zeros_like(raw.values), normalized=True, scale=1.0)
    return SignedDistanceSlice(raw.values / scale, normalized=True, scale=scale)


def sdf_volume(
    mask_volume: VolumeGrid, half_pixel_offset: bool = True, normalize: bool = True
) -> VolumeGrid:
    """Per-slice SDF of a binary volume as a scalar grid, normalized by default.

    Slices are transformed independently; dims/spacing/origin carry over.
    Raw values are quantized to the grid's float32 before normalization, so
    writing the raw volume and normalizing it afterwards reproduces the
    normalized output bit-exactly.
    """
    if mask_volume.element_kind != MASK:
        raise ValidationError("sdf_volume requires a binary_mask grid")
    out = np.empty(mask_volume.data.shape, dtype=np.float32)
    for z in range(mask_volume.data.shape[0]):
        raw32 = sdf_from_mask(
            mask_volume.data[z], half_pixel_offset=half_pixel_offset
        ).values.astype(np.float32)
        if normalize:
            out[z] = normalize_sdf(SignedDistanceSlice(raw32)).values
        else:
            out[z] = raw32
    return VolumeGrid(
        data=out,
        spacing=mask_volume.spacing,
        origin=mask_volume.origin,
        element_kind=SCALAR,
    )
