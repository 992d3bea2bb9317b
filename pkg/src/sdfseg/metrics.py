"""Volumetric and surface evaluation metrics, plus Table-style aggregation.

Surfaces are voxel surfaces: foreground voxels with at least one
six-connected background neighbor (out of bounds counts as background).
All distances are exact Euclidean nearest-neighbor distances in physical
units; a KD-tree provides the queries and a brute-force pairwise scan
serves as the independent test oracle.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .errors import EmptyLabelError, ShapeError, UndefinedMetricError
from .mesh import TriangleMesh
from .volgrid import MASK, VolumeGrid

METRIC_NAMES = ("vol_dice", "surf_dice", "hd", "hd95", "assd")
SURFACE_METRICS = ("surf_dice", "hd", "hd95", "assd")


@dataclass(frozen=True)
class SurfacePointSet:
    """Physical coordinates of a mask's surface voxels."""

    points: np.ndarray  # [n, 3] float64, (x, y, z) order
    dims: tuple[int, int, int]
    spacing: tuple[float, float, float]

    def __len__(self) -> int:
        return len(self.points)


@dataclass(frozen=True)
class MetricsRecord:
    """The five per-case metrics; surface fields are None when undefined."""

    case_id: str
    vol_dice: float
    surf_dice: float | None
    hd: float | None
    hd95: float | None
    assd: float | None

    @property
    def surface_defined(self) -> bool:
        return self.hd is not None

    def to_dict(self) -> dict:
        return {
            "case": self.case_id,
            "vol_dice": self.vol_dice,
            "surf_dice": self.surf_dice,
            "hd": self.hd,
            "hd95": self.hd95,
            "assd": self.assd,
        }


def _require_binary_pair(pred: VolumeGrid, truth: VolumeGrid):
    if pred.element_kind != MASK or truth.element_kind != MASK:
        raise ShapeError("metrics require binary_mask volumes")
    if pred.data.shape != truth.data.shape:
        raise ShapeError(f"dims mismatch: {pred.dims} vs {truth.dims}")


def volumetric_dice(pred: VolumeGrid, truth: VolumeGrid) -> float:
    """2|A n B| / (|A| + |B|); two empty masks score 1."""
    _require_binary_pair(pred, truth)
    a = pred.data.astype(bool)
    b = truth.data.astype(bool)
    total = int(a.sum()) + int(b.sum())
    if total == 0:
        return 1.0
    return 2.0 * int(np.logical_and(a, b).sum()) / total


def extract_surface_voxels(mask: VolumeGrid) -> SurfacePointSet:
    """Foreground voxels with a six-connected background neighbor.

    Out-of-bounds neighbors count as background, so a solid block touching
    the grid boundary still has a surface there. Points are returned in
    deterministic (z, y, x)-lexicographic order, as physical coordinates.
    """
    if mask.element_kind != MASK:
        raise ShapeError("surface extraction requires a binary_mask volume")
    fg = mask.data.astype(bool)
    if not fg.any():
        raise EmptyLabelError("mask has no foreground voxel")
    padded = np.pad(fg, 1)
    boundary = fg & ~(
        padded[:-2, 1:-1, 1:-1]
        & padded[2:, 1:-1, 1:-1]
        & padded[1:-1, :-2, 1:-1]
        & padded[1:-1, 2:, 1:-1]
        & padded[1:-1, 1:-1, :-2]
        & padded[1:-1, 1:-1, 2:]
    )
    zyx = np.argwhere(boundary)
    pts = zyx[:, ::-1].astype(np.float64)  # -> (x, y, z)
    pts *= np.asarray(mask.spacing)
    pts += np.asarray(mask.origin)
    return SurfacePointSet(points=pts, dims=mask.dims, spacing=mask.spacing)


def directed_distances(src: SurfacePointSet, dst: SurfacePointSet) -> np.ndarray:
    """Exact Euclidean distance from each src point to its nearest dst point."""
    if len(src) == 0 or len(dst) == 0:
        raise ValueError("directed distances need two nonempty point sets")
    d, _ = cKDTree(dst.points).query(src.points, k=1)
    return np.asarray(d, dtype=np.float64)


def hausdorff(a: SurfacePointSet, b: SurfacePointSet) -> float:
    if len(a) == 0 or len(b) == 0:
        raise UndefinedMetricError("hausdorff undefined for an empty surface")
    return max(float(directed_distances(a, b).max()), float(directed_distances(b, a).max()))


def _pooled(a: SurfacePointSet, b: SurfacePointSet) -> np.ndarray:
    if len(a) == 0 or len(b) == 0:
        raise UndefinedMetricError("metric undefined for an empty surface")
    return np.concatenate([directed_distances(a, b), directed_distances(b, a)])


def hd95(a: SurfacePointSet, b: SurfacePointSet) -> float:
    """95th percentile of the pooled two-directional distances.

    Percentile rule (linear interpolation between closest ranks): with the
    pooled distances sorted ascending as x[0..n-1], the value is
    x[floor(r)] + (r - floor(r)) * (x[floor(r)+1] - x[floor(r)]) at rank
    position r = 0.95 * (n - 1).
    """
    return float(np.percentile(_pooled(a, b), 95.0, method="linear"))


def assd(a: SurfacePointSet, b: SurfacePointSet) -> float:
    """Symmetric mean of nearest-neighbor distances pooled over both sets."""
    d = _pooled(a, b)
    return float(d.sum() / d.size)


def surface_dice(a: SurfacePointSet, b: SurfacePointSet, tolerance: float) -> float:
    """Fraction of pooled surface points within ``tolerance`` of the other set."""
    if tolerance < 0:
        raise ValueError(f"tolerance must be >= 0, got {tolerance}")
    if len(a) == 0 or len(b) == 0:
        raise UndefinedMetricError("surface dice undefined for an empty surface")
    hits = int((directed_distances(a, b) <= tolerance).sum())
    hits += int((directed_distances(b, a) <= tolerance).sum())
    return hits / (len(a) + len(b))


def evaluate_pair(
    pred: VolumeGrid, truth: VolumeGrid, tolerance: float = 1.0, case_id: str = "case"
) -> MetricsRecord:
    """All five metrics for one predicted/truth mask pair.

    When either mask has no foreground the surface metrics are undefined
    and recorded as None; volumetric dice is always defined.
    """
    _require_binary_pair(pred, truth)
    vd = volumetric_dice(pred, truth)
    try:
        sa = extract_surface_voxels(pred)
        sb = extract_surface_voxels(truth)
    except EmptyLabelError:
        return MetricsRecord(case_id, vd, None, None, None, None)
    da = directed_distances(sa, sb)
    db = directed_distances(sb, sa)
    pooled = np.concatenate([da, db])
    return MetricsRecord(
        case_id=case_id,
        vol_dice=vd,
        surf_dice=(int((da <= tolerance).sum()) + int((db <= tolerance).sum())) / pooled.size,
        hd=max(float(da.max()), float(db.max())),
        hd95=float(np.percentile(pooled, 95.0, method="linear")),
        assd=float(pooled.sum() / pooled.size),
    )


def vertex_distance_channel(mesh: TriangleMesh, truth_surface: SurfacePointSet) -> TriangleMesh:
    """Attach per-vertex distance to the nearest truth surface point."""
    if len(truth_surface) == 0:
        raise ValueError("truth surface is empty")
    if len(mesh.vertices) == 0:
        return mesh.with_scalar(np.zeros(0))
    d, _ = cKDTree(truth_surface.points).query(mesh.vertices, k=1)
    return mesh.with_scalar(np.asarray(d, dtype=np.float64))


@dataclass(frozen=True)
class AggregateReport:
    """Per-metric mean and sample std over cases (Table-style)."""

    case_count: int
    mean: dict[str, float | None]
    std: dict[str, float | None]
    excluded: dict[str, int]

    def to_json_dict(self) -> dict:
        return {
            "case_count": self.case_count,
            "mean": self.mean,
            "std": self.std,
            "excluded": self.excluded,
        }


def aggregate(records: list[MetricsRecord]) -> AggregateReport:
    """Mean and sample standard deviation (n-1 denominator; n=1 -> 0).

    Cases with undefined surface metrics are excluded per metric and the
    exclusion counts reported.
    """
    if not records:
        raise ValueError("cannot aggregate an empty record list")
    mean: dict[str, float | None] = {}
    std: dict[str, float | None] = {}
    excluded: dict[str, int] = {}
    for name in METRIC_NAMES:
        vals = [getattr(r, name) for r in records]
        kept = [v for v in vals if v is not None]
        excluded[name] = len(vals) - len(kept)
        if not kept:
            mean[name] = None
            std[name] = None
            continue
        arr = np.asarray(kept, dtype=np.float64)
        mean[name] = float(arr.mean())
        std[name] = 0.0 if len(kept) == 1 else float(arr.std(ddof=1))
    return AggregateReport(
        case_count=len(records), mean=mean, std=std, excluded=excluded
    )


# ---------------------------------------------------------------------------
# emission
# ---------------------------------------------------------------------------


def records_to_json(records: list[MetricsRecord], path) -> None:
    doc = {
        "records": [r.to_dict() for r in records],
        "aggregate": aggregate(records).to_json_dict(),
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")


def records_from_json(path) -> list[MetricsRecord]:
    doc = json.loads(Path(path).read_text())
    return [
        MetricsRecord(
            case_id=r["case"],
            vol_dice=r["vol_dice"],
            surf_dice=r["surf_dice"],
            hd=r["hd"],
            hd95=r["hd95"],
            assd=r["assd"],
        )
        for r in doc["records"]
    ]


def records_to_csv(records: list[MetricsRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["case", "vol_dice", "surf_dice", "hd", "hd95", "assd"])
        for r in records:
            row = r.to_dict()
            writer.writerow(
                [row["case"]]
                + ["" if row[k] is None else repr(float(row[k])) for k in METRIC_NAMES]
            )
