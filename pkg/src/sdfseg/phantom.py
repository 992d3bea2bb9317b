"""Synthetic volume generator used in place of a clinical dataset.

Cases are analytic shapes (spheres, axis-aligned ellipsoids, two-lobe
unions with concavities) rasterized at voxel centers; the image channel is
the contrast-scaled mask blurred by a 3x3x3 box filter plus Gaussian
noise. Generation is driven by PCG64 streams keyed on (seed, case index),
so every byte is reproducible, case by case, in any order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .volgrid import MASK, SCALAR, VolumeGrid, save_volume, load_volume

SHAPE_FAMILIES = ("sphere", "ellipsoid", "two_lobe")


@dataclass(frozen=True)
class PhantomSpec:
    size: int = 64  # in-plane voxels (nx = ny = size)
    slices: int | None = None  # nz; None -> cubic
    count: int = 10
    seed: int = 0
    shapes: str = "mix"  # one family name, or "mix" to rotate through all
    contrast: float = 1.0
    noise_sigma: float = 0.1

    def __post_init__(self):
        if self.size < 8 or self.size % 4:
            raise ConfigError(f"size must be >= 8 and divisible by 4, got {self.size}")
        if self.nz < 8:
            raise ConfigError(f"slice count must be >= 8, got {self.nz}")
        if self.count < 1:
            raise ConfigError(f"count must be >= 1, got {self.count}")
        if self.shapes != "mix" and self.shapes not in SHAPE_FAMILIES:
            raise ConfigError(f"unknown shape family {self.shapes!r}")
        if self.noise_sigma < 0:
            raise ConfigError(f"noise_sigma must be >= 0, got {self.noise_sigma}")

    @property
    def nz(self) -> int:
        return self.size if self.slices is None else self.slices


def _case_rng(spec: PhantomSpec, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([spec.seed, index])))


def _draw_geometry(spec: PhantomSpec, index: int, rng: np.random.Generator) -> dict:
    family = spec.shapes
    if family == "mix":
        family = SHAPE_FAMILIES[index % len(SHAPE_FAMILIES)]
    dims = np.array([spec.size, spec.size, spec.nz], dtype=np.float64)
    mid = (dims - 1.0) / 2.0
    margin = 2.0
    # per-axis radius budget after margin and center jitter
    half = (dims - 1.0) / 2.0 - margin - 0.05 * dims

    if family == "sphere":
        r = rng.uniform(0.55, 0.95) * half.min()
        center = mid + rng.uniform(-0.05, 0.05, size=3) * dims
        geom = {"family": family, "centers": [center], "radii": [np.array([r, r, r])]}
    elif family == "ellipsoid":
        radii = rng.uniform(0.5, 0.95, size=3) * half
        center = mid + rng.uniform(-0.05, 0.05, size=3) * dims
        geom = {"family": family, "centers": [center], "radii": [radii]}
    else:  # two_lobe: overlapping spheres, sized so the union stays inside
        r1 = rng.uniform(0.55, 0.9) * 0.55 * half.min()
        r2 = rng.uniform(0.55, 0.9) * 0.55 * half.min()
        direction = rng.normal(size=3)
        direction /= np.linalg.norm(direction)
        sep = 0.4 * (r1 + r2) * direction
        center = mid + rng.uniform(-0.04, 0.04, size=3) * dims
        geom = {
            "family": family,
            "centers": [center - sep, center + sep],
            "radii": [np.array([r1] * 3), np.array([r2] * 3)],
        }

    for c, r in zip(geom["centers"], geom["radii"]):
        lo = c - r
        hi = c + r
        if (lo < margin).any() or (hi > dims - 1 - margin).any():
            raise ConfigError(
                f"case {index}: shape exceeds the 2-voxel margin "
                f"(extent {lo.round(1)}..{hi.round(1)} in dims {dims.astype(int)})"
            )
    return geom


def case_geometry(spec: PhantomSpec, index: int) -> dict:
    """The analytic shape gen_case(spec, index) rasterizes (for inspection)."""
    return _draw_geometry(spec, index, _case_rng(spec, index))


def _rasterize(spec: PhantomSpec, geom: dict) -> np.ndarray:
    zz, yy, xx = np.meshgrid(
        np.arange(spec.nz, dtype=np.float64),
        np.arange(spec.size, dtype=np.float64),
        np.arange(spec.size, dtype=np.float64),
        indexing="ij",
    )
    inside = np.zeros(zz.shape, dtype=bool)
    for c, r in zip(geom["centers"], geom["radii"]):
        q = ((xx - c[0]) / r[0]) ** 2 + ((yy - c[1]) / r[1]) ** 2 + ((zz - c[2]) / r[2]) ** 2
        inside |= q < 1.0
    return inside.astype(np.uint8)


def _box_filter3(vol: np.ndarray) -> np.ndarray:
    """Zero-padded 3x3x3 mean."""
    p = np.pad(vol.astype(np.float64), 1)
    out = np.zeros(vol.shape, dtype=np.float64)
    nz, ny, nx = vol.shape
    for dz in range(3):
        for dy in range(3):
            for dx in range(3):
                out += p[dz : dz + nz, dy : dy + ny, dx : dx + nx]
    return out / 27.0


def gen_case(spec: PhantomSpec, index: int) -> tuple[VolumeGrid, VolumeGrid]:
    """One (image, mask) volume pair; deterministic per (spec.seed, index)."""
    rng = _case_rng(spec, index)
    geom = _draw_geometry(spec, index, rng)
    mask = _rasterize(spec, geom)
    image = spec.contrast * _box_filter3(mask)
    if spec.noise_sigma > 0:
        image = image + spec.noise_sigma * rng.standard_normal(mask.shape)
    return (
        VolumeGrid(image.astype(np.float32), element_kind=SCALAR),
        VolumeGrid(mask, element_kind=MASK),
    )


def analytic_sphere_sdf(dims, spacing, center, radius, origin=(0.0, 0.0, 0.0)) -> VolumeGrid:
    """Exact sphere SDF sampled at voxel centers: |x - center| - radius.

    Positive outside, negative inside; the zero level set is the sphere.
    """
    nx, ny, nz = dims
    sx, sy, sz = spacing
    ox, oy, oz = origin
    zz, yy, xx = np.meshgrid(
        oz + sz * np.arange(nz, dtype=np.float64),
        oy + sy * np.arange(ny, dtype=np.float64),
        ox + sx * np.arange(nx, dtype=np.float64),
        indexing="ij",
    )
    d = np.sqrt((xx - center[0]) ** 2 + (yy - center[1]) ** 2 + (zz - center[2]) ** 2) - radius
    return VolumeGrid(d.astype(np.float32), spacing=spacing, origin=origin, element_kind=SCALAR)


# ---------------------------------------------------------------------------
# on-disk datasets
# ---------------------------------------------------------------------------


def split_counts(count: int, fractions) -> tuple[int, int, int]:
    if len(fractions) != 3:
        raise ConfigError(f"need 3 split fractions, got {len(fractions)}")
    if any(f < 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
        raise ConfigError(f"split fractions must be nonnegative and sum to 1, got {fractions}")
    n_train = int(round(fractions[0] * count))
    n_val = int(round((fractions[0] + fractions[1]) * count)) - n_train
    return n_train, n_val, count - n_train - n_val


def case_id(index: int) -> str:
    return f"case_{index:03d}"


def gen_dataset(spec: PhantomSpec, fractions, out_dir) -> Path:
    """Write train/val/test case directories plus manifest.json.

    Split is by case index (train first, then val, then test); returns the
    manifest path.
    """
    n_train, n_val, n_test = split_counts(spec.count, fractions)
    out_dir = Path(out_dir)
    splits = {
        "train": [case_id(i) for i in range(n_train)],
        "val": [case_id(i) for i in range(n_train, n_train + n_val)],
        "test": [case_id(i) for i in range(n_train + n_val, spec.count)],
    }
    bounds = [(0, n_train, "train"), (n_train, n_train + n_val, "val"),
              (n_train + n_val, spec.count, "test")]
    for lo, hi, split in bounds:
        for i in range(lo, hi):
            image, mask = gen_case(spec, i)
            save_volume(image, out_dir / split / f"{case_id(i)}_image.svol.json")
            save_volume(mask, out_dir / split / f"{case_id(i)}_mask.svol.json")
    manifest = {
        "seed": spec.seed,
        "count": spec.count,
        "size": spec.size,
        "slices": spec.nz,
        "shapes": spec.shapes,
        "contrast": spec.contrast,
        "noise_sigma": spec.noise_sigma,
        "splits": splits,
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    return path


def load_split(root, split: str) -> list[tuple[str, VolumeGrid, VolumeGrid]]:
    """Read (case_id, image, mask) triples of one split from a dataset dir."""
    root = Path(root)
    manifest = json.loads((root / "manifest.json").read_text())
    if split not in manifest["splits"]:
        raise ConfigError(f"unknown split {split!r}")
    out = []
    for cid in manifest["splits"][split]:
        image = load_volume(root / split / f"{cid}_image.svol.json")
        mask = load_volume(root / split / f"{cid}_mask.svol.json")
        out.append((cid, image, mask))
    return out
