import json

import numpy as np
import pytest

from sdfseg.errors import ConfigError
from sdfseg.phantom import (
    PhantomSpec,
    analytic_sphere_sdf,
    case_geometry,
    gen_case,
    gen_dataset,
    load_split,
    split_counts,
)
from sdfseg.sdf import sdf_from_mask
from sdfseg.volgrid import MASK, SCALAR


class TestGenCase:
    def test_deterministic(self):
        spec = PhantomSpec(size=24, slices=16, count=2, seed=9, noise_sigma=0.2)
        a_img, a_mask = gen_case(spec, 1)
        b_img, b_mask = gen_case(spec, 1)
        assert a_img.data.tobytes() == b_img.data.tobytes()
        assert a_mask.data.tobytes() == b_mask.data.tobytes()

    def test_kinds(self):
        spec = PhantomSpec(size=16, count=1, seed=0, shapes="ellipsoid")
        img, mask = gen_case(spec, 0)
        assert img.element_kind == SCALAR
        assert mask.element_kind == MASK
        assert img.dims == mask.dims == (16, 16, 16)

    def test_noise_free_image_range(self):
        spec = PhantomSpec(size=16, count=1, seed=3, shapes="sphere",
                           contrast=1.0, noise_sigma=0.0)
        img, _ = gen_case(spec, 0)
        assert img.data.min() >= 0.0
        assert img.data.max() <= 1.0

    def test_sphere_volume_within_5pct(self):
        spec = PhantomSpec(size=64, count=4, seed=2, shapes="sphere", noise_sigma=0.0)
        for i in range(4):
            geom = case_geometry(spec, i)
            r = geom["radii"][0][0]
            assert r >= 10
            _, mask = gen_case(spec, i)
            count = int(mask.data.sum())
            expected = 4.0 / 3.0 * np.pi * r**3
            assert abs(count - expected) / expected < 0.05

    def test_families_rotate_in_mix(self):
        spec = PhantomSpec(size=16, count=6, seed=1, shapes="mix")
        fams = [case_geometry(spec, i)["family"] for i in range(6)]
        assert fams == ["sphere", "ellipsoid", "two_lobe"] * 2

    def test_two_lobe_is_union(self):
        spec = PhantomSpec(size=32, count=3, seed=4, shapes="two_lobe")
        geom = case_geometry(spec, 0)
        assert len(geom["centers"]) == 2
        _, mask = gen_case(spec, 0)
        assert mask.data.sum() > 0

    def test_mask_margin_respected(self):
        spec = PhantomSpec(size=16, count=8, seed=5, shapes="mix")
        for i in range(8):
            _, mask = gen_case(spec, i)
            m = mask.data
            assert m[:2].sum() == 0 and m[-2:].sum() == 0
            assert m[:, :2].sum() == 0 and m[:, -2:].sum() == 0
            assert m[:, :, :2].sum() == 0 and m[:, :, -2:].sum() == 0


class TestAnalyticSphere:
    def test_center_value(self):
        # center placed on a voxel center
        g = analytic_sphere_sdf((9, 9, 9), (1, 1, 1), (4.0, 4.0, 4.0), 3.0)
        assert g.data[4, 4, 4] == -3.0

    def test_sign_convention(self):
        g = analytic_sphere_sdf((9, 9, 9), (1, 1, 1), (4.0, 4.0, 4.0), 3.0)
        assert g.data[4, 4, 0] > 0  # 4 voxels away, outside
        assert g.data[4, 4, 3] < 0  # 1 voxel away, inside

    def test_zero_set_at_radius(self):
        g = analytic_sphere_sdf((17, 17, 17), (1, 1, 1), (8.0, 8.0, 8.0), 5.0)
        assert g.data[8, 8, 13] == 0.0  # exactly at distance 5

    def test_spacing_respected(self):
        g = analytic_sphere_sdf((9, 9, 9), (2.0, 1.0, 1.0), (8.0, 4.0, 4.0), 3.0)
        assert g.data[4, 4, 4] == -3.0
        assert g.data[4, 4, 0] == 5.0  # 8mm away in x

    def test_threshold_then_sdf_sign_agreement(self):
        # rasterize the analytic sphere, re-derive per-slice SDFs, compare signs
        g = analytic_sphere_sdf((24, 24, 24), (1, 1, 1), (11.5, 11.5, 11.5), 7.3)
        mask = (g.data < 0).astype(np.uint8)
        for z in range(24):
            raw = sdf_from_mask(mask[z]).values
            analytic = g.data[z]
            assert (np.sign(raw) == np.sign(analytic)).all()


class TestSplits:
    def test_counts_6_2_2(self):
        assert split_counts(10, (0.6, 0.2, 0.2)) == (6, 2, 2)

    def test_fractions_must_sum_to_one(self):
        with pytest.raises(ConfigError):
            split_counts(10, (0.5, 0.2, 0.2))

    def test_negative_fraction(self):
        with pytest.raises(ConfigError):
            split_counts(10, (1.2, -0.1, -0.1))


class TestGenDataset:
    def test_layout_and_partition(self, tmp_path):
        spec = PhantomSpec(size=16, count=5, seed=7, noise_sigma=0.05)
        manifest_path = gen_dataset(spec, (0.6, 0.2, 0.2), tmp_path / "ds")
        manifest = json.loads(manifest_path.read_text())
        splits = manifest["splits"]
        assert len(splits["train"]) == 3
        assert len(splits["val"]) == 1
        assert len(splits["test"]) == 1
        all_ids = splits["train"] + splits["val"] + splits["test"]
        assert len(set(all_ids)) == 5  # no case in two splits
        for cid, img, mask in load_split(tmp_path / "ds", "train"):
            assert img.dims == (16, 16, 16)
            assert mask.element_kind == MASK

    def test_same_seed_identical_tree(self, tmp_path):
        spec = PhantomSpec(size=16, count=3, seed=8, noise_sigma=0.1)
        gen_dataset(spec, (0.7, 0.2, 0.1), tmp_path / "a")
        gen_dataset(spec, (0.7, 0.2, 0.1), tmp_path / "b")
        files_a = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
        files_b = sorted(p.relative_to(tmp_path / "b") for p in (tmp_path / "b").rglob("*") if p.is_file())
        assert files_a == files_b
        for rel in files_a:
            assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()


class TestSpecValidation:
    def test_bad_size(self):
        with pytest.raises(ConfigError):
            PhantomSpec(size=10)

    def test_bad_family(self):
        with pytest.raises(ConfigError):
            PhantomSpec(size=16, shapes="torus")

    def test_negative_noise(self):
        with pytest.raises(ConfigError):
            PhantomSpec(size=16, noise_sigma=-1)
