"""Compiled-vs-fallback equivalence for every kernel pair.

The distance transform and marching cubes must agree bit-exactly (same
algorithm, same iteration order); the convolutions agree up to summation
order, so those comparisons carry a float tolerance.
"""

import numpy as np
import pytest

from sdfseg._kernels import _fallback

fastcore = pytest.importorskip(
    "sdfseg._kernels._fastcore", reason="compiled extension not built"
)


def random_mask(seed, h=48, w=40):
    rng = np.random.default_rng(seed)
    m = (rng.random((h, w)) < rng.uniform(0.05, 0.9)).astype(np.uint8)
    if not m.any():
        m[h // 2, w // 2] = 1
    return m


class TestEdtEquivalence:
    @pytest.mark.parametrize("seed", range(20))
    def test_bit_exact(self, seed):
        m = random_mask(seed)
        for label in (0, 1):
            if not (m == label).any():
                continue
            assert np.array_equal(
                fastcore.edt2d_sq(m, label), _fallback.edt2d_sq(m, label)
            )

    def test_narrow_arrays(self):
        m = np.zeros((1, 9), dtype=np.uint8)
        m[0, 2] = 1
        assert np.array_equal(fastcore.edt2d_sq(m, 1), _fallback.edt2d_sq(m, 1))
        m = np.zeros((9, 1), dtype=np.uint8)
        m[5, 0] = 1
        assert np.array_equal(fastcore.edt2d_sq(m, 1), _fallback.edt2d_sq(m, 1))


class TestMcEquivalence:
    @pytest.mark.parametrize("seed", range(8))
    def test_random_fields_identical(self, seed):
        rng = np.random.default_rng(seed)
        f = rng.standard_normal((9, 8, 7))
        iso = float(rng.uniform(-0.5, 0.5))
        va, ta = _fallback.mc_core(f, iso)
        vb, tb = fastcore.mc_core(f, iso)
        assert np.array_equal(va, vb)
        assert np.array_equal(ta, tb)

    def test_empty_field(self):
        f = np.zeros((3, 3, 3))
        va, ta = _fallback.mc_core(f, 0.5)
        vb, tb = fastcore.mc_core(f, 0.5)
        assert va.shape == vb.shape == (0, 3)
        assert ta.shape == tb.shape == (0, 3)


class TestConvEquivalence:
    @pytest.mark.parametrize("seed", range(5))
    def test_forward_backward_close(self, seed):
        rng = np.random.default_rng(seed)
        B, C, F = rng.integers(1, 4), rng.integers(1, 6), rng.integers(1, 6)
        H, W = rng.integers(3, 12), rng.integers(3, 12)
        x = rng.standard_normal((B, C, H, W))
        w = rng.standard_normal((F, C, 3, 3))
        b = rng.standard_normal(F)
        dy = rng.standard_normal((B, F, H, W))
        ya = _fallback.conv3x3_forward(x, w, b)
        yb = fastcore.conv3x3_forward(x, w, b)
        assert np.allclose(ya, yb, rtol=1e-12, atol=1e-12)
        for ga, gb in zip(
            _fallback.conv3x3_backward(x, w, dy), fastcore.conv3x3_backward(x, w, dy)
        ):
            assert np.allclose(ga, gb, rtol=1e-11, atol=1e-12)
