import numpy as np
import pytest

from oracles import fd_gradient, rel_err
from sdfseg.errors import ConfigError, ShapeError
from sdfseg.losses import (
    LAPLACIAN_KERNEL,
    LossConfig,
    bce_loss,
    dice_loss,
    l1_loss,
    laplacian_filter,
    laplacian_loss,
    total_loss,
)

CFG = LossConfig()


class TestKernel:
    def test_annihilates(self):
        assert LAPLACIAN_KERNEL.sum() == 0
        assert np.array_equal(LAPLACIAN_KERNEL, np.rot90(LAPLACIAN_KERNEL))


class TestBce:
    def test_near_perfect_prediction(self):
        truth = np.array([[1.0, 0.0], [0.0, 1.0]])
        d = CFG.clamp_delta
        pred = np.where(truth == 1, 1 - d, d)
        value, _ = bce_loss(pred, truth, CFG)
        assert value == pytest.approx(-np.log1p(-d), abs=1e-12)
        assert value < 1e-6

    def test_half_everywhere_is_ln2(self):
        pred = np.full((5, 4), 0.5)
        truth = np.ones((5, 4))
        value, _ = bce_loss(pred, truth, CFG)
        assert value == pytest.approx(np.log(2), rel=1e-12)

    def test_gradient_matches_fd(self):
        rng = np.random.default_rng(0)
        pred = rng.uniform(0.05, 0.95, size=(8, 8))
        truth = (rng.random((8, 8)) < 0.5).astype(np.float64)
        _, grad = bce_loss(pred, truth, CFG)
        fd = fd_gradient(lambda p: bce_loss(p, truth, CFG)[0], pred)
        assert rel_err(grad, fd) < 1e-4

    def test_clamped_pixels_have_zero_grad(self):
        pred = np.array([[0.0, 1.0, 0.5]])
        truth = np.array([[1.0, 0.0, 1.0]])
        value, grad = bce_loss(pred, truth, CFG)
        assert np.isfinite(value)
        assert grad[0, 0] == 0 and grad[0, 1] == 0 and grad[0, 2] != 0

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            bce_loss(np.zeros((2, 2)), np.zeros((2, 3)))

    def test_sum_reduction(self):
        cfg = LossConfig(reduction="sum")
        pred = np.full((3, 3), 0.5)
        truth = np.ones((3, 3))
        value, _ = bce_loss(pred, truth, cfg)
        assert value == pytest.approx(9 * np.log(2), rel=1e-12)


class TestDice:
    def test_perfect_prediction(self):
        truth = np.array([[1.0, 0.0], [1.0, 1.0]])
        value, _ = dice_loss(truth, truth, CFG)
        assert 0 <= value <= 1e-6

    def test_hand_case_one_third(self):
        truth = np.array([[1.0, 1.0, 0.0, 0.0]])
        pred = np.array([[1.0, 0.0, 0.0, 0.0]])
        value, _ = dice_loss(pred, truth, CFG)
        # direct formula: 1 - (2*1 + eps) / (2 + 1 + eps)
        eps = CFG.epsilon
        assert value == pytest.approx(1 - (2 + eps) / (3 + eps), abs=0)
        assert value == pytest.approx(1 / 3, abs=1e-6)

    def test_disjoint_supports(self):
        truth = np.array([[1.0, 0.0]])
        pred = np.array([[0.0, 1.0]])
        value, _ = dice_loss(pred, truth, CFG)
        assert value == pytest.approx(1.0, abs=1e-6)

    def test_range(self):
        rng = np.random.default_rng(4)
        for _ in range(10):
            pred = rng.random((6, 6))
            truth = (rng.random((6, 6)) < 0.5).astype(np.float64)
            value, _ = dice_loss(pred, truth, CFG)
            assert 0.0 <= value <= 1.0

    def test_gradient_matches_fd(self):
        rng = np.random.default_rng(1)
        pred = rng.uniform(0.1, 0.9, size=(8, 8))
        truth = (rng.random((8, 8)) < 0.5).astype(np.float64)
        _, grad = dice_loss(pred, truth, CFG)
        fd = fd_gradient(lambda p: dice_loss(p, truth, CFG)[0], pred)
        assert rel_err(grad, fd) < 1e-4


class TestL1:
    def test_identity(self):
        x = np.random.default_rng(2).standard_normal((4, 4))
        value, grad = l1_loss(x, x)
        assert value == 0.0
        assert (grad == 0).all()

    def test_constant_offset(self):
        x = np.zeros((4, 4))
        value, _ = l1_loss(x + 0.25, x)
        assert value == pytest.approx(0.25, abs=0)

    def test_gradient_matches_fd(self):
        rng = np.random.default_rng(3)
        pred = rng.standard_normal((8, 8))
        truth = rng.standard_normal((8, 8))
        _, grad = l1_loss(pred, truth)
        fd = fd_gradient(lambda p: l1_loss(p, truth)[0], pred)
        assert rel_err(grad, fd) < 1e-4

    def test_symmetry(self):
        rng = np.random.default_rng(9)
        a, b = rng.standard_normal((2, 5, 5))
        assert l1_loss(a, b)[0] == l1_loss(b, a)[0]


class TestLaplacianFilter:
    def test_constant_field_zero(self):
        assert (laplacian_filter(np.full((5, 6), 3.7)) == 0).all()

    def test_affine_field_zero(self):
        yy, xx = np.mgrid[0:6, 0:7].astype(np.float64)
        f = 2.0 + 3.0 * xx - 1.5 * yy
        assert np.abs(laplacian_filter(f)).max() < 1e-12

    def test_delta_response(self):
        f = np.zeros((4, 4))
        f[1, 1] = 1.0
        out = laplacian_filter(f)
        assert out.shape == (2, 2)
        assert out.reshape(-1).tolist() == [-4.0, 1.0, 1.0, 0.0]

    def test_direct_convolution_oracle(self):
        rng = np.random.default_rng(12)
        f = rng.standard_normal((7, 9))
        out = laplacian_filter(f)
        k = LAPLACIAN_KERNEL.astype(np.float64)
        for y in range(out.shape[0]):
            for x in range(out.shape[1]):
                want = (f[y : y + 3, x : x + 3] * k).sum()
                assert out[y, x] == pytest.approx(want, rel=1e-12)

    def test_too_small(self):
        with pytest.raises(ShapeError):
            laplacian_filter(np.zeros((2, 5)))


class TestLaplacianLoss:
    def test_identity(self):
        x = np.random.default_rng(5).standard_normal((6, 6))
        value, grad = laplacian_loss(x, x)
        assert value == 0.0
        assert (grad == 0).all()

    def test_constant_shift_is_zero(self):
        x = np.random.default_rng(6).standard_normal((6, 6))
        value, _ = laplacian_loss(x + 3.25, x)
        assert value <= 1e-12

    def test_delta_case(self):
        truth = np.zeros((4, 4))
        pred = np.zeros((4, 4))
        pred[1, 1] = 1.0
        value, _ = laplacian_loss(pred, truth)
        assert value == pytest.approx((4 + 1 + 1 + 0) / 4, abs=0)

    def test_affine_nullspace_20_fields(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            h, w = rng.integers(4, 20, size=2)
            truth = rng.standard_normal((h, w))
            yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
            a, b, c = rng.uniform(-1, 1, size=3)
            pred = truth + a + b * xx + c * yy
            value, _ = laplacian_loss(pred, truth)
            assert value <= 1e-12

    def test_gradient_matches_fd(self):
        rng = np.random.default_rng(8)
        pred = rng.standard_normal((8, 8))
        truth = rng.standard_normal((8, 8))
        _, grad = laplacian_loss(pred, truth)
        fd = fd_gradient(lambda p: laplacian_loss(p, truth)[0], pred)
        assert rel_err(grad, fd) < 1e-4

    def test_symmetry(self):
        rng = np.random.default_rng(10)
        a, b = rng.standard_normal((2, 6, 6))
        assert laplacian_loss(a, b)[0] == laplacian_loss(b, a)[0]


class TestTotalLoss:
    def _random_case(self, seed):
        rng = np.random.default_rng(seed)
        seg_truth = (rng.random((8, 8)) < 0.5).astype(np.float64)
        seg_pred = rng.uniform(0.1, 0.9, size=(8, 8))
        sdf_truth = rng.uniform(-1, 1, size=(8, 8))
        sdf_pred = rng.uniform(-1, 1, size=(8, 8))
        return seg_pred, seg_truth, sdf_pred, sdf_truth

    def test_perfect_prediction(self):
        truth = (np.random.default_rng(11).random((8, 8)) < 0.5).astype(np.float64)
        sdf = np.random.default_rng(12).uniform(-1, 1, size=(8, 8))
        d = CFG.clamp_delta
        pred = np.clip(truth, d, 1 - d)
        bd, _ = total_loss(pred, truth, sdf, sdf, CFG)
        assert bd.total <= 1e-5

    def test_weight_projection(self):
        cfg = LossConfig(weights=(1, 0, 0, 0))
        seg_pred, seg_truth, sdf_pred, sdf_truth = self._random_case(13)
        bd, (gseg, gsdf) = total_loss(seg_pred, seg_truth, sdf_pred, sdf_truth, cfg)
        assert bd.total == bd.bce
        assert bd.reg_total == 0.0
        assert (gsdf == 0).all()
        assert np.array_equal(gseg, bce_loss(seg_pred, seg_truth, cfg)[1])

    def test_breakdown_invariants(self):
        cfg = LossConfig(weights=(0.5, 2.0, 1.5, 0.25))
        seg_pred, seg_truth, sdf_pred, sdf_truth = self._random_case(14)
        bd, _ = total_loss(seg_pred, seg_truth, sdf_pred, sdf_truth, cfg)
        assert bd.seg_total == pytest.approx(0.5 * bd.bce + 2.0 * bd.dice, rel=1e-15)
        assert bd.reg_total == pytest.approx(1.5 * bd.l1 + 0.25 * bd.laplacian, rel=1e-15)
        assert bd.total == pytest.approx(bd.seg_total + bd.reg_total, rel=1e-15)
        assert min(bd.bce, bd.dice, bd.l1, bd.laplacian) >= 0.0

    def test_gradients_match_fd_per_head(self):
        seg_pred, seg_truth, sdf_pred, sdf_truth = self._random_case(15)
        bd, (gseg, gsdf) = total_loss(seg_pred, seg_truth, sdf_pred, sdf_truth, CFG)
        fd_seg = fd_gradient(
            lambda p: total_loss(p, seg_truth, sdf_pred, sdf_truth, CFG)[0].total, seg_pred
        )
        fd_sdf = fd_gradient(
            lambda p: total_loss(seg_pred, seg_truth, p, sdf_truth, CFG)[0].total, sdf_pred
        )
        assert rel_err(gseg, fd_seg) < 1e-4
        assert rel_err(gsdf, fd_sdf) < 1e-4


class TestConfig:
    def test_bad_values_rejected(self):
        with pytest.raises(ConfigError):
            LossConfig(epsilon=0)
        with pytest.raises(ConfigError):
            LossConfig(clamp_delta=0.5)
        with pytest.raises(ConfigError):
            LossConfig(weights=(1, 1, 1))
        with pytest.raises(ConfigError):
            LossConfig(weights=(1, 1, 1, -1))
        with pytest.raises(ConfigError):
            LossConfig(reduction="median")
