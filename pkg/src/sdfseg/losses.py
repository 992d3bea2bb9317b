"""The four training loss terms with analytic gradients w.r.t. predictions.

All losses accept plain numpy arrays, either one slice [H, W] or a batch
[B, H, W]; prediction and truth must match exactly in shape. Values are
returned as python floats, gradients as arrays of the prediction's shape.

BCE and L1 reduce by per-pixel mean by default so magnitudes do not scale
with resolution; ``LossConfig.reduction="sum"`` restores plain sums. The
Laplacian term is always a mean over the valid interior, and the dice term
is scale-free.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError

# 3x3 discrete Laplacian stencil; entries sum to 0 and the kernel equals
# its own 90-degree rotation
LAPLACIAN_KERNEL = np.array([[0, 1, 0], [1, -4, 1], [0, 1, 0]], dtype=np.int64)


@dataclass(frozen=True)
class LossConfig:
    epsilon: float = 1e-6
    clamp_delta: float = 1e-7
    weights: tuple[float, float, float, float] = (1.0, 1.0, 1.0, 1.0)  # bce, dice, l1, laplacian
    reduction: str = "mean"

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ConfigError(f"epsilon must be positive, got {self.epsilon}")
        if not 0 < self.clamp_delta < 0.5:
            raise ConfigError(f"clamp_delta must be in (0, 0.5), got {self.clamp_delta}")
        if len(self.weights) != 4 or any(w < 0 for w in self.weights):
            raise ConfigError(f"weights must be 4 nonnegative reals, got {self.weights}")
        if self.reduction not in ("mean", "sum"):
            raise ConfigError(f"reduction must be 'mean' or 'sum', got {self.reduction!r}")


@dataclass(frozen=True)
class LossBreakdown:
    """Component values plus their weighted totals."""

    bce: float
    dice: float
    l1: float
    laplacian: float
    seg_total: float
    reg_total: float
    total: float


def _check_shapes(pred, truth):
    if pred.shape != truth.shape:
        raise ShapeError(f"prediction shape {pred.shape} != truth shape {truth.shape}")


def bce_loss(pred, truth, cfg: LossConfig = LossConfig()):
    """Binary cross-entropy with the probability clamped away from {0, 1}.

    Gradient is zero wherever the clamp is active.
    """
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    _check_shapes(pred, truth)
    d = cfg.clamp_delta
    p = np.clip(pred, d, 1.0 - d)
    value = -(truth * np.log(p) + (1.0 - truth) * np.log1p(-p))
    scale = 1.0 / pred.size if cfg.reduction == "mean" else 1.0
    grad = np.where(
        (pred >= d) & (pred <= 1.0 - d),
        scale * (-truth / p + (1.0 - truth) / (1.0 - p)),
        0.0,
    )
    return float(value.sum() * scale), grad


def dice_loss(pred, truth, cfg: LossConfig = LossConfig()):
    """1 - (2 sum(y p) + eps) / (sum(y) + sum(p) + eps)."""
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    _check_shapes(pred, truth)
    num = 2.0 * float((truth * pred).sum()) + cfg.epsilon
    den = float(truth.sum()) + float(pred.sum()) + cfg.epsilon
    value = 1.0 - num / den
    grad = (num - 2.0 * truth * den) / (den * den)
    return value, grad


def l1_loss(pred, truth, cfg: LossConfig = LossConfig()):
    """Mean (or summed) absolute error; subgradient 0 at exact ties."""
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    _check_shapes(pred, truth)
    diff = pred - truth
    scale = 1.0 / pred.size if cfg.reduction == "mean" else 1.0
    return float(np.abs(diff).sum() * scale), np.sign(diff) * scale


def laplacian_filter(field) -> np.ndarray:
    """Valid-mode cross-correlation with the 3x3 Laplacian stencil.

    Works on [H, W] or [B, H, W]; the spatial output is (H-2) x (W-2).
    """
    f = np.asarray(field, dtype=np.float64)
    h, w = f.shape[-2:]
    if h < 3 or w < 3:
        raise ShapeError(f"field must be at least 3x3, got {h}x{w}")
    return (
        f[..., :-2, 1:-1]
        + f[..., 2:, 1:-1]
        + f[..., 1:-1, :-2]
        + f[..., 1:-1, 2:]
        - 4.0 * f[..., 1:-1, 1:-1]
    )


def laplacian_loss(pred, truth, cfg: LossConfig = LossConfig()):
    """Mean absolute difference of Laplacian-filtered truth and prediction.

    The mean runs over the n = (H-2)(W-2) valid pixels (times the batch);
    the gradient is the transposed stencil applied to sign(residual).
    """
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    _check_shapes(pred, truth)
    r = laplacian_filter(truth) - laplacian_filter(pred)
    n = r.size
    value = float(np.abs(r).sum()) / n
    s = np.sign(r) * (-1.0 / n)
    grad = np.zeros_like(pred)
    h, w = pred.shape[-2:]
    for oy, ox, k in ((-1, 0, 1.0), (1, 0, 1.0), (0, -1, 1.0), (0, 1, 1.0), (0, 0, -4.0)):
        grad[..., 1 + oy : h - 1 + oy, 1 + ox : w - 1 + ox] += k * s
    return value, grad


def total_loss(seg_pred, seg_truth, sdf_pred, sdf_truth, cfg: LossConfig = LossConfig()):
    """Combined objective over both heads.

    Returns (LossBreakdown, (grad w.r.t. seg_pred, grad w.r.t. sdf_pred));
    gradients are the weighted sums of the component gradients per head.
    """
    w_bce, w_dice, w_l1, w_lap = cfg.weights
    bce, g_bce = bce_loss(seg_pred, seg_truth, cfg)
    dice, g_dice = dice_loss(seg_pred, seg_truth, cfg)
    l1, g_l1 = l1_loss(sdf_pred, sdf_truth, cfg)
    lap, g_lap = laplacian_loss(sdf_pred, sdf_truth, cfg)
    seg_total = w_bce * bce + w_dice * dice
    reg_total = w_l1 * l1 + w_lap * lap
    breakdown = LossBreakdown(
        bce=bce,
        dice=dice,
        l1=l1,
        laplacian=lap,
        seg_total=seg_total,
        reg_total=reg_total,
        total=seg_total + reg_total,
    )
    grad_seg = w_bce * g_bce + w_dice * g_dice
    grad_sdf = w_l1 * g_l1 + w_lap * g_lap
    return breakdown, (grad_seg, grad_sdf)
