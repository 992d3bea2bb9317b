"""Two-head encoder-decoder with explicit forward/backward passes.

Topology: per encoder stage two zero-padded 3x3 convolutions each followed
by ReLU, then 2x2 max-pool; the decoder mirrors it with 2x nearest-neighbor
upsampling, a 3x3 convolution, and skip concatenation; two 1x1 heads share
the final feature map (sigmoid for segmentation, tanh for the signed
distance regression). Channels double per stage from ``base_channels``.

All math runs in float64 regardless of the parameter storage dtype; the
model file stores float32. Everything here is deterministic for a fixed
seed: initialization, batch shuffling, pooling tie-breaks, and reduction
orders.
"""

from __future__ import annotations

import json
import struct
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit

from . import _kernels
from .errors import ConfigError, FormatError, NumericError, ShapeError
from .losses import LossBreakdown, LossConfig, total_loss
from .sdf import normalize_sdf, sdf_from_mask
from .volgrid import MASK, SCALAR, VolumeGrid

_MAGIC = b"CFX1"

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass(frozen=True)
class NetConfig:
    depth: int = 2
    base_channels: int = 8
    input_size: tuple[int, int] = (64, 64)  # (width, height)
    seed: int = 0

    def __post_init__(self):
        if self.depth < 1:
            raise ConfigError(f"depth must be >= 1, got {self.depth}")
        if self.base_channels < 1:
            raise ConfigError(f"base_channels must be >= 1, got {self.base_channels}")
        w, h = self.input_size
        m = 1 << self.depth
        if w % m or h % m:
            raise ConfigError(f"input size {self.input_size} not divisible by 2^depth = {m}")


@dataclass
class ModelParams:
    """Named weight/bias tensors in manifest order, plus the architecture."""

    config: NetConfig
    tensors: dict[str, np.ndarray]

    @property
    def count(self) -> int:
        return sum(t.size for t in self.tensors.values())

    def copy(self) -> "ModelParams":
        return ModelParams(self.config, {k: v.copy() for k, v in self.tensors.items()})


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    decay_factor: float = 1.0
    epochs: int = 50
    batch_size: int = 4
    loss: LossConfig = field(default_factory=LossConfig)
    seed: int = 0
    deterministic: bool = True
    stop_at_val_dice: float | None = None  # early stop once reached

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if not 0 < self.decay_factor <= 1:
            raise ConfigError(f"decay_factor must be in (0, 1], got {self.decay_factor}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")


@dataclass(frozen=True)
class EpochRecord:
    loss: LossBreakdown
    val_dice: float
    lr: float


@dataclass
class TrainReport:
    epochs: list[EpochRecord]
    best_epoch: int
    wall_time_s: float

    def to_json_dict(self) -> dict:
        return {
            "epochs": [
                {"loss": vars(e.loss), "val_dice": e.val_dice, "lr": e.lr} for e in self.epochs
            ],
            "best_epoch": self.best_epoch,
            "wall_time_s": self.wall_time_s,
        }


@dataclass(frozen=True)
class TrainSample:
    """One training slice: image, binary mask, normalized SDF target."""

    image: np.ndarray
    mask: np.ndarray
    sdf: np.ndarray


def samples_from_volumes(image: VolumeGrid, mask: VolumeGrid) -> list[TrainSample]:
    """Split an (image, mask) volume pair into per-slice training samples.

    The SDF target of each slice is computed on the fly (raw transform,
    then per-slice normalization).
    """
    if image.data.shape != mask.data.shape:
        raise ShapeError(f"image dims {image.dims} != mask dims {mask.dims}")
    if mask.element_kind != MASK:
        raise ShapeError("mask volume must be binary_mask")
    out = []
    for z in range(mask.data.shape[0]):
        m = mask.data[z]
        sdf = normalize_sdf(sdf_from_mask(m)).values
        out.append(TrainSample(image=np.asarray(image.data[z], dtype=np.float64), mask=m, sdf=sdf))
    return out


def _stage_channels(cfg: NetConfig) -> list[int]:
    return [cfg.base_channels << i for i in range(cfg.depth + 1)]


def _tensor_shapes(cfg: NetConfig) -> dict[str, tuple]:
    """Manifest: tensor name -> shape, in forward order."""
    ch = _stage_channels(cfg)
    shapes: dict[str, tuple] = {}
    c_in = 1
    for i in range(cfg.depth):
        shapes[f"enc{i}.conv1.w"] = (ch[i], c_in, 3, 3)
        shapes[f"enc{i}.conv1.b"] = (ch[i],)
        shapes[f"enc{i}.conv2.w"] = (ch[i], ch[i], 3, 3)
        shapes[f"enc{i}.conv2.b"] = (ch[i],)
        c_in = ch[i]
    shapes["bottleneck.conv1.w"] = (ch[-1], ch[cfg.depth - 1], 3, 3)
    shapes["bottleneck.conv1.b"] = (ch[-1],)
    shapes["bottleneck.conv2.w"] = (ch[-1], ch[-1], 3, 3)
    shapes["bottleneck.conv2.b"] = (ch[-1],)
    for i in range(cfg.depth - 1, -1, -1):
        shapes[f"dec{i}.up.w"] = (ch[i], ch[i + 1], 3, 3)
        shapes[f"dec{i}.up.b"] = (ch[i],)
        shapes[f"dec{i}.conv1.w"] = (ch[i], 2 * ch[i], 3, 3)
        shapes[f"dec{i}.conv1.b"] = (ch[i],)
        shapes[f"dec{i}.conv2.w"] = (ch[i], ch[i], 3, 3)
        shapes[f"dec{i}.conv2.b"] = (ch[i],)
    shapes["head_seg.w"] = (1, ch[0], 1, 1)
    shapes["head_seg.b"] = (1,)
    shapes["head_sdf.w"] = (1, ch[0], 1, 1)
    shapes["head_sdf.b"] = (1,)
    return shapes


def init_params(cfg: NetConfig) -> ModelParams:
    """He fan-in initialization for weights, zeros for biases; seeded."""
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    tensors: dict[str, np.ndarray] = {}
    for name, shape in _tensor_shapes(cfg).items():
        if name.endswith(".b"):
            tensors[name] = np.zeros(shape, dtype=np.float64)
        else:
            fan_in = int(np.prod(shape[1:]))
            tensors[name] = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)
    return ModelParams(cfg, tensors)


# ---------------------------------------------------------------------------
# forward / backward
# ---------------------------------------------------------------------------


class ForwardCache:
    """Activations saved by forward(), consumed once by backward()."""

    def __init__(self, params, steps, feat, seg, sdf):
        self.params = params
        self.steps = steps
        self.feat = feat
        self.seg = seg
        self.sdf = sdf


def _as_batch(batch) -> np.ndarray:
    if hasattr(batch, "values"):  # a single SliceField
        batch = batch.values
    arr = np.asarray(batch, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3:
        raise ShapeError(f"batch must be [H,W] or [B,H,W], got shape {arr.shape}")
    return arr


def _f64(params, name):
    return np.asarray(params.tensors[name], dtype=np.float64)


def _conv(params, name, x, steps):
    y = _kernels.conv3x3_forward(x, _f64(params, name + ".w"), _f64(params, name + ".b"))
    steps.append(("conv", name, x))
    return y


def _relu(x, steps):
    y = np.maximum(x, 0.0)
    steps.append(("relu", y))
    return y


def _maxpool(x, steps):
    B, C, H, W = x.shape
    win = (
        x.reshape(B, C, H // 2, 2, W // 2, 2)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(B, C, H // 2, W // 2, 4)
    )
    am = win.argmax(axis=-1)  # first max wins on ties
    y = np.take_along_axis(win, am[..., None], axis=-1)[..., 0]
    steps.append(("pool", am, H, W))
    return y


def _upsample(x, steps):
    y = x.repeat(2, axis=2).repeat(2, axis=3)
    steps.append(("up",))
    return y


def _concat(a, skip, steps):
    y = np.concatenate([a, skip], axis=1)
    steps.append(("concat", a.shape[1]))
    return y


def _head(params, name, x):
    w = _f64(params, name + ".w")[:, :, 0, 0]
    b = _f64(params, name + ".b")
    return np.einsum("fc,bchw->bfhw", w, x, optimize=True) + b[None, :, None, None]


def forward(params: ModelParams, batch):
    """Run the network; returns (seg probs, sdf predictions, cache).

    Accepts [H,W], [B,H,W] arrays or a SliceField; spatial dims must be
    divisible by 2^depth. Outputs are [B,H,W]: segmentation through
    sigmoid, signed-distance regression through tanh.
    """
    cfg = params.config
    x = _as_batch(batch)
    _, H, W = x.shape
    m = 1 << cfg.depth
    if H % m or W % m:
        raise ShapeError(f"slice {W}x{H} not divisible by 2^depth = {m}")
    a = x[:, None, :, :]

    steps: list[tuple] = []
    skips = []
    for i in range(cfg.depth):
        a = _relu(_conv(params, f"enc{i}.conv1", a, steps), steps)
        a = _relu(_conv(params, f"enc{i}.conv2", a, steps), steps)
        skips.append(a)
        a = _maxpool(a, steps)
    a = _relu(_conv(params, "bottleneck.conv1", a, steps), steps)
    a = _relu(_conv(params, "bottleneck.conv2", a, steps), steps)
    for i in range(cfg.depth - 1, -1, -1):
        a = _upsample(a, steps)
        a = _relu(_conv(params, f"dec{i}.up", a, steps), steps)
        a = _concat(a, skips[i], steps)
        a = _relu(_conv(params, f"dec{i}.conv1", a, steps), steps)
        a = _relu(_conv(params, f"dec{i}.conv2", a, steps), steps)

    seg = expit(_head(params, "head_seg", a))[:, 0]
    sdf = np.tanh(_head(params, "head_sdf", a))[:, 0]
    return seg, sdf, ForwardCache(params, steps, a, seg, sdf)


def _head_backward(params, name, feat, dlogit, grads):
    w = _f64(params, name + ".w")[:, :, 0, 0]
    grads[name + ".w"] = np.einsum("bfhw,bchw->fc", dlogit, feat, optimize=True)[:, :, None, None]
    grads[name + ".b"] = dlogit.sum(axis=(0, 2, 3))
    return np.einsum("fc,bfhw->bchw", w, dlogit, optimize=True)


def backward(cache: ForwardCache, dseg, dsdf) -> dict[str, np.ndarray]:
    """Backpropagate gradients w.r.t. both post-activation head outputs.

    Returns one gradient array per parameter tensor. The cache is
    single-use; a second call on the same cache raises.
    """
    params = cache.params
    if cache.steps is None:
        raise ValueError("cache already consumed by a previous backward()")
    dseg = np.asarray(dseg, dtype=np.float64)
    dsdf = np.asarray(dsdf, dtype=np.float64)
    if dseg.shape != cache.seg.shape or dsdf.shape != cache.sdf.shape:
        raise ShapeError(
            f"head gradient shapes {dseg.shape}/{dsdf.shape} do not match "
            f"cached outputs {cache.seg.shape}"
        )

    grads: dict[str, np.ndarray] = {}
    dlogit_seg = (dseg * cache.seg * (1.0 - cache.seg))[:, None]
    dlogit_sdf = (dsdf * (1.0 - cache.sdf * cache.sdf))[:, None]
    da = _head_backward(params, "head_seg", cache.feat, dlogit_seg, grads)
    da += _head_backward(params, "head_sdf", cache.feat, dlogit_sdf, grads)

    # each encoder-stage output feeds both the pool chain and a decoder
    # concat; concat-side gradients are stacked here and folded back in
    # when the backward walk reaches the matching pool
    dskips: list[np.ndarray] = []
    for step in reversed(cache.steps):
        op = step[0]
        if op == "relu":
            da = da * (step[1] > 0.0)
        elif op == "conv":
            _, name, x = step
            da, dw, db = _kernels.conv3x3_backward(x, _f64(params, name + ".w"), da)
            grads[name + ".w"] = dw
            grads[name + ".b"] = db
        elif op == "concat":
            c = step[1]
            dskips.append(da[:, c:].copy())
            da = np.ascontiguousarray(da[:, :c])
        elif op == "up":
            B, C, H, W = da.shape
            da = da.reshape(B, C, H // 2, 2, W // 2, 2).sum(axis=(3, 5))
        elif op == "pool":
            _, am, H, W = step
            B, C, H2, W2 = da.shape
            dwin = np.zeros((B, C, H2, W2, 4), dtype=da.dtype)
            np.put_along_axis(dwin, am[..., None], da[..., None], axis=-1)
            da = (
                dwin.reshape(B, C, H2, W2, 2, 2)
                .transpose(0, 1, 2, 4, 3, 5)
                .reshape(B, C, H, W)
            )
            da = da + dskips.pop()
        else:  # pragma: no cover
            raise ValueError(f"unknown step {op!r}")
    cache.steps = None
    return grads


# ---------------------------------------------------------------------------
# optimizer
# ---------------------------------------------------------------------------


def init_adam_state(params: ModelParams) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    return {k: (np.zeros_like(v), np.zeros_like(v)) for k, v in params.tensors.items()}


def adam_step(params: ModelParams, grads, state, step: int, lr: float) -> None:
    """One Adam update (beta1=0.9, beta2=0.999, eps=1e-8, bias-corrected).

    Mutates params and state in place. Non-finite gradients raise before
    anything is touched.
    """
    if step < 1:
        raise ConfigError(f"step index must be >= 1, got {step}")
    for name in params.tensors:
        if not np.isfinite(grads[name]).all():
            raise NumericError(f"non-finite gradient for tensor {name!r}")
    c1 = 1.0 - ADAM_BETA1**step
    c2 = 1.0 - ADAM_BETA2**step
    for name, p in params.tensors.items():
        g = grads[name]
        m, v = state[name]
        m *= ADAM_BETA1
        m += (1.0 - ADAM_BETA1) * g
        v *= ADAM_BETA2
        v += (1.0 - ADAM_BETA2) * (g * g)
        p -= lr * (m / c1) / (np.sqrt(v / c2) + ADAM_EPS)


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------


def _pooled_dice(pred_fg: np.ndarray, truth_fg: np.ndarray) -> float:
    inter = float(np.logical_and(pred_fg, truth_fg).sum())
    total = float(pred_fg.sum()) + float(truth_fg.sum())
    if total == 0.0:
        return 1.0
    return 2.0 * inter / total


def _validation_dice(params: ModelParams, samples, batch_size: int) -> float:
    inter = 0.0
    total = 0.0
    for i in range(0, len(samples), batch_size):
        chunk = samples[i : i + batch_size]
        images = np.stack([s.image for s in chunk])
        masks = np.stack([s.mask for s in chunk]).astype(bool)
        seg, _, _ = forward(params, images)
        fg = seg > 0.5
        inter += float(np.logical_and(fg, masks).sum())
        total += float(fg.sum()) + float(masks.sum())
    return 1.0 if total == 0.0 else 2.0 * inter / total


def train(train_set, val_set, net_cfg: NetConfig, train_cfg: TrainConfig):
    """Joint training of both heads; returns (best params, TrainReport).

    Mini-batches are reshuffled each epoch from the seeded generator, the
    learning rate is multiplied by ``decay_factor`` per epoch, and the
    returned parameters are those of the epoch with the highest pooled
    validation dice (earliest epoch wins ties).
    """
    train_set = list(train_set)
    val_set = list(val_set)
    if not train_set or not val_set:
        raise ValueError("train and validation sets must be nonempty")

    t0 = time.perf_counter()
    rng = np.random.Generator(np.random.PCG64(train_cfg.seed))
    params = init_params(net_cfg)
    state = init_adam_state(params)
    step = 0
    records: list[EpochRecord] = []
    best_dice = -1.0
    best_epoch = -1
    best_params = params.copy()

    for epoch in range(train_cfg.epochs):
        lr = train_cfg.learning_rate * train_cfg.decay_factor**epoch
        order = rng.permutation(len(train_set))
        sums = np.zeros(7)
        seen = 0
        for start in range(0, len(order), train_cfg.batch_size):
            idx = order[start : start + train_cfg.batch_size]
            images = np.stack([train_set[i].image for i in idx])
            masks = np.stack([train_set[i].mask for i in idx]).astype(np.float64)
            sdfs = np.stack([train_set[i].sdf for i in idx])

            seg, sdfp, cache = forward(params, images)
            bd, (gseg, gsdf) = total_loss(seg, masks, sdfp, sdfs, train_cfg.loss)
            if not np.isfinite(bd.total):
                raise NumericError(
                    f"non-finite loss at epoch {epoch}, batch starting at {start}"
                )
            grads = backward(cache, gseg, gsdf)
            step += 1
            adam_step(params, grads, state, step, lr)
            n = len(idx)
            sums += n * np.array(
                [bd.bce, bd.dice, bd.l1, bd.laplacian, bd.seg_total, bd.reg_total, bd.total]
            )
            seen += n

        mean = sums / seen
        val_dice = _validation_dice(params, val_set, train_cfg.batch_size)
        records.append(
            EpochRecord(loss=LossBreakdown(*mean.tolist()), val_dice=val_dice, lr=lr)
        )
        if val_dice > best_dice:
            best_dice = val_dice
            best_epoch = epoch
            best_params = params.copy()
        if train_cfg.stop_at_val_dice is not None and val_dice >= train_cfg.stop_at_val_dice:
            break

    report = TrainReport(
        epochs=records, best_epoch=best_epoch, wall_time_s=time.perf_counter() - t0
    )
    return best_params, report


# ---------------------------------------------------------------------------
# inference
# ---------------------------------------------------------------------------


def _pad_to_multiple(sl: np.ndarray, m: int):
    h, w = sl.shape
    ph = (-h) % m
    pw = (-w) % m
    if ph == 0 and pw == 0:
        return sl, (0, 0)
    return np.pad(sl, ((0, ph), (0, pw)), mode="reflect"), (ph, pw)


def predict_volume(params: ModelParams, image: VolumeGrid, batch_size: int = 8):
    """Slice-by-slice inference over a scalar volume.

    Slices are reflect-padded up to the next multiple of 2^depth and the
    outputs cropped back. Returns (mask grid via strict > 0.5 threshold,
    SDF grid); both inherit dims/spacing/origin from the input.
    """
    m = 1 << params.config.depth
    nz, ny, nx = image.data.shape
    seg_out = np.empty((nz, ny, nx), dtype=np.float64)
    sdf_out = np.empty((nz, ny, nx), dtype=np.float32)
    padded = [_pad_to_multiple(np.asarray(image.data[z], dtype=np.float64), m) for z in range(nz)]
    for i in range(0, nz, batch_size):
        chunk = padded[i : i + batch_size]
        batch = np.stack([c[0] for c in chunk])
        seg, sdfp, _ = forward(params, batch)
        for j, (_, (ph, pw)) in enumerate(chunk):
            seg_out[i + j] = seg[j, : ny, : nx]
            sdf_out[i + j] = sdfp[j, : ny, : nx]
    mask = (seg_out > 0.5).astype(np.uint8)  # ties at exactly 0.5 -> background
    mask_grid = VolumeGrid(mask, image.spacing, image.origin, MASK)
    sdf_grid = VolumeGrid(sdf_out, image.spacing, image.origin, SCALAR)
    return mask_grid, sdf_grid


# ---------------------------------------------------------------------------
# serialization: magic "CFX1", u32le header length, JSON header, f32 payload
# ---------------------------------------------------------------------------


def save_model(params: ModelParams, path) -> None:
    """Write the model file; tensors are stored as little-endian float32."""
    cfg = params.config
    header = {
        "config": {
            "depth": cfg.depth,
            "base_channels": cfg.base_channels,
            "input_size": list(cfg.input_size),
            "seed": cfg.seed,
        },
        "tensors": [{"name": k, "shape": list(v.shape)} for k, v in params.tensors.items()],
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for v in params.tensors.values():
            fh.write(np.asarray(v, dtype="<f4").tobytes())


def load_model(path) -> ModelParams:
    """Read a model file written by :func:`save_model`."""
    raw = Path(path).read_bytes()
    if raw[:4] != _MAGIC:
        raise FormatError(f"{path}: bad magic {raw[:4]!r}, expected {_MAGIC!r}")
    (hlen,) = struct.unpack("<I", raw[4:8])
    try:
        header = json.loads(raw[8 : 8 + hlen].decode())
        cfg = NetConfig(
            depth=header["config"]["depth"],
            base_channels=header["config"]["base_channels"],
            input_size=tuple(header["config"]["input_size"]),
            seed=header["config"]["seed"],
        )
        manifest = [(t["name"], tuple(t["shape"])) for t in header["tensors"]]
    except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: garbled model header: {exc}") from exc

    if manifest != list(_tensor_shapes(cfg).items()):
        raise FormatError(f"{path}: tensor manifest does not match the declared architecture")

    tensors: dict[str, np.ndarray] = {}
    off = 8 + hlen
    for name, shape in manifest:
        n = int(np.prod(shape))
        chunk = raw[off : off + 4 * n]
        if len(chunk) != 4 * n:
            raise FormatError(f"{path}: payload truncated at tensor {name!r}")
        tensors[name] = np.frombuffer(chunk, dtype="<f4").reshape(shape).copy()
        off += 4 * n
    if off != len(raw):
        raise FormatError(f"{path}: {len(raw) - off} trailing bytes after payload")
    return ModelParams(cfg, tensors)
