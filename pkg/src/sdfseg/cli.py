"""Command-line pipeline: phantom -> sdf -> train -> predict -> reconstruct
-> evaluate -> report.

Exit codes: 0 success, 2 usage/validation error, 3 runtime/numeric failure.
stdout carries machine-readable paths/JSON/tables only; diagnostics go to
stderr. Config overlay order for train: built-in defaults, then the
--config JSON file, then explicit flags.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import mesh as mesh_mod
from . import metrics as metrics_mod
from .errors import NumericError, SdfSegError
from .losses import LossConfig
from .model import (
    NetConfig,
    TrainConfig,
    load_model,
    predict_volume,
    samples_from_volumes,
    save_model,
    train,
)
from .phantom import PhantomSpec, gen_dataset, load_split
from .sdf import sdf_volume
from .volgrid import MASK, load_volume, save_volume

ABLATION_WEIGHTS = {
    "a": (1.0, 1.0, 0.0, 0.0),  # segmentation losses only
    "c": (1.0, 1.0, 1.0, 0.0),  # + L1 regression
    "d": (1.0, 1.0, 1.0, 1.0),  # + Laplacian smoothness
}

TABLE_COLUMNS = ("Volumetric Dice", "Surface Dice", "HD", "HD95", "ASSD")


def _parse_split(text: str) -> tuple[float, float, float]:
    parts = [float(p) for p in text.split(",")]
    if len(parts) != 3:
        raise ValueError(f"--split needs 3 comma-separated fractions, got {text!r}")
    return tuple(parts)


def cmd_phantom(args) -> int:
    spec = PhantomSpec(
        size=args.size,
        slices=args.slices,
        count=args.count,
        seed=args.seed,
        shapes=args.shapes,
        contrast=args.contrast,
        noise_sigma=args.noise,
    )
    manifest = gen_dataset(spec, _parse_split(args.split), args.out)
    print(manifest)
    return 0


def cmd_sdf(args) -> int:
    mask = load_volume(args.mask)
    out = sdf_volume(mask, normalize=not args.raw)
    save_volume(out, args.out)
    print(args.out)
    return 0


def _load_json(path) -> dict:
    if path is None:
        return {}
    return json.loads(Path(path).read_text())


def _build_train_configs(args, sample_shape):
    """defaults < config file < flags; returns (NetConfig, TrainConfig, extras)."""
    doc = _load_json(args.config)
    net = dict(doc.get("net", {}))
    tr = dict(doc.get("train", {}))
    loss = dict(doc.get("loss", {}))

    if args.epochs is not None:
        tr["epochs"] = args.epochs
    if args.lr is not None:
        tr["learning_rate"] = args.lr
    if args.seed is not None:
        tr["seed"] = args.seed
        net.setdefault("seed", args.seed)
    if args.ablation is not None:
        loss["weights"] = ABLATION_WEIGHTS[args.ablation]
    if "weights" in loss:
        loss["weights"] = tuple(loss["weights"])

    h, w = sample_shape
    net.setdefault("input_size", (w, h))
    net["input_size"] = tuple(net["input_size"])
    loss_cfg = LossConfig(**loss)
    net_cfg = NetConfig(**net)
    extras = {"min_fg_fraction": float(tr.pop("min_fg_fraction", 0.0))}
    train_cfg = TrainConfig(loss=loss_cfg, **tr)
    return net_cfg, train_cfg, extras


def _split_samples(root, split, min_fg=0.0):
    samples = []
    for _, image, mask in load_split(root, split):
        for s in samples_from_volumes(image, mask):
            if s.mask.mean() >= min_fg:
                samples.append(s)
    return samples


def cmd_train(args) -> int:
    root = Path(args.data)
    if not (root / "manifest.json").exists():
        raise FileNotFoundError(f"no dataset manifest under {root}")
    probe = _split_samples(root, "train")[0]
    net_cfg, train_cfg, extras = _build_train_configs(args, probe.image.shape)
    train_set = _split_samples(root, "train", extras["min_fg_fraction"])
    val_set = _split_samples(root, "val", extras["min_fg_fraction"])
    params, report = train(train_set, val_set, net_cfg, train_cfg)
    save_model(params, args.out)
    report_path = Path(args.report) if args.report else Path(str(args.out) + ".report.json")
    report_path.write_text(
        json.dumps(report.to_json_dict(), sort_keys=True, indent=2) + "\n"
    )
    print(args.out)
    print(report_path)
    return 0


def cmd_predict(args) -> int:
    params = load_model(args.model)
    image = load_volume(args.image)
    mask, sdf = predict_volume(params, image)
    save_volume(mask, args.out_mask)
    save_volume(sdf, args.out_sdf)
    print(args.out_mask)
    print(args.out_sdf)
    return 0


def cmd_reconstruct(args) -> int:
    vol = load_volume(getattr(args, "in"))
    if args.source == "mask":
        if vol.element_kind != MASK:
            raise SdfSegError("--from mask requires a binary_mask volume")
        field = mesh_mod.mask_to_field(vol)
        iso = 0.5 if args.iso is None else args.iso
    else:
        field = vol
        iso = 0.0 if args.iso is None else args.iso
    m = mesh_mod.marching_cubes(field, iso)
    fmt = {"obj": "obj", "stl": "stl_binary"}[args.format]
    mesh_mod.export_mesh(m, args.out, fmt)
    print(args.out)
    return 0


def _evaluate_single(pred_path, truth_path, tolerance, case_id, ply_out):
    pred = load_volume(pred_path)
    truth = load_volume(truth_path)
    record = metrics_mod.evaluate_pair(pred, truth, tolerance=tolerance, case_id=case_id)
    if ply_out:
        surface = metrics_mod.extract_surface_voxels(truth)
        m = mesh_mod.marching_cubes(mesh_mod.mask_to_field(pred), 0.5)
        m = metrics_mod.vertex_distance_channel(m, surface)
        mesh_mod.export_mesh(m, ply_out, "ply_with_scalar")
    return record


def cmd_evaluate(args) -> int:
    pred = Path(args.pred)
    truth = Path(args.truth)
    records = []
    if pred.is_dir() != truth.is_dir():
        raise SdfSegError("--pred and --truth must both be files or both directories")
    if pred.is_dir():
        truth_files = sorted(truth.glob("*_mask.svol.json"))
        if not truth_files:
            raise SdfSegError(f"no *_mask.svol.json files under {truth}")
        for tf in truth_files:
            pf = pred / tf.name
            if not pf.exists():
                raise SdfSegError(f"missing prediction {pf}")
            cid = tf.name[: -len("_mask.svol.json")]
            records.append(_evaluate_single(pf, tf, args.tolerance, cid, None))
    else:
        records.append(
            _evaluate_single(pred, truth, args.tolerance, args.case_id, args.ply)
        )
    metrics_mod.records_to_json(records, args.out)
    if args.csv:
        metrics_mod.records_to_csv(records, args.csv)
    print(args.out)
    return 0


def _fmt_cell(mean, std):
    if mean is None:
        return "undefined"
    return f"{mean:.4f}±{std:.4f}"


def render_table(rows: list[tuple[str, metrics_mod.AggregateReport]]) -> str:
    """Aggregate rows as a fixed-width text table in Table-1 column order."""
    header = ["Model"] + list(TABLE_COLUMNS)
    body = []
    for label, agg in rows:
        cells = [label] + [
            _fmt_cell(agg.mean[k], agg.std[k]) for k in metrics_mod.METRIC_NAMES
        ]
        body.append(cells)
    widths = [max(len(r[i]) for r in [header] + body) for i in range(len(header))]
    lines = [" | ".join(h.ljust(w) for h, w in zip(header, widths))]
    lines.append("-+-".join("-" * w for w in widths))
    for cells in body:
        lines.append(" | ".join(c.ljust(w) for c, w in zip(cells, widths)))
    return "\n".join(lines) + "\n"


def cmd_report(args) -> int:
    labels = args.labels.split(",") if args.labels else None
    if labels and len(labels) != len(args.metrics):
        raise SdfSegError("--labels count must match the number of metrics files")
    rows = []
    for i, path in enumerate(args.metrics):
        records = metrics_mod.records_from_json(path)
        label = labels[i] if labels else Path(path).stem
        rows.append((label, metrics_mod.aggregate(records)))
    table = render_table(rows)
    if args.out:
        Path(args.out).write_text(table)
        print(args.out)
    else:
        sys.stdout.write(table)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sdfseg",
        description="Shape-aware segmentation pipeline on synthetic phantoms",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phantom", help="generate a phantom dataset")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--slices", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--shapes", default="mix")
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--contrast", type=float, default=1.0)
    p.add_argument("--split", default="0.6,0.2,0.2")
    p.set_defaults(func=cmd_phantom)

    p = sub.add_parser("sdf", help="per-slice signed distance transform of a mask volume")
    p.add_argument("--mask", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--raw", action="store_true", help="skip per-slice normalization")
    p.set_defaults(func=cmd_sdf)

    p = sub.add_parser("train", help="train the two-head network on a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--config", default=None, help="JSON with net/train/loss sections")
    p.add_argument("--out", required=True)
    p.add_argument("--ablation", choices=sorted(ABLATION_WEIGHTS), default=None)
    p.add_argument("--report", default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="slice-wise inference over an image volume")
    p.add_argument("--model", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--out-mask", required=True)
    p.add_argument("--out-sdf", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("reconstruct", help="marching-cubes mesh from a volume")
    p.add_argument("--in", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--from", dest="source", choices=("mask", "sdf"), default="mask")
    p.add_argument("--iso", type=float, default=None)
    p.add_argument("--format", choices=("obj", "stl"), default="obj")
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("evaluate", help="metrics for predicted vs truth masks")
    p.add_argument("--pred", required=True, help="mask volume or directory of them")
    p.add_argument("--truth", required=True)
    p.add_argument("--tolerance", type=float, default=1.0)
    p.add_argument("--out", required=True, help="metrics JSON output")
    p.add_argument("--csv", default=None)
    p.add_argument("--ply", default=None, help="colorized distance mesh (single pair only)")
    p.add_argument("--case-id", default="case")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", help="aggregate metrics files into a table")
    p.add_argument("--metrics", nargs="+", required=True)
    p.add_argument("--labels", default=None, help="comma-separated row labels")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (SdfSegError, ValueError, OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ArithmeticError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
