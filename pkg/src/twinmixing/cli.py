"""Command-line surface: analyze, infer, bench, gradcheck, quantize, eval.

Exit codes: 0 success, 1 usage error, 2 missing file, 3 decode failure,
4 shape/validation failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from .analysis import complexity_report, metrics_from_confusion, confusion_matrix
from .errors import ImageFormatError, WeightFormatError
from .imageio import (
    overlay_masks,
    read_image,
    read_mask,
    resize_bilinear,
    write_mask,
    write_ppm,
)
from .losses import LossParams, ProbMap, focal_loss, grad_check, tversky_loss
from .model import build_model, forward, load_config, random_init
from .quant import quant_report_csv, quantize_raw
from .weights_io import load_weights, read_raw, save_raw

INPUT_H, INPUT_W = 384, 640


# ---------------------------------------------------------------------------
# Subcommand bodies (importable for tests)


def run_analyze(config_path: str, input_shape=(INPUT_H, INPUT_W),
                include_bn: bool = False, json_path: str | None = None,
                csv_path: str | None = None) -> str:
    config = load_config(config_path)
    h, w = input_shape
    report = complexity_report(config, (1, 3, h, w), include_bn_flops=include_bn)
    csv = report.to_csv()
    if csv_path:
        with open(csv_path, "w", encoding="utf-8") as fh:
            fh.write(csv)
    if json_path:
        with open(json_path, "w", encoding="utf-8") as fh:
            fh.write(report.to_json())
    return csv


def run_inference(config_path: str, weights_path: str, image_path: str,
                  out_da: str, out_lane: str, overlay_path: str | None = None) -> dict:
    config = load_config(config_path)
    graph = build_model(config)
    store = load_weights(weights_path, graph)

    image = read_image(image_path)
    if image.shape[2:] != (INPUT_H, INPUT_W):
        image = resize_bilinear(image, INPUT_H, INPUT_W)

    da_logits, lane_logits = forward(graph, store, image)
    # argmax ties break toward the lower class index (background)
    da_mask = np.argmax(da_logits[0], axis=0).astype(np.uint8)
    lane_mask = np.argmax(lane_logits[0], axis=0).astype(np.uint8)

    write_mask(da_mask, out_da)
    write_mask(lane_mask, out_lane)
    if overlay_path:
        write_ppm(overlay_masks(image, da_mask, lane_mask), overlay_path)

    return {
        "drivable_foreground_fraction": float(da_mask.mean()),
        "lane_foreground_fraction": float(lane_mask.mean()),
    }


def run_bench(config_path: str, batches: list[int], runs: int = 500,
              warmup: int = 10, seed: int = 0) -> list[tuple[int, float, float]]:
    """Timed forwards on fixed random input; FPS = batch / mean seconds,
    spread reported as the sample std of per-run FPS."""
    if runs < 2:
        raise ValueError("bench needs at least 2 timed runs")
    if not batches or min(batches) < 1:
        raise ValueError(f"invalid batch list {batches}")
    config = load_config(config_path)
    graph = build_model(config)
    store = random_init(config, seed=seed)
    rng = np.random.default_rng(seed)

    rows = []
    for batch in batches:
        image = rng.uniform(0.0, 1.0, size=(batch, 3, INPUT_H, INPUT_W)).astype(np.float32)
        for _ in range(warmup):
            forward(graph, store, image)
        times = []
        for _ in range(runs):
            t0 = time.perf_counter()
            forward(graph, store, image)
            times.append(time.perf_counter() - t0)
        times = np.asarray(times)
        fps = batch / times
        rows.append((batch, float(batch / times.mean()), float(fps.std(ddof=1))))
    return rows


def bench_csv(rows: list[tuple[int, float, float]]) -> str:
    lines = ["batch,mean_fps,std_fps"]
    lines += [f"{b},{m:.4f},{s:.4f}" for b, m, s in rows]
    return "\n".join(lines) + "\n"


def run_eval(pred_dir: str, gt_dir: str):
    """Aggregate confusion counts over matching PGM mask pairs."""
    for d in (pred_dir, gt_dir):
        if not os.path.isdir(d):
            raise FileNotFoundError(f"directory not found: {d}")
    pred_files = {f for f in os.listdir(pred_dir) if f.endswith(".pgm")}
    gt_files = {f for f in os.listdir(gt_dir) if f.endswith(".pgm")}
    unpaired = sorted(pred_files ^ gt_files)
    if unpaired:
        raise ValueError(f"unpaired mask files: {unpaired}")
    if not pred_files:
        raise ValueError("no .pgm mask pairs found")

    cm = np.zeros((2, 2), dtype=np.int64)
    for name in sorted(pred_files):
        pred = read_mask(os.path.join(pred_dir, name))
        gt = read_mask(os.path.join(gt_dir, name))
        if pred.shape != gt.shape:
            raise ValueError(
                f"size mismatch for {name!r}: prediction {pred.shape} vs truth {gt.shape}")
        cm += confusion_matrix(pred, gt, 2)
    return metrics_from_confusion(cm)


def run_gradcheck(seed: int = 0, cases: int = 50, size: int = 8,
                  tolerance: float = 1e-3) -> dict:
    rng = np.random.default_rng(seed)
    worst = {"focal": 0.0, "tversky": 0.0}
    params = LossParams()
    for _ in range(cases):
        pm = ProbMap(
            probs=rng.uniform(0.05, 0.95, size=(size, size)),
            labels=(rng.uniform(size=(size, size)) < 0.5).astype(np.float64),
        )
        worst["focal"] = max(worst["focal"], grad_check(focal_loss, pm, params))
        worst["tversky"] = max(worst["tversky"], grad_check(tversky_loss, pm, params))
    worst["tolerance"] = tolerance
    worst["ok"] = worst["focal"] < tolerance and worst["tversky"] < tolerance
    return worst


def run_quantize(weights_path: str, out_path: str, report_path: str | None = None) -> str:
    tensors = read_raw(weights_path)
    quantized, rows = quantize_raw(tensors)
    save_raw(quantized, out_path)
    csv = quant_report_csv(rows)
    if report_path:
        with open(report_path, "w", encoding="utf-8") as fh:
            fh.write(csv)
    return csv


# ---------------------------------------------------------------------------
# Argument parsing


class _Parser(argparse.ArgumentParser):
    # usage problems exit 1, not argparse's default 2
    def error(self, message):
        self.exit(1, f"{self.prog}: error: {message}\n")


def _shape(value: str) -> tuple[int, int]:
    try:
        h, w = value.lower().split("x")
        return int(h), int(w)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected HxW, got {value!r}")


def _batches(value: str) -> list[int]:
    try:
        items = [int(v) for v in value.split(",") if v != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid batch list {value!r}")
    if not items or min(items) < 1:
        raise argparse.ArgumentTypeError(f"invalid batch list {value!r}")
    return items


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="twinmixing",
                     description="TwinMixing inference, analysis and verification tools")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("analyze", help="parameter and FLOP accounting", parents=[],
                       add_help=True)
    p.add_argument("--config", required=True)
    p.add_argument("--input-shape", type=_shape, default=(INPUT_H, INPUT_W),
                   metavar="HxW")
    p.add_argument("--flops-include-bn", action="store_true")
    p.add_argument("--json", dest="json_path")
    p.add_argument("--csv", dest="csv_path")

    p = sub.add_parser("infer", help="segment one image")
    p.add_argument("--config", required=True)
    p.add_argument("--weights", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--out-da", required=True)
    p.add_argument("--out-lane", required=True)
    p.add_argument("--overlay")

    p = sub.add_parser("bench", help="throughput benchmark")
    p.add_argument("--config", required=True)
    p.add_argument("--batch", type=_batches, default=[1, 4, 16])
    p.add_argument("--runs", type=int, default=500)
    p.add_argument("--warmup", type=int, default=10)
    p.add_argument("--out")

    p = sub.add_parser("gradcheck", help="verify analytic loss gradients")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cases", type=int, default=50)

    p = sub.add_parser("quantize", help="simulate INT8 weight quantization")
    p.add_argument("--weights", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--report")

    p = sub.add_parser("eval", help="score predicted masks against ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--out")

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    if args.command is None:
        parser.print_usage(sys.stderr)
        return 1

    try:
        if args.command == "analyze":
            sys.stdout.write(run_analyze(args.config, args.input_shape,
                                         args.flops_include_bn, args.json_path,
                                         args.csv_path))
        elif args.command == "infer":
            fractions = run_inference(args.config, args.weights, args.input,
                                      args.out_da, args.out_lane, args.overlay)
            for key in ("drivable_foreground_fraction", "lane_foreground_fraction"):
                sys.stdout.write(f"{key}={fractions[key]:.6f}\n")
        elif args.command == "bench":
            rows = run_bench(args.config, args.batch, args.runs, args.warmup)
            csv = bench_csv(rows)
            sys.stdout.write(csv)
            if args.out:
                with open(args.out, "w", encoding="utf-8") as fh:
                    fh.write(csv)
        elif args.command == "gradcheck":
            result = run_gradcheck(args.seed, args.cases)
            sys.stdout.write(
                f"focal max_rel_error={result['focal']:.3e}\n"
                f"tversky max_rel_error={result['tversky']:.3e}\n"
                f"tolerance={result['tolerance']:.1e}\n")
            if not result["ok"]:
                sys.stderr.write("gradient check failed\n")
                return 4
        elif args.command == "quantize":
            csv = run_quantize(args.weights, args.out, args.report)
            sys.stdout.write(csv)
        elif args.command == "eval":
            report = run_eval(args.pred, args.gt)
            blob = report.to_json()
            sys.stdout.write(blob)
            if args.out:
                with open(args.out, "w", encoding="utf-8") as fh:
                    fh.write(blob)
    except FileNotFoundError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2
    except (WeightFormatError, ImageFormatError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 3
    except ValueError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
