"""Batch driver: detection, evaluation, ablation, order study and timing.

Exit codes: 0 success, 1 some images failed, 2 invalid invocation.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import logging
import os
import statistics
import sys
import time
from pathlib import Path
from typing import Sequence

import numpy as np

from satedge import plotting
from satedge.errors import ConfigError
from satedge.evaluation import SsimParams
from satedge.io import edge_overlay, list_images, read_image, write_edges, write_image
from satedge.pipeline import (CONDITIONAL_STAGES, REFERENCE_ORDERS, STAGES, ImageResult,
                              PipelineConfig, Sample, evaluate_config, format_order,
                              load_config, parse_order, run_pipeline, summarize, validate_order)

log = logging.getLogger("satedge")

MODES = ("detect", "evaluate", "ablate", "order-study", "bench")
EXIT_OK, EXIT_PARTIAL, EXIT_USAGE = 0, 1, 2

# stages removed one at a time in the ablation study
ABLATED_STAGES = ("CB", "CN", "FHH", "AD")


class UsageError(Exception):
    pass


@dataclasses.dataclass
class RunManifest:
    input_dir: Path
    output_dir: Path
    mode: str = "detect"
    annotation_dir: Path | None = None
    config_path: Path | None = None
    workers: int = 1
    include_difficult: bool = True

    def validate(self) -> None:
        if self.mode not in MODES:
            raise UsageError(f"unknown mode {self.mode!r}")
        if not self.input_dir.is_dir():
            raise UsageError(f"input directory {self.input_dir} does not exist")
        if self.mode in ("evaluate", "ablate", "order-study"):
            if self.annotation_dir is None:
                raise UsageError(f"--mode {self.mode} needs --annotations")
            if not self.annotation_dir.is_dir():
                raise UsageError(f"annotation directory {self.annotation_dir} does not exist")
        if self.workers < 1:
            raise UsageError("--workers must be at least 1")


def build_corpus(manifest: RunManifest) -> list[Sample]:
    images = list_images(manifest.input_dir)
    if not images:
        raise UsageError(f"no inputs in {manifest.input_dir}")
    corpus = []
    for path in images:
        ann = None
        if manifest.annotation_dir is not None:
            candidate = manifest.annotation_dir / f"{path.stem}.txt"
            ann = candidate if candidate.is_file() else None
        corpus.append(Sample(str(path), image_path=path, annotation_path=ann,
                             include_difficult=manifest.include_difficult))
    return corpus


def _stage_columns(stages: Sequence[str]) -> list[str]:
    return [f"{s}_applied" for s in stages] + [f"{s}_ms" for s in stages]


def _result_row(result: ImageResult, stages: Sequence[str]) -> dict:
    row = {"image_path": result.name,
           "tp": "" if result.tp is None else f"{result.tp:.6f}",
           "fp": "" if result.fp is None else f"{result.fp:.6f}"}
    for s in stages:
        row[f"{s}_applied"] = "" if s not in result.flags else int(result.flags[s])
        row[f"{s}_ms"] = "" if s not in result.timings else f"{result.timings[s]:.3f}"
    row["total_ms"] = f"{result.total_ms:.3f}" if not result.error else ""
    row["error"] = result.error
    return row


def write_csv(path: Path, rows: Sequence[dict], fieldnames: Sequence[str]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(fieldnames))
        writer.writeheader()
        writer.writerows(rows)
    return path


def _trace_stages(cfg: PipelineConfig) -> list[str]:
    return list(cfg.enabled_stages) + ["Canny"]


# ---------------------------------------------------------------------------
# detect


def _detect_one(args):
    path, out_dir, cfg = args
    result = ImageResult(str(path))
    try:
        image = read_image(path)
        edges, trace = run_pipeline(image, cfg)
        write_edges(out_dir / "edges" / f"{path.stem}_edges.png", edges)
        write_image(out_dir / "overlays" / f"{path.stem}_overlay.png", edge_overlay(image, edges))
    except Exception as exc:
        result.error = f"{type(exc).__name__}: {exc}"
        return result
    result.flags, result.timings, result.total_ms = trace.flags(), trace.timings(), trace.total_ms
    return result


def _map(func, jobs, workers):
    if workers <= 1 or len(jobs) <= 1:
        return [func(j) for j in jobs]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, jobs))


def cmd_detect(manifest: RunManifest, cfg: PipelineConfig) -> int:
    images = list_images(manifest.input_dir)
    if not images:
        raise UsageError(f"no inputs in {manifest.input_dir}")
    out = manifest.output_dir
    (out / "edges").mkdir(parents=True, exist_ok=True)
    (out / "overlays").mkdir(parents=True, exist_ok=True)
    results = _map(_detect_one, [(p, out, cfg) for p in images], manifest.workers)
    stages = _trace_stages(cfg)
    rows = []
    for r in results:
        row = _result_row(r, stages)
        del row["tp"], row["fp"]
        rows.append(row)
        if r.error:
            log.warning("%s: %s", r.name, r.error)
    write_csv(out / "trace.csv", rows, ["image_path"] + _stage_columns(stages) + ["total_ms", "error"])
    failed = sum(bool(r.error) for r in results)
    log.info("detect: %d images, %d failed", len(results), failed)
    return EXIT_PARTIAL if failed else EXIT_OK


# ---------------------------------------------------------------------------
# evaluate / ablate / order-study


def _scored(results: Sequence[ImageResult]) -> int:
    return sum(r.tp is not None for r in results)


def _summary_row(label: str, results: Sequence[ImageResult]) -> dict:
    n = _scored(results)
    if n == 0:
        return {"variant": label, "tp": "", "fp": "", "images": 0}
    s = summarize(results)
    return {"variant": label, "tp": f"{s.tp:.6f}", "fp": f"{s.fp:.6f}", "images": n}


def _run_variants(corpus, variants: dict[str, PipelineConfig], ssim, workers):
    return {label: evaluate_config(corpus, cfg, ssim, workers) for label, cfg in variants.items()}


def _write_variant_reports(out: Path, prefix: str, outcomes: dict[str, list[ImageResult]]):
    stages = list(STAGES) + ["Canny"]
    rows = []
    for label, results in outcomes.items():
        for r in results:
            rows.append({"variant": label, **_result_row(r, stages)})
    rows.sort(key=lambda row: (row["image_path"], list(outcomes).index(row["variant"])))
    write_csv(out / f"{prefix}_images.csv", rows,
              ["variant", "image_path", "tp", "fp"] + _stage_columns(stages) + ["total_ms", "error"])
    summary = [_summary_row(label, results) for label, results in outcomes.items()]
    write_csv(out / f"{prefix}_summary.csv", summary, ["variant", "tp", "fp", "images"])
    plottable = [row for row in summary if row["images"]]
    if plottable:
        plotting.plot_score_bars([row["variant"] for row in plottable],
                                 [float(row["tp"]) for row in plottable],
                                 [float(row["fp"]) for row in plottable],
                                 out / f"{prefix}.png")
    return summary


def _exit_for(outcomes: dict[str, list[ImageResult]]) -> int:
    any_results = next(iter(outcomes.values()))
    failed = [r for r in any_results if r.error and not r.error.startswith("skipped")]
    for r in failed:
        log.warning("%s: %s", r.name, r.error)
    return EXIT_PARTIAL if failed else EXIT_OK


def cmd_compare(manifest: RunManifest, cfg: PipelineConfig, ssim: SsimParams | None = None) -> int:
    """Raw Canny against the full pipeline on an annotated corpus."""
    corpus = build_corpus(manifest)
    outcomes = _run_variants(corpus, {"SPEED": cfg, "raw-canny": cfg.raw()}, ssim, manifest.workers)
    summary = _write_variant_reports(manifest.output_dir, "compare", outcomes)
    for row in summary:
        log.info("%-10s tp=%s fp=%s (%d images)", row["variant"], row["tp"], row["fp"], row["images"])
    return _exit_for(outcomes)


def ablation_variants(cfg: PipelineConfig) -> dict[str, PipelineConfig]:
    variants = {"full": cfg}
    for stage in ABLATED_STAGES:
        if stage in cfg.enabled_stages:
            variants[f"no-{stage}"] = cfg.without(stage)
    for stage in CONDITIONAL_STAGES:
        if stage in cfg.enabled_stages:
            variants[f"{stage}-always-on"] = cfg.forcing(stage)
    return variants


def cmd_ablate(manifest: RunManifest, cfg: PipelineConfig, ssim: SsimParams | None = None) -> int:
    corpus = build_corpus(manifest)
    variants = ablation_variants(cfg)
    outcomes = _run_variants(corpus, variants, ssim, manifest.workers)
    summary = {row["variant"]: row for row in _write_variant_reports(manifest.output_dir, "ablation", outcomes)}
    rows = []
    for stage in CONDITIONAL_STAGES:
        never, always = summary.get(f"no-{stage}"), summary.get(f"{stage}-always-on")
        if never and always:
            rows.append({"filter": stage, "tp_no_filter": never["tp"], "fp_no_filter": never["fp"],
                         "tp_always_on": always["tp"], "fp_always_on": always["fp"]})
    write_csv(manifest.output_dir / "conditional_summary.csv", rows,
              ["filter", "tp_no_filter", "fp_no_filter", "tp_always_on", "fp_always_on"])
    return _exit_for(outcomes)


def read_orders(path: Path) -> list[tuple[str, ...]]:
    orders = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            orders.append(parse_order(line))
    return orders


def cmd_order_study(manifest: RunManifest, cfg: PipelineConfig, orders: Sequence[Sequence[str]],
                    ssim: SsimParams | None = None) -> int:
    for order in orders:
        try:
            validate_order(order)
        except ConfigError as exc:
            raise UsageError(str(exc)) from exc
        if not order or order[0] != "WB":
            raise UsageError(f"order {format_order(order)} must start with WB")
    corpus = build_corpus(manifest)
    variants = {format_order(o): cfg.with_order(o) for o in orders}
    outcomes = _run_variants(corpus, variants, ssim, manifest.workers)
    summary = _write_variant_reports(manifest.output_dir, "orders", outcomes)
    for row in summary:
        log.info("%-24s tp=%s fp=%s", row["variant"], row["tp"], row["fp"])
    return _exit_for(outcomes)


# ---------------------------------------------------------------------------
# bench


def resample_nearest(img: np.ndarray, size: int) -> np.ndarray:
    h, w = img.shape[:2]
    rows = np.minimum((np.arange(size) + 0.5) * h / size, h - 1).astype(np.intp)
    cols = np.minimum((np.arange(size) + 0.5) * w / size, w - 1).astype(np.intp)
    return img[rows[:, None], cols[None, :]]


def available_memory() -> int | None:
    try:
        return os.sysconf("SC_AVPHYS_PAGES") * os.sysconf("SC_PAGE_SIZE")
    except (ValueError, OSError, AttributeError):
        return None


# float64 working arrays alive at the peak of the pipeline, generously counted
_BYTES_PER_PIXEL = 8 * 24


def loglog_slope(pixels: Sequence[float], ms: Sequence[float]) -> float:
    return float(np.polyfit(np.log(pixels), np.log(ms), 1)[0])


def run_bench(image: np.ndarray, sizes: Sequence[int], cfg: PipelineConfig, repeats: int = 5,
              memory_budget: int | None = None) -> list[dict]:
    budget = memory_budget if memory_budget is not None else available_memory()
    rows = []
    for size in sizes:
        row = {"size": size, "pixels": size * size, "ms": "", "status": "ok"}
        if budget is not None and size * size * _BYTES_PER_PIXEL > budget:
            row["status"] = "skipped: memory budget"
            rows.append(row)
            continue
        scaled = resample_nearest(image, size)
        times = []
        for _ in range(repeats):
            t0 = time.perf_counter()
            run_pipeline(scaled, cfg)
            times.append((time.perf_counter() - t0) * 1e3)
        row["ms"] = statistics.median(times)
        log.info("bench %dx%d: %.1f ms", size, size, row["ms"])
        rows.append(row)
    return rows


def cmd_bench(manifest: RunManifest, cfg: PipelineConfig, sizes: Sequence[int], repeats: int = 5) -> int:
    images = list_images(manifest.input_dir)
    if not images:
        raise UsageError(f"no inputs in {manifest.input_dir}")
    source = read_image(images[0])
    rows = run_bench(source, sizes, cfg, repeats)
    out = manifest.output_dir
    write_csv(out / "bench.csv", [{**r, "ms": f"{r['ms']:.3f}" if r["ms"] != "" else ""} for r in rows],
              ["size", "pixels", "ms", "status"])
    done = [r for r in rows if r["status"] == "ok"]
    if done:
        px, ms = [r["pixels"] for r in done], [r["ms"] for r in done]
        slope = loglog_slope(px, ms) if len(done) >= 2 else None
        if slope is not None:
            log.info("log-log slope of time vs pixels: %.3f", slope)
        plotting.plot_timing(px, ms, out / "bench.png", slope)
    return EXIT_OK if len(done) == len(rows) else EXIT_PARTIAL


# ---------------------------------------------------------------------------


def _csv_list(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="satedge", description="Satellite edge detection pipeline.")
    p.add_argument("--mode", choices=MODES, default="detect")
    p.add_argument("--input", required=True, type=Path, help="directory of images")
    p.add_argument("--annotations", type=Path, help="directory of DOTA-style label files")
    p.add_argument("--out", required=True, type=Path, help="output directory")
    p.add_argument("--config", type=Path, help="YAML pipeline configuration")
    p.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    p.add_argument("--force-conditionals", action="store_true", help="always apply CN and CB")
    p.add_argument("--disable", type=_csv_list, default=[], help="comma-separated stages to skip")
    p.add_argument("--orders", type=Path, help="file of stage orders, one per line (order-study)")
    p.add_argument("--sizes", type=lambda s: [int(v) for v in _csv_list(s)],
                   default=[512, 1024, 2048], help="square sizes for bench mode")
    p.add_argument("--repeats", type=int, default=5, help="timed runs per size (median reported)")
    p.add_argument("--exclude-difficult", action="store_true", help="drop annotations flagged difficult")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        if args.config is not None:
            cfg, ssim = load_config(args.config)
        else:
            cfg, ssim = PipelineConfig(), SsimParams()
        if args.disable:
            cfg = cfg.without(*args.disable)
        if args.force_conditionals:
            cfg = dataclasses.replace(cfg, force_conditionals=True)
        manifest = RunManifest(args.input, args.out, args.mode, args.annotations, args.config,
                               args.workers, include_difficult=not args.exclude_difficult)
        manifest.validate()
        manifest.output_dir.mkdir(parents=True, exist_ok=True)
        if args.mode == "detect":
            return cmd_detect(manifest, cfg)
        if args.mode == "bench":
            if args.repeats < 1 or not args.sizes or min(args.sizes) < 3:
                raise UsageError("bench needs --repeats >= 1 and sizes >= 3")
            return cmd_bench(manifest, cfg, args.sizes, args.repeats)
        if args.mode == "evaluate":
            return cmd_compare(manifest, cfg, ssim)
        if args.mode == "ablate":
            return cmd_ablate(manifest, cfg, ssim)
        orders = read_orders(args.orders) if args.orders else list(REFERENCE_ORDERS)
        return cmd_order_study(manifest, cfg, orders, ssim)
    except (UsageError, ConfigError, FileNotFoundError) as exc:
        log.error("%s", exc)
        return EXIT_USAGE


if __name__ == "__main__":
    raise SystemExit(main())
