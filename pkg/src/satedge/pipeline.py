"""Stage orchestration, configuration files, and corpus-level experiments.

Stage identifiers::

    WB   white balance (colour, always first when present)
    AD   anisotropic diffusion
    CN   conditional contrast normalization
    FHH  fuzzy histogram hyperbolization
    MB   3x3 median blur
    GB   3x3 Gaussian blur
    CB   conditional secondary Gaussian blur

Grayscale conversion happens right after WB (or first, when WB is not run);
Canny always runs last.
"""
from __future__ import annotations

import dataclasses
import time
import warnings
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np
import yaml

from satedge import filters
from satedge.canny import CannyParams, canny_detect
from satedge.errors import ConfigError, StageError, UndefinedScoreError
from satedge.evaluation import (ScorePair, SsimParams, mean_scores, rasterize_ground_truth,
                                read_annotations, score_image)
from satedge.filters import ConditionalTriggerParams, DiffusionParams
from satedge.raster import check_color, check_gray, to_grayscale

STAGES = ("WB", "AD", "CN", "FHH", "MB", "GB", "CB")
CONDITIONAL_STAGES = ("CN", "CB")
DEFAULT_ORDER = STAGES

# filter orders studied alongside the default one
REFERENCE_ORDERS = (
    ("WB", "AD", "CN", "FHH", "MB", "GB", "CB"),
    ("WB", "AD", "MB", "GB", "CB", "FHH", "CN"),
    ("WB", "CN", "FHH", "GB", "CB", "MB", "AD"),
    ("WB", "FHH", "AD", "MB", "GB", "CB", "CN"),
    ("WB", "MB", "GB", "CB", "CN", "FHH", "AD"),
)


def parse_order(text: str) -> tuple[str, ...]:
    """``"WB-AD-CN"`` or ``"WB,AD,CN"`` -> ``("WB", "AD", "CN")``."""
    parts = [p.strip().upper() for p in text.replace(",", "-").split("-") if p.strip()]
    return tuple(parts)


def format_order(order: Iterable[str]) -> str:
    return "-".join(order)


@dataclass(frozen=True)
class PipelineConfig:
    stage_order: tuple[str, ...] = DEFAULT_ORDER
    disabled_stages: frozenset[str] = frozenset()
    force_conditionals: bool = False
    forced_stages: frozenset[str] = frozenset()
    diffusion: DiffusionParams = field(default_factory=DiffusionParams)
    triggers: ConditionalTriggerParams = field(default_factory=ConditionalTriggerParams)
    canny: CannyParams = field(default_factory=CannyParams)
    fhh_L: int = 256
    gaussian_sigma: float = filters.GAUSSIAN_SIGMA

    def __post_init__(self):
        object.__setattr__(self, "stage_order", tuple(s.upper() for s in self.stage_order))
        object.__setattr__(self, "disabled_stages", frozenset(s.upper() for s in self.disabled_stages))
        object.__setattr__(self, "forced_stages", frozenset(s.upper() for s in self.forced_stages))
        validate_order(self.stage_order)
        for name, group in (("disabled", self.disabled_stages), ("forced", self.forced_stages)):
            unknown = group - set(STAGES)
            if unknown:
                raise ConfigError(f"unknown {name} stage(s): {sorted(unknown)}")
        if not set(self.forced_stages) <= set(CONDITIONAL_STAGES):
            raise ConfigError("only CN and CB can be forced on")
        if self.fhh_L < 2:
            raise ConfigError("fhh_L must be at least 2")
        if self.gaussian_sigma <= 0:
            raise ConfigError("gaussian_sigma must be positive")

    @property
    def enabled_stages(self) -> tuple[str, ...]:
        return tuple(s for s in self.stage_order if s not in self.disabled_stages)

    def is_forced(self, stage: str) -> bool:
        return self.force_conditionals or stage in self.forced_stages

    def without(self, *stages: str) -> PipelineConfig:
        return dataclasses.replace(self, disabled_stages=self.disabled_stages | {s.upper() for s in stages})

    def with_order(self, order: Sequence[str]) -> PipelineConfig:
        return dataclasses.replace(self, stage_order=tuple(order))

    def forcing(self, *stages: str) -> PipelineConfig:
        return dataclasses.replace(self, forced_stages=self.forced_stages | {s.upper() for s in stages})

    def raw(self) -> PipelineConfig:
        """The same detector with every pre-processing stage switched off."""
        return self.without(*self.stage_order)


def validate_order(order: Sequence[str]) -> None:
    unknown = [s for s in order if s not in STAGES]
    if unknown:
        raise ConfigError(f"unknown stage(s) {unknown}; expected some of {', '.join(STAGES)}")
    if len(set(order)) != len(order):
        raise ConfigError(f"duplicate stages in order {format_order(order)}")
    if "WB" in order and order[0] != "WB":
        raise ConfigError("WB must be the first stage when present")


@dataclass
class StageRecord:
    stage: str
    applied: bool
    ms: float
    checksum_in: str
    checksum_out: str
    diagnostics: dict = field(default_factory=dict)


@dataclass
class PipelineTrace:
    records: list[StageRecord] = field(default_factory=list)
    total_ms: float = 0.0

    def flags(self) -> dict[str, bool]:
        return {r.stage: r.applied for r in self.records}

    def timings(self) -> dict[str, float]:
        return {r.stage: r.ms for r in self.records}

    def record(self, stage: str) -> StageRecord | None:
        for r in self.records:
            if r.stage == stage:
                return r
        return None


def checksum(arr: np.ndarray) -> str:
    return f"{zlib.crc32(np.ascontiguousarray(arr).view(np.uint8)):08x}"


def _run_stage(stage: str, img: np.ndarray, cfg: PipelineConfig) -> tuple[np.ndarray, bool, dict]:
    if stage == "AD":
        return filters.anisotropic_diffusion(img, cfg.diffusion), True, {}
    if stage == "CN":
        out, outcome = filters.conditional_contrast_normalization(img, cfg.triggers, force=cfg.is_forced("CN"))
        return out, outcome.applied, outcome.diagnostics
    if stage == "FHH":
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            out = filters.fuzzy_histogram_hyperbolization(img, cfg.fhh_L)
        return out, not caught, {"degenerate": True} if caught else {}
    if stage == "MB":
        return filters.median_blur(img), True, {}
    if stage == "GB":
        return filters.gaussian_blur(img, cfg.gaussian_sigma), True, {}
    if stage == "CB":
        out, outcome = filters.conditional_gaussian_blur(img, cfg.triggers, force=cfg.is_forced("CB"),
                                                         sigma=cfg.gaussian_sigma)
        return out, outcome.applied, outcome.diagnostics
    raise ConfigError(f"unknown stage {stage}")


def run_pipeline(img: np.ndarray, cfg: PipelineConfig | None = None) -> tuple[np.ndarray, PipelineTrace]:
    """Run the enabled stages in order, then Canny.

    ``img`` is a colour raster; a 2-D raster is accepted and treated as
    gray replicated into three channels.
    """
    cfg = cfg or PipelineConfig()
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        img = np.repeat(check_gray(img)[:, :, None], 3, axis=2)
    img = check_color(img)

    trace = PipelineTrace()
    t_start = time.perf_counter()
    stages = cfg.enabled_stages

    current = img
    if stages and stages[0] == "WB":
        t0 = time.perf_counter()
        try:
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always")
                balanced = filters.white_balance(img)
            current = to_grayscale(balanced)
        except Exception as exc:
            raise StageError("WB", exc) from exc
        trace.records.append(StageRecord("WB", not caught, (time.perf_counter() - t0) * 1e3,
                                         checksum(img), checksum(current),
                                         {"degenerate_channel": True} if caught else {}))
        stages = stages[1:]
    else:
        current = to_grayscale(img)

    for stage in stages:
        t0 = time.perf_counter()
        before = current
        try:
            current, applied, diag = _run_stage(stage, current, cfg)
        except Exception as exc:
            raise StageError(stage, exc) from exc
        trace.records.append(StageRecord(stage, applied, (time.perf_counter() - t0) * 1e3,
                                         checksum(before), checksum(current), diag))

    t0 = time.perf_counter()
    try:
        edges = canny_detect(current, cfg.canny)
    except Exception as exc:
        raise StageError("Canny", exc) from exc
    trace.records.append(StageRecord("Canny", True, (time.perf_counter() - t0) * 1e3,
                                     checksum(current), checksum(edges)))
    trace.total_ms = (time.perf_counter() - t_start) * 1e3
    return edges, trace


# ---------------------------------------------------------------------------
# corpora


@dataclass(frozen=True)
class Sample:
    """One annotated image, either on disk or already in memory."""

    name: str
    image_path: Path | None = None
    annotation_path: Path | None = None
    image: np.ndarray | None = field(default=None, repr=False, compare=False)
    truth: np.ndarray | None = field(default=None, repr=False, compare=False)
    include_difficult: bool = True

    def load(self) -> tuple[np.ndarray, np.ndarray | None]:
        from satedge.io import read_image

        image = self.image if self.image is not None else read_image(self.image_path)
        truth = self.truth
        if truth is None and self.annotation_path is not None:
            h, w = image.shape[:2]
            truth = rasterize_ground_truth(read_annotations(self.annotation_path), w, h,
                                           include_difficult=self.include_difficult)
        return image, truth


@dataclass
class ImageResult:
    name: str
    tp: float | None = None
    fp: float | None = None
    flags: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    total_ms: float = 0.0
    error: str = ""


def evaluate_sample(sample: Sample, cfg: PipelineConfig, ssim: SsimParams | None = None) -> ImageResult:
    result = ImageResult(sample.name)
    try:
        image, truth = sample.load()
        edges, trace = run_pipeline(image, cfg)
    except Exception as exc:  # reported per image, the batch carries on
        result.error = f"{type(exc).__name__}: {exc}"
        return result
    result.flags, result.timings, result.total_ms = trace.flags(), trace.timings(), trace.total_ms
    if truth is None:
        result.error = "skipped: no annotations"
        return result
    try:
        scores = score_image(edges, truth, ssim)
    except UndefinedScoreError:
        result.error = "skipped: empty ground truth"
        return result
    result.tp, result.fp = scores.tp, scores.fp
    return result


def _evaluate_job(args):
    return evaluate_sample(*args)


def evaluate_config(corpus: Sequence[Sample], cfg: PipelineConfig, ssim: SsimParams | None = None,
                    workers: int = 1) -> list[ImageResult]:
    """Per-image results for one configuration, ordered by sample name."""
    corpus = sorted(corpus, key=lambda s: s.name)
    jobs = [(s, cfg, ssim) for s in corpus]
    if workers <= 1 or len(jobs) <= 1:
        return [_evaluate_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_evaluate_job, jobs, chunksize=max(1, len(jobs) // (4 * workers))))


def summarize(results: Sequence[ImageResult]) -> ScorePair:
    return mean_scores([ScorePair(r.tp, r.fp) for r in results if r.tp is not None])


def score_config(corpus: Sequence[Sample], cfg: PipelineConfig, ssim: SsimParams | None = None,
                 workers: int = 1) -> ScorePair:
    return summarize(evaluate_config(corpus, cfg, ssim, workers))


def run_ablation(corpus: Sequence[Sample], base_cfg: PipelineConfig, stage: str,
                 ssim: SsimParams | None = None, workers: int = 1) -> ScorePair:
    """Corpus scores with one stage removed from ``base_cfg``."""
    stage = stage.upper()
    if stage not in base_cfg.stage_order:
        raise ConfigError(f"stage {stage} is not part of {format_order(base_cfg.stage_order)}")
    return score_config(corpus, base_cfg.without(stage), ssim, workers)


@dataclass(frozen=True)
class OrderRow:
    order: tuple[str, ...]
    tp: float
    fp: float

    @property
    def label(self) -> str:
        return format_order(self.order)


def run_order_study(corpus: Sequence[Sample], orders: Sequence[Sequence[str]],
                    base_cfg: PipelineConfig | None = None, ssim: SsimParams | None = None,
                    workers: int = 1) -> list[OrderRow]:
    base_cfg = base_cfg or PipelineConfig()
    for order in orders:
        validate_order(tuple(order))
        if not order or order[0] != "WB":
            raise ConfigError(f"order {format_order(order)} must start with WB")
    rows = []
    for order in orders:
        s = score_config(corpus, base_cfg.with_order(order), ssim, workers)
        rows.append(OrderRow(tuple(order), s.tp, s.fp))
    return rows


# ---------------------------------------------------------------------------
# config files


def config_to_dict(cfg: PipelineConfig, ssim: SsimParams | None = None) -> dict[str, Any]:
    out = {
        "pipeline": {
            "stage_order": list(cfg.stage_order),
            "disabled_stages": sorted(cfg.disabled_stages),
            "force_conditionals": cfg.force_conditionals,
            "forced_stages": sorted(cfg.forced_stages),
            "fhh_L": cfg.fhh_L,
            "gaussian_sigma": cfg.gaussian_sigma,
        },
        "diffusion": dataclasses.asdict(cfg.diffusion),
        "triggers": dataclasses.asdict(cfg.triggers),
        "canny": dataclasses.asdict(cfg.canny),
    }
    out["evaluation"] = dataclasses.asdict(ssim or SsimParams())
    return out


def _section(data: dict, name: str, cls):
    raw = data.get(name) or {}
    if not isinstance(raw, dict):
        raise ConfigError(f"section [{name}] must be a mapping")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown key(s) in [{name}]: {sorted(unknown)}")
    try:
        return cls(**raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{name}]: {exc}") from exc


def config_from_dict(data: dict[str, Any]) -> tuple[PipelineConfig, SsimParams]:
    data = data or {}
    unknown = set(data) - {"pipeline", "diffusion", "triggers", "canny", "evaluation"}
    if unknown:
        raise ConfigError(f"unknown section(s): {sorted(unknown)}")
    pipe = dict(data.get("pipeline") or {})
    order = pipe.pop("stage_order", list(DEFAULT_ORDER))
    if isinstance(order, str):
        order = parse_order(order)
    known = {"disabled_stages", "force_conditionals", "forced_stages", "fhh_L", "gaussian_sigma"}
    if set(pipe) - known:
        raise ConfigError(f"unknown key(s) in [pipeline]: {sorted(set(pipe) - known)}")
    cfg = PipelineConfig(
        stage_order=tuple(order),
        disabled_stages=frozenset(pipe.get("disabled_stages", ())),
        force_conditionals=bool(pipe.get("force_conditionals", False)),
        forced_stages=frozenset(pipe.get("forced_stages", ())),
        fhh_L=int(pipe.get("fhh_L", 256)),
        gaussian_sigma=float(pipe.get("gaussian_sigma", filters.GAUSSIAN_SIGMA)),
        diffusion=_section(data, "diffusion", DiffusionParams),
        triggers=_section(data, "triggers", ConditionalTriggerParams),
        canny=_section(data, "canny", CannyParams),
    )
    return cfg, _section(data, "evaluation", SsimParams)


def load_config(path: str | Path) -> tuple[PipelineConfig, SsimParams]:
    with open(path, encoding="utf-8") as fh:
        try:
            data = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    return config_from_dict(data)


def save_config(path: str | Path, cfg: PipelineConfig, ssim: SsimParams | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(config_to_dict(cfg, ssim), fh, sort_keys=False)
