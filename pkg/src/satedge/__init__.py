"""Edge detection for satellite imagery: pre-processing, Canny, and SSIM scoring."""
from satedge.canny import CannyParams, canny_detect, noise_estimate
from satedge.evaluation import (PolygonAnnotation, ScorePair, SsimParams, evaluate_corpus, fp_score,
                                matching_map, rasterize_ground_truth, ssim_map, tp_score)
from satedge.filters import (ConditionalTriggerParams, DiffusionParams, anisotropic_diffusion,
                             conditional_contrast_normalization, conditional_gaussian_blur,
                             fuzzy_histogram_hyperbolization, gaussian_blur, median_blur, white_balance)
from satedge.pipeline import (PipelineConfig, PipelineTrace, run_ablation, run_order_study,
                              run_pipeline)
from satedge.raster import border_extend, histogram, to_grayscale

__version__ = "0.1.0"
