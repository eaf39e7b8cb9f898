"""Soft shadow masks: extraction, synthesis, penumbra-constrained refinement
and region-wise evaluation."""

__version__ = "0.1.0"

from .imagecore import gaussian_blur, gradient, load_image, load_map, save_image, save_map, to_luma
from .maskops import (
    PenumbraSet,
    RegionPartition,
    binarize,
    centroid,
    extract_soft_mask,
    penumbra_set,
    perturb_mask,
    ratio_map,
    region_partition,
)
from .shadowmodel import (
    PRESETS,
    SceneSpec,
    coverage_fraction,
    estimate_illumination,
    remove_shadow,
    render_geometric_pair,
    synthesize_shadow,
)
from .losses import (
    LossReport,
    direction_field,
    finite_diff_check,
    mask_loss,
    penumbra_loss,
    penumbra_loss_grad,
    removal_loss,
    total_loss,
)
from .refiner import RefineConfig, RefineTrace, refine_mask
from .metrics import (
    MetricsReport,
    SensitivityReport,
    evaluate_pair,
    mae_lab,
    mae_rgb,
    penumbra_metrics,
    psnr,
    sensitivity_sweep,
    ssim,
)
from .estimators import MaskRefiner, ShadowRemover, SoftMaskExtractor
