"""Few-shot layout segmentation for handwritten document pages.

The package covers the full pipeline at desk scale: patch tiling and seeded
random-crop sampling, a small trainable pixel-classifier backbone with
class-weighted cross-entropy, Sauvola-mask segmentation refinement, the
standard per-class and frequency-weighted evaluation metrics, and a synthetic
manuscript generator so everything is testable without external data.
"""

from .binarize import (
    IntegralPair,
    SauvolaParams,
    integral_tables,
    local_mean_std,
    niblack_mask,
    niblack_threshold,
    sauvola_mask,
    sauvola_threshold,
    sauvola_threshold_field,
)
from .errors import (
    ConfigError,
    CropTooLarge,
    DimensionMismatch,
    FolioError,
    ModelFileError,
    NotDivisible,
    NumericError,
    UnknownColor,
    UnsupportedImage,
    ZeroFrequency,
)
from .imagecore import (
    CLASS_NAMES,
    NUM_CLASSES,
    ClassPalette,
    decode_labels,
    encode_labels,
    read_png,
    resize,
    to_grayscale,
    write_png,
)
from .metrics import (
    MetricQuad,
    MetricRow,
    class_metrics,
    confusion,
    mean_rows,
    weighted_metrics,
)
from .model import (
    AdamState,
    BackboneParams,
    TrainConfig,
    adam_init,
    adam_step,
    class_frequencies,
    class_weights,
    forward,
    init_params,
    load_params,
    save_params,
    should_stop,
    train,
    weighted_ce_loss,
)
from .pipeline import (
    PipelineConfig,
    load_config,
    parse_config,
    predict_page,
    render_comparison,
    run_ablation,
    run_pipeline,
    save_config,
    serialize_config,
)
from .refine import RefinementReport, refine
from .sampler import CropSpec, PatchSet, epoch_dataset, extract, random_crops, tile
from .synthcorpus import PageRecipe, generate_corpus, generate_page, recipe_variant

__version__ = "0.1.0"
