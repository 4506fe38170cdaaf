"""Unsupervised sparse dictionary learning with one-hot targets.

A single logistic layer is trained so that, for every mini-batch, its
outputs move towards a target in which each sample activates exactly one
unit and every unit is activated equally often over an epoch.
"""

from ._backend import BACKEND
from .assignment import brute_force_assignment, optimal_assignment
from .errors import (
    BadMagicError,
    ConfigError,
    EPLSError,
    FormatError,
    GuardError,
    NumericalError,
    ShapeError,
    TruncatedFileError,
    UnknownDtypeError,
)
from .fileio import (
    export_bases_image,
    read_labels,
    read_matrix,
    read_model,
    read_stl10,
    write_matrix,
    write_model,
)
from .model import (
    LOGISTIC,
    GradientPair,
    ModelParams,
    forward,
    gradient,
    init_params,
    l2_loss,
    limit_unit_norm,
)
from .optimizer import Adaptive, FixedRate, estimate_curvature, estimate_rates_and_step, optimizer_init
from .pipeline import (
    EncoderKind,
    ImageSet,
    PatchConfig,
    encode_image,
    encode_images,
    extract_random_patches,
    make_synthetic,
    match_bases,
    normalize_patch_rows,
    pool_quadrants,
    ridge_predict,
    ridge_train,
)
from .target import InhibitorMode, InhibitorState, generate_target, new_inhibitor, remap_target
from .trainer import StopReason, TrainConfig, TrainReport, stop_check, train

__version__ = "0.1.0"
