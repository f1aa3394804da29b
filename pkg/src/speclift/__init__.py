"""speclift: specular-free video recovery.

Two stages: adaptive per-frame detection of specular regions, then
restoration of the damaged pixels from low-rank temporal priors aligned
by robust B-spline registration and filled by shift-map patch search.
"""

from .detect import DetectionStats, color_dispersion, detect_specular_mask, dilate_mask, optimal_beta
from .errors import (
    ConfigError,
    CoverageError,
    DegenerateInputError,
    DimensionMismatchError,
    MaskFormatError,
    RegistrationError,
    SequenceOrderError,
    SpecliftError,
)
from .frameio import PipelineConfig, SequenceSource, load_sequence, parse_config
from .lowrank import build_casorati, lowrank_frames, select_rank, truncated_svd
from .metrics import accuracy, dice, error_rate, masked_psnr, precision
from .model import Frame, ScalarField, Sequence, SpecularMask, gradient_magnitude, mean_intensity
from .pipeline import restore_frame, run_restore, timing_compare
from .recovery import build_search_space, fill_damage, patch_distance, solve_shift_map
from .registration import energy, lm_register, tukey_psi, tukey_rho
from .synth import SynthConfig, generate_sequence, preset_config

__version__ = "0.1.0"
