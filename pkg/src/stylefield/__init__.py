"""Zero-shot style transfer on VM-factored feature-grid radiance fields."""

from .decoder import DecoderParams, decode, fit_decoder
from .errors import (
    BadMagicError,
    BadVersionError,
    ConfigError,
    ContractError,
    CorruptValueError,
    DimensionMismatchError,
    DivergenceError,
    DomainError,
    FormatError,
    NonFiniteInputError,
    OutOfDomainError,
    ResourceError,
    ShapeError,
    StyleFieldError,
    TruncatedError,
)
from .io_formats import (
    Checkpoint,
    load_checkpoint,
    load_tensor,
    read_config,
    read_ppm,
    save_checkpoint,
    save_tensor,
    write_ppm,
)
from .linalg import jacobi_eigh, psd_sqrt
from .scene_synth import Primitive, SceneOracle, reference_render, sphere_scene
from .sict import SICT, AttentionParams, VolumeAdaptiveIN, apply_sict, calibrate, channel_attention, normalize
from .style_transform import (
    DstParams,
    StyleFeatures,
    StyleStats,
    apply_dst,
    apply_pointwise_style,
    composite_styles,
    compute_style_stats,
    extract_style_features,
    interpolate_styles,
)
from .tensor_grid import (
    GridGeometry,
    VMDensityField,
    VMFeatureField,
    reconstruct_dense,
    sample_density,
    sample_feature,
)
from .trainer import Stage1Config, fit_stage1, grid_loss, render_backward, stylization_metrics
from .verify_harness import PropertyReport, check_equivalence, check_sampling_invariance
from .volume_renderer import (
    Camera,
    FeatureMap,
    GridScene,
    SamplingSpec,
    compute_weights,
    orbit_cameras,
    render_feature_map,
    sample_ray,
)

__version__ = "0.1.0"
