"""anomforge: synthetic brain-pathology volumes and anomaly-map evaluation.

The package is organized as small, independently testable layers:

* :mod:`anomforge.volume`, :mod:`anomforge.nifti` - grid types and file I/O;
* :mod:`anomforge.perlin`, :mod:`anomforge.fluid` - noise potentials and the
  mask-confined advection-diffusion transport of lesion probability fields;
* :mod:`anomforge.pathology` - corrupting healthy volumes with those fields;
* :mod:`anomforge.diffusion` - DDPM forward/reverse math with injectable
  denoisers (no neural networks here, by design);
* :mod:`anomforge.detect`, :mod:`anomforge.metrics` - residual anomaly maps
  and voxel-level detection metrics;
* :mod:`anomforge.phantom` - deterministic test heads;
* :mod:`anomforge.config`, :mod:`anomforge.pipeline`, :mod:`anomforge.cli` -
  the config-driven batch surface.
"""

__version__ = "0.1.0"

from .config import ConfigError, default_config, load_config, validate_config
from .detect import (
    AnomalyMap,
    ConstantSimilarity,
    ShiftSearchParams,
    SimilarityFunctional,
    SsimDissimilarity,
    anomaly_map,
    default_similarity,
    shift_align,
)
from .diffusion import (
    ConditionEncoder,
    ConditionVector,
    Denoiser,
    ElboTerms,
    GaussianOracleDenoiser,
    IdentityCodec,
    IdentityEpsDenoiser,
    LatentCodec,
    LatentTensor,
    NoiseSchedule,
    PooledConditionEncoder,
    ZeroDenoiser,
    elbo_terms,
    forward_sample,
    gaussian_kl,
    gaussian_oracle_denoiser,
    linear_schedule,
    make_denoiser,
    partial_reconstruct,
    pooled_condition_encoder,
    posterior_mean_var,
    posterior_variance,
    reverse_step,
    reverse_step_mean,
    simple_loss,
)
from .fluid import (
    DiffusivityField,
    IntegrationParams,
    PotentialSet,
    StepStats,
    VelocityField,
    cfl_dt,
    curl_velocity,
    diffusivity,
    divergence,
    randomize,
    random_potentials,
    step,
)
from .metrics import (
    DegenerateGroundTruthError,
    ExcludedSample,
    MetricsReport,
    SampleScore,
    aggregate,
    average_precision,
    binarize_gt,
    fpr_at_max_dice,
    max_dice,
    pixel_auc,
    score_sample,
)
from .nifti import NiftiFormatError, read_nifti, write_nifti
from .pathology import (
    DeltaParams,
    LesionSeed,
    WhiteMatterStats,
    encode_anomaly,
    estimate_mu_w,
    flip_decision,
    make_pseudo_pathology,
    sample_delta,
    seed_probability,
)
from .perlin import PerlinParams, derive_seed, perlin3
from .phantom import PhantomSpec, make_lesion_seed, make_phantom
from .pipeline import (
    corrupt_volume,
    detect_volumes,
    phantom_from_config,
    randomize_field,
    reconstruct_volume,
    select_corrupted,
    stable_u64,
    stream_seed,
)
from .volume import (
    BinaryMask3D,
    Volume3D,
    brain_mask,
    crop_or_pad,
    erode,
    median_filter,
    minmax_normalize,
    shift_values,
)

__all__ = [name for name in dir() if not name.startswith("_")]
