"""Unpaired two-domain image translation with a binary pixel mask as a
controllable, interpretable latent variable."""

from .data import Batch, DatasetError, DatasetSpec, load_dataset
from .losses import (
    LossReport,
    LossWeights,
    NonFiniteLossError,
    cycle_loss,
    full_objective,
    gan_loss_discriminator,
    gan_loss_generator,
    identity_loss,
)
from .masks import (
    Mask,
    MaskFormatError,
    MaskParameterError,
    MaskSchemeConfig,
    binarize_attention,
    full_mask,
    make_rng,
    read_mask_png,
    sample_centered_square,
    sample_mask,
    sample_multi_rectangles,
    sample_round,
    write_mask_png,
)
from .networks import (
    Checkpoint,
    CheckpointError,
    DiscriminatorSet,
    GeneratorBundle,
    MaskedGenerator,
    PatchDiscriminator,
    build_models,
    load_checkpoint,
    mask_to_tensor,
    save_checkpoint,
    translate,
)
from .evaluation import (
    ExtractorError,
    FeatureStats,
    FidMatrix,
    extract_features,
    fid_matrix,
    frechet_distance,
    render_output_grid,
)
from .training import FakeBuffer, TrainConfig, Trainer, fit, read_loss_log

__version__ = "0.1.0"
