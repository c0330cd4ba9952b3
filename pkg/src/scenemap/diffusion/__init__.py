from .denoiser import DenoiserConfig, ReferenceDenoiser, softmax, timestep_embedding
from .kernels import forward_marginal, kl_categorical, one_step, posterior, sample_from, sample_indices
from .loss import Batch, loss_mdm
from .sampling import sample_layout, sample_layouts
from .schedule import NoiseSchedule, build_schedule
from .training import DiffusionTrainConfig, train_denoiser

__all__ = [
    "Batch",
    "DenoiserConfig",
    "DiffusionTrainConfig",
    "NoiseSchedule",
    "ReferenceDenoiser",
    "build_schedule",
    "forward_marginal",
    "kl_categorical",
    "loss_mdm",
    "one_step",
    "posterior",
    "sample_from",
    "sample_indices",
    "sample_layout",
    "sample_layouts",
    "softmax",
    "timestep_embedding",
    "train_denoiser",
]
