"""maskfill: train on a single masked image, sample diverse completions."""

from .bundle import ModelBundle, ScaleModel, bundle_fingerprint
from .config import EngineConfig, NaiveInpaintConfig, TrainSchedule
from .images import load_image, load_mask, save_image, save_mask
from .metrics import DiversityReport, masked_rmse, pairwise_diversity
from .pyramid import PyramidLevel, PyramidSpec, build_pyramid
from .sampler import DiversityMode, SampleRequest, SampleResult, generate, mode_by_name, reconstruct
from .trainer import PyramidTrainer, train_full

__version__ = "0.1.0"

__all__ = [
    "DiversityMode",
    "DiversityReport",
    "EngineConfig",
    "ModelBundle",
    "NaiveInpaintConfig",
    "PyramidLevel",
    "PyramidSpec",
    "PyramidTrainer",
    "SampleRequest",
    "SampleResult",
    "ScaleModel",
    "TrainSchedule",
    "build_pyramid",
    "bundle_fingerprint",
    "generate",
    "load_image",
    "load_mask",
    "masked_rmse",
    "mode_by_name",
    "pairwise_diversity",
    "reconstruct",
    "save_image",
    "save_mask",
    "train_full",
    "__version__",
]
