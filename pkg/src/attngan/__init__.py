"""Attention-guided cyclic GAN for satellite cloud removal.

Self-contained CPU stack: tensor/autodiff core, translation networks,
paired-data pipeline with a synthetic cloudy-scene generator, trainer,
PSNR/SSIM evaluation, and a single `attngan` CLI.
"""

import os as _os

# ATTNGAN_THREADS caps numeric-library parallelism; the default of 1 keeps
# every run bitwise reproducible. Must happen before numpy loads.
_threads = _os.environ.get("ATTNGAN_THREADS", "1")
try:
    _threads = str(max(1, int(_threads)))
except ValueError:
    _threads = "1"
for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
             "NUMEXPR_NUM_THREADS"):
    _os.environ.setdefault(_var, _threads)

from .tensor import (NumericError, ShapeError, Tape, TapeError, Tensor,  # noqa: E402
                     backward, finite_checks)
from .nn import ParameterRegistry, init_parameters, parameter_count  # noqa: E402
from .model import (CloudRemovalModel, GeneratorOutput, ModelConfig,  # noqa: E402
                    foreground_mask, fuse)
from .losses import (GeneratorTerms, LossReport, LossWeights, adversarial_d,  # noqa: E402
                     adversarial_g, cycle_loss, pixel_loss, total_generator_loss)
from .data import (AUGMENT_KINDS, DatasetError, DatasetManifest, DecodeError,  # noqa: E402
                   ImagePair, ManifestError, augment, default_train_count,
                   denormalize, load_dataset, normalize, select_pairs, split)
from .synth import synth_dataset  # noqa: E402
from .trainer import Adam, TrainConfig, lr_at, train, train_step  # noqa: E402
from .checkpoint import (CheckpointFormatError, CheckpointState,  # noqa: E402
                         load_checkpoint, save_checkpoint)
from .metrics import MetricsReport, evaluate, mse, psnr, ssim  # noqa: E402
from .gradcheck import gradcheck, gradcheck_all, registered_ops  # noqa: E402
from .errors import ConfigError  # noqa: E402

__version__ = "0.1.0"

__all__ = [
    "Adam", "AUGMENT_KINDS", "CheckpointFormatError", "CheckpointState",
    "CloudRemovalModel", "ConfigError", "DatasetError", "DatasetManifest",
    "DecodeError", "GeneratorOutput", "GeneratorTerms", "ImagePair",
    "LossReport", "LossWeights", "ManifestError", "MetricsReport",
    "ModelConfig", "NumericError", "ParameterRegistry", "ShapeError",
    "Tape", "TapeError", "Tensor", "TrainConfig", "adversarial_d",
    "adversarial_g", "augment", "backward", "cycle_loss",
    "default_train_count", "denormalize", "evaluate", "finite_checks",
    "foreground_mask", "fuse", "gradcheck", "gradcheck_all",
    "init_parameters", "load_checkpoint", "load_dataset", "lr_at", "mse",
    "normalize", "parameter_count", "pixel_loss", "psnr", "registered_ops",
    "save_checkpoint", "select_pairs", "split", "ssim", "synth_dataset",
    "total_generator_loss", "train", "train_step",
]
