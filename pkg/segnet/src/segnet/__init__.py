from .data import DatasetError, PairedFrames, list_pairs
from .infer import infer
from .model import (
    DEFAULT_DILATIONS,
    Lclm,
    LclmSpec,
    MobileVitBlock,
    ModelSpec,
    SegModel,
    build_model,
    lclm_stage,
    parameter_count,
    receptive_field_probe,
)
from .train import dice_bce_loss, load_checkpoint, save_checkpoint, train

__version__ = "0.1.0"
