from .network import (
    CAB,
    VARIANT_LABELS,
    VARIANTS,
    RestoreNet,
    RestoreNetConfig,
    cab_forward,
    has_transposed_conv,
    restore,
    restore_array,
)
from .train import (
    RestoreTrainConfig,
    load_restorer,
    lr_for_epoch,
    restoration_loss,
    save_restorer,
    train_restorer,
)

__all__ = [
    "CAB",
    "VARIANT_LABELS",
    "VARIANTS",
    "RestoreNet",
    "RestoreNetConfig",
    "RestoreTrainConfig",
    "cab_forward",
    "has_transposed_conv",
    "load_restorer",
    "lr_for_epoch",
    "restoration_loss",
    "restore",
    "restore_array",
    "save_restorer",
    "train_restorer",
]
