from .model import (
    DA_ABLATIONS,
    TERM_NAMES,
    LatentPair,
    TranslationBundle,
    TranslationConfig,
    TranslationTrainer,
    decode,
    encode,
    load_bundle,
    save_bundle,
    total_objective,
    train_step,
    translate,
)

__all__ = [
    "DA_ABLATIONS",
    "TERM_NAMES",
    "LatentPair",
    "TranslationBundle",
    "TranslationConfig",
    "TranslationTrainer",
    "decode",
    "encode",
    "load_bundle",
    "save_bundle",
    "total_objective",
    "train_step",
    "translate",
]
