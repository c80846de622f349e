"""Siamese-network image verification toolkit."""

from ._core import (
    AugmentationPolicy,
    Dataset,
    FillMode,
    FreezePolicy,
    HeadMode,
    ImageClass,
    LabeledImage,
    Model,
    ModelConfig,
    ModelKind,
    PairRegime,
    SiamcheckError,
    SyntheticSpec,
    TrainConfig,
    augment,
    build_model,
    compute_metrics,
    decode_png,
    encode_png,
    evaluate_classifier,
    evaluate_snn,
    load_model,
    load_split,
    make_synthetic_dataset,
    read_shard,
    select_reference_panel,
    tally_votes,
    train_classifier,
    train_snn,
    vote_evaluate,
    write_dataset_tree,
    write_shard,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
