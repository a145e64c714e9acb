"""Corpus schema, splitting, feature attachment and synthetic data."""

from .features import ResolvedFeatures, attach_features
from .schema import (
    INTENTS,
    TABLE1_COUNTS,
    TAGS,
    Corpus,
    Schema,
    Utterance,
    dumps_corpus,
    load_corpus,
    save_corpus,
    to_bio,
)
from .split import holdout_split, kfold_split
from .synth import GeneratorConfig, SyntheticData, generate_synthetic

__all__ = [
    "INTENTS",
    "TABLE1_COUNTS",
    "TAGS",
    "Corpus",
    "GeneratorConfig",
    "ResolvedFeatures",
    "Schema",
    "SyntheticData",
    "Utterance",
    "attach_features",
    "dumps_corpus",
    "generate_synthetic",
    "holdout_split",
    "kfold_split",
    "load_corpus",
    "save_corpus",
    "to_bio",
]
