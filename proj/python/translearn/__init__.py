"""Python interface to the translation-and-retrieval core.

Exposes filename parsing, synthetic dataset generation, dataset loading,
part-pooled descriptors, loss values, and retrieval evaluation from the
compiled extension module.
"""

from translearn._core import (
    classification_loss,
    contrastive_loss,
    evaluate,
    generate_synthetic,
    lmp,
    load_dataset,
    parse_duke_filename,
    parse_market_filename,
)

__all__ = [
    "classification_loss",
    "contrastive_loss",
    "evaluate",
    "generate_synthetic",
    "lmp",
    "load_dataset",
    "parse_duke_filename",
    "parse_market_filename",
]

__version__ = "0.1.0"
