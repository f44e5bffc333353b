"""Patient-trial matching with privacy-aware LLM criteria augmentation."""

__version__ = "0.1.0"

from .data import (
    Corpus,
    Criterion,
    CriterionKind,
    MatchLabel,
    PairExample,
    PatientRecord,
    Provenance,
    Trial,
    validate_corpus,
)

__all__ = [
    "Corpus",
    "Criterion",
    "CriterionKind",
    "MatchLabel",
    "PairExample",
    "PatientRecord",
    "Provenance",
    "Trial",
    "__version__",
    "validate_corpus",
]
