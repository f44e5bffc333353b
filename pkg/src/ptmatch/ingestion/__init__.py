from .pairs import build_pair_dataset
from .registry import (
    STROKE_TRIALS,
    CannedRegistryClient,
    FixtureRegistryClient,
    HttpRegistryClient,
    ParseError,
    RawTrialDocument,
    RegistryError,
    RegistryInputError,
    RegistryNotFoundError,
    RegistryTransportError,
    fetch_trial_criteria,
    parse_eligibility,
    render_eligibility,
)
from .synthetic import ConfigError, SyntheticCorpus, SyntheticCorpusConfig, generate_synthetic_corpus

__all__ = [
    "STROKE_TRIALS",
    "CannedRegistryClient",
    "ConfigError",
    "FixtureRegistryClient",
    "HttpRegistryClient",
    "ParseError",
    "RawTrialDocument",
    "RegistryError",
    "RegistryInputError",
    "RegistryNotFoundError",
    "RegistryTransportError",
    "SyntheticCorpus",
    "SyntheticCorpusConfig",
    "build_pair_dataset",
    "fetch_trial_criteria",
    "generate_synthetic_corpus",
    "parse_eligibility",
    "render_eligibility",
]
