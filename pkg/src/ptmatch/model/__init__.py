from .network import (
    READOUTS,
    CriterionEncoder,
    EncoderConfig,
    Highway,
    MatchingNetwork,
    PairBatch,
    cosine_sim,
    cosine_sim_t,
    memory_readout,
)
from .text import (
    EncoderConfigError,
    HashingTextEncoder,
    PretrainedClinicalEncoder,
    TextEncoder,
    make_text_encoder,
    tokenize,
)

__all__ = [
    "READOUTS",
    "CriterionEncoder",
    "EncoderConfig",
    "EncoderConfigError",
    "HashingTextEncoder",
    "Highway",
    "MatchingNetwork",
    "PairBatch",
    "PretrainedClinicalEncoder",
    "TextEncoder",
    "cosine_sim",
    "cosine_sim_t",
    "make_text_encoder",
    "memory_readout",
    "tokenize",
]
