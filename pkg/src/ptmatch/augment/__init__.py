from .assembly import AssemblyError, AugmentedTrialSet, assemble_augmented_set, augmentation_map, propagate_labels
from .augmenter import CriteriaAugmenter
from .baselines import (
    AugmenterError,
    DictionaryMaskFiller,
    IdentityTranslator,
    PhraseTableTranslator,
    back_translate,
    context_word_augment,
    swap_word_augment,
)
from .llm import (
    AugmentationRecord,
    EchoLLM,
    MockParaphraseLLM,
    NoUsableVariantsError,
    OpenAICompatibleClient,
    PromptTemplate,
    TransportError,
    augment_criterion,
    build_prompt,
    filter_variants,
)
from .privacy import AuditLog, PrivacyPolicy, PrivacyViolationError, ScreenResult, screen_prompt
