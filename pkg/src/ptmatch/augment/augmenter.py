from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional, Tuple

from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ..data import Corpus, Criterion, CriterionKind, Trial
from ..seeding import derive_seed
from .assembly import assemble_augmented_set, augmentation_map, propagate_labels
from .baselines import (
    PIVOTS,
    AugmenterError,
    DictionaryMaskFiller,
    back_translate,
    context_word_augment,
    default_phrase_tables,
    swap_word_augment,
)
from .llm import (
    DEFAULT_PREFIX,
    AugmentationRecord,
    MockParaphraseLLM,
    NoUsableVariantsError,
    PromptTemplate,
    TransportError,
    build_prompt,
    call_with_retry,
    filter_variants,
)
from .privacy import AuditLog, PrivacyPolicy, PrivacyViolationError, screen_and_log

logger = logging.getLogger(__name__)

METHODS = {"llm": "llm", "swap": "swap_word", "context": "context_word", "backtrans": "back_translation"}


class CriteriaAugmenter(TransformerMixin, BaseEstimator):
    """Augment trial criteria and propagate pair labels onto the variants.

    ``fit`` builds the privacy policy from the corpus' patient records, which
    never leave the process. ``transform`` returns a corpus whose trials carry
    the augmented criteria after the originals and whose pairs include the
    propagated copies.

    Parameters
    ----------
    method : {"llm", "swap", "context", "backtrans"}
    k : int
        Variants requested per criterion.
    trial_ids : collection of str, optional
        Only these trials are augmented; others pass through unchanged.
    """

    def __init__(
        self,
        method: str = "llm",
        k: int = 3,
        seed: int = 0,
        policy_mode: str = "enforce",
        prompt_prefix: str = DEFAULT_PREFIX,
        llm_client=None,
        mask_filler=None,
        translator=None,
        n_swaps: int = 1,
        max_workers: int = 4,
        retries: int = 2,
        audit_path: Optional[str] = None,
        trial_ids=None,
    ):
        self.method = method
        self.k = k
        self.seed = seed
        self.policy_mode = policy_mode
        self.prompt_prefix = prompt_prefix
        self.llm_client = llm_client
        self.mask_filler = mask_filler
        self.translator = translator
        self.n_swaps = n_swaps
        self.max_workers = max_workers
        self.retries = retries
        self.audit_path = audit_path
        self.trial_ids = trial_ids

    def fit(self, X: Corpus, y=None):
        if self.method not in METHODS:
            raise ValueError(f"unknown augmentation method {self.method!r}")
        self.policy_ = PrivacyPolicy.from_patients(X.patients, mode=self.policy_mode)
        self.template_ = PromptTemplate(prefix_text=self.prompt_prefix if self.method == "llm" else "", k_variants=self.k)
        return self

    def _outbound_text(self, criterion: Criterion) -> str:
        return build_prompt(self.template_, criterion)

    def _generate(self, criterion: Criterion, prompt: str) -> Tuple[str, ...]:
        text = criterion.text
        if self.method == "llm":
            client = self.llm_client if self.llm_client is not None else MockParaphraseLLM(derive_seed(self.seed, "augment.llm"))
            raw = call_with_retry(lambda: client.complete(prompt, self.k), self.retries)
        elif self.method == "swap":
            raw = [
                swap_word_augment(text, self.n_swaps, derive_seed(self.seed, f"swap:{criterion.criterion_id}:{j}"))
                for j in range(self.k)
            ]
        elif self.method == "context":
            filler = self.mask_filler if self.mask_filler is not None else DictionaryMaskFiller()
            raw = [
                context_word_augment(text, filler, derive_seed(self.seed, f"context:{criterion.criterion_id}:{j}"))
                for j in range(self.k)
            ]
        else:
            translator = self.translator if self.translator is not None else default_phrase_tables()
            raw = [back_translate(text, PIVOTS[j % len(PIVOTS)], translator) for j in range(min(self.k, len(PIVOTS)))]
        return filter_variants(text, raw)

    def transform(self, X: Corpus) -> Corpus:
        check_is_fitted(self, "policy_")
        audit = AuditLog(path=self.audit_path)
        wanted = set(self.trial_ids) if self.trial_ids is not None else None
        tag = METHODS[self.method]

        # screening is sequential so the audit log order is deterministic
        jobs: List[Tuple[Criterion, str, object]] = []
        self.skipped_: List[Tuple[str, str]] = []
        for trial in X.trials:
            if wanted is not None and trial.trial_id not in wanted:
                continue
            for c in trial.originals():
                prompt = self._outbound_text(c)
                try:
                    entry = screen_and_log(c.criterion_id, prompt, self.policy_, audit)
                except PrivacyViolationError as exc:
                    self.skipped_.append((c.criterion_id, f"blocked: {', '.join(exc.matches)}"))
                    continue
                jobs.append((c, prompt, entry))

        def run(job):
            c, prompt, _ = job
            try:
                return self._generate(c, prompt), None
            except (TransportError, AugmenterError, NoUsableVariantsError) as exc:
                return (), str(exc)

        workers = max(1, int(self.max_workers))
        if workers == 1:
            results = [run(j) for j in jobs]
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(run, jobs))

        records: List[AugmentationRecord] = []
        for (c, prompt, entry), (outputs, err) in zip(jobs, results):
            if err is not None or not outputs:
                self.skipped_.append((c.criterion_id, err or "no usable variants"))
                continue
            records.append(AugmentationRecord(c.criterion_id, tag, outputs, prompt, entry))

        trials = []
        new_criteria: List[Criterion] = []
        for trial in X.trials:
            ids = {c.criterion_id for c in trial.criteria}
            own = [r for r in records if r.source_criterion_id in ids]
            if not own:
                trials.append(trial)
                continue
            merged = assemble_augmented_set(trial, own)
            # criteria augmented by an earlier pass stay after the new ones
            prior = [c for c in trial.criteria if not c.is_original]
            as_trial = merged.as_trial()
            trials.append(
                Trial(
                    trial.trial_id,
                    as_trial.inclusion + tuple(c for c in prior if c.kind is CriterionKind.INCLUSION),
                    as_trial.exclusion + tuple(c for c in prior if c.kind is CriterionKind.EXCLUSION),
                )
            )
            new_criteria.extend(merged.augmented)

        self.records_ = records
        self.audit_log_ = audit
        aug_map = augmentation_map(new_criteria)
        pairs = propagate_labels(list(X.pairs), aug_map) if X.pairs else []
        return X.replace(trials=trials, pairs=pairs)
