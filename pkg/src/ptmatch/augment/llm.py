"""Prompted paraphrase generation for eligibility criteria."""

from __future__ import annotations

import itertools
import logging
import os
import re
import time
from dataclasses import dataclass
from typing import List, Optional, Protocol, Sequence, Tuple

from ..data import Criterion, normalize_text
from ..ingestion.vocabulary import synonym_sets
from ..seeding import rng_for
from .privacy import AuditLog, PrivacyAuditEntry, PrivacyPolicy, screen_and_log

logger = logging.getLogger(__name__)

DEFAULT_PREFIX = (
    "Paraphrase the following clinical trial eligibility criterion. Keep its "
    "inclusion or exclusion meaning unchanged and do not add new conditions. Criterion:"
)
MAX_LENGTH_RATIO = 3.0
MIN_WORDS = 3


class TransportError(RuntimeError):
    """The remote generator could not be reached."""


class NoUsableVariantsError(RuntimeError):
    pass


@dataclass(frozen=True)
class PromptTemplate:
    template_id: str = "paraphrase-v1"
    prefix_text: str = DEFAULT_PREFIX
    k_variants: int = 3

    def __post_init__(self):
        if self.k_variants < 1:
            raise ValueError("k_variants must be at least 1")


def build_prompt(template: PromptTemplate, criterion: Criterion) -> str:
    text = normalize_text(criterion.text)
    if not template.prefix_text:
        return text
    return f"{template.prefix_text} {text}"


@dataclass(frozen=True)
class AugmentationRecord:
    source_criterion_id: str
    method_tag: str
    outputs: Tuple[str, ...]
    prompt_used: str
    audit: Optional[PrivacyAuditEntry] = None


class LLMClient(Protocol):
    def complete(self, prompt: str, n: int, temperature: float = 0.7, max_tokens: int = 128) -> List[str]:
        ...


# -- mock paraphraser -------------------------------------------------------

def _match_case(template: str, replacement: str) -> str:
    if template[:1].isupper() and replacement[:1].islower():
        return replacement[:1].upper() + replacement[1:]
    if template[:1].islower() and replacement[:1].isupper() and not replacement[:2].isupper():
        return replacement[:1].lower() + replacement[1:]
    return replacement


class MockParaphraseLLM:
    """Seeded phrase-substitution engine over the synthetic vocabulary.

    The mock rewrites the text after the first ``": "`` of the prompt (or the
    whole prompt if there is none). Every phrase family it knows is a set of
    surface forms with the same meaning, so each variant is a paraphrase by
    construction. Randomness is keyed on the text, not on call order.
    """

    def __init__(self, seed: int = 0, families: Optional[Sequence[Sequence[str]]] = None):
        self.seed = seed
        self.families = [tuple(f) for f in (families if families is not None else synonym_sets())]
        forms = sorted(
            ((form, i) for i, fam in enumerate(self.families) for form in fam),
            key=lambda x: -len(x[0]),
        )
        self._form_family = {form.casefold(): i for form, i in forms}
        alternation = "|".join(re.escape(f) for f, _ in forms)
        self._pattern = re.compile(rf"(?<![\w-])(?:{alternation})(?![\w-])", re.IGNORECASE)
        self.calls = 0

    @staticmethod
    def _payload(prompt: str) -> str:
        head, sep, tail = prompt.partition(": ")
        return tail if sep else prompt

    def paraphrase(self, text: str, n: int) -> List[str]:
        spans = list(self._pattern.finditer(text))
        if not spans:
            return []
        rng = rng_for(self.seed, "mock-llm:" + text)
        choices = []
        for m in spans:
            fam = self.families[self._form_family[m.group(0).casefold()]]
            alts = [f for f in fam if f.casefold() != m.group(0).casefold()]
            order = rng.permutation(len(alts)).tolist()
            choices.append([alts[j] for j in order])
        # variant j takes the j-th alternative of every span (cycling), then
        # falls back to mixed combinations when more variants are requested
        cycled = [tuple(j % len(c) for c in choices) for j in range(max(len(c) for c in choices))]
        combos = itertools.chain(cycled, itertools.product(*[range(len(c)) for c in choices]))
        outputs: List[str] = []
        for combo in combos:
            pieces, last = [], 0
            for m, alts, j in zip(spans, choices, combo):
                pieces.append(text[last : m.start()])
                pieces.append(_match_case(m.group(0), alts[j]))
                last = m.end()
            pieces.append(text[last:])
            out = "".join(pieces)
            if out not in outputs:
                outputs.append(out)
            if len(outputs) == n:
                break
        return outputs

    def complete(self, prompt: str, n: int, temperature: float = 0.7, max_tokens: int = 128) -> List[str]:
        self.calls += 1
        return self.paraphrase(self._payload(prompt), n)


class EchoLLM:
    """Returns the criterion verbatim ``n`` times; useful for filter tests."""

    def complete(self, prompt: str, n: int, temperature: float = 0.7, max_tokens: int = 128) -> List[str]:
        return [MockParaphraseLLM._payload(prompt)] * n


class OpenAICompatibleClient:
    """Chat-completions client for any OpenAI-compatible endpoint.

    The API key is read from the environment variable named by ``api_key_env``
    at call time; it is never written to configuration files.
    """

    def __init__(
        self,
        model: str,
        base_url: str = "https://api.openai.com/v1",
        api_key_env: str = "PTMATCH_LLM_API_KEY",
        timeout: float = 60.0,
        session=None,
    ):
        self.model = model
        self.base_url = base_url.rstrip("/")
        self.api_key_env = api_key_env
        self.timeout = timeout
        self._session = session

    def complete(self, prompt: str, n: int, temperature: float = 0.7, max_tokens: int = 128) -> List[str]:
        key = os.environ.get(self.api_key_env)
        if not key:
            raise TransportError(f"environment variable {self.api_key_env} is not set")
        if self._session is None:
            import requests

            self._session = requests.Session()
        body = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "n": n,
            "temperature": temperature,
            "max_tokens": max_tokens,
        }
        try:
            resp = self._session.post(
                f"{self.base_url}/chat/completions",
                json=body,
                headers={"Authorization": f"Bearer {key}"},
                timeout=self.timeout,
            )
        except Exception as exc:
            raise TransportError(str(exc)) from exc
        if resp.status_code != 200:
            raise TransportError(f"HTTP {resp.status_code}")
        return [c["message"]["content"].strip() for c in resp.json().get("choices", [])]


# -- augmentation -----------------------------------------------------------

def filter_variants(source: str, outputs: Sequence[str]) -> Tuple[str, ...]:
    """Drop empty, duplicate, source-equal, overlong (>3x) and short (<3 words) outputs."""
    src = normalize_text(source)
    seen = {src.casefold()}
    kept: List[str] = []
    for raw in outputs:
        text = normalize_text(raw or "")
        if not text or text.casefold() in seen:
            continue
        if len(text) > MAX_LENGTH_RATIO * len(src) or len(text.split()) < MIN_WORDS:
            continue
        seen.add(text.casefold())
        kept.append(text)
    return tuple(kept)


def call_with_retry(fn, retries: int, backoff: float = 0.0):
    for attempt in range(retries + 1):
        try:
            return fn()
        except TransportError as exc:
            if attempt == retries:
                raise TransportError(f"{exc} (after {retries} retries)") from exc
            logger.warning("generator call failed (attempt %d): %s", attempt + 1, exc)
            if backoff:
                time.sleep(backoff * (2**attempt))


def augment_criterion(
    criterion: Criterion,
    template: PromptTemplate,
    llm_client: LLMClient,
    policy: PrivacyPolicy,
    audit: Optional[AuditLog] = None,
    retries: int = 2,
    temperature: float = 0.7,
    max_tokens: int = 128,
) -> AugmentationRecord:
    prompt = build_prompt(template, criterion)
    entry = screen_and_log(criterion.criterion_id, prompt, policy, audit)
    raw = call_with_retry(
        lambda: llm_client.complete(prompt, template.k_variants, temperature, max_tokens), retries
    )
    outputs = filter_variants(criterion.text, raw)
    if not outputs:
        raise NoUsableVariantsError(f"no usable variants for {criterion.criterion_id}")
    return AugmentationRecord(criterion.criterion_id, "llm", outputs, prompt, entry)
