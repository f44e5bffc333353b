"""Classical text augmenters used as comparison points."""

from __future__ import annotations

from typing import Dict, List, Mapping, Protocol, Sequence, Tuple

import numpy as np

MASK = "[MASK]"
PIVOTS = ("de", "fr", "es")


class AugmenterError(RuntimeError):
    pass


def swap_word_augment(text: str, n_swaps: int, seed: int) -> str:
    """Apply ``n_swaps`` seeded transpositions of word positions."""
    if n_swaps < 0:
        raise ValueError("n_swaps must be non-negative")
    words = text.split()
    if len(words) < 2 or n_swaps == 0:
        return text
    rng = np.random.default_rng(seed)
    for _ in range(n_swaps):
        i, j = rng.choice(len(words), size=2, replace=False)
        words[i], words[j] = words[j], words[i]
    return " ".join(words)


class MaskFiller(Protocol):
    def fill(self, masked_text: str) -> List[str]:
        """Candidate words for the single ``[MASK]`` in ``masked_text``, best first."""


class DictionaryMaskFiller:
    """Deterministic filler keyed on the word left of the mask."""

    def __init__(self, table: Mapping[str, str] = None, default: str = "patients"):
        self.table = {k.casefold(): v for k, v in (table or {}).items()}
        self.default = default

    def fill(self, masked_text: str) -> List[str]:
        words = masked_text.split()
        pos = words.index(MASK)
        left = words[pos - 1].casefold().strip(".,;:") if pos > 0 else ""
        return [self.table.get(left, self.default)]


class TransformersMaskFiller:
    """Fill-mask pipeline from a pretrained contextual encoder (optional dependency)."""

    def __init__(self, model_name: str = "emilyalsentzer/Bio_ClinicalBERT"):
        self.model_name = model_name
        self._pipe = None

    def fill(self, masked_text: str) -> List[str]:
        if self._pipe is None:
            try:
                from transformers import pipeline
            except ImportError as exc:
                raise AugmenterError("context-word augmentation needs the 'transformers' package") from exc
            self._pipe = pipeline("fill-mask", model=self.model_name)
        text = masked_text.replace(MASK, self._pipe.tokenizer.mask_token)
        return [r["token_str"].strip() for r in self._pipe(text)]


def context_word_augment(text: str, mask_filler: MaskFiller, seed: int) -> str:
    """Insert a mask at a seeded position and replace it with the top prediction."""
    words = text.split()
    rng = np.random.default_rng(seed)
    pos = int(rng.integers(0, len(words) + 1))
    masked = words[:pos] + [MASK] + words[pos:]
    try:
        predictions = mask_filler.fill(" ".join(masked))
    except AugmenterError:
        raise
    except Exception as exc:
        raise AugmenterError(f"mask filler failed: {exc}") from exc
    candidates = [p.strip() for p in predictions or [] if p and p.strip() and len(p.split()) == 1]
    if not candidates:
        raise AugmenterError("mask filler returned no single-word prediction")
    masked[pos] = candidates[0]
    return " ".join(masked)


class Translator(Protocol):
    def translate(self, text: str, source: str, target: str) -> str:
        ...


class IdentityTranslator:
    def translate(self, text: str, source: str, target: str) -> str:
        return text


class PhraseTableTranslator:
    """Longest-match phrase substitution per language direction.

    ``tables`` maps ``(source, target)`` to a phrase dictionary. Unknown
    phrases pass through unchanged.
    """

    def __init__(self, tables: Mapping[Tuple[str, str], Mapping[str, str]]):
        self.tables: Dict[Tuple[str, str], List[Tuple[str, str]]] = {
            key: sorted(table.items(), key=lambda kv: -len(kv[0])) for key, table in tables.items()
        }

    def translate(self, text: str, source: str, target: str) -> str:
        out = text
        for src, dst in self.tables.get((source, target), []):
            out = out.replace(src, dst)
        return out


class DeepTranslatorClient:
    """Google Translate through the ``deep-translator`` package (optional dependency)."""

    def translate(self, text: str, source: str, target: str) -> str:
        try:
            from deep_translator import GoogleTranslator
        except ImportError as exc:
            raise AugmenterError("back translation needs the 'deep-translator' package") from exc
        return GoogleTranslator(source=source, target=target).translate(text)


def back_translate(text: str, pivot_language: str, translator_client: Translator) -> str:
    if pivot_language not in PIVOTS:
        raise ValueError(f"pivot must be one of {PIVOTS}, got {pivot_language!r}")
    try:
        forward = translator_client.translate(text, "en", pivot_language)
        back = translator_client.translate(forward, pivot_language, "en")
    except AugmenterError:
        raise
    except Exception as exc:
        raise AugmenterError(f"back translation via {pivot_language!r} failed: {exc}") from exc
    if text.strip() and not (back or "").strip():
        raise AugmenterError(f"back translation via {pivot_language!r} returned empty text")
    return back


def default_phrase_tables() -> PhraseTableTranslator:
    """Small canned tables for offline runs."""
    return PhraseTableTranslator(
        {
            ("en", "de"): {"stroke patients": "Schlaganfallpatienten", "Patients with": "Patienten mit"},
            ("de", "en"): {"Schlaganfallpatienten": "patients with stroke", "Patienten mit": "People with"},
            ("en", "fr"): {"stroke patients": "patients victimes d'un AVC", "Patients with": "Patients atteints de"},
            ("fr", "en"): {"patients victimes d'un AVC": "patients who suffered a stroke", "Patients atteints de": "Patients suffering from"},
            ("en", "es"): {"stroke patients": "pacientes con ictus", "Patients with": "Pacientes con"},
            ("es", "en"): {"pacientes con ictus": "patients with a stroke", "Pacientes con": "Patients having"},
        }
    )
