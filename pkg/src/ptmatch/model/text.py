"""Text encoders producing sentence vectors and per-token feature maps."""

from __future__ import annotations

import hashlib
import re
from functools import lru_cache
from typing import List, Protocol

import numpy as np

_TOKEN = re.compile(r"[A-Za-z0-9]+(?:[.'][A-Za-z0-9]+)*|[^\sA-Za-z0-9]")


class EncoderConfigError(RuntimeError):
    pass


def tokenize(text: str) -> List[str]:
    """Whitespace and punctuation split; punctuation marks become tokens."""
    return _TOKEN.findall(text)


class TextEncoder(Protocol):
    dim: int
    backend: str

    def encode(self, text: str) -> np.ndarray:
        """Sentence vector of shape ``(dim,)``."""

    def encode_tokens(self, text: str) -> np.ndarray:
        """Per-token vectors of shape ``(n_tokens, dim)``."""


class HashingTextEncoder:
    """Seeded signed feature hashing over word unigrams and bigrams.

    Dependency-free and deterministic. Sentence vectors are unit-normalized,
    so two texts without a shared n-gram are near-orthogonal.
    """

    backend = "hashing_fallback"

    def __init__(self, dim: int = 768, seed: int = 0, lowercase: bool = True):
        if dim <= 0:
            raise ValueError("dim must be positive")
        self.dim = dim
        self.seed = seed
        self.lowercase = lowercase
        self._key = int(seed).to_bytes(8, "little", signed=False)
        self._feature = lru_cache(maxsize=65536)(self._feature_uncached)
        self._sentence = lru_cache(maxsize=16384)(self._encode_uncached)
        self._tokens = lru_cache(maxsize=16384)(self._encode_tokens_uncached)

    def _feature_uncached(self, gram: str):
        digest = hashlib.blake2b(gram.encode("utf-8"), digest_size=8, key=self._key).digest()
        h = int.from_bytes(digest, "little")
        return h % self.dim, (1.0 if (h >> 63) & 1 else -1.0)

    def _words(self, text: str) -> List[str]:
        toks = [t for t in tokenize(text) if t.isalnum() or len(t) > 1]
        return [t.lower() for t in toks] if self.lowercase else toks

    def _grams(self, words: List[str]) -> List[str]:
        return [f"1:{w}" for w in words] + [f"2:{a} {b}" for a, b in zip(words, words[1:])]

    def _encode_uncached(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dim)
        for gram in self._grams(self._words(text)):
            idx, sign = self._feature(gram)
            vec[idx] += sign
        norm = np.linalg.norm(vec)
        if norm == 0:
            raise ValueError(f"text has no tokens: {text!r}")
        vec /= norm
        vec.setflags(write=False)
        return vec

    def _encode_tokens_uncached(self, text: str) -> np.ndarray:
        words = self._words(text)
        if not words:
            raise ValueError(f"text has no tokens: {text!r}")
        out = np.zeros((len(words), self.dim))
        for i, w in enumerate(words):
            idx, sign = self._feature(f"1:{w}")
            out[i, idx] += sign
            if i > 0:
                idx, sign = self._feature(f"2:{words[i - 1]} {w}")
                out[i, idx] += 0.5 * sign
        out /= np.linalg.norm(out, axis=1, keepdims=True)
        out.setflags(write=False)
        return out

    def encode(self, text: str) -> np.ndarray:
        return self._sentence(" ".join(text.split()))

    def encode_tokens(self, text: str) -> np.ndarray:
        return self._tokens(" ".join(text.split()))


class PretrainedClinicalEncoder:
    """Wraps a Hugging Face clinical encoder (e.g. a ClinicalBERT checkpoint).

    Loaded lazily; a missing package or checkpoint raises
    :class:`EncoderConfigError` naming the backend.
    """

    backend = "pretrained_clinical"

    def __init__(self, model_name: str = "emilyalsentzer/Bio_ClinicalBERT", max_length: int = 64):
        self.model_name = model_name
        self.max_length = max_length
        self._model = None
        self._tokenizer = None
        self.dim = 768

    def _load(self):
        if self._model is not None:
            return
        try:
            import torch
            from transformers import AutoModel, AutoTokenizer

            self._tokenizer = AutoTokenizer.from_pretrained(self.model_name)
            self._model = AutoModel.from_pretrained(self.model_name).eval()
            self._torch = torch
        except Exception as exc:
            raise EncoderConfigError(f"backend 'pretrained_clinical' unavailable ({self.model_name}): {exc}") from exc
        self.dim = int(self._model.config.hidden_size)

    def encode_tokens(self, text: str) -> np.ndarray:
        self._load()
        batch = self._tokenizer(text, return_tensors="pt", truncation=True, max_length=self.max_length)
        with self._torch.no_grad():
            hidden = self._model(**batch).last_hidden_state[0]
        return hidden.double().numpy()

    def encode(self, text: str) -> np.ndarray:
        vec = self.encode_tokens(text).mean(axis=0)
        return vec / np.linalg.norm(vec)


def make_text_encoder(backend: str, dim: int = 768, seed: int = 0) -> TextEncoder:
    if backend == "hashing_fallback":
        return HashingTextEncoder(dim=dim, seed=seed)
    if backend == "pretrained_clinical":
        enc = PretrainedClinicalEncoder()
        enc._load()
        if enc.dim != dim:
            raise EncoderConfigError(f"backend 'pretrained_clinical' has dim {enc.dim}, expected {dim}")
        return enc
    raise EncoderConfigError(f"unknown text encoder backend {backend!r}")
