"""scikit-learn style estimator wrapping the matching network."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
import torch
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from .data import LABELS, Corpus, Criterion, PatientRecord, normalize_text, validate_corpus
from .model.network import EncoderConfig, MatchingNetwork, PairBatch, cosine_sim
from .model.text import TextEncoder, make_text_encoder
from .seeding import derive_seed
from .training import (
    EncodedPair,
    LossConfig,
    TrainConfig,
    TrainingError,
    contrastive_active,
    fit_network,
)

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "ptmatch-checkpoint-v1"
_DTYPES = {"float32": torch.float32, "float64": torch.float64}


class CheckpointError(RuntimeError):
    pass


@dataclass(frozen=True)
class PairEmbedding:
    x_P: np.ndarray
    x_c: np.ndarray
    similarity: float


class Featurizer:
    """Caches text-encoder outputs and pads them into batch tensors."""

    def __init__(self, encoder: TextEncoder, dtype: torch.dtype):
        self.encoder = encoder
        self.dtype = dtype
        self._tokens: Dict[str, np.ndarray] = {}
        self._slots: Dict[str, np.ndarray] = {}

    def criterion_tokens(self, text: str) -> np.ndarray:
        text = normalize_text(text)
        if text not in self._tokens:
            self._tokens[text] = self.encoder.encode_tokens(text)
        return self._tokens[text]

    def patient_slots(self, record: PatientRecord) -> np.ndarray:
        key = record.patient_id + "\x00" + "\x1f".join(record.entries)
        if key not in self._slots:
            entries = [normalize_text(e) for e in record.entries]
            if not entries:
                raise TrainingError(f"patient {record.patient_id} has no entries")
            self._slots[key] = np.stack([self.encoder.encode(e) for e in entries])
        return self._slots[key]

    def pad(self, arrays: Sequence[np.ndarray]):
        n, longest, dim = len(arrays), max(a.shape[0] for a in arrays), arrays[0].shape[1]
        out = np.zeros((n, longest, dim))
        mask = np.zeros((n, longest))
        for i, a in enumerate(arrays):
            out[i, : a.shape[0]] = a
            mask[i, : a.shape[0]] = 1.0
        return torch.as_tensor(out, dtype=self.dtype), torch.as_tensor(mask, dtype=self.dtype)

    def batch(self, pairs, patients: Dict[str, PatientRecord], criteria: Dict[str, Criterion]) -> PairBatch:
        c_ids = list(dict.fromkeys(p.criterion_id for p in pairs))
        p_ids = list(dict.fromkeys(p.patient_id for p in pairs))
        c_pos = {c: i for i, c in enumerate(c_ids)}
        p_pos = {p: i for i, p in enumerate(p_ids)}
        tokens, token_mask = self.pad([self.criterion_tokens(criteria[c].text) for c in c_ids])
        slots, slot_mask = self.pad([self.patient_slots(patients[p]) for p in p_ids])
        return PairBatch(
            tokens,
            token_mask,
            slots,
            slot_mask,
            torch.as_tensor([c_pos[p.criterion_id] for p in pairs], dtype=torch.long),
            torch.as_tensor([p_pos[p.patient_id] for p in pairs], dtype=torch.long),
        )


class PatientTrialMatcher(ClassifierMixin, BaseEstimator):
    """Three-class (match / mismatch / unknown) patient-criterion classifier.

    ``fit`` and ``predict`` take a :class:`~ptmatch.data.Corpus`; predictions
    are aligned with ``X.pairs``. Hyperparameters are flat constructor
    arguments so the estimator works with ``clone`` and ``get_params``.
    """

    def __init__(
        self,
        embedding_dim: int = 768,
        highway_channels: int = 128,
        highway_layers: int = 2,
        text_encoder: str = "hashing_fallback",
        memory_readout: str = "query_attention",
        literal_paper_formula: bool = False,
        alpha: float = 0.5,
        epsilon: float = 0.01,
        contrastive_form: str = "product_paper",
        contrastive_scope: str = "gold_conditioned",
        epochs: int = 12,
        batch_size: int = 128,
        learning_rate: float = 1e-4,
        beta1: float = 0.9,
        beta2: float = 0.999,
        adam_eps: float = 1e-8,
        seed: int = 0,
        dtype: str = "float32",
        checkpoint_every: int = 0,
        checkpoint_dir: Optional[str] = None,
    ):
        self.embedding_dim = embedding_dim
        self.highway_channels = highway_channels
        self.highway_layers = highway_layers
        self.text_encoder = text_encoder
        self.memory_readout = memory_readout
        self.literal_paper_formula = literal_paper_formula
        self.alpha = alpha
        self.epsilon = epsilon
        self.contrastive_form = contrastive_form
        self.contrastive_scope = contrastive_scope
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.adam_eps = adam_eps
        self.seed = seed
        self.dtype = dtype
        self.checkpoint_every = checkpoint_every
        self.checkpoint_dir = checkpoint_dir

    # -- configuration views ---------------------------------------------------

    def encoder_config(self) -> EncoderConfig:
        return EncoderConfig(
            self.embedding_dim,
            self.highway_channels,
            self.highway_layers,
            self.text_encoder,
            self.memory_readout,
            self.literal_paper_formula,
        )

    def loss_config(self) -> LossConfig:
        return LossConfig(self.alpha, self.epsilon, self.contrastive_form, self.contrastive_scope)

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            beta1=self.beta1,
            beta2=self.beta2,
            adam_eps=self.adam_eps,
            seed=self.seed,
            checkpoint_every=self.checkpoint_every,
        )

    # -- setup -----------------------------------------------------------------

    def init_network(self) -> "PatientTrialMatcher":
        """Build seeded, untrained parameters (what ``fit`` starts from)."""
        if self.dtype not in _DTYPES:
            raise ValueError(f"dtype must be one of {sorted(_DTYPES)}")
        cfg = self.encoder_config()
        torch.manual_seed(derive_seed(self.seed, "model.init"))
        self.network_ = MatchingNetwork(cfg).to(_DTYPES[self.dtype])
        self.network_.eval()
        self.text_encoder_ = make_text_encoder(cfg.text_encoder, cfg.embedding_dim)
        self.featurizer_ = Featurizer(self.text_encoder_, _DTYPES[self.dtype])
        self.classes_ = np.array([label.value for label in LABELS])
        return self

    def _encode_pairs(self, X: Corpus) -> List[EncodedPair]:
        criteria = X.criterion_index()
        scope = self.contrastive_scope
        out = []
        for p in X.pairs:
            c = criteria[p.criterion_id]
            group = (p.patient_id, p.group_trial_id or c.trial_id)
            out.append(
                EncodedPair(p.patient_id, p.criterion_id, p.label.index, c.kind, group, contrastive_active(p.label, c.kind, scope))
            )
        return out

    # -- sklearn API -------------------------------------------------------------

    def fit(self, X: Corpus, y=None, on_epoch_end: Optional[Callable] = None):
        report = validate_corpus(X.patients, X.trials, X.pairs)
        if not report.ok:
            first = report.violations[0]
            raise ValueError(f"invalid corpus: {len(report.violations)} violations, first: {first.rule} ({first.entity_id})")
        if not X.pairs:
            raise TrainingError("empty training set")
        patients = X.patient_index()
        for pid in {p.patient_id for p in X.pairs}:
            if not patients[pid].entries:
                raise TrainingError(f"patient {pid} has no entries")
        self.init_network()
        self.n_features_in_ = self.embedding_dim
        criteria = X.criterion_index()
        encoded = self._encode_pairs(X)

        def build(batch_pairs):
            return self.featurizer_.batch(batch_pairs, patients, criteria)

        def epoch_hook(epoch, network):
            if self.checkpoint_every and self.checkpoint_dir and epoch % self.checkpoint_every == 0:
                self.save(Path(self.checkpoint_dir) / f"epoch-{epoch:03d}.pt")
            if on_epoch_end is not None:
                on_epoch_end(epoch, self)

        self.history_ = fit_network(self.network_, encoded, build, self.loss_config(), self.train_config(), epoch_hook)
        return self

    def predict_proba(self, X: Corpus, batch_size: int = 512) -> np.ndarray:
        check_is_fitted(self, "network_")
        patients = X.patient_index()
        criteria = X.criterion_index()
        out = np.zeros((len(X.pairs), 3))
        usable = []
        for i, p in enumerate(X.pairs):
            if patients[p.patient_id].entries:
                usable.append(i)
            else:
                out[i] = (0.0, 0.0, 1.0)
        self.network_.eval()
        with torch.no_grad():
            for s in range(0, len(usable), batch_size):
                idx = usable[s : s + batch_size]
                batch = self.featurizer_.batch([X.pairs[i] for i in idx], patients, criteria)
                probs, _ = self.network_(batch)
                out[idx] = probs.double().numpy()
        return out

    def predict(self, X: Corpus) -> np.ndarray:
        proba = self.predict_proba(X)
        return self.classes_[proba.argmax(axis=1)]

    def score(self, X: Corpus, y=None) -> float:
        from .evaluation import criteria_level_metrics

        report, _ = criteria_level_metrics(self.predict(X), [p.label.value for p in X.pairs])
        return report["match_positive"].f1

    # -- embeddings --------------------------------------------------------------

    def encode_text(self, text: str) -> np.ndarray:
        check_is_fitted(self, "network_")
        text = normalize_text(text)
        if not text:
            raise ValueError("text must be non-empty")
        return np.asarray(self.text_encoder_.encode(text))

    def encode_criterion(self, criterion) -> np.ndarray:
        check_is_fitted(self, "network_")
        text = criterion.text if isinstance(criterion, Criterion) else str(criterion)
        tokens, mask = self.featurizer_.pad([self.featurizer_.criterion_tokens(text)])
        with torch.no_grad():
            return self.network_.encode_criteria(tokens, mask)[0].double().numpy()

    def encode_patient(self, record: PatientRecord, query: Optional[np.ndarray] = None) -> np.ndarray:
        check_is_fitted(self, "network_")
        if not record.entries:
            raise TrainingError("patient has no entries")
        slots, mask = self.featurizer_.pad([self.featurizer_.patient_slots(record)])
        q = None if query is None else torch.as_tensor(np.asarray(query)[None, :], dtype=slots.dtype)
        with torch.no_grad():
            return self.network_.encode_patients(slots, mask, q)[0].double().numpy()

    def pair_embedding(self, record: PatientRecord, criterion: Criterion) -> PairEmbedding:
        x_c = self.encode_criterion(criterion)
        x_p = self.encode_patient(record, x_c)
        return PairEmbedding(x_p, x_c, cosine_sim(x_p, x_c))

    # -- checkpoints -------------------------------------------------------------

    def save(self, path) -> Path:
        check_is_fitted(self, "network_")
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        params = {k: v for k, v in self.get_params().items() if k != "checkpoint_dir"}
        torch.save(
            {
                "format": CHECKPOINT_FORMAT,
                "params": params,
                "text_encoder": self.text_encoder,
                "embedding_dim": self.embedding_dim,
                "state_dict": self.network_.state_dict(),
            },
            path,
        )
        return path

    @classmethod
    def load(cls, path, embedding_dim: Optional[int] = None) -> "PatientTrialMatcher":
        blob = torch.load(Path(path), map_location="cpu", weights_only=False)
        if not isinstance(blob, dict) or blob.get("format") != CHECKPOINT_FORMAT:
            raise CheckpointError(f"{path} is not a matcher checkpoint")
        if embedding_dim is not None and blob["embedding_dim"] != embedding_dim:
            raise CheckpointError(f"checkpoint embedding_dim {blob['embedding_dim']} != expected {embedding_dim}")
        model = cls(**blob["params"]).init_network()
        try:
            model.network_.load_state_dict(blob["state_dict"])
        except RuntimeError as exc:
            raise CheckpointError(f"checkpoint parameters do not fit the configured network: {exc}") from exc
        model.n_features_in_ = model.embedding_dim
        return model


def train(corpus: Corpus, model: PatientTrialMatcher, loss_config: LossConfig, train_config: TrainConfig):
    """Fit ``model`` on ``corpus`` under explicit configs; returns ``(model, history)``."""
    model.set_params(
        alpha=loss_config.alpha,
        epsilon=loss_config.epsilon,
        contrastive_form=loss_config.contrastive_form,
        contrastive_scope=loss_config.contrastive_scope,
        epochs=train_config.epochs,
        batch_size=train_config.batch_size,
        learning_rate=train_config.learning_rate,
        beta1=train_config.beta1,
        beta2=train_config.beta2,
        adam_eps=train_config.adam_eps,
        seed=train_config.seed,
        checkpoint_every=train_config.checkpoint_every,
    )
    model.fit(corpus)
    return model, model.history_
