"""Dual-path matching network.

Criteria go through token features -> 1-D conv + highway blocks -> max pool
-> projection. Patients are a memory of entry vectors read out by attention.
A small MLP head scores each (patient, criterion) pair into three classes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

READOUTS = ("query_attention", "self_attention_pool", "mean_pool")


@dataclass(frozen=True)
class EncoderConfig:
    embedding_dim: int = 768
    highway_channels: int = 128
    highway_layers: int = 2
    text_encoder: str = "hashing_fallback"
    memory_readout: str = "query_attention"
    literal_paper_formula: bool = False

    def __post_init__(self):
        for name in ("embedding_dim", "highway_channels", "highway_layers"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.memory_readout not in READOUTS:
            raise ValueError(f"unknown memory readout {self.memory_readout!r}")


def cosine_sim(a, b) -> float:
    """Cosine similarity clamped to [-1, 1]; raises on a zero vector."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ValueError("undefined similarity for a zero vector")
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def cosine_sim_t(a: torch.Tensor, b: torch.Tensor, eps: float = 1e-12) -> torch.Tensor:
    """Row-wise cosine for batched tensors."""
    num = (a * b).sum(-1)
    den = a.norm(dim=-1).clamp_min(eps) * b.norm(dim=-1).clamp_min(eps)
    return (num / den).clamp(-1.0, 1.0)


class Highway(nn.Module):
    """Gated blend of a convolutional transform and the carried input.

    ``h`` has shape ``(batch, channels, length)``. The canonical form is
    ``T * H(h) + (1 - T) * h`` with ``T = sigmoid(gate(h))``. With
    ``literal=True`` the carry path is replaced by ``sigmoid(h) * H(h) +
    H(h) * (1 - T)``.
    """

    def __init__(self, channels: int, kernel_size: int = 3, literal: bool = False):
        super().__init__()
        self.channels = channels
        self.literal = literal
        self.transform = nn.Conv1d(channels, channels, kernel_size, padding=kernel_size // 2)
        self.gate = nn.Conv1d(channels, channels, 1)
        nn.init.constant_(self.gate.bias, -1.0)

    def forward(self, h: torch.Tensor, mask: Optional[torch.Tensor] = None) -> torch.Tensor:
        if h.dim() != 3 or h.shape[1] != self.channels:
            raise ValueError(f"expected (batch, {self.channels}, length) input, got {tuple(h.shape)}")
        H = F.relu(self.transform(h))
        T = torch.sigmoid(self.gate(h))
        if self.literal:
            y = torch.sigmoid(h) * H + H * (1.0 - T)
        else:
            y = T * H + (1.0 - T) * h
        if mask is not None:
            y = y * mask
        return y


class CriterionEncoder(nn.Module):
    def __init__(self, cfg: EncoderConfig):
        super().__init__()
        self.inp = nn.Conv1d(cfg.embedding_dim, cfg.highway_channels, 1)
        self.blocks = nn.ModuleList(
            Highway(cfg.highway_channels, literal=cfg.literal_paper_formula) for _ in range(cfg.highway_layers)
        )
        self.out = nn.Linear(cfg.highway_channels, cfg.embedding_dim)

    def forward(self, tokens: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        """``tokens``: (n, length, dim); ``mask``: (n, length) with 1 for real tokens."""
        m = mask.unsqueeze(1).to(tokens.dtype)
        h = self.inp(tokens.transpose(1, 2)) * m
        for block in self.blocks:
            h = block(h, m)
        h = h.masked_fill(m == 0, float("-inf")).amax(dim=2)
        return self.out(h)


def memory_readout(
    slots: torch.Tensor,
    mask: torch.Tensor,
    mode: str,
    query: Optional[torch.Tensor] = None,
    scale: float | torch.Tensor = 1.0,
) -> torch.Tensor:
    """Attention readout over memory slots.

    ``slots``: (n, S, d); ``mask``: (n, S); ``query``: (n, d). Padded slots
    get zero weight. Returns (n, d).
    """
    m = mask.to(slots.dtype)
    if mode == "mean_pool":
        return (slots * m.unsqueeze(-1)).sum(1) / m.sum(1, keepdim=True).clamp_min(1.0)
    if query is None:
        raise ValueError(f"readout {mode!r} needs a query vector")
    logits = torch.einsum("nsd,nd->ns", slots, query) * scale
    logits = logits.masked_fill(mask == 0, float("-inf"))
    weights = torch.softmax(logits, dim=1)
    return torch.einsum("ns,nsd->nd", weights, slots)


class MatchingNetwork(nn.Module):
    def __init__(self, cfg: EncoderConfig):
        super().__init__()
        self.cfg = cfg
        d = cfg.embedding_dim
        self.criterion_encoder = CriterionEncoder(cfg)
        self.memory = nn.Linear(d, d, bias=False)
        with torch.no_grad():
            self.memory.weight.copy_(torch.eye(d))
        self.pool_query = nn.Parameter(torch.zeros(d))
        self.log_scale = nn.Parameter(torch.zeros(()))
        self.hidden = nn.Linear(4 * d, d)
        self.classifier = nn.Linear(d, 3)

    def encode_criteria(self, tokens: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        return self.criterion_encoder(tokens, mask)

    def encode_patients(
        self,
        slots: torch.Tensor,
        mask: torch.Tensor,
        query: Optional[torch.Tensor] = None,
        projected: bool = False,
    ) -> torch.Tensor:
        mem = slots if projected else self.memory(slots)
        mode = self.cfg.memory_readout
        if mode == "query_attention" and query is None:
            mode = "mean_pool"
        if mode == "self_attention_pool":
            query = self.pool_query.expand(slots.shape[0], -1)
        return memory_readout(mem, mask, mode, query, self.log_scale.exp())

    def head_logits(self, x_p: torch.Tensor, x_c: torch.Tensor) -> torch.Tensor:
        if x_p.shape != x_c.shape:
            raise ValueError(f"embedding shapes differ: {tuple(x_p.shape)} vs {tuple(x_c.shape)}")
        z = torch.cat([x_p, x_c, x_p * x_c, (x_p - x_c).abs()], dim=-1)
        return self.classifier(torch.tanh(self.hidden(z)))

    def predict_pair(self, x_p: torch.Tensor, x_c: torch.Tensor) -> torch.Tensor:
        return torch.softmax(self.head_logits(x_p, x_c), dim=-1)

    def forward(self, batch: "PairBatch"):
        """Return ``(probs, similarity)`` for every pair in ``batch``."""
        x_c_unique = self.encode_criteria(batch.tokens, batch.token_mask)
        x_c = x_c_unique[batch.criterion_index]
        mem = self.memory(batch.slots)[batch.patient_index]
        slot_mask = batch.slot_mask[batch.patient_index]
        x_p = self.encode_patients(mem, slot_mask, x_c, projected=True)
        probs = self.predict_pair(x_p, x_c)
        return probs, cosine_sim_t(x_p, x_c)


@dataclass
class PairBatch:
    tokens: torch.Tensor  # (n_criteria, L, d)
    token_mask: torch.Tensor  # (n_criteria, L)
    slots: torch.Tensor  # (n_patients, S, d)
    slot_mask: torch.Tensor  # (n_patients, S)
    criterion_index: torch.Tensor  # (B,)
    patient_index: torch.Tensor  # (B,)
