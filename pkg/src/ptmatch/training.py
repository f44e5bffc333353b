"""Composite classification / contrastive objective and the training loop."""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch

from .data import CriterionKind, MatchLabel
from .seeding import rng_for

logger = logging.getLogger(__name__)

PROB_CLAMP = 1e-7
SIM_TOLERANCE = 1e-6
CONTRASTIVE_FORMS = ("product_paper", "sum_log")
CONTRASTIVE_SCOPES = ("gold_conditioned", "unconditional")


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class LossConfig:
    alpha: float = 0.5
    epsilon: float = 0.01
    contrastive_form: str = "product_paper"
    contrastive_scope: str = "gold_conditioned"

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if self.epsilon < 0:
            raise ValueError("epsilon must be non-negative")
        if self.contrastive_form not in CONTRASTIVE_FORMS:
            raise ValueError(f"unknown contrastive form {self.contrastive_form!r}")
        if self.contrastive_scope not in CONTRASTIVE_SCOPES:
            raise ValueError(f"unknown contrastive scope {self.contrastive_scope!r}")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 12
    batch_size: int = 128
    learning_rate: float = 1e-4
    optimizer: str = "adam_style"
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    checkpoint_every: int = 0

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size <= 0 or self.learning_rate <= 0:
            raise ValueError("epochs must be >= 0; batch_size and learning_rate positive")
        if self.optimizer != "adam_style":
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    loss: float
    loss_cla: float
    loss_con: float
    wall_time: float

    def to_dict(self, with_time: bool = False) -> dict:
        d = asdict(self)
        if not with_time:
            d.pop("wall_time")
        return d


@dataclass
class TrainHistory:
    records: List[EpochRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def losses(self) -> List[float]:
        return [r.loss for r in self.records]


# -- losses -------------------------------------------------------------------

def classification_loss(y_hat, y) -> float:
    """Sum of binary cross-entropies over the three class components."""
    y_hat = np.asarray(y_hat, dtype=float)
    y = np.asarray(y, dtype=float)
    if y.shape != (3,) or y_hat.shape != (3,):
        raise ValueError("y and y_hat must be 3-vectors")
    if not (np.isin(y, (0.0, 1.0)).all() and y.sum() == 1.0):
        raise ValueError(f"y must be one-hot, got {y.tolist()}")
    p = np.clip(y_hat, PROB_CLAMP, 1.0 - PROB_CLAMP)
    return float(-(y @ np.log(p)) - ((1.0 - y) @ np.log(1.0 - p)))


def classification_loss_t(probs: torch.Tensor, onehot: torch.Tensor) -> torch.Tensor:
    """Batched version of :func:`classification_loss`; returns one value per row."""
    p = probs.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
    return -(onehot * p.log()).sum(-1) - ((1.0 - onehot) * (1.0 - p).log()).sum(-1)


def _check_sims(values: Sequence[float], name: str) -> np.ndarray:
    arr = np.asarray(list(values), dtype=float)
    if arr.size and (np.abs(arr) > 1.0 + SIM_TOLERANCE).any():
        raise ValueError(f"{name} similarities must lie in [-1, 1]")
    return np.clip(arr, -1.0, 1.0)


def contrastive_loss(
    incl_sims: Sequence[float],
    excl_sims: Sequence[float],
    epsilon: float = 0.01,
    form: str = "product_paper",
) -> float:
    """Inclusion/exclusion pairwise distance loss for one (patient, trial) group.

    ``product_paper`` multiplies ``(1 - s)`` over inclusion similarities and
    ``max(0, s - epsilon)`` over exclusion similarities; an empty product is 1.
    ``sum_log`` adds the same terms instead.
    """
    inc = _check_sims(incl_sims, "inclusion")
    exc = _check_sims(excl_sims, "exclusion")
    inc_terms = np.maximum(1.0 - inc, 0.0)
    exc_terms = np.maximum(exc - epsilon, 0.0)
    if form == "product_paper":
        return float(np.prod(inc_terms) * np.prod(exc_terms))
    if form == "sum_log":
        return float(inc_terms.sum() + exc_terms.sum())
    raise ValueError(f"unknown contrastive form {form!r}")


def contrastive_loss_t(
    sims: torch.Tensor, is_inclusion: torch.Tensor, epsilon: float, form: str
) -> torch.Tensor:
    """Torch version over the active criteria of one group."""
    inc_terms = (1.0 - sims[is_inclusion]).clamp_min(0.0)
    exc_terms = (sims[~is_inclusion] - epsilon).clamp_min(0.0)
    if form == "product_paper":
        return inc_terms.prod() * exc_terms.prod()
    return inc_terms.sum() + exc_terms.sum()


def total_loss(l_cla, l_con, alpha: float):
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    if alpha == 1.0:
        return l_cla
    if alpha == 0.0:
        return l_con
    return alpha * l_cla + (1.0 - alpha) * l_con


# -- batching -----------------------------------------------------------------

@dataclass(frozen=True)
class EncodedPair:
    """A pair reduced to what the trainer needs."""

    patient_id: str
    criterion_id: str
    label: int
    kind: CriterionKind
    group: Tuple[str, str]
    contrastive: bool


def contrastive_active(label: MatchLabel, kind: CriterionKind, scope: str) -> bool:
    """Whether a pair contributes a factor to the contrastive term.

    Unknown pairs never do. Under ``gold_conditioned`` an inclusion criterion
    counts when the patient matches it and an exclusion criterion counts when
    the excluded condition is absent.
    """
    if label is MatchLabel.UNKNOWN:
        return False
    if scope == "unconditional":
        return True
    if kind is CriterionKind.INCLUSION:
        return label is MatchLabel.MATCH
    return label is MatchLabel.MISMATCH


def pack_batches(groups: Sequence[Sequence[int]], batch_size: int) -> List[List[Tuple[int, ...]]]:
    """Pack whole groups into batches; only groups bigger than a batch are split.

    Returns a list of batches, each a list of group chunks (tuples of pair
    indices).
    """
    batches: List[List[Tuple[int, ...]]] = []
    current: List[Tuple[int, ...]] = []
    used = 0
    for g in groups:
        g = tuple(g)
        if len(g) > batch_size:
            if current:
                batches.append(current)
                current, used = [], 0
            for i in range(0, len(g), batch_size):
                batches.append([g[i : i + batch_size]])
            continue
        if used + len(g) > batch_size:
            batches.append(current)
            current, used = [], 0
        current.append(g)
        used += len(g)
    if current:
        batches.append(current)
    return batches


def batch_objective(
    probs: torch.Tensor,
    sims: torch.Tensor,
    labels: torch.Tensor,
    is_inclusion: torch.Tensor,
    active: torch.Tensor,
    chunks: Sequence[Sequence[int]],
    loss_config: LossConfig,
) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Mean per-pair classification loss, mean per-group contrastive loss, and their blend.

    ``chunks`` holds positions into the batch tensors, one entry per group.
    """
    onehot = torch.nn.functional.one_hot(labels, 3).to(probs.dtype)
    l_cla = classification_loss_t(probs, onehot).mean()
    terms = []
    for chunk in chunks:
        idx = torch.as_tensor(list(chunk), dtype=torch.long)
        keep = idx[active[idx]]
        terms.append(
            contrastive_loss_t(sims[keep], is_inclusion[keep], loss_config.epsilon, loss_config.contrastive_form)
        )
    l_con = torch.stack(terms).mean() if terms else sims.new_zeros(())
    return total_loss(l_cla, l_con, loss_config.alpha), l_cla, l_con


BatchBuilder = Callable[[Sequence[EncodedPair]], object]


def fit_network(
    network: torch.nn.Module,
    pairs: Sequence[EncodedPair],
    build_batch: BatchBuilder,
    loss_config: LossConfig,
    train_config: TrainConfig,
    on_epoch_end: Optional[Callable[[int, torch.nn.Module], None]] = None,
) -> TrainHistory:
    """Run Adam over the composite objective; deterministic for a fixed seed."""
    history = TrainHistory()
    if not pairs:
        raise TrainingError("empty training set")
    if train_config.epochs == 0:
        return history

    groups: Dict[Tuple[str, str], List[int]] = {}
    for i, p in enumerate(pairs):
        groups.setdefault(p.group, []).append(i)
    group_list = list(groups.values())

    optim = torch.optim.Adam(
        network.parameters(),
        lr=train_config.learning_rate,
        betas=(train_config.beta1, train_config.beta2),
        eps=train_config.adam_eps,
    )
    network.train()
    for epoch in range(1, train_config.epochs + 1):
        start = time.perf_counter()
        order = rng_for(train_config.seed, f"train.shuffle.{epoch}").permutation(len(group_list))
        batches = pack_batches([group_list[j] for j in order], train_config.batch_size)
        sums = np.zeros(3)
        for b, chunks in enumerate(batches):
            flat = [i for chunk in chunks for i in chunk]
            batch_pairs = [pairs[i] for i in flat]
            batch = build_batch(batch_pairs)
            probs, sims = network(batch)
            labels = torch.as_tensor([p.label for p in batch_pairs], dtype=torch.long)
            incl = torch.as_tensor([p.kind is CriterionKind.INCLUSION for p in batch_pairs])
            active = torch.as_tensor([p.contrastive for p in batch_pairs])
            local, pos = [], 0
            for chunk in chunks:
                local.append(range(pos, pos + len(chunk)))
                pos += len(chunk)
            loss, l_cla, l_con = batch_objective(probs, sims, labels, incl, active, local, loss_config)
            if not torch.isfinite(loss):
                first = ", ".join(f"{p.patient_id}/{p.criterion_id}" for p in batch_pairs[:3])
                raise TrainingError(f"non-finite loss at epoch {epoch}, batch {b} (pairs {first}, ...)")
            optim.zero_grad()
            loss.backward()
            optim.step()
            sums += (loss.item(), l_cla.item(), l_con.item())
        mean = sums / max(len(batches), 1)
        record = EpochRecord(epoch, float(mean[0]), float(mean[1]), float(mean[2]), time.perf_counter() - start)
        history.records.append(record)
        logger.info("epoch %d: L=%.5f cla=%.5f con=%.5f", epoch, record.loss, record.loss_cla, record.loss_con)
        if on_epoch_end is not None:
            on_epoch_end(epoch, network)
    network.eval()
    return history
