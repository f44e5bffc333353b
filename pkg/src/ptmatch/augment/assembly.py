"""Turn augmentation records into criteria and labeled pairs."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Iterable, List, Mapping, Sequence, Tuple

from ..data import Criterion, PairExample, Provenance, Trial, normalize_text
from .llm import AugmentationRecord


class AssemblyError(ValueError):
    pass


@dataclass(frozen=True)
class AugmentedTrialSet:
    trial_id: str
    originals: Tuple[Criterion, ...]
    augmented: Tuple[Criterion, ...]

    def __len__(self) -> int:
        return len(self.augmented)

    def as_trial(self) -> Trial:
        """Originals first, then augmented criteria, per section."""
        incl = [c for c in self.originals + self.augmented if c.kind.value == "inclusion"]
        excl = [c for c in self.originals + self.augmented if c.kind.value == "exclusion"]
        return Trial(self.trial_id, incl, excl)


def assemble_augmented_set(trial: Trial, records: Sequence[AugmentationRecord]) -> AugmentedTrialSet:
    """Union of all variant sets, as criteria inheriting the source kind.

    Set semantics are on normalized text: a variant already produced by an
    earlier record, or equal to any original criterion of the trial, is not
    added again.
    """
    by_id = {c.criterion_id: c for c in trial.criteria if c.is_original}
    seen = {normalize_text(c.text) for c in by_id.values()}
    per_source: Dict[str, int] = {}
    augmented: List[Criterion] = []
    # inclusion records first, in trial order, so ids do not depend on record order
    order = {cid: i for i, cid in enumerate(by_id)}
    for rec in records:
        if rec.source_criterion_id not in by_id:
            raise AssemblyError(f"criterion {rec.source_criterion_id} does not belong to trial {trial.trial_id}")
    for rec in sorted(records, key=lambda r: order[r.source_criterion_id]):
        src = by_id[rec.source_criterion_id]
        for text in rec.outputs:
            text = normalize_text(text)
            if not text or text in seen:
                continue
            seen.add(text)
            n = per_source.get(src.criterion_id, 0) + 1
            per_source[src.criterion_id] = n
            augmented.append(
                Criterion(
                    criterion_id=f"{src.criterion_id}.{rec.method_tag}{n}",
                    trial_id=trial.trial_id,
                    kind=src.kind,
                    text=text,
                    provenance=Provenance(src.criterion_id, rec.method_tag),
                )
            )
    return AugmentedTrialSet(trial.trial_id, tuple(by_id.values()), tuple(augmented))


def augmentation_map(criteria: Iterable[Criterion]) -> Dict[str, List[str]]:
    """Source criterion id -> ids of its augmented criteria."""
    out: Dict[str, List[str]] = {}
    for c in criteria:
        if c.provenance is not None:
            out.setdefault(c.provenance.source_criterion_id, []).append(c.criterion_id)
    return out


def propagate_labels(pairs: Sequence[PairExample], aug_map: Mapping[str, Sequence[str]]) -> List[PairExample]:
    """Copy each pair's label onto every augmented variant of its criterion."""
    labeled = {p.criterion_id for p in pairs}
    for src in aug_map:
        if src not in labeled:
            raise AssemblyError(f"augmented source {src} has no labeled pair")
    out: List[PairExample] = []
    for p in pairs:
        out.append(p)
        for aug_id in aug_map.get(p.criterion_id, ()):
            out.append(PairExample(p.patient_id, aug_id, p.label, p.split_tag, p.group_trial_id))
    return out
