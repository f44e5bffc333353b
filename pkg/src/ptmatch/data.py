"""Domain types shared by every stage of the matching pipeline.

All records are frozen dataclasses holding tuples, so a corpus can be handed
to concurrent workers without copying.
"""

from __future__ import annotations

import enum
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple


def normalize_text(text: str) -> str:
    """Strip the ends and collapse internal whitespace runs. Case is kept."""
    return " ".join(text.split())


class MatchLabel(str, enum.Enum):
    MATCH = "match"
    MISMATCH = "mismatch"
    UNKNOWN = "unknown"

    @classmethod
    def from_token(cls, token: str) -> "MatchLabel":
        for label in cls:
            if label.value == token:
                return label
        raise ValueError(f"unknown label token {token!r}")

    @property
    def index(self) -> int:
        return LABELS.index(self)


LABELS: Tuple[MatchLabel, ...] = (MatchLabel.MATCH, MatchLabel.MISMATCH, MatchLabel.UNKNOWN)


class CriterionKind(str, enum.Enum):
    INCLUSION = "inclusion"
    EXCLUSION = "exclusion"


METHOD_TAGS = ("llm", "swap_word", "context_word", "back_translation")


@dataclass(frozen=True)
class Provenance:
    """Where an augmented criterion came from. Originals carry no provenance."""

    source_criterion_id: str
    method_tag: str

    def __post_init__(self):
        if self.method_tag not in METHOD_TAGS:
            raise ValueError(f"unknown method tag {self.method_tag!r}")


@dataclass(frozen=True)
class PatientRecord:
    patient_id: str
    diagnoses: Tuple[str, ...] = ()
    medications: Tuple[str, ...] = ()
    procedures: Tuple[str, ...] = ()

    def __post_init__(self):
        for name in ("diagnoses", "medications", "procedures"):
            value = getattr(self, name)
            if value is None:
                raise ValueError(f"{name} may be empty but not None")
            object.__setattr__(self, name, tuple(value))

    @property
    def n_d(self) -> int:
        return len(self.diagnoses)

    @property
    def n_m(self) -> int:
        return len(self.medications)

    @property
    def n_p(self) -> int:
        return len(self.procedures)

    @property
    def entries(self) -> Tuple[str, ...]:
        """Memory slot order: diagnoses, then medications, then procedures."""
        return self.diagnoses + self.medications + self.procedures


@dataclass(frozen=True)
class Criterion:
    criterion_id: str
    trial_id: str
    kind: CriterionKind
    text: str
    provenance: Optional[Provenance] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", CriterionKind(self.kind))

    @property
    def is_original(self) -> bool:
        return self.provenance is None


@dataclass(frozen=True)
class Trial:
    trial_id: str
    inclusion: Tuple[Criterion, ...] = ()
    exclusion: Tuple[Criterion, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "inclusion", tuple(self.inclusion))
        object.__setattr__(self, "exclusion", tuple(self.exclusion))

    @property
    def n_i(self) -> int:
        return len(self.inclusion)

    @property
    def n_e(self) -> int:
        return len(self.exclusion)

    @property
    def criteria(self) -> Tuple[Criterion, ...]:
        return self.inclusion + self.exclusion

    def originals(self) -> Tuple[Criterion, ...]:
        return tuple(c for c in self.criteria if c.is_original)


@dataclass(frozen=True)
class PairExample:
    """One labeled (patient, criterion) instance.

    ``group_trial_id`` is the trial whose (patient, trial) group emitted the
    pair. For ``unknown`` pairs it differs from the criterion's own trial.
    """

    patient_id: str
    criterion_id: str
    label: MatchLabel
    split_tag: Optional[str] = None
    group_trial_id: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "label", MatchLabel(self.label))

    @property
    def key(self) -> Tuple[str, str, Optional[str]]:
        return (self.patient_id, self.criterion_id, self.group_trial_id)


@dataclass(frozen=True)
class Corpus:
    patients: Tuple[PatientRecord, ...] = ()
    trials: Tuple[Trial, ...] = ()
    pairs: Tuple[PairExample, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "patients", tuple(self.patients))
        object.__setattr__(self, "trials", tuple(self.trials))
        object.__setattr__(self, "pairs", tuple(self.pairs))

    def patient_index(self) -> Dict[str, PatientRecord]:
        return {p.patient_id: p for p in self.patients}

    def criterion_index(self) -> Dict[str, Criterion]:
        return {c.criterion_id: c for t in self.trials for c in t.criteria}

    def trial_index(self) -> Dict[str, Trial]:
        return {t.trial_id: t for t in self.trials}

    def replace(self, **changes) -> "Corpus":
        fields_ = {"patients": self.patients, "trials": self.trials, "pairs": self.pairs}
        fields_.update(changes)
        return Corpus(**fields_)


@dataclass(frozen=True)
class Violation:
    entity_id: str
    rule: str
    detail: str = ""


@dataclass(frozen=True)
class ValidationReport:
    violations: Tuple[Violation, ...] = field(default_factory=tuple)

    def __bool__(self) -> bool:
        return not self.violations

    @property
    def ok(self) -> bool:
        return not self.violations

    def rules(self) -> List[str]:
        return [v.rule for v in self.violations]


def validate_corpus(
    patients: Sequence[PatientRecord],
    trials: Sequence[Trial],
    pairs: Sequence[PairExample],
) -> ValidationReport:
    """Check every corpus invariant and report violations as data.

    Inputs are never modified. An empty report means the corpus is valid.
    """
    out: List[Violation] = []

    pid_counts = Counter(p.patient_id for p in patients)
    for p in patients:
        if not p.patient_id:
            out.append(Violation(p.patient_id, "empty patient id"))
        for entry in p.entries:
            if not isinstance(entry, str) or not normalize_text(entry):
                out.append(Violation(p.patient_id, "empty entry"))
    for pid, n in sorted(pid_counts.items()):
        if n > 1:
            out.append(Violation(pid, "duplicate patient id", f"{n} records"))

    tid_counts = Counter(t.trial_id for t in trials)
    for tid, n in sorted(tid_counts.items()):
        if n > 1:
            out.append(Violation(tid, "duplicate trial id", f"{n} records"))

    criteria: Dict[str, Criterion] = {}
    cid_counts: Counter = Counter()
    for t in trials:
        if t.n_i + t.n_e == 0:
            out.append(Violation(t.trial_id, "trial has no criteria"))
        for section, kind in ((t.inclusion, CriterionKind.INCLUSION), (t.exclusion, CriterionKind.EXCLUSION)):
            for c in section:
                cid_counts[c.criterion_id] += 1
                criteria.setdefault(c.criterion_id, c)
                if c.trial_id != t.trial_id:
                    out.append(Violation(c.criterion_id, "criterion trial mismatch", c.trial_id))
                if c.kind is not kind:
                    out.append(Violation(c.criterion_id, "criterion kind mismatch", c.kind.value))
                if not normalize_text(c.text):
                    out.append(Violation(c.criterion_id, "empty criterion text"))
    for cid, n in sorted(cid_counts.items()):
        if n > 1:
            out.append(Violation(cid, "duplicate criterion id", f"{n} records"))

    for c in criteria.values():
        if c.provenance is None:
            continue
        src = criteria.get(c.provenance.source_criterion_id)
        if src is None or not src.is_original:
            out.append(Violation(c.criterion_id, "augmented source missing", c.provenance.source_criterion_id))
        elif src.kind is not c.kind:
            out.append(Violation(c.criterion_id, "augmented source kind mismatch", src.criterion_id))

    pair_counts: Counter = Counter()
    for pair in pairs:
        pair_counts[pair.key] += 1
        if pair.patient_id not in pid_counts:
            out.append(Violation(pair.patient_id, "dangling patient reference", pair.criterion_id))
        crit = criteria.get(pair.criterion_id)
        if crit is None:
            out.append(Violation(pair.criterion_id, "dangling criterion reference", pair.patient_id))
            continue
        if pair.group_trial_id is None:
            continue
        if pair.label is MatchLabel.UNKNOWN and crit.trial_id == pair.group_trial_id:
            out.append(Violation(pair.criterion_id, "unknown label from own trial", pair.patient_id))
        if pair.label is not MatchLabel.UNKNOWN and crit.trial_id != pair.group_trial_id:
            out.append(Violation(pair.criterion_id, "labeled pair outside group trial", pair.patient_id))
    for key, n in pair_counts.items():
        if n > 1:
            out.append(Violation(f"{key[0]}/{key[1]}", "duplicate pair", f"{n} occurrences"))

    return ValidationReport(tuple(out))


def iter_groups(pairs: Iterable[PairExample]) -> Dict[Tuple[str, Optional[str]], List[PairExample]]:
    """Bucket pairs by (patient_id, group_trial_id), keeping first-seen order."""
    groups: Dict[Tuple[str, Optional[str]], List[PairExample]] = {}
    for pair in pairs:
        groups.setdefault((pair.patient_id, pair.group_trial_id), []).append(pair)
    return groups
