"""Seeded desk-scale corpora standing in for a private EHR cohort."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Tuple

from ..data import Criterion, CriterionKind, MatchLabel, PatientRecord, Trial
from ..seeding import rng_for
from .vocabulary import CONCEPTS, DOSES, FRAMES, Concept, patient_entry

PREVALENCE = {"diagnosis": 0.3, "medication": 0.3, "procedure": 0.25}
INCLUSION_SHARE = 0.6


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SyntheticCorpusConfig:
    n_patients: int = 825
    n_trials: int = 6
    n_criteria_total: int = 150
    target_pairs: int = 100_000
    seed: int = 0
    difficulty_mix: float = 0.5
    pairing: str = "all"

    def validate(self) -> None:
        for name in ("n_patients", "n_trials", "n_criteria_total", "target_pairs"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if not 0.0 <= self.difficulty_mix <= 1.0:
            raise ConfigError("difficulty_mix must lie in [0, 1]")
        if self.n_criteria_total < self.n_trials:
            raise ConfigError("n_criteria_total must be at least n_trials")
        if math.ceil(self.n_criteria_total / self.n_trials) > len(CONCEPTS):
            raise ConfigError(f"at most {len(CONCEPTS)} criteria per trial are supported")
        if self.pairing not in ("all", "enrolled"):
            raise ConfigError(f"unknown pairing mode {self.pairing!r}")
        if self.target_pairs > self.max_pairs():
            raise ConfigError(
                f"target_pairs={self.target_pairs} exceeds the {self.max_pairs()} pairs "
                f"available from {self.n_patients} patients and {self.n_criteria_total} criteria"
            )

    def max_pairs(self) -> int:
        unknown = 2 * self.n_patients * self.n_trials if self.n_trials > 1 else 0
        return self.n_patients * self.n_criteria_total + unknown


@dataclass(frozen=True)
class SyntheticCorpus:
    patients: Tuple[PatientRecord, ...]
    trials: Tuple[Trial, ...]
    gold: Dict[Tuple[str, str], MatchLabel]
    difficulty: Dict[str, str]
    criterion_concepts: Dict[str, str]
    enrollment: Dict[str, Tuple[str, ...]] = field(default_factory=dict)


def _criteria_counts(config: SyntheticCorpusConfig) -> List[int]:
    base, extra = divmod(config.n_criteria_total, config.n_trials)
    return [base + (1 if t < extra else 0) for t in range(config.n_trials)]


def _make_patients(config: SyntheticCorpusConfig) -> Tuple[List[PatientRecord], Dict[str, set]]:
    rng = rng_for(config.seed, "synthetic.patients")
    patients, holdings = [], {}
    by_cat = {cat: [c for c in CONCEPTS if c.category == cat] for cat in PREVALENCE}
    for i in range(config.n_patients):
        pid = f"P{i + 1:04d}"
        held: List[Concept] = []
        for cat, concepts in by_cat.items():
            draws = rng.random(len(concepts))
            held.extend(c for c, u in zip(concepts, draws) if u < PREVALENCE[cat])
        if not held:
            held.append(CONCEPTS[int(rng.integers(len(CONCEPTS)))])
        lists: Dict[str, List[str]] = {"diagnosis": [], "medication": [], "procedure": []}
        for c in held:
            dose = DOSES[int(rng.integers(len(DOSES)))] if c.category == "medication" else ""
            lists[c.category].append(patient_entry(c, dose))
        for entries in lists.values():
            order = rng.permutation(len(entries))
            entries[:] = [entries[j] for j in order]
        patients.append(PatientRecord(pid, lists["diagnosis"], lists["medication"], lists["procedure"]))
        holdings[pid] = {c.concept_id for c in held}
    return patients, holdings


def _criterion_text(concept: Concept, hard: bool, rng) -> str:
    families = FRAMES[concept.category]
    family = families[int(rng.integers(len(families)))]
    if hard:
        frame = family[int(rng.integers(len(family)))]
        surface = concept.paraphrases[int(rng.integers(len(concept.paraphrases)))]
    else:
        frame, surface = family[0], concept.canonical
    return f"{frame} {surface}."


def generate_synthetic_corpus(config: SyntheticCorpusConfig) -> SyntheticCorpus:
    """Build patients, trials and within-trial gold labels from ``config.seed``.

    A criterion is labeled ``match`` exactly when the patient's record holds
    the concept it names. Exclusion criteria use the same reading, so a
    ``match`` there means the patient is excluded.
    """
    config.validate()
    patients, holdings = _make_patients(config)

    trial_rng = rng_for(config.seed, "synthetic.trials")
    n_hard = int(round(config.difficulty_mix * config.n_trials))
    hard_slots = set(trial_rng.permutation(config.n_trials)[:n_hard].tolist())

    trials: List[Trial] = []
    difficulty: Dict[str, str] = {}
    criterion_concepts: Dict[str, str] = {}
    next_cid = 1
    for t, count in enumerate(_criteria_counts(config)):
        tid = f"NCT{90000001 + t:08d}"
        hard = t in hard_slots
        difficulty[tid] = "hard" if hard else "easy"
        picks = trial_rng.choice(len(CONCEPTS), size=count, replace=False)
        n_incl = count if count == 1 else max(1, min(count - 1, int(round(INCLUSION_SHARE * count))))
        sections: Dict[CriterionKind, List[Criterion]] = {CriterionKind.INCLUSION: [], CriterionKind.EXCLUSION: []}
        for j, idx in enumerate(picks.tolist()):
            concept = CONCEPTS[idx]
            kind = CriterionKind.INCLUSION if j < n_incl else CriterionKind.EXCLUSION
            cid = f"C{next_cid:04d}"
            next_cid += 1
            sections[kind].append(Criterion(cid, tid, kind, _criterion_text(concept, hard, trial_rng)))
            criterion_concepts[cid] = concept.concept_id
        trials.append(Trial(tid, sections[CriterionKind.INCLUSION], sections[CriterionKind.EXCLUSION]))

    gold: Dict[Tuple[str, str], MatchLabel] = {}
    for p in patients:
        held = holdings[p.patient_id]
        for trial in trials:
            for c in trial.criteria:
                holds = criterion_concepts[c.criterion_id] in held
                gold[(p.patient_id, c.criterion_id)] = MatchLabel.MATCH if holds else MatchLabel.MISMATCH

    enroll_rng = rng_for(config.seed, "synthetic.enrollment")
    trial_ids = [t.trial_id for t in trials]
    enrollment: Dict[str, Tuple[str, ...]] = {}
    for p in patients:
        k = 1 + int(enroll_rng.binomial(len(trial_ids) - 1, 0.2)) if len(trial_ids) > 1 else 1
        chosen = sorted(enroll_rng.choice(len(trial_ids), size=k, replace=False).tolist())
        enrollment[p.patient_id] = tuple(trial_ids[j] for j in chosen)

    return SyntheticCorpus(tuple(patients), tuple(trials), gold, difficulty, criterion_concepts, enrollment)
