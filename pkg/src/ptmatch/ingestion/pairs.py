from __future__ import annotations

from typing import Dict, List, Mapping, Optional, Sequence, Tuple

from ..data import MatchLabel, PairExample, PatientRecord, Trial
from ..seeding import rng_for
from .synthetic import ConfigError


def build_pair_dataset(
    patients: Sequence[PatientRecord],
    trials: Sequence[Trial],
    gold: Mapping[Tuple[str, str], MatchLabel],
    seed: int,
    pairing: str = "all",
    enrollment: Optional[Mapping[str, Sequence[str]]] = None,
    split_tags: Optional[Mapping[str, str]] = None,
) -> List[PairExample]:
    """Emit labeled pairs per (patient, trial) group plus injected unknowns.

    Every group gets one inclusion and one exclusion criterion drawn
    uniformly from the other trials, labeled ``unknown``. ``split_tags`` maps
    a trial id to the tag stored on its group's pairs.
    """
    if len(trials) < 2:
        raise ConfigError("unknown injection needs at least two trials")
    if pairing not in ("all", "enrolled"):
        raise ConfigError(f"unknown pairing mode {pairing!r}")
    if pairing == "enrolled" and enrollment is None:
        raise ConfigError("pairing='enrolled' requires an enrollment map")

    rng = rng_for(seed, "pairs.unknown")
    split_tags = split_tags or {}
    originals = {t.trial_id: [c for c in t.criteria if c.is_original] for t in trials}
    foreign_pool: Dict[str, Tuple[list, list]] = {}
    for t in trials:
        others = [c for o in trials if o.trial_id != t.trial_id for c in originals[o.trial_id]]
        foreign_pool[t.trial_id] = (
            [c for c in others if c.kind.value == "inclusion"],
            [c for c in others if c.kind.value == "exclusion"],
        )

    pairs: List[PairExample] = []
    for p in patients:
        group_trials = trials
        if pairing == "enrolled":
            allowed = set(enrollment.get(p.patient_id, ()))
            group_trials = [t for t in trials if t.trial_id in allowed]
        for t in group_trials:
            tag = split_tags.get(t.trial_id)
            for c in originals[t.trial_id]:
                key = (p.patient_id, c.criterion_id)
                if key not in gold:
                    raise ConfigError(f"no gold label for patient {key[0]} and criterion {key[1]}")
                pairs.append(PairExample(p.patient_id, c.criterion_id, gold[key], tag, t.trial_id))
            for pool in foreign_pool[t.trial_id]:
                if not pool:
                    continue
                c = pool[int(rng.integers(len(pool)))]
                pairs.append(PairExample(p.patient_id, c.criterion_id, MatchLabel.UNKNOWN, tag, t.trial_id))
    return pairs
