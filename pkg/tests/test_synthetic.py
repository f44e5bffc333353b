import pytest

from ptmatch.data import MatchLabel, validate_corpus
from ptmatch.ingestion import ConfigError, SyntheticCorpusConfig, generate_synthetic_corpus
from ptmatch.ingestion.vocabulary import CONCEPTS, tokens


def test_default_scale_counts():
    syn = generate_synthetic_corpus(SyntheticCorpusConfig(seed=1))
    assert len(syn.patients) == 825
    assert len(syn.trials) == 6
    assert sum(len(t.criteria) for t in syn.trials) == 150


def test_seeded_determinism():
    a = generate_synthetic_corpus(SyntheticCorpusConfig(n_patients=50, n_criteria_total=30, target_pairs=100, seed=7))
    b = generate_synthetic_corpus(SyntheticCorpusConfig(n_patients=50, n_criteria_total=30, target_pairs=100, seed=7))
    assert a == b
    c = generate_synthetic_corpus(SyntheticCorpusConfig(n_patients=50, n_criteria_total=30, target_pairs=100, seed=8))
    assert a.patients != c.patients


def test_easy_criteria_share_tokens_with_matching_patients():
    syn = generate_synthetic_corpus(
        SyntheticCorpusConfig(n_patients=120, n_criteria_total=60, target_pairs=100, seed=3, difficulty_mix=0.0)
    )
    patients = {p.patient_id: p for p in syn.patients}
    criteria = {c.criterion_id: c for t in syn.trials for c in t.criteria}
    checked = 0
    for (pid, cid), label in syn.gold.items():
        if label is MatchLabel.MATCH:
            entry_tokens = {tok for e in patients[pid].entries for tok in tokens(e)}
            assert set(tokens(criteria[cid].text)) & entry_tokens
            checked += 1
    assert checked > 100


def test_hard_criteria_avoid_the_canonical_concept_words():
    syn = generate_synthetic_corpus(
        SyntheticCorpusConfig(n_patients=20, n_criteria_total=60, target_pairs=100, seed=3, difficulty_mix=1.0)
    )
    by_id = {c.concept_id: c for c in CONCEPTS}
    for t in syn.trials:
        assert syn.difficulty[t.trial_id] == "hard"
        for c in t.criteria:
            concept = by_id[syn.criterion_concepts[c.criterion_id]]
            assert concept.canonical.lower() not in c.text.lower()


def test_gold_is_total_within_trials():
    syn = generate_synthetic_corpus(SyntheticCorpusConfig(n_patients=15, n_criteria_total=12, target_pairs=10, seed=2))
    expected = {(p.patient_id, c.criterion_id) for p in syn.patients for t in syn.trials for c in t.criteria}
    assert set(syn.gold) == expected


def test_generated_trials_validate():
    syn = generate_synthetic_corpus(SyntheticCorpusConfig(n_patients=15, n_criteria_total=12, target_pairs=10, seed=2))
    assert validate_corpus(syn.patients, syn.trials, []).ok
    assert all(t.n_i >= 1 and t.n_e >= 1 for t in syn.trials)


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(n_patients=10, n_criteria_total=12, target_pairs=10_000),
        dict(n_trials=8, n_criteria_total=4),
        dict(difficulty_mix=1.5),
        dict(n_patients=0),
    ],
)
def test_infeasible_configs(kwargs):
    with pytest.raises(ConfigError):
        generate_synthetic_corpus(SyntheticCorpusConfig(**kwargs))
