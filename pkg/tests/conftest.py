import pytest

from ptmatch.data import Corpus, Criterion, CriterionKind, MatchLabel, PairExample, PatientRecord, Trial
from ptmatch.ingestion import SyntheticCorpusConfig, build_pair_dataset, generate_synthetic_corpus

INC, EXC = CriterionKind.INCLUSION, CriterionKind.EXCLUSION
M, X, U = MatchLabel.MATCH, MatchLabel.MISMATCH, MatchLabel.UNKNOWN

# network sizes small enough for unit tests
TINY = dict(embedding_dim=32, highway_channels=8, highway_layers=2)


@pytest.fixture
def two_patient_corpus():
    patients = (
        PatientRecord("P0001", ["ICD10 I63.9 cerebral infarction"], ["aspirin 81 mg tablet"], []),
        PatientRecord("P0002", ["ICD10 I10 essential hypertension"], [], ["CPT 70450 head CT scan"]),
    )
    trial = Trial(
        "NCT00000001",
        [Criterion("C0001", "NCT00000001", INC, "History of cerebral infarction.")],
        [Criterion("C0002", "NCT00000001", EXC, "Current use of aspirin.")],
    )
    pairs = (
        PairExample("P0001", "C0001", M),
        PairExample("P0001", "C0002", M),
        PairExample("P0002", "C0001", X),
        PairExample("P0002", "C0002", X),
    )
    return Corpus(patients, (trial,), pairs)


def small_synthetic(seed=0, n_patients=30, n_trials=4, n_criteria=16, difficulty_mix=0.5):
    syn = generate_synthetic_corpus(
        SyntheticCorpusConfig(
            n_patients=n_patients,
            n_trials=n_trials,
            n_criteria_total=n_criteria,
            target_pairs=10,
            seed=seed,
            difficulty_mix=difficulty_mix,
        )
    )
    pairs = build_pair_dataset(syn.patients, syn.trials, syn.gold, seed)
    return syn, Corpus(syn.patients, syn.trials, tuple(pairs))


@pytest.fixture(scope="session")
def synthetic_small():
    return small_synthetic()
