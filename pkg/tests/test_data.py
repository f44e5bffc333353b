import pytest
from hypothesis import given, strategies as st

from ptmatch.data import (
    Corpus,
    Criterion,
    MatchLabel,
    PairExample,
    PatientRecord,
    Provenance,
    Trial,
    normalize_text,
    validate_corpus,
)

from conftest import EXC, INC, M, U, X


def test_well_formed_fixture_has_empty_report(two_patient_corpus):
    c = two_patient_corpus
    report = validate_corpus(c.patients, c.trials, c.pairs)
    assert report.ok and report.violations == ()


def test_dangling_criterion_reference(two_patient_corpus):
    c = two_patient_corpus
    pairs = c.pairs + (PairExample("P0001", "C9999", M),)
    report = validate_corpus(c.patients, c.trials, pairs)
    assert report.rules() == ["dangling criterion reference"]
    assert report.violations[0].entity_id.endswith("C9999")


def test_duplicate_pair(two_patient_corpus):
    c = two_patient_corpus
    report = validate_corpus(c.patients, c.trials, c.pairs + (c.pairs[0],))
    assert report.rules() == ["duplicate pair"]


def test_validate_is_pure(two_patient_corpus):
    c = two_patient_corpus
    bad = c.pairs + (PairExample("P0009", "C0001", M),)
    first = validate_corpus(c.patients, c.trials, bad)
    assert first == validate_corpus(c.patients, c.trials, bad)
    assert len(bad) == 5


def test_other_rules(two_patient_corpus):
    c = two_patient_corpus
    patients = c.patients + (PatientRecord("P0001", [], [], []),)
    wrong_trial = Trial("NCT00000002", [Criterion("C0003", "NCT00000001", INC, "x y z")])
    orphan = Criterion("C0004", "NCT00000001", EXC, "a b c", Provenance("C0001", "llm"))
    trial = Trial(c.trials[0].trial_id, c.trials[0].inclusion, c.trials[0].exclusion + (orphan,))
    report = validate_corpus(patients, (trial, wrong_trial), c.pairs)
    assert set(report.rules()) == {"duplicate patient id", "criterion trial mismatch", "augmented source kind mismatch"}


def test_unknown_label_must_come_from_another_trial(two_patient_corpus):
    c = two_patient_corpus
    pairs = (PairExample("P0001", "C0001", U, group_trial_id="NCT00000001"),)
    assert validate_corpus(c.patients, c.trials, pairs).rules() == ["unknown label from own trial"]


def test_blank_criterion_text_is_a_violation():
    trial = Trial("T", [Criterion("C1", "T", INC, "   ")])
    assert validate_corpus([], [trial], []).rules() == ["empty criterion text"]


def test_pair_counts():
    p = PatientRecord("P1", ["a", "b"], ["c"], [])
    assert (p.n_d, p.n_m, p.n_p) == (2, 1, 0)
    assert p.entries == ("a", "b", "c")
    t = Trial("T", [Criterion("C1", "T", INC, "x")], [])
    assert (t.n_i, t.n_e) == (1, 0)


def test_label_tokens():
    assert [m.value for m in MatchLabel] == ["match", "mismatch", "unknown"]
    assert MatchLabel.from_token("mismatch") is X
    with pytest.raises(ValueError, match="Match"):
        MatchLabel.from_token("Match")


@given(st.text())
def test_normalize_is_idempotent(text):
    once = normalize_text(text)
    assert normalize_text(once) == once
    assert once == once.strip()
    assert "  " not in once
