import pytest
from hypothesis import given, strategies as st

from ptmatch.augment import (
    AssemblyError,
    AugmentationRecord,
    MockParaphraseLLM,
    PrivacyPolicy,
    PromptTemplate,
    assemble_augmented_set,
    augment_criterion,
    augmentation_map,
    propagate_labels,
)
from ptmatch.data import Criterion, PairExample, Trial

from conftest import EXC, INC, M, U, X

TRIAL = Trial(
    "T1",
    [Criterion("I1", "T1", INC, "History of atrial fibrillation."), Criterion("I2", "T1", INC, "Current use of warfarin.")],
    [Criterion("E1", "T1", EXC, "Prior intracerebral hemorrhage.")],
)


def rec(src, *outputs):
    return AugmentationRecord(src, "llm", tuple(outputs), "")


def test_union_with_kinds():
    s = assemble_augmented_set(TRIAL, [rec("I1", "a a a", "b b b"), rec("E1", "c c c")])
    assert [c.text for c in s.augmented] == ["a a a", "b b b", "c c c"]
    assert [c.kind for c in s.augmented] == [INC, INC, EXC]
    assert all(c.trial_id == "T1" and not c.is_original for c in s.augmented)
    assert s.originals == TRIAL.criteria


def test_cross_record_duplicates_collapse():
    s = assemble_augmented_set(TRIAL, [rec("I1", "a a a"), rec("I2", "a a a")])
    assert [c.text for c in s.augmented] == ["a a a"]


def test_mock_outputs_give_nine():
    records = [augment_criterion(c, PromptTemplate(k_variants=3), MockParaphraseLLM(0), PrivacyPolicy(frozenset())) for c in TRIAL.criteria]
    assert [len(r.outputs) for r in records] == [3, 3, 3]
    assert len(assemble_augmented_set(TRIAL, records)) == 9


def test_foreign_source_rejected():
    with pytest.raises(AssemblyError):
        assemble_augmented_set(TRIAL, [rec("Z9", "a a a")])


def test_record_order_does_not_change_ids():
    a = assemble_augmented_set(TRIAL, [rec("I1", "a a a"), rec("E1", "c c c")])
    b = assemble_augmented_set(TRIAL, [rec("E1", "c c c"), rec("I1", "a a a")])
    assert a == b


@given(st.lists(st.tuples(st.sampled_from(["I1", "I2", "E1"]), st.lists(st.sampled_from(["p q r", "s t u", "v w x", "y z z"]), max_size=3, unique=True)), max_size=4))
def test_cardinality_bound(spec):
    records = [rec(src, *outs) for src, outs in spec]
    s = assemble_augmented_set(TRIAL, records)
    total = sum(len(r.outputs) for r in records)
    distinct = len({o for r in records for o in r.outputs})
    assert len(s) <= total
    assert len(s) == distinct


def test_propagation_inherits_label():
    s = assemble_augmented_set(TRIAL, [rec("I1", "a a a", "b b b", "c c c")])
    out = propagate_labels([PairExample("P1", "I1", M)], augmentation_map(s.augmented))
    assert [(p.criterion_id, p.label) for p in out] == [("I1", M), ("I1.llm1", M), ("I1.llm2", M), ("I1.llm3", M)]


def test_unknown_propagates_as_unknown():
    s = assemble_augmented_set(TRIAL, [rec("E1", "c c c")])
    out = propagate_labels([PairExample("P1", "E1", U, group_trial_id="T2")], augmentation_map(s.augmented))
    assert [p.label for p in out] == [U, U]
    assert out[1].group_trial_id == "T2"


def test_forty_pairs_from_ten():
    records = [rec(c.criterion_id, f"{c.criterion_id} v1 x", f"{c.criterion_id} v2 x", f"{c.criterion_id} v3 x") for c in TRIAL.criteria]
    s = assemble_augmented_set(TRIAL, records)
    pairs = [PairExample(f"P{i}", c, M if i % 2 else X) for i in range(4) for c in ("I1", "I2", "E1")][:10]
    assert len(pairs) == 10
    assert len(propagate_labels(pairs, augmentation_map(s.augmented))) == 40


def test_unlabeled_source_rejected():
    s = assemble_augmented_set(TRIAL, [rec("I2", "a a a")])
    with pytest.raises(AssemblyError):
        propagate_labels([PairExample("P1", "I1", M)], augmentation_map(s.augmented))
