import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings, strategies as st

from ptmatch.data import Criterion, PatientRecord
from ptmatch.estimator import CheckpointError, PatientTrialMatcher
from ptmatch.model import EncoderConfig, Highway, MatchingNetwork, cosine_sim, memory_readout

from conftest import INC, TINY, small_synthetic

RECORD = PatientRecord("P1", ["ICD10 I10 essential hypertension", "ICD10 I48.91 atrial fibrillation"], ["warfarin 5 mg tablet", "aspirin 81 mg tablet"], [])


def matcher(**kw):
    params = dict(TINY, dtype="float64")
    params.update(kw)
    return PatientTrialMatcher(**params).init_network()


# -- cosine -------------------------------------------------------------------

def test_cosine_identities():
    v = np.array([1.0, 2.0, -3.0])
    assert cosine_sim(v, v) == pytest.approx(1.0)
    assert cosine_sim([1, 0], [0, 1]) == 0.0
    assert cosine_sim(v, -v) == pytest.approx(-1.0)
    with pytest.raises(ValueError, match="undefined similarity"):
        cosine_sim([0, 0], [1, 0])


_vec = st.lists(st.floats(-10, 10, allow_nan=False), min_size=3, max_size=3).filter(lambda v: np.linalg.norm(v) > 1e-3)


@given(_vec, _vec, st.floats(1e-3, 1e3), st.floats(1e-3, 1e3))
def test_cosine_scale_invariance(a, b, alpha, beta):
    assert abs(cosine_sim(alpha * np.array(a), beta * np.array(b)) - cosine_sim(a, b)) <= 1e-6


# -- highway ------------------------------------------------------------------

def _highway(bias):
    torch.manual_seed(0)
    hw = Highway(4).double()
    with torch.no_grad():
        hw.gate.weight.zero_()
        hw.gate.bias.fill_(bias)
    return hw


def test_highway_carry_and_transform():
    h = torch.randn(2, 4, 5, dtype=torch.float64)
    carry = _highway(-1e4)
    assert torch.allclose(carry(h), h)
    transform = _highway(1e4)
    assert torch.allclose(transform(h), torch.relu(transform.transform(h)))


def test_highway_half_gate():
    h = torch.randn(3, 4, 6, dtype=torch.float64)
    hw = _highway(0.0)
    expected = 0.5 * torch.relu(hw.transform(h)) + 0.5 * h
    assert torch.allclose(hw(h), expected)


def test_highway_literal_variant():
    h = torch.randn(1, 4, 3, dtype=torch.float64)
    hw = _highway(0.0)
    hw.literal = True
    H = torch.relu(hw.transform(h))
    assert torch.allclose(hw(h), torch.sigmoid(h) * H + 0.5 * H)


def test_highway_shape_error():
    with pytest.raises(ValueError):
        Highway(4)(torch.zeros(1, 3, 5))


# -- criterion path -------------------------------------------------------------

def test_criterion_embedding_shape_and_determinism():
    m = PatientTrialMatcher(embedding_dim=768, highway_channels=128).init_network()
    long = m.encode_criterion("Positive urine or serum pregnancy test for women of child bearing potential.")
    assert long.shape == (768,)
    assert np.array_equal(long, m.encode_criterion("Positive urine or serum pregnancy test for women of child bearing potential."))
    single = m.encode_criterion("Pregnancy")
    assert single.shape == (768,) and np.isfinite(single).all()


def test_criterion_trailing_whitespace():
    m = matcher()
    assert np.array_equal(m.encode_criterion("Prior stroke.  "), m.encode_criterion("Prior stroke."))
    assert np.array_equal(m.encode_criterion(Criterion("C", "T", INC, "Prior  stroke.")), m.encode_criterion("Prior stroke."))


# -- patient path ---------------------------------------------------------------

@pytest.mark.parametrize("readout", ["query_attention", "self_attention_pool", "mean_pool"])
def test_single_entry_record_returns_entry_embedding(readout):
    m = matcher(memory_readout=readout)
    rec = PatientRecord("P1", ["ICD10 I10 essential hypertension"], [], [])
    q = m.encode_criterion("High blood pressure.")
    assert np.allclose(m.encode_patient(rec, q), m.encode_text(rec.entries[0]))


def test_mean_pool_two_entries():
    m = matcher(memory_readout="mean_pool")
    rec = PatientRecord("P1", ["ICD10 I10 essential hypertension"], ["warfarin 5 mg tablet"], [])
    expected = (m.encode_text(rec.entries[0]) + m.encode_text(rec.entries[1])) / 2
    assert np.allclose(m.encode_patient(rec), expected)


def test_orthogonal_query_gives_uniform_weights():
    slots = torch.tensor([[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]], dtype=torch.float64)
    mask = torch.ones(1, 2, dtype=torch.float64)
    q = torch.tensor([[0.0, 0.0, 1.0]], dtype=torch.float64)
    att = memory_readout(slots, mask, "query_attention", q)
    assert torch.allclose(att, memory_readout(slots, mask, "mean_pool"))


def test_padding_slots_are_ignored():
    slots = torch.tensor([[[1.0, 0.0], [5.0, 5.0]]], dtype=torch.float64)
    mask = torch.tensor([[1.0, 0.0]], dtype=torch.float64)
    q = torch.tensor([[1.0, 1.0]], dtype=torch.float64)
    assert torch.allclose(memory_readout(slots, mask, "query_attention", q), slots[:, 0])


@pytest.mark.parametrize("readout", ["query_attention", "mean_pool"])
def test_medication_order_invariance(readout):
    m = matcher(memory_readout=readout)
    q = m.encode_criterion("Current anticoagulation.")
    swapped = PatientRecord("P1", RECORD.diagnoses, RECORD.medications[::-1], RECORD.procedures)
    assert np.allclose(m.encode_patient(RECORD, q), m.encode_patient(swapped, q))


def test_pair_embedding_similarity():
    m = matcher()
    pe = m.pair_embedding(RECORD, Criterion("C", "T", INC, "Atrial fibrillation."))
    assert pe.similarity == pytest.approx(cosine_sim(pe.x_P, pe.x_c))
    assert np.isfinite(pe.x_P).all() and np.isfinite(pe.x_c).all()


def test_empty_record_rejected_for_encoding():
    from ptmatch.training import TrainingError

    with pytest.raises(TrainingError, match="patient has no entries"):
        matcher().encode_patient(PatientRecord("P9", [], [], []))


# -- head -----------------------------------------------------------------------

def test_head_is_a_distribution():
    net = MatchingNetwork(EncoderConfig(**TINY)).double()
    x = torch.randn(10, 32, dtype=torch.float64)
    y = torch.randn(10, 32, dtype=torch.float64)
    p = net.predict_pair(x, y)
    assert torch.allclose(p.sum(-1), torch.ones(10, dtype=torch.float64), atol=1e-6)
    assert ((p > 0) & (p < 1)).all()
    with pytest.raises(ValueError):
        net.predict_pair(x, y[:, :5])


def test_zeroed_final_layer_is_uniform():
    net = MatchingNetwork(EncoderConfig(**TINY))
    with torch.no_grad():
        net.classifier.weight.zero_()
        net.classifier.bias.zero_()
    p = net.predict_pair(torch.randn(4, 32), torch.randn(4, 32))
    assert torch.allclose(p, torch.full((4, 3), 1 / 3))


def test_head_learns_separable_fixture():
    torch.manual_seed(0)
    rng = np.random.default_rng(0)
    d = 16
    xc = rng.normal(size=(50, d))
    labels = np.arange(50) % 3
    xp = np.where(labels[:, None] == 0, xc, np.where(labels[:, None] == 1, -xc, rng.normal(size=(50, d))))
    xc_t, xp_t = torch.tensor(xc), torch.tensor(xp)
    y = torch.tensor(labels)
    net = MatchingNetwork(EncoderConfig(embedding_dim=d, highway_channels=4, highway_layers=1)).double()
    opt = torch.optim.Adam(net.parameters(), lr=1e-2)
    for _ in range(300):
        opt.zero_grad()
        loss = torch.nn.functional.cross_entropy(net.head_logits(xp_t, xc_t), y)
        loss.backward()
        opt.step()
    acc = (net.predict_pair(xp_t, xc_t).argmax(-1) == y).double().mean().item()
    assert acc >= 0.95


# -- whole network ----------------------------------------------------------------

@settings(max_examples=8, deadline=None)
@given(st.integers(0, 10_000))
def test_forward_is_finite_on_generated_corpora(seed):
    _, corpus = small_synthetic(seed=seed, n_patients=5, n_trials=2, n_criteria=6)
    m = PatientTrialMatcher(**TINY, seed=seed).init_network()
    probs = m.predict_proba(corpus)
    assert np.isfinite(probs).all()
    assert np.allclose(probs.sum(1), 1.0, atol=1e-5)


def test_checkpoint_round_trip(tmp_path):
    m = matcher()
    path = m.save(tmp_path / "m.pt")
    loaded = PatientTrialMatcher.load(path)
    assert loaded.get_params() == m.get_params()
    assert np.array_equal(loaded.encode_criterion("Prior stroke."), m.encode_criterion("Prior stroke."))
    with pytest.raises(CheckpointError, match="embedding_dim"):
        PatientTrialMatcher.load(path, embedding_dim=768)
