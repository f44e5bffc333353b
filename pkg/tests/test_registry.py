import pytest
from hypothesis import given, strategies as st

from ptmatch.data import Criterion, Trial
from ptmatch.ingestion import (
    STROKE_TRIALS,
    CannedRegistryClient,
    FixtureRegistryClient,
    HttpRegistryClient,
    ParseError,
    RawTrialDocument,
    RegistryInputError,
    RegistryNotFoundError,
    RegistryTransportError,
    fetch_trial_criteria,
    parse_eligibility,
    render_eligibility,
)

from conftest import EXC, INC


def test_fixture_has_both_headings():
    doc = fetch_trial_criteria("NCT03263117", FixtureRegistryClient())
    assert "Inclusion Criteria" in doc.eligibility_text
    assert "Exclusion Criteria" in doc.eligibility_text
    assert doc.trial_id == "NCT03263117"


def test_bad_id_rejected_before_request():
    client = CannedRegistryClient({})
    with pytest.raises(RegistryInputError):
        fetch_trial_criteria("BADID", client)
    assert client.requests == []


def test_canned_body_returned_verbatim():
    body = "Inclusion Criteria: - A."
    doc = fetch_trial_criteria("NCT00000001", CannedRegistryClient({"NCT00000001": body}))
    assert doc.eligibility_text == body


def test_unknown_id_is_not_found():
    with pytest.raises(RegistryNotFoundError):
        fetch_trial_criteria("NCT99999999", FixtureRegistryClient())


class _Resp:
    def __init__(self, status, body=None):
        self.status_code = status
        self._body = body

    def json(self):
        return self._body


class _Session:
    def __init__(self, responses):
        self.responses = list(responses)
        self.calls = 0

    def get(self, url, params=None, timeout=None, headers=None):
        self.calls += 1
        r = self.responses.pop(0)
        if isinstance(r, Exception):
            raise r
        return r


def test_http_client_retries_then_reports_count():
    session = _Session([ConnectionError("down")] * 3)
    client = HttpRegistryClient(max_retries=2, backoff=0.0, session=session)
    with pytest.raises(RegistryTransportError) as info:
        fetch_trial_criteria("NCT03263117", client)
    assert info.value.retries == 2 and session.calls == 3


def test_http_client_recovers_after_server_error():
    study = {"protocolSection": {"eligibilityModule": {"eligibilityCriteria": "Inclusion Criteria:\n- A b c."}}}
    session = _Session([_Resp(503), _Resp(200, study)])
    doc = fetch_trial_criteria("NCT03263117", HttpRegistryClient(max_retries=2, backoff=0.0, session=session))
    assert doc.eligibility_text.startswith("Inclusion Criteria")


def test_http_client_404():
    client = HttpRegistryClient(session=_Session([_Resp(404)]), backoff=0.0)
    with pytest.raises(RegistryNotFoundError):
        fetch_trial_criteria("NCT03263117", client)


def _doc(text, tid="NCT00000001"):
    return RawTrialDocument(tid, text, "1970-01-01T00:00:00Z")


def test_parse_table_example():
    text = (
        "Inclusion Criteria:\n- Acute ischemic stroke patients.\n"
        "Exclusion Criteria:\n- Positive urine or serum pregnancy test for women of child bearing potential."
    )
    trial = parse_eligibility(_doc(text))
    assert [c.text for c in trial.inclusion] == ["Acute ischemic stroke patients."]
    assert [c.text for c in trial.exclusion] == [
        "Positive urine or serum pregnancy test for women of child bearing potential."
    ]


def test_only_inclusion_section():
    trial = parse_eligibility(_doc("inclusion criteria:\n* Age 18 years or older.\n* Signed consent."))
    assert trial.n_i == 2 and trial.n_e == 0


def test_no_sections_is_parse_error():
    with pytest.raises(ParseError, match="no criteria sections"):
        parse_eligibility(_doc("Patients must be adults."))


def test_numbered_fixture_counts():
    # NCT03496883 is recorded with three numbered items under each heading
    trial = parse_eligibility(fetch_trial_criteria("NCT03496883", FixtureRegistryClient()))
    assert (trial.n_i, trial.n_e) == (3, 3)
    assert trial.exclusion[1].text == "Severe renal impairment requiring hemodialysis."


def test_sentence_fallback():
    trial = parse_eligibility(fetch_trial_criteria("NCT03805308", FixtureRegistryClient()))
    assert [c.text for c in trial.exclusion] == [
        "Pre-existing dementia.",
        "Heart failure with New York Heart Association class III or IV symptoms.",
        "Pregnancy or breastfeeding.",
    ]


def test_all_stroke_fixtures_parse():
    for nct in STROKE_TRIALS:
        trial = parse_eligibility(fetch_trial_criteria(nct, FixtureRegistryClient()))
        assert trial.n_i > 0 and trial.n_e > 0
        assert all(c.trial_id == nct for c in trial.criteria)


_statement = st.text(
    alphabet=st.characters(whitelist_categories=("Lu", "Ll", "Nd", "Zs"), whitelist_characters=".,;()-/%<>="),
    min_size=1,
    max_size=60,
).map(lambda s: " ".join(s.split())).filter(bool)


@given(st.lists(_statement, min_size=1, max_size=5), st.lists(_statement, max_size=5))
def test_render_parse_round_trip(inc, exc):
    trial = Trial(
        "NCT00000001",
        [Criterion(f"I{k}", "NCT00000001", INC, t) for k, t in enumerate(inc)],
        [Criterion(f"E{k}", "NCT00000001", EXC, t) for k, t in enumerate(exc)],
    )
    parsed = parse_eligibility(_doc(render_eligibility(trial)))
    assert [c.text for c in parsed.inclusion] == inc
    assert [c.text for c in parsed.exclusion] == exc
