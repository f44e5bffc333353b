"""ClinicalTrials.gov access and eligibility-text parsing."""

from __future__ import annotations

import json
import logging
import re
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Protocol, Tuple, Union

from ..data import Criterion, CriterionKind, Trial, normalize_text

logger = logging.getLogger(__name__)

NCT_PATTERN = re.compile(r"^NCT\d{8}$")
FIXTURE_DIR = Path(__file__).resolve().parent.parent / "fixtures" / "registry"
FIXED_FETCH_TIME = "1970-01-01T00:00:00Z"

# The six stroke trials used for the reference evaluation.
STROKE_TRIALS = (
    "NCT03735979",
    "NCT03805308",
    "NCT03263117",
    "NCT03496883",
    "NCT03876457",
    "NCT03545607",
)


class RegistryError(Exception):
    pass


class RegistryInputError(RegistryError, ValueError):
    pass


class RegistryNotFoundError(RegistryError):
    pass


class RegistryTransportError(RegistryError):
    def __init__(self, message: str, retries: int):
        self.retries = retries
        super().__init__(f"{message} (after {retries} retries)")


class ParseError(ValueError):
    pass


@dataclass(frozen=True)
class RawTrialDocument:
    trial_id: str
    eligibility_text: str
    fetched_at: str

    def to_dict(self) -> Dict[str, str]:
        return {"trial_id": self.trial_id, "eligibility_text": self.eligibility_text, "fetched_at": self.fetched_at}


class RegistryClient(Protocol):
    def get_eligibility(self, nct_id: str) -> Tuple[str, str]:
        """Return ``(eligibility_text, fetched_at)`` for a study."""


def _eligibility_from_study(study: dict) -> Optional[str]:
    return study.get("protocolSection", {}).get("eligibilityModule", {}).get("eligibilityCriteria")


class HttpRegistryClient:
    """Live client for the ClinicalTrials.gov v2 API (eligibility module only)."""

    BASE_URL = "https://clinicaltrials.gov/api/v2/studies"

    def __init__(self, timeout: float = 15.0, max_retries: int = 3, backoff: float = 1.0, session=None):
        self.timeout = timeout
        self.max_retries = max_retries
        self.backoff = backoff
        self._session = session

    def _get(self, url, params):
        if self._session is None:
            import requests

            self._session = requests.Session()
        return self._session.get(url, params=params, timeout=self.timeout, headers={"Accept": "application/json"})

    def get_eligibility(self, nct_id: str) -> Tuple[str, str]:
        url = f"{self.BASE_URL}/{nct_id}"
        params = {"fields": "protocolSection.identificationModule,protocolSection.eligibilityModule"}
        last_exc: Optional[Exception] = None
        for attempt in range(self.max_retries + 1):
            try:
                resp = self._get(url, params)
            except Exception as exc:  # requests raises a family of transport errors
                last_exc = exc
                logger.warning("registry request for %s failed (attempt %d): %s", nct_id, attempt + 1, exc)
                if attempt < self.max_retries:
                    time.sleep(self.backoff * (2**attempt))
                continue
            if resp.status_code == 404:
                raise RegistryNotFoundError(f"study {nct_id} not found")
            if resp.status_code >= 500:
                last_exc = RuntimeError(f"HTTP {resp.status_code}")
                if attempt < self.max_retries:
                    time.sleep(self.backoff * (2**attempt))
                continue
            if resp.status_code != 200:
                raise RegistryError(f"HTTP {resp.status_code} for {nct_id}")
            text = _eligibility_from_study(resp.json())
            if not text:
                raise RegistryNotFoundError(f"study {nct_id} has no eligibility criteria")
            return text, time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())
        raise RegistryTransportError(f"could not reach registry for {nct_id}: {last_exc}", self.max_retries)


class FixtureRegistryClient:
    """Replays study JSON recorded under ``<directory>/<nct>.json``."""

    def __init__(self, directory: Union[str, Path] = FIXTURE_DIR):
        self.directory = Path(directory)

    def get_eligibility(self, nct_id: str) -> Tuple[str, str]:
        path = self.directory / f"{nct_id}.json"
        if not path.exists():
            raise RegistryNotFoundError(f"study {nct_id} not found in {self.directory}")
        study = json.loads(path.read_text(encoding="utf-8"))
        text = _eligibility_from_study(study)
        if not text:
            raise RegistryNotFoundError(f"study {nct_id} has no eligibility criteria")
        return text, study.get("fetchedAt", FIXED_FETCH_TIME)


class CannedRegistryClient:
    """In-memory mock mapping NCT ids to eligibility bodies."""

    def __init__(self, bodies: Dict[str, str]):
        self.bodies = dict(bodies)
        self.requests: List[str] = []

    def get_eligibility(self, nct_id: str) -> Tuple[str, str]:
        self.requests.append(nct_id)
        if nct_id not in self.bodies:
            raise RegistryNotFoundError(f"study {nct_id} not found")
        return self.bodies[nct_id], FIXED_FETCH_TIME


def fetch_trial_criteria(nct_id: str, registry_client: RegistryClient) -> RawTrialDocument:
    if not NCT_PATTERN.match(nct_id or ""):
        raise RegistryInputError(f"not an NCT identifier: {nct_id!r}")
    text, fetched_at = registry_client.get_eligibility(nct_id)
    if not text or not text.strip():
        raise RegistryNotFoundError(f"study {nct_id} returned empty eligibility text")
    return RawTrialDocument(nct_id, text, fetched_at)


# -- parsing ----------------------------------------------------------------

_HEADING = re.compile(r"^\s*(?P<kind>inclusion|exclusion)\s+criteria\s*:?\s*(?P<rest>.*)$", re.IGNORECASE)
_BULLET = re.compile(r"^\s*(?:[-*•●·]|\(?\d{1,3}[.)])\s+(?P<body>.*)$")
_SENTENCE_SPLIT = re.compile(r"(?<=[.;])\s+(?=[A-Z0-9])")


def _split_sections(text: str) -> Dict[str, List[str]]:
    sections: Dict[str, List[str]] = {}
    current: Optional[str] = None
    for line in text.splitlines():
        m = _HEADING.match(line)
        if m:
            current = m.group("kind").lower()
            sections.setdefault(current, [])
            rest = m.group("rest").strip()
            if rest:
                sections[current].append(rest)
            continue
        if current is not None:
            sections[current].append(line)
    return sections


def split_statements(lines: List[str]) -> List[str]:
    """Bullets (``-``, ``*``, ``•``, numbered) first; sentence boundaries otherwise."""
    items: List[List[str]] = []
    bulleted: List[bool] = []
    open_item = False
    for raw in lines:
        line = raw.strip()
        if not line:
            open_item = False
            continue
        m = _BULLET.match(line)
        if m:
            items.append([m.group("body")])
            bulleted.append(True)
            open_item = True
        elif open_item:
            items[-1].append(line)
        else:
            items.append([line])
            bulleted.append(False)
            open_item = True

    out: List[str] = []
    for parts, is_bullet in zip(items, bulleted):
        text = normalize_text(" ".join(parts))
        if not text:
            continue
        if is_bullet:
            out.append(text)
        else:
            out.extend(s for s in (normalize_text(x) for x in _SENTENCE_SPLIT.split(text)) if s)
    return out


def parse_eligibility(raw: RawTrialDocument) -> Trial:
    if not raw.eligibility_text or not raw.eligibility_text.strip():
        raise ParseError("empty eligibility text")
    sections = _split_sections(raw.eligibility_text)
    if not sections:
        raise ParseError("no criteria sections")

    def _criteria(kind: CriterionKind, tag: str) -> List[Criterion]:
        texts = split_statements(sections.get(kind.value, []))
        return [
            Criterion(f"{raw.trial_id}-{tag}{k:02d}", raw.trial_id, kind, t)
            for k, t in enumerate(texts, start=1)
        ]

    return Trial(
        raw.trial_id,
        _criteria(CriterionKind.INCLUSION, "I"),
        _criteria(CriterionKind.EXCLUSION, "E"),
    )


def render_eligibility(trial: Trial) -> str:
    """Registry-style text for a trial; inverse of ``parse_eligibility`` on texts."""
    blocks = ["Inclusion Criteria:", ""]
    blocks += [f"* {c.text}" for c in trial.inclusion]
    blocks += ["", "Exclusion Criteria:", ""]
    blocks += [f"* {c.text}" for c in trial.exclusion]
    return "\n".join(blocks) + "\n"
