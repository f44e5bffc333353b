"""Outbound-prompt screening against the private patient corpus.

Only trial criteria are ever placed into prompts. The guard here is a
second, independent check: any prompt that contains a phrase from a patient
record, or something shaped like an identifier, is blocked in ``enforce``
mode and logged in both modes.
"""

from __future__ import annotations

import json
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, FrozenSet, Iterable, List, Optional, Sequence, Tuple

from ..data import PatientRecord, normalize_text

DEFAULT_PATTERNS: Tuple[Tuple[str, str], ...] = (
    ("patient-id", r"\bP\d{4,}\b"),
    ("mrn", r"\bMRN[:#\s]*\d{5,}\b"),
    ("ssn", r"\b\d{3}-\d{2}-\d{4}\b"),
    ("date", r"\b\d{4}-\d{2}-\d{2}\b|\b\d{1,2}/\d{1,2}/\d{2,4}\b"),
    ("phone", r"\(?\b\d{3}\)?[-.\s]\d{3}[-.\s]\d{4}\b"),
    ("email", r"\b[\w.+-]+@[\w-]+\.[\w.]+\b"),
)

ENFORCE = "enforce"
AUDIT_ONLY = "audit_only"


class PrivacyViolationError(RuntimeError):
    def __init__(self, criterion_id: str, matches: Sequence[str]):
        self.criterion_id = criterion_id
        self.matches = tuple(matches)
        super().__init__(f"prompt for {criterion_id} blocked: {', '.join(self.matches)}")


def _fold(text: str) -> str:
    return normalize_text(text).casefold()


@dataclass(frozen=True)
class PrivacyPolicy:
    patient_vocabulary: FrozenSet[str]
    pattern_blocklist: Tuple[Tuple[str, str], ...] = DEFAULT_PATTERNS
    mode: str = ENFORCE

    def __post_init__(self):
        if self.mode not in (ENFORCE, AUDIT_ONLY):
            raise ValueError(f"unknown privacy mode {self.mode!r}")
        object.__setattr__(
            self, "_compiled", tuple((name, re.compile(rx)) for name, rx in self.pattern_blocklist)
        )

    @classmethod
    def from_patients(
        cls,
        patients: Iterable[PatientRecord],
        mode: str = ENFORCE,
        patterns: Sequence[Tuple[str, str]] = DEFAULT_PATTERNS,
    ) -> "PrivacyPolicy":
        vocab = set()
        for p in patients:
            vocab.update(_fold(e) for e in p.entries if _fold(e))
        return cls(frozenset(vocab), tuple(patterns), mode)


@dataclass(frozen=True)
class ScreenResult:
    passed: bool
    matches: Tuple[str, ...] = ()


def screen_prompt(prompt: str, policy: PrivacyPolicy) -> ScreenResult:
    """Pass iff no vocabulary phrase and no blocklist pattern occurs in ``prompt``.

    Phrase checks are case-insensitive substring tests on the normalized
    prompt; pattern checks run on the prompt as written.
    """
    folded = _fold(prompt)
    hits: List[str] = sorted(phrase for phrase in policy.patient_vocabulary if phrase in folded)
    for name, rx in policy._compiled:
        if rx.search(prompt):
            hits.append(f"pattern: {name}")
    return ScreenResult(not hits, tuple(hits))


@dataclass(frozen=True)
class PrivacyAuditEntry:
    timestamp: str
    criterion_id: str
    decision: str  # pass | blocked | logged
    matches: Tuple[str, ...] = ()
    prompt: Optional[str] = None
    outbound: bool = False

    def to_dict(self) -> dict:
        return {
            "timestamp": self.timestamp,
            "criterion_id": self.criterion_id,
            "decision": self.decision,
            "matches": list(self.matches),
            "outbound": self.outbound,
            "prompt": self.prompt,
        }


def _utc_now() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())


@dataclass
class AuditLog:
    """Serialized appender; optionally mirrored to a JSONL file."""

    path: Optional[Path] = None
    clock: Callable[[], str] = _utc_now
    entries: List[PrivacyAuditEntry] = field(default_factory=list)

    def __post_init__(self):
        self._lock = threading.Lock()
        if self.path is not None:
            self.path = Path(self.path)
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.path.write_text("", encoding="utf-8")

    def record(self, criterion_id: str, prompt: str, result: ScreenResult, policy: PrivacyPolicy) -> PrivacyAuditEntry:
        if result.passed:
            decision = "pass"
        else:
            decision = "blocked" if policy.mode == ENFORCE else "logged"
        entry = PrivacyAuditEntry(
            timestamp=self.clock(),
            criterion_id=criterion_id,
            decision=decision,
            matches=result.matches,
            prompt=prompt,
            outbound=decision != "blocked",
        )
        with self._lock:
            self.entries.append(entry)
            if self.path is not None:
                with open(self.path, "a", encoding="utf-8") as fh:
                    fh.write(json.dumps(entry.to_dict(), ensure_ascii=False) + "\n")
        return entry

    def outbound_prompts(self) -> List[str]:
        return [e.prompt for e in self.entries if e.outbound and e.prompt is not None]


def screen_and_log(
    criterion_id: str, prompt: str, policy: PrivacyPolicy, audit: Optional[AuditLog]
) -> PrivacyAuditEntry:
    """Screen, append to the audit log, and raise if enforce mode blocks."""
    result = screen_prompt(prompt, policy)
    log = audit if audit is not None else AuditLog()
    entry = log.record(criterion_id, prompt, result, policy)
    if entry.decision == "blocked":
        raise PrivacyViolationError(criterion_id, result.matches)
    return entry
