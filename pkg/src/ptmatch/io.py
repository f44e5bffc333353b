"""JSONL persistence for corpora.

A corpus directory holds ``patients.jsonl``, ``trials.jsonl`` and
``pairs.jsonl``. Keys are written in a fixed order so that saving the same
corpus twice gives byte-identical files.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Callable, Dict, Iterator, List, Optional, Tuple, TypeVar, Union

from .data import (
    Corpus,
    Criterion,
    CriterionKind,
    MatchLabel,
    PairExample,
    PatientRecord,
    Provenance,
    Trial,
)

PathLike = Union[str, Path]
T = TypeVar("T")

PATIENTS_FILE = "patients.jsonl"
TRIALS_FILE = "trials.jsonl"
PAIRS_FILE = "pairs.jsonl"


class CorpusFormatError(ValueError):
    """A corpus file line could not be decoded."""

    def __init__(self, path: PathLike, line: int, field: str, message: str):
        self.path = str(path)
        self.line = line
        self.field = field
        super().__init__(f"{self.path}: {message} at line {line} (field {field!r})")


def dumps_line(obj: Dict[str, Any]) -> str:
    return json.dumps(obj, ensure_ascii=False)


# -- encoders ---------------------------------------------------------------

def patient_to_dict(p: PatientRecord) -> Dict[str, Any]:
    return {
        "patient_id": p.patient_id,
        "diagnoses": list(p.diagnoses),
        "medications": list(p.medications),
        "procedures": list(p.procedures),
    }


def provenance_to_dict(prov: Optional[Provenance]) -> Dict[str, Any]:
    if prov is None:
        return {"kind": "original"}
    return {"kind": "augmented", "source_criterion_id": prov.source_criterion_id, "method_tag": prov.method_tag}


def criterion_to_dict(c: Criterion) -> Dict[str, Any]:
    return {"criterion_id": c.criterion_id, "text": c.text, "provenance": provenance_to_dict(c.provenance)}


def trial_to_dict(t: Trial) -> Dict[str, Any]:
    return {
        "trial_id": t.trial_id,
        "inclusion": [criterion_to_dict(c) for c in t.inclusion],
        "exclusion": [criterion_to_dict(c) for c in t.exclusion],
    }


def pair_to_dict(p: PairExample) -> Dict[str, Any]:
    return {
        "patient_id": p.patient_id,
        "criterion_id": p.criterion_id,
        "label": p.label.value,
        "split_tag": p.split_tag,
        "group_trial_id": p.group_trial_id,
    }


# -- decoders ---------------------------------------------------------------

def _require(obj: Dict[str, Any], key: str, kind: type, path, lineno: int, field: Optional[str] = None):
    if key not in obj:
        raise CorpusFormatError(path, lineno, field or key, "missing field")
    value = obj[key]
    if not isinstance(value, kind):
        raise CorpusFormatError(path, lineno, field or key, f"expected {kind.__name__}")
    return value


def _str_list(obj, key, path, lineno) -> Tuple[str, ...]:
    values = _require(obj, key, list, path, lineno)
    for i, v in enumerate(values):
        if not isinstance(v, str):
            raise CorpusFormatError(path, lineno, f"{key}[{i}]", "expected str")
    return tuple(values)


def patient_from_dict(obj, path="<memory>", lineno: int = 0) -> PatientRecord:
    return PatientRecord(
        patient_id=_require(obj, "patient_id", str, path, lineno),
        diagnoses=_str_list(obj, "diagnoses", path, lineno),
        medications=_str_list(obj, "medications", path, lineno),
        procedures=_str_list(obj, "procedures", path, lineno),
    )


def _provenance_from_dict(obj, path, lineno, field) -> Optional[Provenance]:
    if not isinstance(obj, dict):
        raise CorpusFormatError(path, lineno, field, "expected object")
    kind = obj.get("kind")
    if kind == "original":
        return None
    if kind != "augmented":
        raise CorpusFormatError(path, lineno, f"{field}.kind", f"unknown provenance token {kind!r}")
    src = _require(obj, "source_criterion_id", str, path, lineno, f"{field}.source_criterion_id")
    tag = _require(obj, "method_tag", str, path, lineno, f"{field}.method_tag")
    try:
        return Provenance(src, tag)
    except ValueError:
        raise CorpusFormatError(path, lineno, f"{field}.method_tag", f"unknown method tag {tag!r}") from None


def trial_from_dict(obj, path="<memory>", lineno: int = 0) -> Trial:
    trial_id = _require(obj, "trial_id", str, path, lineno)
    sections = {}
    for kind in CriterionKind:
        items = _require(obj, kind.value, list, path, lineno)
        parsed = []
        for i, item in enumerate(items):
            field = f"{kind.value}[{i}]"
            if not isinstance(item, dict):
                raise CorpusFormatError(path, lineno, field, "expected object")
            parsed.append(
                Criterion(
                    criterion_id=_require(item, "criterion_id", str, path, lineno, f"{field}.criterion_id"),
                    trial_id=trial_id,
                    kind=kind,
                    text=_require(item, "text", str, path, lineno, f"{field}.text"),
                    provenance=_provenance_from_dict(item.get("provenance", {"kind": "original"}), path, lineno, f"{field}.provenance"),
                )
            )
        sections[kind.value] = parsed
    return Trial(trial_id, sections["inclusion"], sections["exclusion"])


def pair_from_dict(obj, path="<memory>", lineno: int = 0) -> PairExample:
    token = _require(obj, "label", str, path, lineno)
    try:
        label = MatchLabel.from_token(token)
    except ValueError:
        raise CorpusFormatError(path, lineno, "label", f"unknown label token {token!r}") from None
    split_tag = obj.get("split_tag")
    if split_tag is not None and not isinstance(split_tag, str):
        raise CorpusFormatError(path, lineno, "split_tag", "expected str or null")
    group = obj.get("group_trial_id")
    if group is not None and not isinstance(group, str):
        raise CorpusFormatError(path, lineno, "group_trial_id", "expected str or null")
    return PairExample(
        patient_id=_require(obj, "patient_id", str, path, lineno),
        criterion_id=_require(obj, "criterion_id", str, path, lineno),
        label=label,
        split_tag=split_tag,
        group_trial_id=group,
    )


# -- files ------------------------------------------------------------------

def _iter_objects(path: Path) -> Iterator[Tuple[int, Dict[str, Any]]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(path, lineno, "<line>", f"malformed JSON ({exc.msg})") from None
            if not isinstance(obj, dict):
                raise CorpusFormatError(path, lineno, "<line>", "expected a JSON object")
            yield lineno, obj


def read_jsonl(path: PathLike, decode: Callable[..., T]) -> List[T]:
    path = Path(path)
    return [decode(obj, path, lineno) for lineno, obj in _iter_objects(path)]


def write_jsonl(path: PathLike, objs) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for obj in objs:
            fh.write(dumps_line(obj) + "\n")


def load_patients(path: PathLike) -> List[PatientRecord]:
    return read_jsonl(path, patient_from_dict)


def load_trials(path: PathLike) -> List[Trial]:
    return read_jsonl(path, trial_from_dict)


def load_pairs(path: PathLike) -> List[PairExample]:
    return read_jsonl(path, pair_from_dict)


def save_patients(path: PathLike, patients) -> None:
    write_jsonl(path, (patient_to_dict(p) for p in patients))


def save_trials(path: PathLike, trials) -> None:
    write_jsonl(path, (trial_to_dict(t) for t in trials))


def save_pairs(path: PathLike, pairs) -> None:
    write_jsonl(path, (pair_to_dict(p) for p in pairs))


def load_corpus(path: PathLike) -> Corpus:
    """Read a corpus directory. Missing files load as empty collections."""
    root = Path(path)
    if not root.is_dir():
        raise FileNotFoundError(f"corpus directory not found: {root}")

    def _maybe(name, loader):
        f = root / name
        return loader(f) if f.exists() else []

    return Corpus(
        patients=_maybe(PATIENTS_FILE, load_patients),
        trials=_maybe(TRIALS_FILE, load_trials),
        pairs=_maybe(PAIRS_FILE, load_pairs),
    )


def save_corpus(path: PathLike, corpus: Corpus) -> None:
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    save_patients(root / PATIENTS_FILE, corpus.patients)
    save_trials(root / TRIALS_FILE, corpus.trials)
    save_pairs(root / PAIRS_FILE, corpus.pairs)
