"""Criteria- and trial-level metrics, per-trial tables, split experiments and case reports."""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from sklearn.base import clone

from .data import LABELS, Corpus, CriterionKind, MatchLabel, PairExample, Trial
from .ingestion.pairs import build_pair_dataset

logger = logging.getLogger(__name__)

AVERAGINGS = ("match_positive", "macro")
HARD_F1_THRESHOLD = 0.6
TRIAL_LABELS = (MatchLabel.MATCH, MatchLabel.MISMATCH)


class EvaluationError(ValueError):
    pass


def _as_label(value) -> MatchLabel:
    if isinstance(value, MatchLabel):
        return value
    if isinstance(value, (int, np.integer)):
        return LABELS[int(value)]
    return MatchLabel.from_token(str(value))


@dataclass(frozen=True)
class ConfusionMatrix:
    """Integer counts indexed ``[gold][pred]`` over ``labels``."""

    counts: np.ndarray
    labels: Tuple[MatchLabel, ...] = LABELS

    @classmethod
    def from_labels(cls, gold: Sequence, pred: Sequence, labels: Tuple[MatchLabel, ...] = LABELS) -> "ConfusionMatrix":
        pos = {label: i for i, label in enumerate(labels)}
        counts = np.zeros((len(labels), len(labels)), dtype=np.int64)
        for g, p in zip(gold, pred):
            counts[pos[_as_label(g)], pos[_as_label(p)]] += 1
        counts.setflags(write=False)
        return cls(counts, labels)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def gold_counts(self) -> Dict[str, int]:
        return {label.value: int(n) for label, n in zip(self.labels, self.counts.sum(axis=1))}

    def one_vs_rest(self, label: MatchLabel) -> Tuple[float, float, float]:
        i = self.labels.index(label)
        tp = self.counts[i, i]
        fp = self.counts[:, i].sum() - tp
        fn = self.counts[i, :].sum() - tp
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        return float(precision), float(recall), _f1(precision, recall)

    def to_list(self) -> List[List[int]]:
        return self.counts.tolist()


def _f1(p: float, r: float) -> float:
    return float(2 * p * r / (p + r)) if p + r > 0 else 0.0


@dataclass(frozen=True)
class MetricReport:
    level: str
    precision: float
    recall: float
    f1: float
    averaging: str
    n: int

    def to_dict(self) -> dict:
        return asdict(self)


def _report(cm: ConfusionMatrix, level: str, averaging: str) -> MetricReport:
    if averaging == "match_positive":
        p, r, f = cm.one_vs_rest(MatchLabel.MATCH)
    elif averaging == "macro":
        per_class = [cm.one_vs_rest(label) for label in cm.labels]
        p = float(np.mean([x[0] for x in per_class]))
        r = float(np.mean([x[1] for x in per_class]))
        f = _f1(p, r)
    else:
        raise EvaluationError(f"unknown averaging {averaging!r}")
    return MetricReport(level, p, r, f, averaging, cm.total)


def _align(predictions, gold) -> Tuple[list, list]:
    if isinstance(predictions, Mapping) != isinstance(gold, Mapping):
        raise EvaluationError("predictions and gold must both be mappings or both be sequences")
    if isinstance(predictions, Mapping):
        missing_pred = sorted(set(gold) - set(predictions), key=str)
        missing_gold = sorted(set(predictions) - set(gold), key=str)
        if missing_pred or missing_gold:
            raise EvaluationError(
                f"misaligned prediction and gold sets: missing predictions for {missing_pred[:10]}, "
                f"missing gold for {missing_gold[:10]}"
            )
        keys = sorted(gold, key=str)
        return [predictions[k] for k in keys], [gold[k] for k in keys]
    predictions, gold = list(predictions), list(gold)
    if len(predictions) != len(gold):
        raise EvaluationError(f"misaligned prediction and gold sets: {len(predictions)} predictions vs {len(gold)} gold")
    return predictions, gold


def criteria_level_metrics(predictions, gold) -> Tuple[Dict[str, MetricReport], ConfusionMatrix]:
    """Three-class confusion plus match-positive and macro reports.

    ``predictions`` and ``gold`` are either equal-length sequences aligned by
    position or mappings keyed by ``(patient_id, criterion_id)``.
    """
    predictions, gold = _align(predictions, gold)
    if not gold:
        raise EvaluationError("empty prediction set")
    cm = ConfusionMatrix.from_labels(gold, predictions)
    return {a: _report(cm, "criteria", a) for a in AVERAGINGS}, cm


# -- trial level ----------------------------------------------------------------

def aggregate_trial(incl_preds: Sequence, excl_preds: Sequence, strict: bool = False) -> MatchLabel:
    """Conjunction over one (patient, trial) group's criterion predictions.

    Default semantics: every inclusion predicted match and every exclusion
    predicted mismatch. ``strict=True`` asks for match on every criterion.
    """
    incl = [_as_label(p) if p is not None else None for p in incl_preds]
    excl = [_as_label(p) if p is not None else None for p in excl_preds]
    if any(p is None for p in incl + excl):
        raise EvaluationError("missing criterion prediction")
    want_excl = MatchLabel.MATCH if strict else MatchLabel.MISMATCH
    ok = all(p is MatchLabel.MATCH for p in incl) and all(p is want_excl for p in excl)
    return MatchLabel.MATCH if ok else MatchLabel.MISMATCH


@dataclass(frozen=True)
class TrialDecisions:
    """Per-(patient, trial) eligibility decisions and the semantics that produced them."""

    decisions: Dict[Tuple[str, str], MatchLabel]
    strict: bool


def aggregate_groups(
    pairs: Sequence[PairExample],
    labels: Sequence,
    trials: Iterable[Trial],
    strict: bool = False,
) -> TrialDecisions:
    """Aggregate criterion labels (predicted or gold) to per-group trial decisions.

    Only the group trial's own original criteria count; each group must
    carry a label for every one of them.
    """
    if len(pairs) != len(labels):
        raise EvaluationError("pairs and labels differ in length")
    trial_index = {t.trial_id: t for t in trials}
    owner = {c.criterion_id: t.trial_id for t in trial_index.values() for c in t.criteria}
    seen: Dict[Tuple[str, str], Dict[str, MatchLabel]] = {}
    for pair, label in zip(pairs, labels):
        tid = pair.group_trial_id or owner.get(pair.criterion_id)
        if tid not in trial_index:
            raise EvaluationError(f"pair {pair.patient_id}/{pair.criterion_id} names unknown trial {tid!r}")
        seen.setdefault((pair.patient_id, tid), {})[pair.criterion_id] = _as_label(label)
    out: Dict[Tuple[str, str], MatchLabel] = {}
    for (pid, tid), got in seen.items():
        trial = trial_index[tid]
        incl, excl = [], []
        for c in trial.originals():
            if c.criterion_id not in got:
                raise EvaluationError(f"missing criterion prediction for {pid}/{c.criterion_id}")
            (incl if c.kind is CriterionKind.INCLUSION else excl).append(got[c.criterion_id])
        out[(pid, tid)] = aggregate_trial(incl, excl, strict)
    return TrialDecisions(out, strict)


def trial_level_metrics(predicted: TrialDecisions, gold: TrialDecisions) -> Tuple[MetricReport, ConfusionMatrix]:
    if predicted.strict != gold.strict:
        raise EvaluationError("gold and predicted trial decisions use different aggregation semantics")
    preds, golds = _align(predicted.decisions, gold.decisions)
    if not golds:
        raise EvaluationError("empty prediction set")
    cm = ConfusionMatrix.from_labels(golds, preds, TRIAL_LABELS)
    return _report(cm, "trial", "match_positive"), cm


def report_json(report: MetricReport, cm: ConfusionMatrix) -> dict:
    """The serialized shape written by ``evaluate --out``."""
    d = report.to_dict()
    d["confusion"] = cm.to_list()
    d["labels"] = [label.value for label in cm.labels]
    return d


def per_trial_breakdown(
    pairs: Sequence[PairExample],
    predictions: Sequence,
    trials: Iterable[Trial],
) -> Dict[str, MetricReport]:
    """Match-positive criteria-level report per trial, ranked by F1 (best first).

    A pair belongs to its group trial. Listed trials without pairs are
    omitted with a warning.
    """
    if len(pairs) != len(predictions):
        raise EvaluationError("pairs and predictions differ in length")
    owner = {c.criterion_id: t.trial_id for t in trials for c in t.criteria}
    trial_ids = list(dict.fromkeys(t.trial_id for t in trials))
    buckets: Dict[str, Tuple[list, list]] = {}
    for pair, pred in zip(pairs, predictions):
        tid = pair.group_trial_id or owner.get(pair.criterion_id)
        g, p = buckets.setdefault(tid, ([], []))
        g.append(pair.label)
        p.append(pred)
    table = {}
    for tid in trial_ids:
        if tid not in buckets:
            warnings.warn(f"trial {tid} has no evaluated pairs; omitted", stacklevel=2)
            continue
        reports, _ = criteria_level_metrics(buckets[tid][1], buckets[tid][0])
        table[tid] = reports["match_positive"]
    return dict(sorted(table.items(), key=lambda kv: (-kv[1].f1, kv[0])))


def difficulty_labels(table: Mapping[str, MetricReport], threshold: float = HARD_F1_THRESHOLD) -> Dict[str, str]:
    return {tid: ("hard" if r.f1 < threshold else "easy") for tid, r in table.items()}


def format_breakdown(table: Mapping[str, MetricReport]) -> str:
    lines = [f"{'trial':<14}{'precision':>10}{'recall':>10}{'f1':>10}{'n':>8}"]
    for tid, r in table.items():
        lines.append(f"{tid:<14}{r.precision:>10.3f}{r.recall:>10.3f}{r.f1:>10.3f}{r.n:>8d}")
    return "\n".join(lines)


# -- generalizability experiments -----------------------------------------------

@dataclass(frozen=True)
class SplitSpec:
    name: str
    train_trials: frozenset
    test_trials: frozenset
    difficulty_labels: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "train_trials", frozenset(self.train_trials))
        object.__setattr__(self, "test_trials", frozenset(self.test_trials))
        overlap = self.train_trials & self.test_trials
        if overlap:
            raise EvaluationError(f"split {self.name!r}: train and test trials overlap: {sorted(overlap)}")
        if not self.train_trials or not self.test_trials:
            raise EvaluationError(f"split {self.name!r}: train and test trial sets must be non-empty")


def standard_splits(difficulty: Mapping[str, str]) -> List[SplitSpec]:
    """Easy-to-easy, easy-to-hard and mixed-to-hard splits from difficulty labels.

    Trials are taken in sorted id order. Easy-to-easy holds out the last
    easy trial; mixed-to-hard trains on all easy trials plus the first hard
    trial and tests on the remaining hard trials. Splits that would be empty
    are skipped.
    """
    easy = sorted(t for t, d in difficulty.items() if d == "easy")
    hard = sorted(t for t, d in difficulty.items() if d == "hard")
    labels = dict(difficulty)
    splits = []
    if len(easy) >= 2:
        splits.append(SplitSpec("easy_to_easy", easy[:-1], easy[-1:], labels))
    if easy and hard:
        splits.append(SplitSpec("easy_to_hard", easy, hard, labels))
    if easy and len(hard) >= 2:
        splits.append(SplitSpec("mixed_to_hard", easy + hard[:1], hard[1:], labels))
    return splits


@dataclass(frozen=True)
class ExperimentRow:
    split: str
    variant: str
    criteria: MetricReport
    trial: MetricReport
    n_train_pairs: int
    n_test_pairs: int

    def to_dict(self) -> dict:
        return {
            "split": self.split,
            "variant": self.variant,
            "criteria": self.criteria.to_dict(),
            "trial": self.trial.to_dict(),
            "n_train_pairs": self.n_train_pairs,
            "n_test_pairs": self.n_test_pairs,
        }


@dataclass
class ExperimentReport:
    rows: List[ExperimentRow] = field(default_factory=list)

    def row(self, split: str, variant: str) -> ExperimentRow:
        for r in self.rows:
            if r.split == split and r.variant == variant:
                return r
        raise KeyError((split, variant))

    def deltas(self) -> Dict[str, float]:
        """Augmented minus vanilla criteria-level F1 per split."""
        out = {}
        for r in self.rows:
            if r.variant == "augmented":
                out[r.split] = r.criteria.f1 - self.row(r.split, "vanilla").criteria.f1
        return out

    def to_dict(self) -> dict:
        return {"rows": [r.to_dict() for r in self.rows], "augmented_minus_vanilla_f1": self.deltas()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_text(self) -> str:
        lines = [f"{'split':<16}{'variant':<11}{'P':>8}{'R':>8}{'F1':>8}{'trial F1':>10}"]
        for r in self.rows:
            c = r.criteria
            lines.append(f"{r.split:<16}{r.variant:<11}{c.precision:>8.3f}{c.recall:>8.3f}{c.f1:>8.3f}{r.trial.f1:>10.3f}")
        return "\n".join(lines)


def _gold_map(pairs: Sequence[PairExample]) -> Dict[Tuple[str, str], MatchLabel]:
    return {(p.patient_id, p.criterion_id): p.label for p in pairs if p.label is not MatchLabel.UNKNOWN}


def split_corpus(corpus: Corpus, split: SplitSpec, seed: int = 0) -> Tuple[Corpus, Corpus]:
    """Train and test corpora for ``split``.

    Test pairs are the corpus' pairs in held-out groups, restricted to
    original criteria. Training unknowns are re-drawn among the training
    trials so no held-out criterion text reaches the model; with a single
    training trial, unknowns drawn from any other trial are dropped.
    """
    by_id = corpus.trial_index()
    missing = sorted((split.train_trials | split.test_trials) - set(by_id))
    if missing:
        raise EvaluationError(f"split {split.name!r} names trials absent from the corpus: {missing}")
    criteria = corpus.criterion_index()
    owner = {cid: c.trial_id for cid, c in criteria.items()}

    def group_of(p: PairExample) -> str:
        return p.group_trial_id or owner[p.criterion_id]

    originals = {cid for cid, c in criteria.items() if c.is_original}
    test_pairs = [p for p in corpus.pairs if group_of(p) in split.test_trials and p.criterion_id in originals]
    train_source = [p for p in corpus.pairs if group_of(p) in split.train_trials and p.criterion_id in originals]

    train_trials = [Trial(t.trial_id, [c for c in t.inclusion if c.is_original], [c for c in t.exclusion if c.is_original])
                    for t in corpus.trials if t.trial_id in split.train_trials]
    if len(train_trials) >= 2:
        enrollment: Dict[str, List[str]] = {}
        for p in train_source:
            tids = enrollment.setdefault(p.patient_id, [])
            if group_of(p) not in tids:
                tids.append(group_of(p))
        patients = [r for r in corpus.patients if r.patient_id in enrollment]
        train_pairs = build_pair_dataset(
            patients, train_trials, _gold_map(train_source), seed, pairing="enrolled", enrollment=enrollment
        )
    else:
        train_pairs = [p for p in train_source if owner[p.criterion_id] in split.train_trials]
    train = Corpus(corpus.patients, tuple(train_trials), tuple(train_pairs))
    test = corpus.replace(pairs=tuple(test_pairs))
    return train, test


ModelFactory = Union[Callable[[], object], object]


def _fresh_model(factory: ModelFactory):
    return factory() if callable(factory) and not hasattr(factory, "fit") else clone(factory)


def evaluate_model(model, test: Corpus, strict: bool = False) -> Tuple[MetricReport, MetricReport]:
    preds = model.predict(test)
    criteria_reports, _ = criteria_level_metrics(list(preds), [p.label for p in test.pairs])
    pred_trial = aggregate_groups(test.pairs, list(preds), test.trials, strict)
    gold_trial = aggregate_groups(test.pairs, [p.label for p in test.pairs], test.trials, strict)
    trial_report, _ = trial_level_metrics(pred_trial, gold_trial)
    return criteria_reports["match_positive"], trial_report


def run_generalizability(
    corpus: Corpus,
    model_factory: ModelFactory,
    splits: Sequence[SplitSpec],
    augmenter=None,
    seed: int = 0,
    strict: bool = False,
) -> ExperimentReport:
    """Train a fresh model per split and score it on the held-out trials.

    With ``augmenter`` (an unfitted transformer such as
    :class:`~ptmatch.augment.CriteriaAugmenter`) each split also gets an
    augmented run whose augmentation touches only the training trials.
    """
    report = ExperimentReport()
    for split in splits:
        train, test = split_corpus(corpus, split, seed)
        if not test.pairs:
            raise EvaluationError(f"split {split.name!r} has no test pairs")
        variants = [("vanilla", train)]
        if augmenter is not None:
            aug = clone(augmenter).set_params(trial_ids=sorted(split.train_trials))
            variants.append(("augmented", aug.fit(train).transform(train)))
        for variant, data in variants:
            model = _fresh_model(model_factory).fit(data)
            crit, trial = evaluate_model(model, test, strict)
            logger.info("%s/%s: criteria F1 %.3f, trial F1 %.3f", split.name, variant, crit.f1, trial.f1)
            report.rows.append(ExperimentRow(split.name, variant, crit, trial, len(data.pairs), len(test.pairs)))
    return report


# -- case reports ---------------------------------------------------------------

CORRECTED = "corrected by augmentation"
REGRESSED = "regressed by augmentation"
CHANGED = "changed, both wrong"
NO_CHANGE = "no change"


def emit_case_report(
    criterion_text: str,
    vanilla_prediction,
    augmented_prediction,
    gold,
    variants: Optional[Sequence[str]] = None,
    patient_id: Optional[str] = None,
    criterion_id: Optional[str] = None,
) -> dict:
    """Side-by-side record of one pair's predictions with and without augmentation."""
    v, a, g = _as_label(vanilla_prediction), _as_label(augmented_prediction), _as_label(gold)
    if v is a:
        flag = NO_CHANGE
    elif a is g:
        flag = CORRECTED
    elif v is g:
        flag = REGRESSED
    else:
        flag = CHANGED
    return {
        "patient_id": patient_id,
        "criterion_id": criterion_id,
        "criterion": criterion_text,
        "variants": list(variants or []),
        "vanilla": v.value,
        "augmented": a.value,
        "gold": g.value,
        "flag": flag,
    }


def render_case_report(report: Mapping) -> str:
    lines = [f"Original criterion | {report['criterion']}"]
    for i, text in enumerate(report["variants"], start=1):
        lines.append(f"Augmented {i:<8} | {text}")
    lines.append(f"Vanilla model      | {report['vanilla']}")
    lines.append(f"Augmented model    | {report['augmented']}")
    lines.append(f"Ground truth       | {report['gold']}")
    lines.append(f"Outcome            | {report['flag']}")
    return "\n".join(lines)
