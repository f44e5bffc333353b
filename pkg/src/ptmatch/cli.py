"""Command-line entry point: ``ptmatch <subcommand> ...``.

Exit codes: 0 success, 1 validation or usage error, 2 runtime failure.
Every command that writes a directory also writes ``manifest.json`` with the
resolved configuration, seed and package version.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, fields
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from . import __version__
from .data import Corpus, validate_corpus
from .io import CorpusFormatError, load_corpus, load_pairs, load_patients, load_trials, save_corpus, save_pairs, save_trials

logger = logging.getLogger("ptmatch")

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib


class UsageError(Exception):
    """Bad arguments, missing inputs or invalid configuration (exit 1)."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


# -- helpers --------------------------------------------------------------------

def _existing(path: Optional[str], what: str) -> Path:
    if path is None:
        raise UsageError(f"missing --{what}")
    p = Path(path)
    if not p.exists():
        raise UsageError(f"{what} file not found: {p}")
    return p


def _read_toml(path: Optional[str]) -> Dict[str, Any]:
    if path is None:
        return {}
    p = _existing(path, "config")
    try:
        with open(p, "rb") as fh:
            return tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise UsageError(f"{p}: invalid TOML: {exc}") from exc


def _section(cfg: Dict[str, Any], name: str, allowed: Sequence[str]) -> Dict[str, Any]:
    table = cfg.get(name, {})
    if not isinstance(table, dict):
        raise UsageError(f"config section [{name}] must be a table")
    unknown = sorted(set(table) - set(allowed))
    if unknown:
        raise UsageError(f"config section [{name}] has unknown keys: {unknown}")
    return dict(table)


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n", encoding="utf-8")


def _write_manifest(out_dir: Path, command: str, argv: Sequence[str], seed: Optional[int], config: Dict[str, Any]) -> None:
    _write_json(
        out_dir / "manifest.json",
        {"command": command, "argv": list(argv), "seed": seed, "config": config, "version": __version__},
    )


def _load_parts(patients: Optional[str], trials: Optional[str], pairs: Optional[str]) -> Corpus:
    return Corpus(
        load_patients(_existing(patients, "patients")) if patients else [],
        load_trials(_existing(trials, "trials")),
        load_pairs(_existing(pairs, "pairs")) if pairs else [],
    )


def _check(corpus: Corpus) -> None:
    report = validate_corpus(corpus.patients, corpus.trials, corpus.pairs)
    if not report.ok:
        shown = "; ".join(f"{v.rule}: {v.entity_id}" for v in report.violations[:5])
        raise UsageError(f"corpus failed validation ({len(report.violations)} violations): {shown}")


# -- subcommands ----------------------------------------------------------------

def cmd_fetch_trial(args) -> int:
    from .ingestion import FixtureRegistryClient, HttpRegistryClient, fetch_trial_criteria, parse_eligibility

    client = HttpRegistryClient() if args.live else FixtureRegistryClient(args.fixtures) if args.fixtures else FixtureRegistryClient()
    doc = fetch_trial_criteria(args.nct, client)
    _write_json(Path(args.out), doc.to_dict())
    if args.trials:
        save_trials(args.trials, [parse_eligibility(doc)])
    return 0


def cmd_generate(args) -> int:
    from .ingestion import SyntheticCorpusConfig, build_pair_dataset, generate_synthetic_corpus

    cfg_file = _read_toml(args.config)
    names = [f.name for f in fields(SyntheticCorpusConfig)]
    values = _section(cfg_file, "synthetic", names)
    for name in names:
        cli_value = getattr(args, name, None)
        if cli_value is not None:
            values[name] = cli_value
    values["seed"] = args.seed
    config = SyntheticCorpusConfig(**values)
    syn = generate_synthetic_corpus(config)
    pairs = build_pair_dataset(syn.patients, syn.trials, syn.gold, config.seed, config.pairing, syn.enrollment)
    out = Path(args.out)
    save_corpus(out, Corpus(syn.patients, syn.trials, pairs))
    _write_json(out / "difficulty.json", syn.difficulty)
    _write_manifest(out, "generate", args.argv, config.seed, asdict(config))
    return 0


def _llm_client(cfg: Dict[str, Any], seed: int):
    from .augment import MockParaphraseLLM, OpenAICompatibleClient
    from .seeding import derive_seed

    llm = _section(cfg, "llm", ["backend", "model", "base_url", "api_key_env", "timeout"])
    backend = llm.pop("backend", "mock")
    if backend == "mock":
        return MockParaphraseLLM(derive_seed(seed, "augment.llm")), {"backend": "mock"}
    if backend == "openai_compatible":
        if "model" not in llm:
            raise UsageError("[llm] backend 'openai_compatible' needs a model name")
        return OpenAICompatibleClient(**llm), {"backend": backend, **llm}
    raise UsageError(f"unknown [llm] backend {backend!r}")


def cmd_augment(args) -> int:
    from .augment import CriteriaAugmenter

    cfg = _read_toml(args.config)
    corpus = _load_parts(args.patients, args.trials, args.pairs)
    _check(corpus)
    if not corpus.patients:
        logger.warning("no --patients given: the privacy screen only applies the pattern blocklist")
    client, llm_cfg = _llm_client(cfg, args.seed) if args.method == "llm" else (None, {})
    aug = CriteriaAugmenter(
        method=args.method,
        k=args.k,
        seed=args.seed,
        policy_mode=args.policy,
        llm_client=client,
        audit_path=args.audit,
        trial_ids=args.trial_ids,
        max_workers=args.workers,
    )
    result = aug.fit(corpus).transform(corpus)
    save_trials(args.out, result.trials)
    if args.pairs_out:
        save_pairs(args.pairs_out, result.pairs)
    for cid, reason in aug.skipped_:
        logger.warning("criterion %s not augmented: %s", cid, reason)
    params = {k: v for k, v in aug.get_params().items() if k not in ("llm_client", "mask_filler", "translator")}
    _write_manifest(Path(args.out).parent, "augment", args.argv, args.seed, {"augmenter": params, "llm": llm_cfg})
    return 0


MODEL_KEYS = ("embedding_dim", "highway_channels", "highway_layers", "text_encoder", "memory_readout", "literal_paper_formula", "dtype")
LOSS_KEYS = ("alpha", "epsilon", "contrastive_form", "contrastive_scope")
TRAIN_KEYS = ("epochs", "batch_size", "learning_rate", "optimizer", "beta1", "beta2", "adam_eps", "seed", "checkpoint_every")


def _matcher_from_config(cfg: Dict[str, Any], seed: Optional[int]):
    from .estimator import PatientTrialMatcher
    from .training import LossConfig, TrainConfig

    model = _section(cfg, "model", MODEL_KEYS)
    loss = _section(cfg, "loss", LOSS_KEYS)
    train = _section(cfg, "train", TRAIN_KEYS)
    if seed is not None:
        train["seed"] = seed
    # construct the dataclasses so invalid values fail as validation errors
    LossConfig(**loss)
    TrainConfig(**train)
    train.pop("optimizer", None)
    matcher = PatientTrialMatcher(**model, **loss, **train)
    full = matcher.get_params()
    resolved = {
        "model": {k: full[k] for k in MODEL_KEYS},
        "loss": {k: full[k] for k in LOSS_KEYS},
        "train": {k: full[k] for k in TRAIN_KEYS if k in full},
    }
    resolved["train"]["optimizer"] = "adam_style"
    return matcher, resolved


def cmd_train(args) -> int:
    cfg = _read_toml(args.config)
    corpus = _load_parts(args.patients, args.trials, args.pairs)
    _check(corpus)
    out = Path(args.out)
    matcher, resolved = _matcher_from_config(cfg, args.seed)
    if matcher.checkpoint_every:
        matcher.set_params(checkpoint_dir=str(out / "checkpoints"))
    matcher.fit(corpus)
    matcher.save(out / "model.pt")
    with open(out / "history.jsonl", "w", encoding="utf-8") as h, open(out / "timings.jsonl", "w", encoding="utf-8") as t:
        for record in matcher.history_.records:
            h.write(json.dumps(record.to_dict()) + "\n")
            t.write(json.dumps({"epoch": record.epoch, "wall_time": record.wall_time}) + "\n")
    _write_manifest(out, "train", args.argv, matcher.seed, resolved)
    return 0


def _load_model(ckpt: str):
    from .estimator import PatientTrialMatcher

    path = Path(ckpt)
    if path.is_dir():
        path = path / "model.pt"
    if not path.exists():
        raise UsageError(f"checkpoint not found: {path}")
    return PatientTrialMatcher.load(path)


def _evaluation_payload(model, corpus: Corpus, level: str, strict: bool) -> dict:
    from .evaluation import aggregate_groups, criteria_level_metrics, per_trial_breakdown, report_json, trial_level_metrics

    originals = {c.criterion_id for t in corpus.trials for c in t.originals()}
    pairs = [p for p in corpus.pairs if p.criterion_id in originals]
    if not pairs:
        raise UsageError("no pairs over original criteria to evaluate")
    corpus = corpus.replace(pairs=pairs)
    preds = list(model.predict(corpus))
    gold = [p.label for p in pairs]
    out: Dict[str, Any] = {}
    if level in ("criteria", "both"):
        reports, cm = criteria_level_metrics(preds, gold)
        out["criteria"] = report_json(reports["match_positive"], cm)
        out["criteria_macro"] = report_json(reports["macro"], cm)
        out["per_trial"] = {tid: r.to_dict() for tid, r in per_trial_breakdown(pairs, preds, corpus.trials).items()}
    if level in ("trial", "both"):
        report, cm = trial_level_metrics(
            aggregate_groups(pairs, preds, corpus.trials, strict), aggregate_groups(pairs, gold, corpus.trials, strict)
        )
        out["trial"] = report_json(report, cm)
        out["trial"]["semantics"] = "strict" if strict else "eligibility"
    return out


def cmd_evaluate(args) -> int:
    model = _load_model(args.ckpt)
    corpus = _load_parts(args.patients, args.trials, args.pairs)
    _check(corpus)
    payload = _evaluation_payload(model, corpus, args.level, args.semantics == "strict")
    _write_json(Path(args.out), payload["criteria"] if args.level == "criteria" else payload["trial"] if args.level == "trial" else payload)
    for key in ("criteria", "trial"):
        if key in payload:
            r = payload[key]
            print(f"{key}: P={r['precision']:.4f} R={r['recall']:.4f} F1={r['f1']:.4f} n={r['n']}")
    return 0


def cmd_experiment(args) -> int:
    from .augment import CriteriaAugmenter
    from .evaluation import SplitSpec, run_generalizability, standard_splits

    corpus = load_corpus(_existing(args.corpus, "corpus"))
    _check(corpus)
    spec = _read_toml(_existing(args.splits, "splits").as_posix())
    cfg = _read_toml(args.config)
    matcher, resolved = _matcher_from_config(cfg, args.seed)
    difficulty_file = Path(args.corpus) / "difficulty.json"
    difficulty = json.loads(difficulty_file.read_text()) if difficulty_file.exists() else {}
    difficulty.update(spec.get("difficulty", {}))
    if spec.get("split"):
        splits = [
            SplitSpec(s["name"], s["train_trials"], s["test_trials"], difficulty) for s in spec["split"]
        ]
    elif spec.get("auto", False):
        if not difficulty:
            raise UsageError("auto splits need difficulty labels (difficulty.json or a [difficulty] table)")
        splits = standard_splits(difficulty)
    else:
        raise UsageError("splits file needs [[split]] tables or auto = true")
    augmenter = None
    if args.augment:
        client, _ = _llm_client(cfg, args.seed) if args.augment == "llm" else (None, {})
        augmenter = CriteriaAugmenter(method=args.augment, k=args.k, seed=args.seed, llm_client=client, max_workers=1)
    report = run_generalizability(corpus, matcher, splits, augmenter, seed=args.seed)
    out = Path(args.out)
    _write_json(out / "report.json", report.to_dict())
    (out / "report.txt").write_text(report.to_text() + "\n", encoding="utf-8")
    print(report.to_text())
    resolved["splits"] = [{"name": s.name, "train": sorted(s.train_trials), "test": sorted(s.test_trials)} for s in splits]
    resolved["augment"] = args.augment
    _write_manifest(out, "experiment generalizability", args.argv, args.seed, resolved)
    return 0


def cmd_case_report(args) -> int:
    from .evaluation import emit_case_report, render_case_report

    corpus = _load_parts(args.patients, args.trials, args.pairs)
    _check(corpus)
    vanilla, augmented = _load_model(args.vanilla), _load_model(args.augmented)
    variants: Dict[str, List[str]] = {}
    if args.augmented_trials:
        for t in load_trials(_existing(args.augmented_trials, "augmented-trials")):
            for c in t.criteria:
                if not c.is_original:
                    variants.setdefault(c.provenance.source_criterion_id, []).append(c.text)
    criteria = corpus.criterion_index()
    pairs = [p for p in corpus.pairs if criteria[p.criterion_id].is_original]
    if args.criterion_id:
        pairs = [p for p in pairs if p.criterion_id in args.criterion_id]
    if args.patient_id:
        pairs = [p for p in pairs if p.patient_id in args.patient_id]
    if not pairs:
        raise UsageError("no pairs selected for the case report")
    subset = corpus.replace(pairs=pairs)
    v_pred, a_pred = vanilla.predict(subset), augmented.predict(subset)
    reports = []
    for p, v, a in zip(pairs, v_pred, a_pred):
        if args.changed_only and v == a:
            continue
        reports.append(
            emit_case_report(criteria[p.criterion_id].text, v, a, p.label, variants.get(p.criterion_id), p.patient_id, p.criterion_id)
        )
        if len(reports) >= args.limit:
            break
    _write_json(Path(args.out), reports)
    for r in reports:
        print(render_case_report(r) + "\n")
    return 0


# -- parser -----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ptmatch", description="Patient-trial matching with privacy-aware criteria augmentation.")
    parser.add_argument("--version", action="version", version=f"ptmatch {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("fetch-trial", help="fetch one trial's eligibility text")
    p.add_argument("--nct", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--trials", help="also write the parsed trial as JSONL here")
    p.add_argument("--fixtures", help="directory of recorded registry responses")
    p.add_argument("--live", action="store_true", help="query the public registry API")
    p.set_defaults(func=cmd_fetch_trial)

    p = sub.add_parser("generate", help="write a seeded synthetic corpus")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--n-patients", dest="n_patients", type=int)
    p.add_argument("--n-trials", dest="n_trials", type=int)
    p.add_argument("--n-criteria", dest="n_criteria_total", type=int)
    p.add_argument("--target-pairs", dest="target_pairs", type=int)
    p.add_argument("--difficulty-mix", dest="difficulty_mix", type=float)
    p.add_argument("--pairing", choices=["all", "enrolled"])
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("augment", help="augment trial criteria")
    p.add_argument("--trials", required=True)
    p.add_argument("--patients")
    p.add_argument("--pairs")
    p.add_argument("--pairs-out", dest="pairs_out")
    p.add_argument("--method", choices=["llm", "swap", "context", "backtrans"], default="llm")
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--policy", choices=["enforce", "audit_only"], default="enforce")
    p.add_argument("--trial-ids", dest="trial_ids", nargs="+")
    p.add_argument("--workers", type=int, default=4)
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--audit")
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("train", help="train a matcher")
    p.add_argument("--pairs", required=True)
    p.add_argument("--trials", required=True)
    p.add_argument("--patients", required=True)
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--pairs", required=True)
    p.add_argument("--trials", required=True)
    p.add_argument("--patients", required=True)
    p.add_argument("--level", choices=["criteria", "trial", "both"], default="both")
    p.add_argument("--semantics", choices=["eligibility", "strict"], default="eligibility")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("experiment", help="run an experiment suite")
    exp = p.add_subparsers(dest="experiment", parser_class=_Parser)
    g = exp.add_parser("generalizability", help="train/test across trial splits")
    g.add_argument("--corpus", required=True)
    g.add_argument("--splits", required=True)
    g.add_argument("--config")
    g.add_argument("--augment", choices=["llm", "swap", "context", "backtrans"])
    g.add_argument("--k", type=int, default=3)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_experiment)

    p = sub.add_parser("case-report", help="compare vanilla and augmented predictions pair by pair")
    p.add_argument("--vanilla", required=True, help="vanilla checkpoint")
    p.add_argument("--augmented", required=True, help="augmented checkpoint")
    p.add_argument("--pairs", required=True)
    p.add_argument("--trials", required=True)
    p.add_argument("--patients", required=True)
    p.add_argument("--augmented-trials", dest="augmented_trials")
    p.add_argument("--criterion-id", dest="criterion_id", nargs="+")
    p.add_argument("--patient-id", dest="patient_id", nargs="+")
    p.add_argument("--changed-only", dest="changed_only", action="store_true")
    p.add_argument("--limit", type=int, default=20)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_case_report)
    return parser


def run(argv: Optional[Sequence[str]] = None) -> int:
    from .augment import AssemblyError, AugmenterError, NoUsableVariantsError, PrivacyViolationError, TransportError
    from .estimator import CheckpointError
    from .evaluation import EvaluationError
    from .ingestion import ConfigError, ParseError, RegistryInputError, RegistryError
    from .model import EncoderConfigError
    from .training import TrainingError

    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
        if not hasattr(args, "func"):
            raise UsageError(build_parser().format_usage() if args.command is None else f"{args.command}: missing subcommand")
        args.argv = argv
        logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
        return args.func(args)
    except (UsageError, CorpusFormatError, ConfigError, RegistryInputError, ParseError, EvaluationError, CheckpointError, AssemblyError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (RegistryError, TransportError, TrainingError, EncoderConfigError, PrivacyViolationError, AugmenterError, NoUsableVariantsError, OSError, RuntimeError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())
