"""Command-line interface: generate, label-rules, train, evaluate, compare.

Machine-readable JSON goes to stdout (always with a ``schema_version``
field); human-readable tables and progress notes go to stderr.  Exit codes
are stable: 0 success, 1 usage error, 2 data/format error, 3 internal error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from enum import IntEnum
from pathlib import Path

from . import CHECKPOINT_VERSION, SCHEMA_VERSION, __version__
from .corpus import (
    GeneratorConfig,
    LabeledDataset,
    generate,
    read_dataset,
    split_train_validation,
    write_dataset,
)
from .evaluation import (
    BootstrapError,
    Task,
    evaluate_labels,
    render_f1_table,
    render_presence_table,
)
from .features import EncoderConfig
from .rules import default_lexicon, label_report, load_lexicon
from .schema import FINDINGS, Report, Source
from .training import (
    Regime,
    SplitDataset,
    TrainConfig,
    load_checkpoint,
    predict_texts,
    save_checkpoint,
    train,
)

__all__ = ["ExitStatus", "main", "entrypoint"]


class ExitStatus(IntEnum):
    SUCCESS = 0
    USAGE = 1
    DATA = 2
    INTERNAL = 3


class CliError(Exception):
    def __init__(self, status: ExitStatus, message: str) -> None:
        super().__init__(message)
        self.status = status


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems as exit status 1, not 2."""

    def error(self, message: str) -> None:  # type: ignore[override]
        raise CliError(ExitStatus.USAGE, message)


def _emit(payload: dict) -> None:
    payload = {"schema_version": SCHEMA_VERSION, **payload}
    print(json.dumps(payload, sort_keys=True, ensure_ascii=False))


def _note(message: str) -> None:
    print(message, file=sys.stderr)


def _thread_count() -> int:
    raw = os.environ.get("REPORT_LABELER_THREADS", "").strip()
    if not raw:
        return 1
    try:
        count = int(raw)
    except ValueError as exc:
        raise CliError(
            ExitStatus.USAGE, f"REPORT_LABELER_THREADS must be an integer: {raw!r}"
        ) from exc
    return max(1, count)


# ---------------------------------------------------------------------------
# generate
# ---------------------------------------------------------------------------


def cmd_generate(args: argparse.Namespace) -> int:
    if args.count < 1:
        raise CliError(ExitStatus.USAGE, "--count must be >= 1")
    config = (
        GeneratorConfig.from_json_file(args.config)
        if args.config
        else GeneratorConfig()
    )
    if args.seed is not None:
        config = GeneratorConfig.from_json_dict(
            {**config.to_json_dict(), "seed": args.seed}
        )
    dataset = generate(config, args.count)
    write_dataset(dataset, args.out)
    _emit(
        {
            "command": "generate",
            "count": len(dataset),
            "seed": config.seed,
            "mismatch_rate": config.mismatch_rate,
            "out": str(args.out),
        }
    )
    return ExitStatus.SUCCESS


# ---------------------------------------------------------------------------
# label-rules
# ---------------------------------------------------------------------------

_WORKER_LEXICON = None
_WORKER_PATH: str | None = None


def _worker_init(lexicon_path: str | None) -> None:
    global _WORKER_LEXICON, _WORKER_PATH
    _WORKER_PATH = lexicon_path
    _WORKER_LEXICON = load_lexicon(lexicon_path) if lexicon_path else default_lexicon()


def _worker_label(text: str):
    assert _WORKER_LEXICON is not None
    return label_report(text, _WORKER_LEXICON)


def cmd_label_rules(args: argparse.Namespace) -> int:
    lexicon = load_lexicon(args.lexicon) if args.lexicon else default_lexicon()
    dataset = read_dataset(args.input)
    texts = [r.text for r in dataset.reports]
    workers = _thread_count()
    if workers > 1 and len(texts) > 1:
        # Chunked process pool; chunk order is preserved so output order is
        # identical to the serial path.
        with ProcessPoolExecutor(
            max_workers=workers,
            initializer=_worker_init,
            initargs=(str(args.lexicon) if args.lexicon else None,),
        ) as pool:
            labels = list(pool.map(_worker_label, texts, chunksize=64))
    else:
        labels = [label_report(t, lexicon) for t in texts]
    relabeled = LabeledDataset(
        reports=tuple(
            Report(id=r.id, text=r.text, source=Source.RULE, labels=lab)
            for r, lab in zip(dataset.reports, labels)
        ),
        provenance=f"rule({dataset.provenance})",
    )
    write_dataset(relabeled, args.out)
    _emit(
        {
            "command": "label-rules",
            "count": len(relabeled),
            "out": str(args.out),
        }
    )
    return ExitStatus.SUCCESS


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

_REGIME_NAMES = {"supervised": "supervised", "weak": "weak", "hybrid": "hybrid"}


def _load_split(path: str, seed: int, validation_cap: int | None) -> SplitDataset:
    dataset = read_dataset(path)
    train_ids, val_ids = split_train_validation(
        dataset.ids(), seed=seed, validation_cap=validation_cap
    )
    return SplitDataset(dataset=dataset, train_ids=train_ids, validation_ids=val_ids)


def cmd_train(args: argparse.Namespace) -> int:
    config = (
        TrainConfig.from_json_dict(json.loads(Path(args.config).read_text()))
        if args.config
        else TrainConfig()
    )
    if args.seed is not None:
        config = TrainConfig.from_json_dict({**config.to_json_dict(), "seed": args.seed})
    encoder_config = (
        EncoderConfig.from_json_dict(json.loads(Path(args.encoder_config).read_text()))
        if args.encoder_config
        else None
    )
    if args.regime == "weak":
        if args.fraction is not None:
            raise CliError(ExitStatus.USAGE, "--fraction is only for supervised/hybrid")
        if not args.weak:
            raise CliError(ExitStatus.USAGE, "--regime weak requires --weak")
        regime = Regime.weakly_supervised()
    else:
        fraction = 100 if args.fraction is None else args.fraction
        if not args.manual:
            raise CliError(
                ExitStatus.USAGE, f"--regime {args.regime} requires --manual"
            )
        if args.regime == "hybrid" and not args.weak:
            raise CliError(ExitStatus.USAGE, "--regime hybrid requires --weak")
        regime = (
            Regime.supervised(fraction)
            if args.regime == "supervised"
            else Regime.hybrid(fraction)
        )
    weak = (
        _load_split(args.weak, config.seed, validation_cap=1000) if args.weak else None
    )
    manual = _load_split(args.manual, config.seed, None) if args.manual else None
    checkpoint = train(
        regime, config, weak=weak, manual=manual, encoder_config=encoder_config
    )
    save_checkpoint(checkpoint, args.out)
    _emit(
        {
            "command": "train",
            "checkpoint_version": CHECKPOINT_VERSION,
            "regime": checkpoint.regime_tag,
            "metric": checkpoint.metric,
            "step": checkpoint.step,
            "out": str(args.out),
        }
    )
    return ExitStatus.SUCCESS


# ---------------------------------------------------------------------------
# evaluate / compare
# ---------------------------------------------------------------------------


def cmd_evaluate(args: argparse.Namespace) -> int:
    predictions = read_dataset(args.pred).labels_by_id()
    references = read_dataset(args.ref).labels_by_id()
    report = evaluate_labels(
        predictions, references, bootstrap=args.bootstrap, seed=args.seed
    )
    _note(render_f1_table(report))
    _note(render_presence_table(report))
    _emit({"command": "evaluate", "report": report.to_json_dict()})
    return ExitStatus.SUCCESS


def cmd_compare(args: argparse.Namespace) -> int:
    names = [n.strip() for n in args.labelers.split(",") if n.strip()]
    if not names or any(n not in ("rule", "model") for n in names):
        raise CliError(
            ExitStatus.USAGE, "--labelers takes a comma list of: rule, model"
        )
    if "model" in names and not args.checkpoint:
        raise CliError(ExitStatus.USAGE, "--labelers model requires --checkpoint")
    ref_dataset = read_dataset(args.ref)
    references = ref_dataset.labels_by_id()
    texts = [r.text for r in ref_dataset.reports]
    ids = ref_dataset.ids()
    lexicon = load_lexicon(args.lexicon) if args.lexicon else default_lexicon()
    reports = {}
    for name in names:
        if name == "rule":
            predicted = {rid: label_report(t, lexicon) for rid, t in zip(ids, texts)}
        else:
            checkpoint = load_checkpoint(args.checkpoint)
            predicted = dict(zip(ids, predict_texts(checkpoint, texts)))
        reports[name] = evaluate_labels(predicted, references)
    payload = {name: r.to_json_dict() for name, r in reports.items()}
    flags: dict[str, dict[str, str]] = {}
    if len(names) == 2 and names[0] != names[1]:
        a, b = names
        for finding in FINDINGS:
            for task in Task:
                fa = reports[a].f1_scores.get(finding, {}).get(task)
                fb = reports[b].f1_scores.get(finding, {}).get(task)
                if fa is None or fb is None or fa == fb:
                    continue
                flags.setdefault(finding.value, {})[task.value] = a if fa > fb else b
    _note(_render_compare_table(names, reports))
    _emit({"command": "compare", "reports": payload, "higher": flags})
    return ExitStatus.SUCCESS


def _render_compare_table(names, reports) -> str:
    header = ["Finding"]
    for name in names:
        for task in Task:
            header.append(f"{name}:{task.value[:4]}")
    rows = [header]
    for finding in FINDINGS:
        row = [finding.value]
        for name in names:
            scores = reports[name].f1_scores.get(finding, {})
            for task in Task:
                value = scores.get(task) if task in scores else None
                if task not in scores:
                    row.append("-")
                else:
                    row.append("N/A" if value is None else f"{value:.3f}")
        rows.append(row)
    widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
    return "\n".join(
        "  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip()
        for row in rows
    )


# ---------------------------------------------------------------------------
# wiring
# ---------------------------------------------------------------------------


def _build_parser() -> _Parser:
    parser = _Parser(prog="report-labeler", description=__doc__)
    parser.add_argument(
        "--version",
        action="version",
        version=(
            f"report-labeler {__version__}"
            f" (schema {SCHEMA_VERSION}, checkpoint format {CHECKPOINT_VERSION})"
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic labeled dataset")
    p.add_argument("--config", help="generator config JSON")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("label-rules", help="attach rule-based labels to a dataset")
    p.add_argument("--lexicon", help="lexicon JSON (default: packaged German lexicon)")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_label_rules)

    p = sub.add_parser("train", help="train a labeler and write a checkpoint")
    p.add_argument("--regime", choices=sorted(_REGIME_NAMES), required=True)
    p.add_argument("--fraction", type=int, choices=(25, 50, 75, 100))
    p.add_argument("--weak", help="weakly labeled dataset (JSONL)")
    p.add_argument("--manual", help="manually labeled dataset (JSONL)")
    p.add_argument("--config", help="train config JSON")
    p.add_argument("--encoder-config", dest="encoder_config", help="encoder JSON")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score predictions against references")
    p.add_argument("--pred", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--bootstrap", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("compare", help="side-by-side rule vs model metrics")
    p.add_argument("--labelers", required=True, help="comma list: rule, model")
    p.add_argument("--checkpoint")
    p.add_argument("--ref", required=True)
    p.add_argument("--lexicon")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return int(args.func(args))
    except SystemExit as exc:  # argparse --version/--help
        return int(exc.code or 0)
    except CliError as exc:
        _note(f"error: {exc}")
        return int(exc.status)
    except (ValueError, KeyError, OSError, json.JSONDecodeError, BootstrapError) as exc:
        _note(f"error: {exc}")
        return int(ExitStatus.DATA)
    except KeyboardInterrupt:
        return int(ExitStatus.INTERNAL)
    except Exception as exc:  # pragma: no cover - invariant violations
        _note(f"internal error: {type(exc).__name__}: {exc}")
        return int(ExitStatus.INTERNAL)


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
