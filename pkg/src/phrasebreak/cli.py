"""Command-line entry point: corpus preparation from time-aligned
transcripts, system training, break prediction with markup or TSV output,
and stratified evaluation.

Exit codes: 0 success, 1 runtime failure (parse errors, diverged training,
mismatched files), 2 usage errors including missing input paths.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .corpus import (
    DEFAULT_BREAK_THRESHOLD_MS,
    CorpusParseError,
    CorpusSplit,
    Utterance,
    WordTiming,
    atomic_write_text,
    label_from_alignment,
    read_corpus,
    split_corpus,
    write_corpus,
)
from .lexfeat import AnnotationError, LexiconAnnotator, annotator_fingerprint

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2

PAUSE_MARKUP = "<pause/>"

TRAINABLE_SYSTEMS = (
    "bilstm-tokens",
    "bilstm-features",
    "lm",
    "bilstm-tokens+lm",
    "bilstm-features+lm",
)


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_RUNTIME):
        super().__init__(message)
        self.code = code


# ---------------------------------------------------------------------------
# Option plumbing
# ---------------------------------------------------------------------------


def parse_config_file(path: Path) -> dict[str, str]:
    """key=value per line; blank lines and # comments ignored."""
    if not path.is_file():
        raise CliError(f"config file not found: {path}", EXIT_USAGE)
    values: dict[str, str] = {}
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise CliError(f"{path}:{lineno}: expected key=value, got {line!r}", EXIT_USAGE)
        key, _, value = line.partition("=")
        values[key.strip()] = value.strip()
    return values


def apply_config(args: argparse.Namespace, argv: list[str], converters: dict) -> None:
    """Fill options from --config where the flag was not given explicitly;
    command-line flags always win."""
    if not getattr(args, "config", None):
        return
    for key, raw in parse_config_file(Path(args.config)).items():
        if key not in converters:
            allowed = ", ".join(sorted(converters))
            raise CliError(f"unknown config key {key!r} (allowed: {allowed})", EXIT_USAGE)
        if f"--{key}" in argv:
            continue
        try:
            value = converters[key](raw)
        except (TypeError, ValueError) as exc:
            raise CliError(f"config key {key!r}: bad value {raw!r} ({exc})", EXIT_USAGE) from exc
        setattr(args, key.replace("-", "_"), value)


def parse_split_sizes(text: str) -> tuple[int, int, int]:
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(
            f"expected three comma-separated sizes (train,validation,test), got {text!r}"
        )
    try:
        sizes = tuple(int(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"non-integer split size in {text!r}") from None
    if min(sizes) < 0:
        raise argparse.ArgumentTypeError(f"split sizes must be non-negative, got {text!r}")
    return sizes


def require_file(path: str | Path, what: str) -> Path:
    path = Path(path)
    if not path.is_file():
        raise CliError(f"{what} not found: {path}", EXIT_USAGE)
    return path


# ---------------------------------------------------------------------------
# corpus subcommand
# ---------------------------------------------------------------------------


def parse_alignment_file(path: Path) -> list[tuple[str, list[WordTiming]]]:
    """Blocks of ``# id=<id>`` then ``surface<TAB>start_ms<TAB>end_ms``
    lines, blank-line separated."""
    blocks: list[tuple[str, list[WordTiming]]] = []
    seen: set[str] = set()
    current: str | None = None
    timings: list[WordTiming] = []

    def flush(lineno: int) -> None:
        nonlocal current, timings
        if current is None:
            return
        if not timings:
            raise CorpusParseError(f"{path}:{lineno}: utterance {current!r} has no words")
        blocks.append((current, timings))
        current, timings = None, []

    lineno = 0
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.rstrip()
        if not line:
            flush(lineno)
            continue
        if line.startswith("# id="):
            if current is not None:
                raise CorpusParseError(
                    f"{path}:{lineno}: new block inside {current!r} (missing blank line)"
                )
            current = line[len("# id="):].strip()
            if not current:
                raise CorpusParseError(f"{path}:{lineno}: empty utterance id")
            if current in seen:
                raise CorpusParseError(f"{path}:{lineno}: duplicate utterance id {current!r}")
            seen.add(current)
            continue
        if current is None:
            raise CorpusParseError(f"{path}:{lineno}: word line outside an utterance block")
        fields = line.split("\t")
        if len(fields) != 3:
            raise CorpusParseError(
                f"{path}:{lineno}: expected surface<TAB>start_ms<TAB>end_ms, got {len(fields)} fields"
            )
        try:
            timing = WordTiming(fields[0], int(fields[1]), int(fields[2]))
        except ValueError as exc:
            raise CorpusParseError(f"{path}:{lineno}: {exc}") from exc
        timings.append(timing)
    flush(lineno + 1)
    return blocks


def utterances_from_alignment(
    blocks: list[tuple[str, list[WordTiming]]], threshold_ms: int
) -> list[Utterance]:
    annotator = LexiconAnnotator()
    utterances = []
    for utt_id, timings in blocks:
        labels = label_from_alignment(timings, threshold_ms)
        tokens = annotator.annotate_pretokenized([t.surface for t in timings])
        utterances.append(Utterance(id=utt_id, tokens=tokens, labels=labels))
    return utterances


def cmd_corpus(args: argparse.Namespace, argv: list[str]) -> int:
    apply_config(
        args,
        argv,
        {"threshold-ms": int, "seed": int, "split": parse_split_sizes, "format": str},
    )
    in_path = require_file(args.in_path, "input file")
    out_dir = Path(args.out)
    if args.format == "alignment":
        blocks = parse_alignment_file(in_path)
        utterances = utterances_from_alignment(blocks, args.threshold_ms)
    else:
        utterances = read_corpus(in_path)
        for utt in utterances:
            if utt.labels is None:
                raise CliError(f"utterance {utt.id!r} in {in_path} has no labels")

    out_dir.mkdir(parents=True, exist_ok=True)
    write_corpus(utterances, out_dir / "corpus.tsv")

    token_count = sum(len(u.tokens) for u in utterances)
    break_count = sum(sum(u.labels) for u in utterances)
    manifest = {
        "source": str(in_path),
        "format": args.format,
        "threshold_ms": args.threshold_ms if args.format == "alignment" else None,
        "annotator": annotator_fingerprint(LexiconAnnotator()),
        "utterances": len(utterances),
        "tokens": token_count,
        "breaks": break_count,
        "split": None,
    }

    if args.split is not None:
        try:
            split = split_corpus(utterances, args.split, args.seed)
        except ValueError as exc:
            raise CliError(str(exc)) from exc
        write_corpus(split.train, out_dir / "train.tsv")
        write_corpus(split.validation, out_dir / "validation.tsv")
        write_corpus(split.test, out_dir / "test.tsv")
        manifest["split"] = {
            "seed": args.seed,
            "sizes": {
                "train": len(split.train),
                "validation": len(split.validation),
                "test": len(split.test),
            },
            "ids": {
                "train": [u.id for u in split.train],
                "validation": [u.id for u in split.validation],
                "test": [u.id for u in split.test],
            },
        }
    atomic_write_text(out_dir / "manifest.json", json.dumps(manifest, indent=2) + "\n")

    rate = break_count / token_count if token_count else 0.0
    print(
        f"utterances={len(utterances)} tokens={token_count} "
        f"breaks={break_count} break_rate={rate:.4f}"
    )
    if args.split is not None:
        sizes = manifest["split"]["sizes"]
        print(
            f"split: train={sizes['train']} validation={sizes['validation']} "
            f"test={sizes['test']} seed={args.seed}"
        )
    return EXIT_OK


# ---------------------------------------------------------------------------
# train subcommand
# ---------------------------------------------------------------------------


def load_split_dir(corpus_dir: Path, need_test: bool = False) -> CorpusSplit:
    for name in ("train.tsv", "validation.tsv") + (("test.tsv",) if need_test else ()):
        require_file(corpus_dir / name, f"corpus file {name}")
    test_path = corpus_dir / "test.tsv"
    return CorpusSplit(
        train=read_corpus(corpus_dir / "train.tsv"),
        validation=read_corpus(corpus_dir / "validation.tsv"),
        test=read_corpus(test_path) if test_path.is_file() else [],
    )


def stored_annotator_fingerprint(corpus_dir: Path) -> str:
    manifest_path = corpus_dir / "manifest.json"
    if manifest_path.is_file():
        try:
            stored = json.loads(manifest_path.read_text(encoding="utf-8")).get("annotator")
            if stored:
                return stored
        except (OSError, json.JSONDecodeError):
            pass
    return annotator_fingerprint(LexiconAnnotator())


def cmd_train(args: argparse.Namespace, argv: list[str]) -> int:
    apply_config(
        args,
        argv,
        {
            "lr": float,
            "batch-size": int,
            "max-epochs": int,
            "patience": int,
            "seed": int,
            "threshold": float,
            "lm": str,
            "embeddings": str,
            "classifier-hidden": int,
        },
    )
    from .lexfeat import read_embedding_table
    from .model import SystemConfig, SystemKind, save_checkpoint
    from .training import TrainConfig, TrainingDivergedError, train_system

    kind = SystemKind(args.system)
    corpus_dir = Path(args.corpus)
    if not corpus_dir.is_dir():
        raise CliError(f"corpus directory not found: {corpus_dir}", EXIT_USAGE)
    split = load_split_dir(corpus_dir)

    table = None
    if args.embeddings:
        table = read_embedding_table(require_file(args.embeddings, "embedding table"))
    if kind.uses_lm and not args.lm:
        raise CliError(f"--lm is required for system {kind.value}", EXIT_USAGE)

    system = SystemConfig.build(
        kind,
        lm_checkpoint=args.lm if kind.uses_lm else None,
        pretrained_embedding_dim=table.dimension if table is not None else 0,
        classifier_hidden=args.classifier_hidden,
    )
    config = TrainConfig(
        learning_rate=args.lr,
        batch_size=args.batch_size,
        max_epochs=args.max_epochs,
        patience=args.patience,
        seed=args.seed,
        decision_threshold=args.threshold,
    )

    try:
        predictor, report = train_system(
            system, split, config, embedding_table=table, log=print
        )
    except TrainingDivergedError as exc:
        raise CliError(str(exc)) from exc

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_checkpoint(
        out_dir / "checkpoint.zip",
        predictor,
        annotator_fingerprint=stored_annotator_fingerprint(corpus_dir),
        decision_threshold=config.decision_threshold,
        extra={
            "system": kind.value,
            "seed": config.seed,
            "best_epoch": report.best_epoch,
            "best_f1": report.best_f1,
        },
    )
    atomic_write_text(out_dir / "train_report.txt", "\n".join(report.lines()) + "\n")
    atomic_write_text(
        out_dir / "train_report.json", json.dumps(report.to_dict(), indent=2) + "\n"
    )
    print(
        f"best_epoch={report.best_epoch} best_f1={report.best_f1:.4f} "
        f"stopped_early={str(report.stopped_early).lower()}"
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# predict subcommand
# ---------------------------------------------------------------------------


def detect_input_format(text: str) -> str:
    for line in text.splitlines():
        if line.strip():
            return "tsv" if line.startswith("# id=") else "text"
    return "text"


def read_prediction_inputs(path: Path, input_format: str) -> tuple[list[Utterance], bool]:
    """Returns (utterances, live_annotated). Plain-text input is segmented
    and annotated here; TSV input arrives already annotated."""
    text = path.read_text(encoding="utf-8")
    if input_format == "auto":
        input_format = detect_input_format(text)
    if input_format == "tsv":
        return read_corpus(path), False
    annotator = LexiconAnnotator()
    utterances = []
    for k, line in enumerate((l for l in text.splitlines() if l.strip()), start=1):
        tokens = annotator.annotate(line.strip())
        utterances.append(Utterance(id=f"u{k}", tokens=tokens))
    return utterances, True


def render_markup(utterance: Utterance, labels: list[int]) -> str:
    pieces = []
    for token, label in zip(utterance.tokens, labels):
        pieces.append(token.surface + (PAUSE_MARKUP if label == 1 else ""))
    return " ".join(pieces)


def render_prediction_tsv(utterances: list[Utterance], labeled: dict[str, list[int]]) -> str:
    """Original columns preserved; the predicted label is appended as the
    last column of every token line."""
    blocks = []
    for utt in utterances:
        lines = [f"# id={utt.id}"]
        for i, tok in enumerate(utt.tokens):
            fields = [tok.surface, tok.pos, str(tok.dep_head), tok.dep_rel]
            if utt.labels is not None:
                fields.append(str(utt.labels[i]))
            fields.append(str(labeled[utt.id][i]))
            lines.append("\t".join(fields))
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + ("\n" if blocks else "")


def cmd_predict(args: argparse.Namespace, argv: list[str]) -> int:
    apply_config(args, argv, {"format": str, "input-format": str})
    in_path = require_file(args.in_path, "input file")
    utterances, live_annotated = read_prediction_inputs(in_path, args.input_format)

    if args.system == "rule-based":
        from .model import rule_based_predict

        def predict_labels(utt: Utterance) -> list[int]:
            return list(rule_based_predict(utt.tokens).labels)

    else:
        from .model import FingerprintMismatchError, load_checkpoint, verify_fingerprints

        checkpoint_path = require_file(args.checkpoint, "checkpoint")
        try:
            predictor, metadata = load_checkpoint(checkpoint_path)
        except FingerprintMismatchError as exc:
            raise CliError(str(exc)) from exc
        if live_annotated:
            stored = {"annotator": metadata.fingerprints.get("annotator")}
            actual = {"annotator": annotator_fingerprint(LexiconAnnotator())}
            try:
                verify_fingerprints(stored, actual, strict=args.strict)
            except FingerprintMismatchError as exc:
                raise CliError(str(exc)) from exc

        def predict_labels(utt: Utterance) -> list[int]:
            return list(
                predictor.predict_utterance(
                    utt, utt.tokens, metadata.decision_threshold
                ).labels
            )

    labeled = {utt.id: predict_labels(utt) for utt in utterances}
    if args.format == "markup":
        body = "".join(render_markup(utt, labeled[utt.id]) + "\n" for utt in utterances)
    else:
        body = render_prediction_tsv(utterances, labeled)

    if args.out:
        out_path = Path(args.out)
        out_path.parent.mkdir(parents=True, exist_ok=True)
        atomic_write_text(out_path, body)
    else:
        sys.stdout.write(body)
    return EXIT_OK


# ---------------------------------------------------------------------------
# eval subcommand
# ---------------------------------------------------------------------------


def read_predicted_labels(path: Path) -> dict[str, tuple[list[str], list[int]]]:
    """Last column of each token line is the predicted label; the first is
    the surface, used to cross-check alignment against the gold file."""
    result: dict[str, tuple[list[str], list[int]]] = {}
    current: str | None = None
    surfaces: list[str] = []
    labels: list[int] = []

    def flush(lineno: int) -> None:
        nonlocal current, surfaces, labels
        if current is None:
            return
        if not surfaces:
            raise CorpusParseError(f"{path}:{lineno}: utterance {current!r} has no tokens")
        result[current] = (surfaces, labels)
        current, surfaces, labels = None, [], []

    lineno = 0
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.rstrip("\n")
        if not line.strip():
            flush(lineno)
            continue
        if line.startswith("# id="):
            if current is not None:
                raise CorpusParseError(f"{path}:{lineno}: block inside block {current!r}")
            current = line[len("# id="):].strip()
            if current in result:
                raise CorpusParseError(f"{path}:{lineno}: duplicate utterance id {current!r}")
            continue
        if current is None:
            raise CorpusParseError(f"{path}:{lineno}: token line outside an utterance block")
        fields = line.split("\t")
        if len(fields) < 2:
            raise CorpusParseError(
                f"{path}:{lineno}: need at least surface and label columns"
            )
        if fields[-1] not in ("0", "1"):
            raise CorpusParseError(
                f"{path}:{lineno}: predicted label {fields[-1]!r} is not 0/1"
            )
        surfaces.append(fields[0])
        labels.append(int(fields[-1]))
    flush(lineno + 1)
    return result


def cmd_eval(args: argparse.Namespace, argv: list[str]) -> int:
    apply_config(args, argv, {})
    from .evaluator import evaluate_system, render_report, report_to_dict

    gold_path = require_file(args.gold, "gold corpus")
    gold = read_corpus(gold_path)
    for utt in gold:
        if utt.labels is None:
            raise CliError(f"gold utterance {utt.id!r} has no labels")

    if args.pred:
        pred_path = require_file(args.pred, "predictions file")
        predicted = read_predicted_labels(pred_path)
        for utt in gold:
            if utt.id not in predicted:
                raise CliError(f"utterance {utt.id!r} missing from {pred_path}")
            surfaces, labels = predicted[utt.id]
            if surfaces != [t.surface for t in utt.tokens]:
                raise CliError(
                    f"utterance {utt.id!r}: predictions do not align with the gold tokens"
                )
        extra = set(predicted) - {u.id for u in gold}
        if extra:
            raise CliError(
                f"predictions contain utterances not in the gold corpus: {sorted(extra)[:5]}"
            )

        def predict_labels(utt: Utterance) -> list[int]:
            return predicted[utt.id][1]

    else:
        from .model import FingerprintMismatchError, load_checkpoint

        checkpoint_path = require_file(args.checkpoint, "checkpoint")
        try:
            predictor, metadata = load_checkpoint(checkpoint_path)
        except FingerprintMismatchError as exc:
            raise CliError(str(exc)) from exc

        def predict_labels(utt: Utterance) -> list[int]:
            return list(
                predictor.predict_utterance(
                    utt, utt.tokens, metadata.decision_threshold
                ).labels
            )

    try:
        report = evaluate_system(predict_labels, gold)
    except ValueError as exc:
        raise CliError(str(exc)) from exc

    rendered = render_report(report)
    sys.stdout.write(rendered)
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        atomic_write_text(out_dir / "report.txt", rendered)
        atomic_write_text(
            out_dir / "report.json", json.dumps(report_to_dict(report), indent=2) + "\n"
        )
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser assembly
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="phrasebreak",
        description="Phrase-break prediction for Japanese TTS front ends.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p_corpus = sub.add_parser("corpus", help="build a labeled corpus and split it")
    p_corpus.add_argument("--in", dest="in_path", required=True, help="input file")
    p_corpus.add_argument("--out", required=True, help="output directory")
    p_corpus.add_argument(
        "--format",
        choices=["alignment", "tsv"],
        default="alignment",
        help="input kind: time-aligned words or an already-labeled TSV corpus",
    )
    p_corpus.add_argument(
        "--threshold-ms",
        type=int,
        default=DEFAULT_BREAK_THRESHOLD_MS,
        help="silence duration (ms) above which a break is labeled",
    )
    p_corpus.add_argument(
        "--split", type=parse_split_sizes, default=None, help="train,validation,test sizes"
    )
    p_corpus.add_argument("--seed", type=int, default=0, help="split shuffle seed")
    p_corpus.add_argument("--config", default=None, help="key=value defaults file")
    p_corpus.set_defaults(handler=cmd_corpus)

    p_train = sub.add_parser("train", help="train a break prediction system")
    p_train.add_argument(
        "--system", required=True, choices=("rule-based",) + TRAINABLE_SYSTEMS
    )
    p_train.add_argument("--corpus", required=True, help="corpus directory with split TSVs")
    p_train.add_argument("--out", required=True, help="output directory")
    p_train.add_argument("--lr", type=float, default=1e-5)
    p_train.add_argument("--batch-size", type=int, default=64)
    p_train.add_argument("--max-epochs", type=int, default=20)
    p_train.add_argument("--patience", type=int, default=10)
    p_train.add_argument("--seed", type=int, default=0)
    p_train.add_argument("--threshold", type=float, default=0.5, help="decision threshold")
    p_train.add_argument("--lm", default=None, help="pretrained LM checkpoint directory")
    p_train.add_argument("--embeddings", default=None, help="pretrained word vectors (text format)")
    p_train.add_argument("--classifier-hidden", type=int, default=256)
    p_train.add_argument("--config", default=None, help="key=value defaults file")
    p_train.set_defaults(handler=cmd_train)

    p_predict = sub.add_parser("predict", help="predict phrase breaks")
    group = p_predict.add_mutually_exclusive_group(required=True)
    group.add_argument("--checkpoint", help="trained checkpoint archive")
    group.add_argument("--system", choices=["rule-based"], help="parameter-free baseline")
    p_predict.add_argument("--in", dest="in_path", required=True, help="text or TSV input")
    p_predict.add_argument("--out", default=None, help="output file (default stdout)")
    p_predict.add_argument("--format", choices=["markup", "tsv"], default="markup")
    p_predict.add_argument(
        "--input-format", choices=["auto", "text", "tsv"], default="auto"
    )
    p_predict.add_argument(
        "--strict",
        action="store_true",
        help="treat fingerprint mismatches as errors instead of warnings",
    )
    p_predict.add_argument("--config", default=None, help="key=value defaults file")
    p_predict.set_defaults(handler=cmd_predict)

    p_eval = sub.add_parser("eval", help="score predictions against gold labels")
    group = p_eval.add_mutually_exclusive_group(required=True)
    group.add_argument("--pred", help="predictions TSV (last column = label)")
    group.add_argument("--checkpoint", help="trained checkpoint archive")
    p_eval.add_argument("--gold", required=True, help="gold labeled TSV corpus")
    p_eval.add_argument("--out", default=None, help="report output directory")
    p_eval.add_argument("--config", default=None, help="key=value defaults file")
    p_eval.set_defaults(handler=cmd_eval)

    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.subcommand == "train" and args.system == "rule-based":
        parser.error("rule-based requires no training")
    try:
        return args.handler(args, argv)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (CorpusParseError, AnnotationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
