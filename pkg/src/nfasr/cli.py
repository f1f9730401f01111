"""``nfasr`` command-line entry point."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import harness
from .audio_io import load_manifest, read_wav
from .errors import ConfigError, DataError
from .features import read_feature_cache
from .modelio import load_model, save_model
from .synth import synth_corpus

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_PARTIAL = 4


def _classifiers(choice: str) -> list[str]:
    return ["anfis", "mlp"] if choice == "both" else [choice]


def _write(out: Path | None, name: str, text: str) -> None:
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / name).write_text(text, encoding="utf-8")


def cmd_synth_corpus(args, settings) -> int:
    seed = 1 if args.seed is None else args.seed
    path = synth_corpus(seed, args.out, per_class=args.per_class)
    print(f"manifest: {path}")
    return EXIT_OK


def cmd_prepare(args, settings) -> int:
    manifest = load_manifest(args.manifest)
    result = harness.prepare(manifest, settings, args.frontend, args.cache)
    print(f"{len(result.rows)} of {len(manifest.entries)} files written to {args.cache}")
    for path, msg in result.failures:
        print(f"failed: {path}: {msg}")
    return EXIT_PARTIAL if result.failures else EXIT_OK


def _records(args, settings):
    manifest = load_manifest(args.manifest)
    rows = read_feature_cache(args.cache, dim=settings.frontend.num_cepstra)
    return manifest, harness.join_records(manifest, rows)


def cmd_train(args, settings) -> int:
    manifest, records = _records(args, settings)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for kind in _classifiers(args.classifier):
        model = harness.train_on_split(records, kind, settings, manifest.vocabulary, args.split)
        path = out / f"{kind}.model"
        save_model(model, path)
        print(f"{path}: {harness.describe_model(model)}")
    return EXIT_OK


def cmd_eval(args, settings) -> int:
    manifest, records = _records(args, settings)
    reports = [
        harness.evaluate_two_step(records, manifest.vocabulary,
                                  harness.make_trainer(kind, settings, manifest.vocabulary), kind)
        for kind in _classifiers(args.classifier)
    ]
    text = harness.format_table(reports)
    structured = "\n".join(line for r in reports for line in r.structured()) + "\n"
    print(text)
    print(structured, end="")
    out = Path(args.out) if args.out else None
    _write(out, "report.txt", text + "\n")
    _write(out, "report.kv", structured)
    return EXIT_OK


def cmd_recognize(args, settings) -> int:
    model = load_model(args.model)
    u = read_wav(args.wav, source_id=str(args.wav))
    label, scores = harness.recognize(model, u, settings, args.frontend)
    print(label)
    for word, s in zip(model.vocabulary, scores):
        print(f"{word:<10} {s:.10g}")
    return EXIT_OK


def cmd_compare_precision(args, settings) -> int:
    manifest = load_manifest(args.manifest)
    model = load_model(args.model) if args.model else None
    report = harness.compare_precision(manifest, settings, model)
    text = report.format()
    print(text)
    _write(Path(args.out) if args.out else None, "precision.txt", text + "\n")
    if report.failures:
        return EXIT_PARTIAL
    return EXIT_OK if report.passed else EXIT_CHECK_FAILED


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nfasr", description="Speech-command recognition with MFCC and ANFIS.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def command(name, func, help_text):
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--config", type=Path, help="file of 'section.field = value' overrides")
        sp.add_argument("--seed", type=int)
        sp.set_defaults(func=func)
        return sp

    sp = command("synth-corpus", cmd_synth_corpus, "write a synthetic four-command corpus")
    sp.add_argument("--out", type=Path, required=True)
    sp.add_argument("--per-class", type=int, default=24)

    sp = command("prepare", cmd_prepare, "extract compressed features into a cache file")
    sp.add_argument("--manifest", type=Path, required=True)
    sp.add_argument("--cache", type=Path, required=True)
    sp.add_argument("--frontend", choices=harness.FRONTENDS, default="float")

    sp = command("train", cmd_train, "train classifiers on one split of a feature cache")
    sp.add_argument("--manifest", type=Path, required=True)
    sp.add_argument("--cache", type=Path, required=True)
    sp.add_argument("--classifier", choices=("anfis", "mlp", "both"), default="anfis")
    sp.add_argument("--split", default="train")
    sp.add_argument("--out", type=Path, required=True)

    sp = command("eval", cmd_eval, "two-step train/test swap evaluation")
    sp.add_argument("--manifest", type=Path, required=True)
    sp.add_argument("--cache", type=Path, required=True)
    sp.add_argument("--classifier", choices=("anfis", "mlp", "both"), default="both")
    sp.add_argument("--out", type=Path)

    sp = command("recognize", cmd_recognize, "classify one WAV file")
    sp.add_argument("--model", type=Path, required=True)
    sp.add_argument("--wav", type=Path, required=True)
    sp.add_argument("--frontend", choices=harness.FRONTENDS, default="float")

    sp = command("compare-precision", cmd_compare_precision, "fixed-point versus float front-end")
    sp.add_argument("--manifest", type=Path, required=True)
    sp.add_argument("--model", type=Path)
    sp.add_argument("--out", type=Path)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        settings = harness.load_settings(args.config, args.seed)
        return args.func(args, settings)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
