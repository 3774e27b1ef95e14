"""Command-line entry point.

Every subcommand writes a JSON manifest (command line, resolved config,
seeds, input and checkpoint hashes) so a run can be replayed with
``udgan replay MANIFEST --out DIR``. Settings resolve as CLI flag, then
config file, then built-in default.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__

log = logging.getLogger("udgan")


class StageError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _jsonable(v):
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, (set, tuple)):
        return list(v)
    raise TypeError(f"cannot record {type(v).__name__} in a manifest")


def _write_manifest(path, command: str, argv: list[str], **fields) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    body = {"command": command, "argv": argv, "version": __version__, **fields}
    text = json.dumps(body, indent=2, sort_keys=True, default=_jsonable)
    path.write_text(text + "\n", encoding="utf-8")
    return path


def _manifest_path(args, default_dir: Path | None, command: str) -> Path:
    if args.manifest:
        return Path(args.manifest)
    if default_dir is not None:
        return default_dir / "manifest.json"
    return Path(f"udgan-{command}.manifest.json")


# ---------------------------------------------------------------------------
# subcommands


def _load(corpus: str, max_len: int, min_count: int):
    from .corpus import load_corpus
    try:
        return load_corpus(corpus, max_len=max_len, min_count=min_count)
    except (OSError, ValueError) as e:
        raise StageError("load-corpus", str(e)) from e


def _config(args):
    from .trainer import TrainingConfig
    cfg = TrainingConfig.from_file(args.config) if args.config else TrainingConfig()
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if getattr(args, "mix", None) is not None:
        overrides["mix"] = args.mix
    if getattr(args, "no_dspecial", False):
        overrides["use_dspecial"] = False
    if getattr(args, "epochs", None) is not None:
        overrides["adversarial_epochs"] = args.epochs
    return cfg.replace(**overrides)


def cmd_synthesize(args, argv) -> int:
    from .synthetic import DEFAULT_TOPIC, make_corpus, write_corpus
    out = write_corpus(args.out, make_corpus(args.seed, args.paragraphs))
    print(f"corpus={out}\ndefault_topic={DEFAULT_TOPIC}")
    _write_manifest(_manifest_path(args, None, "synthesize") if args.manifest else Path(str(out) + ".manifest.json"),
                    "synthesize", argv, seed=args.seed, outputs={"corpus": _sha256(out)})
    return 0


def cmd_preprocess(args, argv) -> int:
    vocab, data = _load(args.corpus, args.max_len, args.min_count)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "vocab.txt").write_text("\n".join(vocab.itos) + "\n", encoding="utf-8", errors="surrogateescape")
    n_sent = sum(len(p) for p in data)
    stats = {"paragraphs": len(data), "sentences": n_sent, "vocab_size": len(vocab),
             "mean_length": float(np.mean([len(s) for p in data for s in p]))}
    (out / "stats.txt").write_text("".join(f"{k}={v}\n" for k, v in stats.items()), encoding="utf-8")
    sys.stdout.write("".join(f"{k}={v}\n" for k, v in stats.items()))
    _write_manifest(_manifest_path(args, out, "preprocess"), "preprocess", argv,
                    inputs={"corpus": _sha256(args.corpus)}, outputs={"vocab": _sha256(out / "vocab.txt")}, **stats)
    return 0


def _train(args, argv, followup: bool) -> int:
    from .corpus import UserSpec
    from .trainer import algorithm1, algorithm2
    cfg = _config(args)
    vocab, data = _load(args.corpus, cfg.max_len, args.min_count)
    try:
        spec = UserSpec.from_text(vocab, args.topic, args.sentiment)
    except ValueError as e:
        raise StageError("user-spec", str(e)) from e
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "vocab.txt").write_text("\n".join(vocab.itos) + "\n", encoding="utf-8", errors="surrogateescape")
    (out / "config.txt").write_text(cfg.dumps(), encoding="utf-8")
    if followup:
        result = algorithm2(cfg, data, vocab, spec, args.dgeneral, out_dir=out, generator_init=args.generator_init)
    else:
        result = algorithm1(cfg, data, vocab, spec, out_dir=out)
    (out / "timing.txt").write_text("\n".join(result.timing_lines()) + "\n", encoding="utf-8")
    (out / "log.txt").write_text("\n".join(result.log_lines()) + "\n", encoding="utf-8")
    sys.stdout.write("\n".join(result.timing_lines()) + "\n")
    extra = {}
    if followup:
        extra["frozen_dgeneral"] = {"path": str(args.dgeneral), "sha256_loaded": result.dgeneral_hash_loaded,
                                    "sha256_after": result.dgeneral_hash_after}
        print(f"dgeneral_frozen={result.dgeneral_hash_loaded == result.dgeneral_hash_after}")
    _write_manifest(
        _manifest_path(args, out, "train"), "train-followup" if followup else "train-initial", argv,
        config=cfg.to_dict(), seed=cfg.seed, topic=args.topic, sentiment=args.sentiment,
        inputs={"corpus": _sha256(args.corpus)},
        checkpoints={k: v["sha256"] for k, v in result.checkpoints.items()},
        timing=result.timing, **extra,
    )
    return 0


def cmd_train_initial(args, argv) -> int:
    return _train(args, argv, followup=False)


def cmd_train_followup(args, argv) -> int:
    return _train(args, argv, followup=True)


def _read_vocab(path):
    from .corpus import Vocabulary
    return Vocabulary(Path(path).read_text(encoding="utf-8", errors="surrogateescape").splitlines())


def cmd_generate(args, argv) -> int:
    from .corpus import decode
    from .generator import GeneratorModel, sample_batch
    gen = GeneratorModel.load(args.checkpoint)
    vocab = _read_vocab(args.vocab or Path(args.checkpoint).with_name("vocab.txt"))
    if len(vocab) != gen.vocab_size:
        raise StageError("generate", f"vocabulary has {len(vocab)} tokens, generator expects {gen.vocab_size}")
    results = sample_batch(gen, args.paragraphs, np.random.default_rng(args.seed), args.s_max)
    text = "\n\n".join("\n".join(decode(vocab, s) for s in r.sentences) for r in results) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8", errors="surrogateescape")
    else:
        sys.stdout.write(text)
    outputs = {"generated": _sha256(args.out)} if args.out else {}
    _write_manifest(_manifest_path(args, None, "generate") if args.manifest or not args.out
                    else Path(args.out + ".manifest.json"), "generate", argv, seed=args.seed,
                    inputs={"checkpoint": _sha256(args.checkpoint)}, outputs=outputs)
    return 0


def _sentences(path) -> list[list[str]]:
    lines = Path(path).read_text(encoding="utf-8", errors="surrogateescape").splitlines()
    return [ln.split() for ln in lines if ln.strip()]


def cmd_evaluate(args, argv) -> int:
    from .eval import format_metrics, rouge_l_sum, text_report, timing_compare
    from .features import TfidfModel
    cands = _sentences(args.generated)
    if not cands:
        raise StageError("evaluate", "no generated sentences")
    topic = args.topic.split()
    refs = _sentences(args.references) if args.references else None
    tfidf = TfidfModel.fit(refs) if refs else None
    metrics = text_report(cands, topic, refs, tfidf)
    metrics["rouge_l_sum"] = rouge_l_sum(cands, topic, f_measure=args.f_measure)
    if args.timing_initial and args.timing_followup:
        for k, v in timing_compare(_kv(args.timing_initial), _kv(args.timing_followup)).items():
            metrics[f"timing_{k}"] = v
    sys.stdout.write(format_metrics(metrics))
    if args.csv:
        Path(args.csv).write_text(",".join(metrics) + "\n" + ",".join(str(v) for v in metrics.values()) + "\n",
                                  encoding="utf-8")
    _write_manifest(_manifest_path(args, None, "evaluate"), "evaluate", argv,
                    inputs={"generated": _sha256(args.generated)}, metrics=metrics)
    return 0


def _kv(path) -> dict:
    out = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if "=" in line:
            k, v = line.split("=", 1)
            try:
                out[k.strip()] = float(v)
            except ValueError:
                out[k.strip()] = v.strip()
    return out


def cmd_selfcheck(args, argv) -> int:
    from .selfcheck import run_all
    results = run_all()
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'} {name} {detail}")
    passed = all(ok for _, ok, _ in results)
    _write_manifest(_manifest_path(args, None, "selfcheck"), "selfcheck", argv,
                    results={name: ok for name, ok, _ in results})
    return 0 if passed else 1


def cmd_replay(args, argv) -> int:
    body = json.loads(Path(args.manifest_file).read_text(encoding="utf-8"))
    old = list(body["argv"])
    if "--out" in old and args.out:
        old[old.index("--out") + 1] = args.out
    return main(old)


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="udgan", description="Topic- and sentiment-steered paragraph generation.")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", metavar="COMMAND")

    def common(sp, seed=True):
        if seed:
            sp.add_argument("--seed", type=int, default=None, help="seed for all randomness (overrides config)")
        sp.add_argument("--manifest", default=None, help="where to write the run manifest")

    sp = sub.add_parser("synthesize", help="write the seeded template-grammar corpus")
    sp.add_argument("--out", required=True)
    sp.add_argument("--paragraphs", type=int, default=400)
    common(sp, seed=False)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_synthesize)

    sp = sub.add_parser("preprocess", help="build the vocabulary and corpus statistics")
    sp.add_argument("--corpus", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--max-len", type=int, default=45)
    sp.add_argument("--min-count", type=int, default=2)
    common(sp, seed=False)
    sp.set_defaults(func=cmd_preprocess)

    for name, func, followup in (("train-initial", cmd_train_initial, False),
                                 ("train-followup", cmd_train_followup, True)):
        sp = sub.add_parser(name, help="initial training" if not followup else "follow-up training with frozen D_general")
        sp.add_argument("--corpus", required=True)
        sp.add_argument("--topic", required=True, help="topic sentence (whitespace tokenized)")
        sp.add_argument("--sentiment", required=True, choices=("positive", "negative", "neutral"))
        sp.add_argument("--config", default=None, help="key=value training config file")
        sp.add_argument("--out", required=True, help="output directory for checkpoints and reports")
        sp.add_argument("--min-count", type=int, default=2)
        sp.add_argument("--epochs", type=int, default=None, help="adversarial epochs (overrides config)")
        sp.add_argument("--mix", type=float, default=None, help="reward mixing weight lambda (overrides config)")
        sp.add_argument("--no-dspecial", action="store_true", help="train without the special discriminator")
        if followup:
            sp.add_argument("--dgeneral", required=True, help="frozen d-general checkpoint")
            sp.add_argument("--generator-init", default=None,
                            help="start from this generator instead of re-pretraining (needs followup_pretrain=false)")
        common(sp)
        sp.set_defaults(func=func)

    sp = sub.add_parser("generate", help="sample paragraphs from a generator checkpoint")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--vocab", default=None, help="vocabulary file (default: vocab.txt next to the checkpoint)")
    sp.add_argument("--paragraphs", type=int, default=10)
    sp.add_argument("--s-max", type=int, default=5)
    sp.add_argument("--out", default=None)
    common(sp, seed=False)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_generate)

    sp = sub.add_parser("evaluate", help="BLEU, ROUGE-L and sentiment metrics for generated text")
    sp.add_argument("--generated", required=True)
    sp.add_argument("--topic", required=True)
    sp.add_argument("--references", default=None)
    sp.add_argument("--f-measure", action="store_true", help="ROUGE-L F-measure instead of recall")
    sp.add_argument("--csv", default=None)
    sp.add_argument("--timing-initial", default=None, help="timing.txt of an initial run")
    sp.add_argument("--timing-followup", default=None, help="timing.txt of a follow-up run")
    common(sp, seed=False)
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("selfcheck", help="run gradient and invariant checks")
    common(sp, seed=False)
    sp.set_defaults(func=cmd_selfcheck)

    sp = sub.add_parser("replay", help="re-run a recorded manifest")
    sp.add_argument("manifest_file")
    sp.add_argument("--out", default=None, help="replace the recorded output directory")
    sp.set_defaults(func=cmd_replay)
    return p


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    if not argv:
        parser.print_usage(sys.stderr)
        return 2
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        return args.func(args, argv)
    except StageError as e:
        print(f"udgan {args.command}: error {e}", file=sys.stderr)
    except (OSError, ValueError, RuntimeError) as e:
        print(f"udgan {args.command}: error [{args.command}] {type(e).__name__}: {e}", file=sys.stderr)
    return 1


if __name__ == "__main__":
    sys.exit(main())
