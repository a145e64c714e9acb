"""Command-line entry point: ``cabin-slu <command> ...``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import sidecar
from .acoustic import LldConfig, extract_directory
from .config import load_ablation, load_run_config, parse_run_config, read_json
from .data.schema import Schema, load_corpus, save_corpus
from .data.synth import GeneratorConfig, generate_synthetic, synthetic_embeddings
from .embeddings import concat_spaces, coverage_report, load_table, write_table
from .errors import ConfigError, DataError, FormatError, NumericError, SluError, TooShortError, ValidationError
from .evaluation import ablation_report
from .experiment import load_resources, run_eval, run_train
from .visual import load_frame_features, pool_frames

EXIT_OK = 0
EXIT_CONFIG = 3
EXIT_DATA = 4
EXIT_NUMERIC = 5
EXIT_IO = 6

log = logging.getLogger("cabin_slu")


def exit_code(exc: BaseException) -> int:
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, (DataError, FormatError, ValidationError, TooShortError)):
        return EXIT_DATA
    if isinstance(exc, NumericError):
        return EXIT_NUMERIC
    if isinstance(exc, OSError):
        return EXIT_IO
    return EXIT_DATA


def _file_log(output_dir: Path, name: str) -> logging.Handler:
    output_dir.mkdir(parents=True, exist_ok=True)
    handler = logging.FileHandler(output_dir / name, mode="w", encoding="utf-8")
    handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
    logging.getLogger().addHandler(handler)
    logging.getLogger().setLevel(logging.INFO)
    return handler


# ----------------------------------------------------------------------
# commands


def cmd_gen_synth(args) -> int:
    settings = read_json(args.config) if args.config else {}
    emb = settings.pop("embeddings", {})
    for key, val in (("n_utterances", args.n), ("intent_distribution", args.distribution),
                     ("ambiguous_fraction", args.ambiguous), ("seed", args.seed),
                     ("acoustic_dim", args.acoustic_dim), ("noise_std", args.noise_std),
                     ("n_non_command", args.non_command)):
        if val is not None:
            settings[key] = val
    cfg = GeneratorConfig.from_dict(settings)
    emb_dim = args.embedding_dim or emb.get("dim", 50)
    speech_cov = emb.get("speech_coverage", 0.7)

    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    data = generate_synthetic(cfg)
    save_corpus(out / "corpus.jsonl", data.corpus)
    sidecar.write_vectors(out / "acoustic.tsv", data.acoustic)
    sidecar.write_frames(out / "visual_cabin_frames.tsv", data.visual_cabin)
    sidecar.write_frames(out / "visual_road_frames.tsv", data.visual_road)
    vocab = data.corpus.vocab()
    words, mat = synthetic_embeddings(vocab, emb_dim, cfg.seed + 101)
    write_table(out / "word.txt", words, mat)
    words, mat = synthetic_embeddings(vocab, emb_dim, cfg.seed + 202, coverage=speech_cov)
    write_table(out / "speech.txt", words, mat, header=True)
    (out / "ambiguous_ids.txt").write_text("".join(u + "\n" for u in sorted(data.ambiguous_ids)), encoding="utf-8")

    print(f"wrote {len(data.corpus)} utterances to {out}")
    for intent, n in data.corpus.intent_counts().items():
        print(f"{intent}\t{n}")
    print(f"Total\t{sum(data.corpus.intent_counts().values())}")
    print(f"ambiguous\t{len(data.ambiguous_ids)}")
    return EXIT_OK


def cmd_validate(args) -> int:
    schema = Schema().with_intents(args.extra_intents or ())
    corpus = load_corpus(args.corpus, schema)
    print(f"{len(corpus)} utterances OK")
    for intent, n in corpus.intent_counts().items():
        print(f"intent\t{intent}\t{n}")
    for tag, n in corpus.tag_counts().items():
        print(f"tag\t{tag}\t{n}")
    return EXIT_OK


def cmd_extract_acoustic(args) -> int:
    paths = list(args.wav)
    if args.wav_dir:
        paths += sorted(str(p) for p in Path(args.wav_dir).glob("*.wav"))
    if not paths:
        raise ConfigError("no WAV files given")
    cfg = LldConfig(
        frame_len=args.frame_len, hop=args.hop, n_mel=args.n_mel, n_mfcc=args.n_mfcc,
        include_deltas=not args.no_deltas,
    )
    vectors = extract_directory(paths, cfg)
    sidecar.write_vectors(args.out, vectors)
    dim = len(next(iter(vectors.values())))
    print(f"wrote {len(vectors)} vectors of dim {dim} to {args.out}")
    return EXIT_OK


def cmd_pool_visual(args) -> int:
    sets = load_frame_features(args.frames, args.view)
    pooled = {fs.utterance_id: pool_frames(fs, args.pooling) for fs in sets}
    sidecar.write_vectors(args.out, pooled)
    print(f"pooled {len(pooled)} utterances ({args.view}, {args.pooling}) into {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = load_run_config(args.config)
    handler = _file_log(Path(cfg.output_dir), "train.log")
    try:
        model, history = run_train(cfg)
    finally:
        logging.getLogger().removeHandler(handler)
        handler.close()
    best = max(h.dev_micro_f1 for h in history)
    print(f"trained {len(history)} epochs, best dev micro-F1 {best:.4f}")
    print(f"checkpoint: {Path(cfg.output_dir) / 'model.ckpt'}")
    return EXIT_OK


def _print_eval(name, result):
    im = result.intent
    print(f"{name}: intent micro-F1 {im.micro_f1:.4f} macro-F1 {im.macro_f1:.4f} "
          f"weighted-F1 {im.weighted_f1:.4f} (n={im.n_items})")
    print(f"{name}: slot token micro-F1 {result.slot_token.micro_f1:.4f} "
          f"span micro-F1 {result.slot_span.micro_f1:.4f}")


def cmd_eval(args) -> int:
    cfg = load_run_config(args.config)
    result = run_eval(cfg, args.checkpoint)
    _print_eval(cfg.name, result)
    return EXIT_OK


def run_ablation(runs, out_dir):
    """Train and evaluate each ``(run dict, base dir)`` in order.

    Failed runs are reported, not fatal. Returns ``(report, exit code)`` where
    the code is that of the first failure, or 0.
    """
    rows, failures, code = [], [], EXIT_OK
    for d, base_dir in runs:
        name = d.get("name", "run")
        try:
            cfg = parse_run_config(d, base_dir, name)
            resources = load_resources(cfg)
            model, _ = run_train(cfg, resources)
            result = run_eval(cfg, resources=resources, model=model)
            rows.append((name, result.intent))
        except (SluError, OSError) as exc:
            log.error("run %s failed: %s", name, exc)
            failures.append((name, str(exc)))
            code = code or exit_code(exc)
    report = ablation_report(rows, failures)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "ablation.txt").write_text(report.text(), encoding="utf-8")
    (out / "ablation.jsonl").write_text(report.jsonl(), encoding="utf-8")
    return report, code


def cmd_ablate(args) -> int:
    runs = []
    for path in args.configs:
        p = Path(path)
        runs.extend((d, p.parent) for d in load_ablation(p))
    out_dir = Path(args.out) if args.out else Path(args.configs[0]).parent / "ablation"
    handler = _file_log(out_dir, "ablate.log")
    try:
        report, code = run_ablation(runs, out_dir)
    finally:
        logging.getLogger().removeHandler(handler)
        handler.close()
    print(report.text(), end="")
    return code


def cmd_embed_info(args) -> int:
    tables = [load_table(p) for p in args.embeddings]
    embedder = concat_spaces(tables)
    for t in tables:
        print(f"{t.name}\tvocab={len(t)}\tdim={t.dim}")
    print(f"total_dim\t{embedder.total_dim}")
    if args.corpus:
        corpus = load_corpus(args.corpus)
        for name, cov in coverage_report(embedder, corpus.vocab()).items():
            print(f"coverage\t{name}\tcovered={cov.covered}\toov_rate={cov.oov_rate:.4f}")
    return EXIT_OK


# ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cabin-slu", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synth", help="generate a synthetic corpus with sidecars and embeddings")
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="JSON file with generator settings")
    p.add_argument("--n", type=int)
    p.add_argument("--distribution", choices=["uniform", "table1-proportional"])
    p.add_argument("--ambiguous", type=float, help="fraction of acoustically disambiguated utterances")
    p.add_argument("--seed", type=int)
    p.add_argument("--acoustic-dim", type=int)
    p.add_argument("--noise-std", type=float)
    p.add_argument("--non-command", type=int)
    p.add_argument("--embedding-dim", type=int)
    p.set_defaults(func=cmd_gen_synth)

    p = sub.add_parser("validate", help="validate a corpus file and print label counts")
    p.add_argument("corpus")
    p.add_argument("--extra-intents", nargs="*")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("extract-acoustic", help="built-in LLD + functionals extraction from WAV files")
    p.add_argument("wav", nargs="*")
    p.add_argument("--wav-dir")
    p.add_argument("--out", required=True)
    p.add_argument("--frame-len", type=float, default=0.025)
    p.add_argument("--hop", type=float, default=0.010)
    p.add_argument("--n-mel", type=int, default=26)
    p.add_argument("--n-mfcc", type=int, default=13)
    p.add_argument("--no-deltas", action="store_true")
    p.set_defaults(func=cmd_extract_acoustic)

    p = sub.add_parser("pool-visual", help="pool per-frame CNN features into per-utterance vectors")
    p.add_argument("frames")
    p.add_argument("--view", choices=["cabin", "road"], required=True)
    p.add_argument("--pooling", choices=["mean", "max"], default="mean")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_pool_visual)

    p = sub.add_parser("train", help="train a model from a run config")
    p.add_argument("config")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on the configured test split")
    p.add_argument("config")
    p.add_argument("--checkpoint")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="train and evaluate several configs into one table")
    p.add_argument("configs", nargs="+")
    p.add_argument("--out")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("embed-info", help="embedding table sizes and corpus coverage")
    p.add_argument("embeddings", nargs="+")
    p.add_argument("--corpus")
    p.set_defaults(func=cmd_embed_info)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (SluError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exit_code(exc)


if __name__ == "__main__":
    sys.exit(main())
