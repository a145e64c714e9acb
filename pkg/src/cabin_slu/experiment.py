"""Train / evaluate / ablate runs described by a ``RunConfig``."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

from . import sidecar
from .config import RunConfig
from .data.features import ResolvedFeatures, attach_features
from .data.schema import Corpus, Schema, load_corpus
from .data.split import holdout_indices, kfold_split
from .embeddings import CompositeEmbedder, concat_spaces, load_table
from .errors import ConfigError
from .evaluation import Metrics, intent_metrics, slot_metrics
from .model import HJoint2Model, load_model, predict, save_model, train
from .visual import load_view_vectors

log = logging.getLogger(__name__)

CHECKPOINT = "model.ckpt"
HISTORY = "history.tsv"
METRICS = "metrics.json"
PREDICTIONS = "predictions.jsonl"


@dataclass
class Resources:
    corpus: Corpus
    embedder: CompositeEmbedder
    features: ResolvedFeatures | None


def load_resources(cfg: RunConfig) -> Resources:
    cfg.check_paths()
    schema = Schema().with_intents(cfg.extra_intents)
    corpus = load_corpus(cfg.corpus, schema)
    tables = [load_table(e.path, e.name) for e in cfg.embeddings]
    embedder = concat_spaces(tables, [e.oov_policy for e in cfg.embeddings], cfg.alignment)
    feats = cfg.fusion.utterance_feats
    features = None
    if feats:
        maps = {}
        if "acoustic" in feats:
            maps["acoustic"] = sidecar.read_vectors(cfg.acoustic)
        if "visual_cabin" in feats:
            maps["visual_cabin"] = load_view_vectors(cfg.visual_cabin, "cabin", cfg.visual_pooling)
        if "visual_road" in feats:
            maps["visual_road"] = load_view_vectors(cfg.visual_road, "road", cfg.visual_pooling)
        features = attach_features(corpus, strict=cfg.strict_features, **maps)
    return Resources(corpus, embedder, features)


def split_corpus(cfg: RunConfig, corpus: Corpus):
    """``(train, dev or None, test)`` for the configured split."""
    sp = cfg.split
    if sp.kind == "none":
        train_c, test_c = corpus, corpus
    elif sp.kind == "kfold":
        train_c, test_c = kfold_split(corpus, sp.k, cfg.seed, sp.stratified)[sp.fold]
    else:
        tr, te = holdout_indices(corpus, sp.test_fraction, cfg.seed, sp.stratified)
        train_c, test_c = corpus.subset(tr), corpus.subset(te)
    dev_c = None
    if sp.dev_fraction > 0 and sp.kind != "none":
        tr, dv = holdout_indices(train_c, sp.dev_fraction, cfg.seed + 1, sp.stratified)
        train_c, dev_c = train_c.subset(tr), train_c.subset(dv)
    return train_c, dev_c, test_c


def write_history(path, history) -> None:
    lines = ["epoch\ttrain_loss\tdev_micro_f1\tbest_dev_micro_f1\n"]
    for h in history:
        lines.append(f"{h.epoch}\t{h.train_loss!r}\t{h.dev_micro_f1!r}\t{h.best_dev_micro_f1!r}\n")
    Path(path).write_text("".join(lines), encoding="utf-8")


def run_train(cfg: RunConfig, resources: Resources | None = None):
    res = resources or load_resources(cfg)
    train_c, dev_c, _ = split_corpus(cfg, res.corpus)
    model, history = train(
        train_c, res.embedder, cfg.fusion, cfg.hyper, seed=cfg.seed, features=res.features, dev=dev_c,
    )
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_model(out / CHECKPOINT, model)
    write_history(out / HISTORY, history)
    return model, history


@dataclass
class EvalResult:
    intent: Metrics
    confusion: object
    slot_token: Metrics
    slot_span: Metrics
    predictions: list

    def row(self, name: str) -> dict:
        return {
            "config": name,
            "intent": self.intent.as_row(),
            "slot_token": self.slot_token.as_row(),
            "slot_span": self.slot_span.as_row(),
        }


def check_compatible(model: HJoint2Model, cfg: RunConfig, res: Resources) -> None:
    if model.schema != res.corpus.schema:
        raise ConfigError(
            f"checkpoint label sets {model.schema.to_dict()} differ from the corpus schema "
            f"{res.corpus.schema.to_dict()}"
        )
    names = [s.name for s in model.spaces]
    if names != res.embedder.names:
        raise ConfigError(f"checkpoint embedding spaces {names} != configured {res.embedder.names}")
    if model.fusion.utterance_feats != cfg.fusion.utterance_feats:
        raise ConfigError(
            f"checkpoint fuses {list(model.fusion.utterance_feats)}, config {list(cfg.fusion.utterance_feats)}"
        )


def evaluate_model(model: HJoint2Model, corpus: Corpus, features=None, embedder=None) -> EvalResult:
    gold_i, pred_i, gold_t, pred_t, ids, preds = [], [], [], [], [], []
    for utt in corpus:
        feats = features.for_utterance(utt.id) if features is not None else None
        p = predict(model, list(utt.tokens), feats, embedder)
        preds.append({"id": utt.id, "intent": p.intent if utt.intent is not None else None,
                      "gold_intent": utt.intent, "tags": list(p.tags), "fallback": p.fallback})
        gold_t.append(list(utt.tags))
        pred_t.append(list(p.tags))
        ids.append(utt.id)
        if utt.intent is not None:
            gold_i.append(utt.intent)
            pred_i.append(p.intent)
    if not gold_i:
        raise ConfigError("evaluation split holds no intent-bearing utterances")
    im, cm = intent_metrics(gold_i, pred_i)
    return EvalResult(
        im, cm,
        slot_metrics(gold_t, pred_t, "token", ids=ids),
        slot_metrics(gold_t, pred_t, "span", ids=ids),
        preds,
    )


def run_eval(cfg: RunConfig, checkpoint=None, resources: Resources | None = None, model=None) -> EvalResult:
    res = resources or load_resources(cfg)
    if model is None:
        ckpt = Path(checkpoint) if checkpoint else Path(cfg.output_dir) / CHECKPOINT
        if not ckpt.is_file():
            raise ConfigError(f"checkpoint not found: {ckpt}")
        model = load_model(ckpt)
    check_compatible(model, cfg, res)
    _, _, test_c = split_corpus(cfg, res.corpus)
    result = evaluate_model(model, test_c, res.features, res.embedder)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / METRICS).write_text(json.dumps(result.row(cfg.name), indent=1, sort_keys=True) + "\n", encoding="utf-8")
    (out / PREDICTIONS).write_text(
        "".join(json.dumps(p, sort_keys=True) + "\n" for p in result.predictions), encoding="utf-8"
    )
    return result
