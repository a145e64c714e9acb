"""Two-level hierarchical joint Bi-LSTM for intent detection and slot tagging.

Level 1 tags every token (intent keywords, slots, or ``O``). Only tokens with
a non-``O`` tag are passed to Level 2, a second Bi-LSTM that re-tags them and
summarises them into an utterance vector. Utterance-level acoustic and
visual vectors are concatenated to that summary (optionally through a
``tanh`` projection) right before the intent output layer.

Training uses gold tags for the Level-1 -> Level-2 filter; inference uses the
Level-1 predictions. When nothing is tagged, the whole utterance goes to
Level 2.
"""

from __future__ import annotations

import io
import json
import logging
import zipfile
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from .data.schema import Corpus, Schema
from .embeddings import TRAINABLE_UNK, CompositeEmbedder, normalize_token
from .errors import ConfigError, DataError, EmptyInputError, ShapeError
from .numerics import (
    AdamState,
    LstmCellParams,
    adam_step,
    bilstm_backward,
    bilstm_forward,
    check_finite,
    dense_backward,
    dense_forward,
    glorot_init,
    softmax,
    softmax_ce,
)

log = logging.getLogger(__name__)

UTTERANCE_FEATS = ("acoustic", "visual_cabin", "visual_road")
VISUAL_VIEWS = {"visual_cabin": "cabin", "visual_road": "road"}
DEFAULT_PROJECTION = 128


@dataclass(frozen=True)
class FusionConfig:
    """Which embedding spaces feed the tokens and which utterance vectors are fused.

    The enabled visual views are concatenated (cabin, road) into one
    ``visual`` group, so at most two groups exist: ``acoustic`` and
    ``visual``. ``projection_dim`` is an int for every group or a mapping
    ``group -> dim``; 0 means raw concatenation.
    """

    token_spaces: tuple = ()
    utterance_feats: tuple = ()
    projection_dim: object = DEFAULT_PROJECTION

    def __post_init__(self):
        feats = tuple(self.utterance_feats)
        bad = [f for f in feats if f not in UTTERANCE_FEATS]
        if bad:
            raise ConfigError(f"unknown utterance feature {bad[0]!r}; use {UTTERANCE_FEATS}")
        # canonical order
        object.__setattr__(self, "utterance_feats", tuple(f for f in UTTERANCE_FEATS if f in feats))
        object.__setattr__(self, "token_spaces", tuple(self.token_spaces))
        pd = self.projection_dim
        if isinstance(pd, Mapping):
            pd = {k: int(v) for k, v in pd.items()}
            if any(v < 0 for v in pd.values()):
                raise ConfigError("projection_dim must be >= 0")
            object.__setattr__(self, "projection_dim", pd)
        elif int(pd) < 0:
            raise ConfigError("projection_dim must be >= 0")

    @property
    def groups(self) -> list:
        out = []
        if "acoustic" in self.utterance_feats:
            out.append("acoustic")
        if any(f in self.utterance_feats for f in VISUAL_VIEWS):
            out.append("visual")
        return out

    @property
    def visual_feats(self) -> list:
        return [f for f in self.utterance_feats if f in VISUAL_VIEWS]

    def proj_dim(self, group: str) -> int:
        if isinstance(self.projection_dim, Mapping):
            return int(self.projection_dim.get(group, DEFAULT_PROJECTION))
        return int(self.projection_dim)

    def to_dict(self) -> dict:
        return {
            "token_spaces": list(self.token_spaces),
            "utterance_feats": list(self.utterance_feats),
            "projection_dim": self.projection_dim,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FusionConfig":
        return cls(
            tuple(d.get("token_spaces", ())),
            tuple(d.get("utterance_feats", ())),
            d.get("projection_dim", DEFAULT_PROJECTION),
        )


@dataclass(frozen=True)
class HyperParams:
    hidden_dim: int = 64
    lr: float = 1e-3
    lam: float = 1.0
    epochs: int = 300
    patience: int = 10
    batch_size: int = 1
    finetune: bool = False

    def __post_init__(self):
        if self.hidden_dim < 1 or self.epochs < 1 or self.batch_size < 1 or self.patience < 1:
            raise ConfigError("hidden_dim, epochs, batch_size and patience must be positive")
        if self.lr <= 0 or self.lam < 0:
            raise ConfigError("need lr > 0 and lambda >= 0")


@dataclass(frozen=True)
class SpaceInfo:
    name: str
    dim: int
    oov_policy: str


@dataclass
class HJoint2Model:
    """Architecture description plus the current parameter dict.

    ``base_emb`` holds the pretrained vectors of ``vocab`` (zeros in spaces
    that lack the token) and ``absent`` flags those gaps per space.
    """

    schema: Schema
    fusion: FusionConfig
    hidden_dim: int
    spaces: tuple
    feat_dims: dict  # utterance feat -> raw dim
    vocab: tuple
    base_emb: np.ndarray
    absent: np.ndarray
    params: dict
    lam: float = 1.0
    finetune: bool = False
    _index: dict = field(init=False, repr=False)

    def __post_init__(self):
        self._index = {tok: i for i, tok in enumerate(self.vocab)}

    @property
    def input_dim(self) -> int:
        return sum(s.dim for s in self.spaces)

    @property
    def n_tags(self) -> int:
        return len(self.schema.tags)

    @property
    def n_intents(self) -> int:
        return len(self.schema.intents)

    def group_dim(self, group: str) -> int:
        if group == "acoustic":
            return self.feat_dims["acoustic"]
        return sum(self.feat_dims[f] for f in self.fusion.visual_feats)

    def fused_dim(self) -> int:
        total = 2 * self.hidden_dim
        for g in self.fusion.groups:
            p = self.fusion.proj_dim(g)
            total += p if p > 0 else self.group_dim(g)
        return total

    def n_parameters(self) -> int:
        return int(sum(v.size for v in self.params.values()))

    def with_params(self, params: dict) -> "HJoint2Model":
        return replace(self, params=params)

    # ------------------------------------------------------------------
    # token embedding

    def token_ids(self, tokens: Sequence[str]) -> np.ndarray:
        return np.array([self._index.get(normalize_token(t), -1) for t in tokens], dtype=np.int64)

    def space_slices(self):
        out, off = [], 0
        for s in self.spaces:
            out.append(slice(off, off + s.dim))
            off += s.dim
        return out

    def embed(self, tokens: Sequence[str], params: dict | None = None, embedder: CompositeEmbedder | None = None):
        """Input matrix (T, D) plus ``(ids, absent mask)`` for backprop."""
        params = self.params if params is None else params
        if not tokens:
            raise EmptyInputError("empty utterance")
        ids = self.token_ids(tokens)
        base_table = params["emb"] if self.finetune else self.base_emb
        X = np.zeros((len(tokens), self.input_dim))
        absent = np.ones((len(tokens), len(self.spaces)), dtype=bool)
        known = ids >= 0
        X[known] = base_table[ids[known]]
        absent[known] = self.absent[ids[known]]
        for t in np.flatnonzero(~known):
            if embedder is not None:
                X[t] = embedder.lookup(tokens[t])
                absent[t] = ~np.array(embedder.presence(tokens[t]))
        for k, (s, sl) in enumerate(zip(self.spaces, self.space_slices())):
            if s.oov_policy == TRAINABLE_UNK:
                rows = absent[:, k]
                X[rows, sl] = params[f"unk.{s.name}"]
        return X, (ids, absent)

    def embed_backward(self, dX: np.ndarray, info, grads: dict) -> None:
        ids, absent = info
        for k, (s, sl) in enumerate(zip(self.spaces, self.space_slices())):
            if s.oov_policy == TRAINABLE_UNK:
                grads[f"unk.{s.name}"] += dX[absent[:, k], sl].sum(axis=0)
        if self.finetune:
            g = grads["emb"]
            present = ~absent
            for k, sl in enumerate(self.space_slices()):
                rows = (ids >= 0) & present[:, k]
                np.add.at(g[:, sl], ids[rows], dX[rows, sl])

    # ------------------------------------------------------------------
    # utterance-level features

    def group_vectors(self, feats: Mapping[str, np.ndarray] | None) -> dict:
        """Raw vector per fusion group, zero-filling absent modalities."""
        feats = feats or {}
        out = {}
        for g in self.fusion.groups:
            members = ["acoustic"] if g == "acoustic" else self.fusion.visual_feats
            parts = []
            for f in members:
                v = feats.get(f)
                if v is None:
                    v = np.zeros(self.feat_dims[f])
                v = np.asarray(v, dtype=np.float64)
                if v.size != self.feat_dims[f]:
                    raise ShapeError(f"{f} vector has dim {v.size}, model expects {self.feat_dims[f]}")
                parts.append(v)
            out[g] = np.concatenate(parts)
        return out


# ----------------------------------------------------------------------
# construction


def _lstm(params, prefix) -> LstmCellParams:
    return LstmCellParams(params[f"{prefix}.W"], params[f"{prefix}.U"], params[f"{prefix}.b"])


def _put_lstm(params, prefix, p: LstmCellParams):
    params[f"{prefix}.W"] = p.W
    params[f"{prefix}.U"] = p.U
    params[f"{prefix}.b"] = p.b


def init_params(input_dim, hidden_dim, n_tags, n_intents, fusion: FusionConfig, group_dims: dict,
                spaces=(), finetune_shape=None, seed=0) -> dict:
    """Glorot weights, zero biases (forget gate 1.0), zero UNK rows."""
    rng = np.random.default_rng(seed)
    H = hidden_dim
    params: dict = {}
    for level in ("l1", "l2"):
        _put_lstm(params, f"{level}.fwd", LstmCellParams.init(input_dim, H, rng))
        _put_lstm(params, f"{level}.bwd", LstmCellParams.init(input_dim, H, rng))
        params[f"{level}.tag.W"] = glorot_init(n_tags, 2 * H, rng)
        params[f"{level}.tag.b"] = np.zeros(n_tags)
    fused = 2 * H
    for g in fusion.groups:
        p = fusion.proj_dim(g)
        if p > 0:
            params[f"proj.{g}.W"] = glorot_init(p, group_dims[g], rng)
            params[f"proj.{g}.b"] = np.zeros(p)
            fused += p
        else:
            fused += group_dims[g]
    params["intent.W"] = glorot_init(n_intents, fused, rng)
    params["intent.b"] = np.zeros(n_intents)
    for s in spaces:
        if s.oov_policy == TRAINABLE_UNK:
            params[f"unk.{s.name}"] = np.zeros(s.dim)
    if finetune_shape is not None:
        params["emb"] = np.zeros(finetune_shape)
    return params


def build_model(embedder: CompositeEmbedder, vocab: Sequence[str], fusion: FusionConfig,
                hidden_dim: int = 64, feat_dims: Mapping[str, int] | None = None,
                schema: Schema | None = None, seed: int = 0, lam: float = 1.0,
                finetune: bool = False) -> HJoint2Model:
    """Fresh model over ``vocab`` with vectors copied from ``embedder``."""
    schema = schema or Schema()
    feat_dims = dict(feat_dims or {})
    for f in fusion.utterance_feats:
        if f not in feat_dims:
            raise ConfigError(f"utterance feature {f!r} enabled but its dimension is unknown")
    feat_dims = {f: int(feat_dims[f]) for f in fusion.utterance_feats}
    if fusion.token_spaces and list(fusion.token_spaces) != embedder.names:
        raise ConfigError(f"fusion token_spaces {list(fusion.token_spaces)} != embedder {embedder.names}")
    spaces = tuple(SpaceInfo(t.name, t.dim, pol) for t, pol in zip(embedder.tables, embedder.oov_policies))
    words = list(dict.fromkeys(normalize_token(t) for t in vocab))
    base = np.zeros((len(words), embedder.total_dim))
    absent = np.zeros((len(words), len(spaces)), dtype=bool)
    for i, w in enumerate(words):
        base[i] = embedder.lookup(w)
        absent[i] = ~np.array(embedder.presence(w))
    shell = HJoint2Model(schema, fusion, hidden_dim, spaces, feat_dims, tuple(words), base, absent, {}, lam, finetune)
    group_dims = {g: shell.group_dim(g) for g in fusion.groups}
    params = init_params(
        embedder.total_dim, hidden_dim, len(schema.tags), len(schema.intents), fusion, group_dims,
        spaces, base.shape if finetune else None, seed,
    )
    if finetune:
        params["emb"] = base.copy()
    return shell.with_params(params)


def parameter_count(input_dim, hidden_dim, n_tags, n_intents, fusion: FusionConfig, group_dims,
                    unk_dims=(), finetune_rows=0) -> int:
    """Closed-form parameter count for the layout built by ``init_params``."""
    H, D = hidden_dim, input_dim
    lstm = 4 * H * D + 4 * H * H + 4 * H
    tag_head = 2 * H * n_tags + n_tags
    total = 2 * (2 * lstm + tag_head)
    fused = 2 * H
    for g in fusion.groups:
        p = fusion.proj_dim(g)
        if p > 0:
            total += group_dims[g] * p + p
            fused += p
        else:
            fused += group_dims[g]
    total += fused * n_intents + n_intents
    total += sum(unk_dims) + finetune_rows * D
    return total


# ----------------------------------------------------------------------
# forward pieces


def filter_tokens(tokens: Sequence, tags: Sequence, outside: str | int = "O"):
    """Keep tokens whose tag differs from ``outside``.

    Returns ``(kept tokens, kept positions, fallback)``; when every tag is
    ``outside`` the full sequence is returned with ``fallback=True``.
    """
    if len(tokens) != len(tags):
        raise ShapeError(f"{len(tokens)} tokens but {len(tags)} tags")
    keep = [i for i, t in enumerate(tags) if t != outside]
    if not keep:
        return list(tokens), list(range(len(tokens))), True
    return [tokens[i] for i in keep], keep, False


def _fuse_forward(params, fusion: FusionConfig, rep: np.ndarray, groups: Mapping[str, np.ndarray]):
    if not fusion.groups:
        return rep, {}
    parts = [rep]
    cache = {}
    for g in fusion.groups:
        raw = groups[g]
        if fusion.proj_dim(g) > 0:
            W, b = params[f"proj.{g}.W"], params[f"proj.{g}.b"]
            if raw.size != W.shape[1]:
                raise ShapeError(f"{g} vector dim {raw.size}, projection expects {W.shape[1]}")
            out = np.tanh(dense_forward(W, b, raw))
            cache[g] = out
            parts.append(out)
        else:
            parts.append(raw)
    return np.concatenate(parts), cache


def fuse(model: HJoint2Model, utterance_repr: np.ndarray, feats: Mapping[str, np.ndarray] | None = None,
         params: dict | None = None) -> np.ndarray:
    """``[repr || proj(acoustic) || proj(visual)]`` for the enabled groups."""
    params = model.params if params is None else params
    rep = np.asarray(utterance_repr, dtype=np.float64)
    if rep.size != 2 * model.hidden_dim:
        raise ShapeError(f"utterance repr has dim {rep.size}, expected {2 * model.hidden_dim}")
    return _fuse_forward(params, model.fusion, rep, model.group_vectors(feats))[0]


def level1_probs(model: HJoint2Model, X: np.ndarray, params=None) -> np.ndarray:
    params = model.params if params is None else params
    h = bilstm_forward(X, _lstm(params, "l1.fwd"), _lstm(params, "l1.bwd"))
    return softmax(dense_forward(params["l1.tag.W"], params["l1.tag.b"], h))


def level1_tag(model: HJoint2Model, tokens: Sequence[str], embedder=None) -> np.ndarray:
    """Per-token distributions over the tag set, shape (T, |tags|)."""
    if not tokens:
        raise EmptyInputError("empty utterance")
    X, _ = model.embed(tokens, embedder=embedder)
    return level1_probs(model, X)


def utterance_repr(H2: np.ndarray, hidden_dim: int) -> np.ndarray:
    """Last forward state joined with the first (position 0) backward state."""
    return np.concatenate([H2[-1, :hidden_dim], H2[0, hidden_dim:]])


def level2_forward(model: HJoint2Model, X2: np.ndarray, groups: Mapping[str, np.ndarray], params=None):
    params = model.params if params is None else params
    if X2.shape[0] == 0:
        raise EmptyInputError("Level-2 input is empty")
    H2 = bilstm_forward(X2, _lstm(params, "l2.fwd"), _lstm(params, "l2.bwd"))
    tag_probs = softmax(dense_forward(params["l2.tag.W"], params["l2.tag.b"], H2))
    fused, _ = _fuse_forward(params, model.fusion, utterance_repr(H2, model.hidden_dim), groups)
    intent_probs = softmax(dense_forward(params["intent.W"], params["intent.b"], fused))
    return intent_probs, tag_probs


def level2_joint(model: HJoint2Model, filtered_tokens: Sequence[str], feats=None, embedder=None):
    """``(intent distribution, per-token tag distributions)`` over the filtered tokens."""
    X2, _ = model.embed(filtered_tokens, embedder=embedder)
    return level2_forward(model, X2, model.group_vectors(feats))


@dataclass(frozen=True)
class Prediction:
    intent: str
    tags: tuple
    keywords: tuple
    fallback: bool
    intent_probs: np.ndarray
    kept: tuple


def predict(model: HJoint2Model, tokens: Sequence[str], feats=None, embedder=None) -> Prediction:
    X, _ = model.embed(tokens, embedder=embedder)
    p1 = level1_probs(model, X)
    tag_ids = p1.argmax(axis=1)
    tags = tuple(model.schema.tags[i] for i in tag_ids)
    _, keep, fallback = filter_tokens(list(tokens), tags)
    intent_probs, _ = level2_forward(model, X[keep], model.group_vectors(feats))
    keywords = tuple(tok for tok, tag in zip(tokens, tags) if tag == "IntentKeyword")
    intent = model.schema.intents[int(intent_probs.argmax())]
    return Prediction(intent, tags, keywords, fallback, intent_probs, tuple(keep))


# ----------------------------------------------------------------------
# loss and gradients


@dataclass(frozen=True)
class Example:
    uid: str
    tokens: tuple
    tags: np.ndarray
    keep: np.ndarray
    intent: int | None
    groups: dict


def make_example(model: HJoint2Model, utt, feats: Mapping[str, np.ndarray] | None = None) -> Example:
    """Training view of an utterance; the Level-2 filter uses the gold tags."""
    tags = np.array([model.schema.tag_index(t) for t in utt.tags], dtype=np.int64)
    _, keep, _ = filter_tokens(list(utt.tokens), list(tags), outside=0)
    intent = model.schema.intent_index(utt.intent) if utt.intent is not None else None
    return Example(utt.id, tuple(utt.tokens), tags, np.array(keep, dtype=np.int64), intent,
                   model.group_vectors(feats))


def core_loss(model: HJoint2Model, params: dict, X: np.ndarray, ex: Example):
    """Joint loss for one utterance from its input matrix.

    Returns ``(loss, grads, dX)``; ``grads`` covers every key of ``params``.
    """
    H = model.hidden_dim
    grads = {k: np.zeros_like(v) for k, v in params.items()}
    T = X.shape[0]

    l1f, l1b = _lstm(params, "l1.fwd"), _lstm(params, "l1.bwd")
    H1, c1 = bilstm_forward(X, l1f, l1b, return_cache=True)
    logits1 = dense_forward(params["l1.tag.W"], params["l1.tag.b"], H1)
    losses1, _, d1 = softmax_ce(logits1, ex.tags)
    loss = float(losses1.mean())
    d1 /= T
    dW, db, dH1 = dense_backward(params["l1.tag.W"], H1, d1)
    grads["l1.tag.W"] += dW
    grads["l1.tag.b"] += db
    gf, gb, dX = bilstm_backward(l1f, l1b, c1, dH1)
    for prefix, g in (("l1.fwd", gf), ("l1.bwd", gb)):
        grads[f"{prefix}.W"] += g.W
        grads[f"{prefix}.U"] += g.U
        grads[f"{prefix}.b"] += g.b

    if ex.intent is None:
        return loss, grads, dX

    X2 = X[ex.keep]
    T2 = X2.shape[0]
    l2f, l2b = _lstm(params, "l2.fwd"), _lstm(params, "l2.bwd")
    H2, c2 = bilstm_forward(X2, l2f, l2b, return_cache=True)
    logits2 = dense_forward(params["l2.tag.W"], params["l2.tag.b"], H2)
    losses2, _, d2 = softmax_ce(logits2, ex.tags[ex.keep])
    loss += model.lam * float(losses2.mean())
    d2 *= model.lam / T2
    dW, db, dH2 = dense_backward(params["l2.tag.W"], H2, d2)
    grads["l2.tag.W"] += dW
    grads["l2.tag.b"] += db

    rep = utterance_repr(H2, H)
    fused, pcache = _fuse_forward(params, model.fusion, rep, ex.groups)
    logits_i = dense_forward(params["intent.W"], params["intent.b"], fused)
    loss_i, _, di = softmax_ce(logits_i, ex.intent)
    loss += loss_i
    dW, db, dfused = dense_backward(params["intent.W"], fused, di)
    grads["intent.W"] += dW
    grads["intent.b"] += db

    off = 2 * H
    for g in model.fusion.groups:
        if model.fusion.proj_dim(g) > 0:
            out = pcache[g]
            seg = dfused[off:off + out.size]
            dpre = seg * (1.0 - out * out)
            dW, db, _ = dense_backward(params[f"proj.{g}.W"], ex.groups[g], dpre)
            grads[f"proj.{g}.W"] += dW
            grads[f"proj.{g}.b"] += db
            off += out.size
        else:
            off += ex.groups[g].size

    dH2[-1, :H] += dfused[:H]
    dH2[0, H:] += dfused[H:2 * H]
    gf, gb, dX2 = bilstm_backward(l2f, l2b, c2, dH2)
    for prefix, g in (("l2.fwd", gf), ("l2.bwd", gb)):
        grads[f"{prefix}.W"] += g.W
        grads[f"{prefix}.U"] += g.U
        grads[f"{prefix}.b"] += g.b
    np.add.at(dX, ex.keep, dX2)
    return loss, grads, dX


def example_loss(model: HJoint2Model, params: dict, ex: Example, embedder=None):
    """``(loss, grads)`` for one utterance, including embedding-side gradients."""
    X, info = model.embed(list(ex.tokens), params, embedder)
    loss, grads, dX = core_loss(model, params, X, ex)
    model.embed_backward(dX, info, grads)
    return loss, grads


# ----------------------------------------------------------------------
# training


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    dev_micro_f1: float
    best_dev_micro_f1: float


def intent_accuracy(model: HJoint2Model, corpus: Corpus, features=None, embedder=None) -> float:
    """Intent micro-F1 (= accuracy) over the command utterances of ``corpus``."""
    total = correct = 0
    for utt in corpus:
        if utt.intent is None:
            continue
        feats = features.for_utterance(utt.id) if features is not None else None
        total += 1
        correct += predict(model, list(utt.tokens), feats, embedder).intent == utt.intent
    return correct / total if total else 0.0


def _check_features(fusion: FusionConfig, corpus: Corpus, features) -> None:
    for f in fusion.utterance_feats:
        if features is None or f not in features.vectors:
            raise DataError(f"utterance feature {f!r} is enabled but no {f} features were supplied")
        have = features.vectors[f]
        for utt in corpus:
            if utt.id not in have:
                ref = getattr(utt, f"{f}_ref", None)
                raise DataError(f"utterance {utt.id!r}: no {f} vector (feature id {ref!r})")


def train(corpus: Corpus, embedder: CompositeEmbedder, fusion: FusionConfig, hyper: HyperParams = HyperParams(),
          seed: int = 0, features=None, dev: Corpus | None = None, callback=None):
    """Fit a fresh model; returns ``(best model, list of EpochRecord)``.

    Updates are Adam steps over mini-batches (default: single utterances) in
    a seeded shuffle order. Early stopping watches dev intent micro-F1 (the
    training set itself when ``dev`` is None) with ``hyper.patience``; the
    returned model carries the best-scoring parameters.
    """
    if len(corpus) == 0:
        raise EmptyInputError("empty training corpus")
    _check_features(fusion, corpus, features)
    dev = corpus if dev is None else dev
    if dev is not corpus:
        _check_features(fusion, dev, features)
    feat_dims = {f: features.dims[f] for f in fusion.utterance_feats}
    vocab = corpus.vocab() + (dev.vocab() if dev is not corpus else [])
    rng = np.random.default_rng(seed)
    model = build_model(
        embedder, vocab, fusion, hyper.hidden_dim, feat_dims, corpus.schema,
        seed=int(rng.integers(2 ** 63)), lam=hyper.lam, finetune=hyper.finetune,
    )
    examples = [
        make_example(model, u, features.for_utterance(u.id) if features is not None else None)
        for u in corpus
    ]
    params = model.params
    state = AdamState.fresh(params, lr=hyper.lr)
    history = []
    best_f1, best_params, wait = -1.0, params, 0
    for epoch in range(1, hyper.epochs + 1):
        order = rng.permutation(len(examples))
        total = 0.0
        for start in range(0, len(order), hyper.batch_size):
            batch = order[start:start + hyper.batch_size]
            acc = None
            for k in batch:
                loss, grads = example_loss(model, params, examples[k], embedder)
                total += loss
                if acc is None:
                    acc = grads
                else:
                    for name in acc:
                        acc[name] += grads[name]
            if len(batch) > 1:
                for name in acc:
                    acc[name] /= len(batch)
            params, state = adam_step(params, acc, state)
        train_loss = total / len(examples)
        check_finite(np.array(train_loss), "training loss")
        current = model.with_params(params)
        dev_f1 = intent_accuracy(current, dev, features, embedder)
        if dev_f1 > best_f1:
            best_f1, best_params, wait = dev_f1, params, 0
        else:
            wait += 1
        rec = EpochRecord(epoch, train_loss, dev_f1, best_f1)
        history.append(rec)
        log.info("epoch %d loss %.6f dev micro-F1 %.4f", epoch, train_loss, dev_f1)
        if callback is not None:
            callback(rec)
        if wait >= hyper.patience:
            break
    return model.with_params(best_params), history


# ----------------------------------------------------------------------
# checkpoints

_ZIP_DATE = (1980, 1, 1, 0, 0, 0)


def _npy_bytes(arr: np.ndarray) -> bytes:
    buf = io.BytesIO()
    np.lib.format.write_array(buf, np.ascontiguousarray(arr), allow_pickle=False)
    return buf.getvalue()


def model_config(model: HJoint2Model) -> dict:
    return {
        "format": "cabin_slu.hjoint2/1",
        "schema": model.schema.to_dict(),
        "fusion": model.fusion.to_dict(),
        "hidden_dim": model.hidden_dim,
        "spaces": [{"name": s.name, "dim": s.dim, "oov_policy": s.oov_policy} for s in model.spaces],
        "feat_dims": model.feat_dims,
        "lam": model.lam,
        "finetune": model.finetune,
        "vocab": list(model.vocab),
        "params": sorted(model.params),
    }


def save_model(path, model: HJoint2Model) -> None:
    """Zip archive of ``config.json`` and one ``.npy`` per array, byte-stable."""
    entries = [("config.json", json.dumps(model_config(model), indent=1, sort_keys=True).encode("utf-8"))]
    entries.append(("base_emb.npy", _npy_bytes(model.base_emb)))
    entries.append(("absent.npy", _npy_bytes(model.absent)))
    for name in sorted(model.params):
        entries.append((f"params/{name}.npy", _npy_bytes(model.params[name])))
    with zipfile.ZipFile(path, "w") as zf:
        for name, data in entries:
            info = zipfile.ZipInfo(name, date_time=_ZIP_DATE)
            info.compress_type = zipfile.ZIP_DEFLATED
            info.external_attr = 0o644 << 16
            zf.writestr(info, data)


def load_model(path) -> HJoint2Model:
    with zipfile.ZipFile(path, "r") as zf:
        try:
            cfg = json.loads(zf.read("config.json").decode("utf-8"))
        except KeyError:
            raise ConfigError(f"{path} is not a model checkpoint") from None

        def arr(name):
            return np.lib.format.read_array(io.BytesIO(zf.read(name)), allow_pickle=False)

        params = {name: arr(f"params/{name}.npy") for name in cfg["params"]}
        base = arr("base_emb.npy")
        absent = arr("absent.npy")
    return HJoint2Model(
        schema=Schema.from_dict(cfg["schema"]),
        fusion=FusionConfig.from_dict(cfg["fusion"]),
        hidden_dim=int(cfg["hidden_dim"]),
        spaces=tuple(SpaceInfo(s["name"], int(s["dim"]), s["oov_policy"]) for s in cfg["spaces"]),
        feat_dims={k: int(v) for k, v in cfg["feat_dims"].items()},
        vocab=tuple(cfg["vocab"]),
        base_emb=base,
        absent=absent,
        params=params,
        lam=float(cfg["lam"]),
        finetune=bool(cfg["finetune"]),
    )
