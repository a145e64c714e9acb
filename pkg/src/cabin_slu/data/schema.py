"""Label inventories, the utterance record and the JSON-lines corpus format."""

from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

from ..errors import ConfigError, ValidationError

log = logging.getLogger(__name__)

TAGS = (
    "O",
    "IntentKeyword",
    "Location",
    "PositionDirection",
    "Person",
    "TimeGuidance",
    "GestureGaze",
    "Object",
)

INTENTS = (
    "SetDestination",
    "SetRoute",
    "Park",
    "PullOver",
    "Stop",
    "GoFaster",
    "GoSlower",
    "OpenDoor",
    "Other",
)

# utterance counts per intent in the in-cabin command subset (1331 total)
TABLE1_COUNTS = {
    "SetDestination": 311,
    "SetRoute": 507,
    "Park": 151,
    "PullOver": 34,
    "Stop": 27,
    "GoFaster": 73,
    "GoSlower": 41,
    "OpenDoor": 136,
    "Other": 51,
}

RECORD_FIELDS = (
    "id",
    "session",
    "tokens",
    "tags",
    "intent",
    "acoustic_ref",
    "visual_cabin_ref",
    "visual_road_ref",
)


@dataclass(frozen=True)
class Schema:
    tags: tuple = TAGS
    intents: tuple = INTENTS

    def __post_init__(self):
        if not self.tags or self.tags[0] != "O":
            raise ConfigError("tag set must start with 'O'")
        if len(set(self.tags)) != len(self.tags):
            raise ConfigError("tag labels must be unique")
        if len(set(self.intents)) != len(self.intents) or not self.intents:
            raise ConfigError("intent labels must be unique and nonempty")

    def with_intents(self, extra: Iterable[str]) -> "Schema":
        return Schema(self.tags, self.intents + tuple(x for x in extra if x not in self.intents))

    def tag_index(self, tag: str) -> int:
        return self.tags.index(tag)

    def intent_index(self, intent: str) -> int:
        return self.intents.index(intent)

    def to_dict(self) -> dict:
        return {"tags": list(self.tags), "intents": list(self.intents)}

    @classmethod
    def from_dict(cls, d) -> "Schema":
        return cls(tuple(d["tags"]), tuple(d["intents"]))


@dataclass(frozen=True)
class Utterance:
    id: str
    session: str
    tokens: tuple
    tags: tuple
    intent: Optional[str] = None
    acoustic_ref: Optional[str] = None
    visual_cabin_ref: Optional[str] = None
    visual_road_ref: Optional[str] = None

    def to_record(self) -> dict:
        rec = {name: getattr(self, name) for name in RECORD_FIELDS}
        rec["tokens"] = list(self.tokens)
        rec["tags"] = list(self.tags)
        return rec

    @classmethod
    def from_record(cls, rec: dict) -> "Utterance":
        return cls(
            id=rec["id"],
            session=rec.get("session", ""),
            tokens=tuple(rec["tokens"]),
            tags=tuple(rec["tags"]),
            intent=rec.get("intent"),
            acoustic_ref=rec.get("acoustic_ref"),
            visual_cabin_ref=rec.get("visual_cabin_ref"),
            visual_road_ref=rec.get("visual_road_ref"),
        )


def validate_utterance(utt: Utterance, schema: Schema) -> None:
    if not utt.tokens:
        raise ValidationError("no tokens", utt.id)
    if len(utt.tags) != len(utt.tokens):
        raise ValidationError(f"{len(utt.tokens)} tokens but {len(utt.tags)} tags", utt.id)
    for tag in utt.tags:
        if tag not in schema.tags:
            raise ValidationError(f"unknown tag {tag!r}; allowed: {', '.join(schema.tags)}", utt.id)
    if utt.intent is not None and utt.intent not in schema.intents:
        raise ValidationError(
            f"unknown intent {utt.intent!r}; allowed: {', '.join(schema.intents)}", utt.id
        )


@dataclass(frozen=True)
class Corpus:
    utterances: tuple
    schema: Schema = field(default_factory=Schema)

    def __post_init__(self):
        seen = set()
        for utt in self.utterances:
            if utt.id in seen:
                raise ValidationError("duplicate id", utt.id)
            seen.add(utt.id)
            validate_utterance(utt, self.schema)

    def __len__(self):
        return len(self.utterances)

    def __iter__(self):
        return iter(self.utterances)

    def subset(self, indices) -> "Corpus":
        return Corpus(tuple(self.utterances[i] for i in indices), self.schema)

    def commands(self) -> "Corpus":
        """Only utterances that carry an intent."""
        return Corpus(tuple(u for u in self.utterances if u.intent is not None), self.schema)

    def intent_counts(self) -> dict:
        c = Counter(u.intent for u in self.utterances if u.intent is not None)
        return {k: c.get(k, 0) for k in self.schema.intents}

    def tag_counts(self) -> dict:
        c = Counter(t for u in self.utterances for t in u.tags)
        return {k: c.get(k, 0) for k in self.schema.tags}

    def vocab(self) -> list:
        seen = {}
        for u in self.utterances:
            for t in u.tokens:
                seen.setdefault(t, None)
        return list(seen)


def dumps_corpus(corpus: Corpus) -> str:
    return "".join(json.dumps(u.to_record(), ensure_ascii=False) + "\n" for u in corpus)


def save_corpus(path, corpus: Corpus) -> None:
    Path(path).write_text(dumps_corpus(corpus), encoding="utf-8")


def load_corpus(path, schema: Schema | None = None) -> Corpus:
    """Read and validate a JSON-lines corpus; logs per-intent and per-tag counts."""
    schema = schema or Schema()
    utts = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"line {lineno}: invalid JSON ({exc.msg})") from None
            if not isinstance(rec, dict) or "id" not in rec:
                raise ValidationError(f"line {lineno}: record without an id")
            for key in ("tokens", "tags"):
                if not isinstance(rec.get(key), list):
                    raise ValidationError(f"field {key!r} must be a list", rec["id"])
            utts.append(Utterance.from_record(rec))
    corpus = Corpus(tuple(utts), schema)
    log.info("loaded %d utterances from %s", len(corpus), path)
    log.info("intent counts: %s", corpus.intent_counts())
    log.info("tag counts: %s", corpus.tag_counts())
    return corpus


def to_bio(tags) -> list:
    """Per-token labels to BIO, treating each contiguous run as one span."""
    out, prev = [], "O"
    for tag in tags:
        if tag == "O":
            out.append("O")
        else:
            out.append(("I-" if tag == prev else "B-") + tag)
        prev = tag
    return out
