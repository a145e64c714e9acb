"""Template-grammar generator for AMIE-like in-cabin command corpora.

Templates are space-separated words. ``{Slot}`` draws a filler from that
slot's lexicon and tags every filler word with the slot; a leading ``*``
marks a literal intent keyword. Keyword words are exclusive to one intent,
so distinct intents never produce the same token sequence unless an
ambiguous (shared) template is used on purpose.

Ambiguous utterances are emitted in pairs: one filled shared template is
used once for each intent of an ambiguous pair. Their only distinguishing
signal is a mean shift on that intent's acoustic dimensions.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from ..errors import ConfigError
from .schema import INTENTS, TABLE1_COUNTS, Corpus, Schema, Utterance

LEXICONS = {
    "Location": [
        "starbucks", "main street", "city hall", "the library", "granville avenue",
        "the airport", "the hotel", "the museum", "no frills", "the bank", "the pier",
        "the gas station", "richmond centre", "the school",
    ],
    "PositionDirection": [
        "left", "right", "here", "on the left", "on the right", "behind that",
        "in front", "the corner", "straight ahead", "across the street", "next block",
    ],
    "Person": ["my friend", "my wife", "the kids", "him", "her", "my brother", "us", "them"],
    "TimeGuidance": ["now", "quickly", "soon", "in a minute", "right away", "immediately"],
    "GestureGaze": ["this", "that", "there", "that spot", "this way", "that one"],
    "Object": ["car", "building", "sign", "truck", "tree", "bus shelter", "light", "crosswalk", "bike"],
}

TEMPLATES = {
    "SetDestination": [
        "*take us to {Location}",
        "can you *take me to {Location} {TimeGuidance}",
        "*navigate to {Location} please",
        "let us *head to {Location}",
        "our *destination is {Location}",
        "*bring {Person} to {Location}",
        "i want to *get to {Location}",
    ],
    "SetRoute": [
        "*change the *route to {Location}",
        "make a *detour by {Location}",
        "can we *reroute {PositionDirection}",
        "*avoid {Location} please",
        "go {PositionDirection} *instead",
        "*change the *route and turn {PositionDirection} at the {Object}",
        "let us *reroute through {Location}",
    ],
    "Park": [
        "*park {PositionDirection}",
        "can you *park near the {Object}",
        "please *park {GestureGaze}",
        "find *parking at {Location}",
        "*park the car {TimeGuidance}",
        "you can *park {PositionDirection} of the {Object}",
    ],
    "PullOver": [
        "*pull *over {PositionDirection}",
        "*pull *over by the {Object}",
        "please *pull *over {TimeGuidance}",
        "*pull up to the *curb",
        "*pull *over {GestureGaze} for {Person}",
    ],
    "Stop": [
        "*stop the car",
        "*stop {TimeGuidance}",
        "please *stop at the {Object}",
        "*halt {PositionDirection}",
        "*brake {TimeGuidance}",
        "*stop {GestureGaze}",
    ],
    "GoFaster": [
        "go *faster",
        "can you go a bit *faster {TimeGuidance}",
        "*accelerate please",
        "*hurry we are late",
        "drive *quicker",
        "*hurry up {TimeGuidance}",
    ],
    "GoSlower": [
        "*slow *down",
        "go *slower please",
        "*slow *down near the {Object}",
        "please *decelerate",
        "can you drive *slower {TimeGuidance}",
        "*easy on the gas",
    ],
    "OpenDoor": [
        "*open the *door",
        "please *unlock the *door for {Person}",
        "*open the *door {TimeGuidance}",
        "can you *unlock it",
        "let {Person} out *open the *door",
    ],
    "Other": [
        "*play some *music",
        "turn the *volume *louder",
        "can you turn on the *radio",
        "make it *cooler in here",
        "*play the *radio {TimeGuidance}",
        "*skip this *song",
    ],
}

# shared by both intents of a pair; no intent-exclusive keyword appears
SHARED_TEMPLATES = {
    frozenset(("Stop", "PullOver")): [
        "okay {PositionDirection} is good",
        "{PositionDirection} by the {Object} is fine",
        "{GestureGaze} spot is fine",
        "can we do it {PositionDirection}",
        "right here next to the {Object}",
    ],
    frozenset(("GoSlower", "GoFaster")): [
        "change the *speed",
        "adjust the *speed {TimeGuidance}",
        "different *speed please",
        "can you fix your *speed",
        "watch the *speed {PositionDirection}",
    ],
}

GENERIC_SHARED = [
    "do it {PositionDirection}",
    "okay {GestureGaze} please",
    "what about {GestureGaze}",
]

NON_COMMAND_TEMPLATES = [
    "yeah that sounds good",
    "i think it was {PositionDirection}",
    "did you see {GestureGaze}",
    "{Person} said {Location} is nice",
    "look at that {Object}",
    "we have to find the next clue",
]

_SLOT = re.compile(r"^\{(\w+)\}$")


@dataclass(frozen=True)
class GeneratorConfig:
    n_utterances: int = 200
    intent_distribution: str = "uniform"
    ambiguous_fraction: float = 0.0
    ambiguous_pairs: tuple = (("Stop", "PullOver"), ("GoSlower", "GoFaster"))
    acoustic_dim: int = 32
    signal_dims: dict | None = None
    signal_shift: float = 2.0
    noise_std: float = 1.0
    visual_dim: int = 16
    max_frames: int = 3
    n_non_command: int = 0
    n_sessions: int = 20
    seed: int = 0
    intents: tuple = INTENTS
    resolved_signal_dims: dict = field(init=False, compare=False, repr=False)

    def __post_init__(self):
        if self.n_utterances < 0 or self.n_non_command < 0:
            raise ConfigError("utterance counts must be nonnegative")
        if not 0.0 <= self.ambiguous_fraction <= 1.0:
            raise ConfigError(f"ambiguous_fraction must be in [0, 1], got {self.ambiguous_fraction}")
        if self.intent_distribution not in ("uniform", "table1-proportional"):
            raise ConfigError(f"unknown intent distribution {self.intent_distribution!r}")
        if self.noise_std < 0:
            raise ConfigError("noise_std must be nonnegative")
        for pair in self.ambiguous_pairs:
            if len(pair) != 2 or pair[0] == pair[1]:
                raise ConfigError(f"ambiguous pair must name two intents: {pair}")
            for name in pair:
                if name not in self.intents:
                    raise ConfigError(f"ambiguous pair names unknown intent {name!r}")
        dims = self.signal_dims
        if dims is None:
            dims, nxt = {}, 0
            for pair in self.ambiguous_pairs:
                for name in pair:
                    if name not in dims:
                        dims[name] = list(range(nxt, nxt + 4))
                        nxt += 4
        owner: dict = {}
        for name, idx in dims.items():
            for d in idx:
                if not 0 <= d < self.acoustic_dim:
                    raise ConfigError(f"signal dim {d} of {name} outside acoustic_dim {self.acoustic_dim}")
                if d in owner:
                    raise ConfigError(f"signal dim {d} shared by {owner[d]} and {name}")
                owner[d] = name
        for pair in self.ambiguous_pairs:
            for name in pair:
                if not dims.get(name):
                    raise ConfigError(f"ambiguous intent {name} needs signal dims")
        object.__setattr__(self, "resolved_signal_dims", {k: tuple(v) for k, v in dims.items()})

    @classmethod
    def from_dict(cls, d: dict) -> "GeneratorConfig":
        d = dict(d)
        if "ambiguous_pairs" in d:
            d["ambiguous_pairs"] = tuple(tuple(p) for p in d["ambiguous_pairs"])
        if "intents" in d:
            d["intents"] = tuple(d["intents"])
        known = set(cls.__dataclass_fields__) - {"resolved_signal_dims"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown generator settings: {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True)
class SyntheticData:
    corpus: Corpus
    acoustic: dict  # id -> vector
    visual_cabin: dict  # id -> list of frame vectors
    visual_road: dict
    ambiguous_ids: frozenset


def apportion(n: int, weights) -> list:
    """Largest-remainder apportionment of ``n`` items; ties go to lower index."""
    weights = [Fraction(w) for w in weights]
    total = sum(weights)
    quotas = [w * n / total for w in weights]
    base = [int(q) for q in quotas]
    rest = n - sum(base)
    order = sorted(range(len(weights)), key=lambda i: (-(quotas[i] - base[i]), i))
    for i in order[:rest]:
        base[i] += 1
    return base


def intent_targets(cfg: GeneratorConfig) -> dict:
    if cfg.intent_distribution == "uniform":
        weights = [1] * len(cfg.intents)
    else:
        missing = [k for k in cfg.intents if k not in TABLE1_COUNTS]
        if missing:
            raise ConfigError(f"no reference counts for intents {missing}")
        weights = [TABLE1_COUNTS[k] for k in cfg.intents]
    return dict(zip(cfg.intents, apportion(cfg.n_utterances, weights)))


def fill(template: str, rng: np.random.Generator):
    tokens, tags = [], []
    for word in template.split():
        m = _SLOT.match(word)
        if m:
            slot = m.group(1)
            lex = LEXICONS[slot]
            filler = lex[int(rng.integers(len(lex)))].split()
            tokens.extend(filler)
            tags.extend([slot] * len(filler))
        elif word.startswith("*"):
            tokens.append(word[1:])
            tags.append("IntentKeyword")
        else:
            tokens.append(word)
            tags.append("O")
    return tuple(tokens), tuple(tags)


def _templates_for(intent: str) -> list:
    if intent in TEMPLATES:
        return TEMPLATES[intent]
    # configured extra intents get a unique keyword of their own
    return [f"*{intent.lower()} {{PositionDirection}}", f"please *{intent.lower()}"]


def _shared_templates(pair) -> list:
    return SHARED_TEMPLATES.get(frozenset(pair), GENERIC_SHARED)


def _ambiguous_plan(cfg: GeneratorConfig, targets: dict) -> list:
    """Number of ambiguous utterances per pair (pairs of instances, odd rest)."""
    n_amb = int(Fraction(cfg.ambiguous_fraction).limit_denominator(10 ** 9) * cfg.n_utterances + Fraction(1, 2))
    n_amb = min(n_amb, cfg.n_utterances)
    if n_amb == 0:
        return [0] * len(cfg.ambiguous_pairs)
    if not cfg.ambiguous_pairs:
        raise ConfigError("ambiguous_fraction > 0 needs at least one ambiguous pair")
    caps = [2 * min(targets[a], targets[b]) for a, b in cfg.ambiguous_pairs]
    plan = [0] * len(caps)
    left = n_amb
    # hand out two at a time, round-robin, respecting capacity
    while left > 0:
        progressed = False
        for i, cap in enumerate(caps):
            if left == 0:
                break
            step = 2 if left >= 2 else 1
            if plan[i] + step <= cap:
                plan[i] += step
                left -= step
                progressed = True
        if not progressed:
            raise ConfigError(
                f"cannot place {n_amb} ambiguous utterances; pair capacity is {sum(caps)}"
            )
    return plan


def generate_synthetic(cfg: GeneratorConfig) -> SyntheticData:
    rng = np.random.default_rng(cfg.seed)
    targets = intent_targets(cfg)
    plan = _ambiguous_plan(cfg, targets)
    remaining = dict(targets)

    drafts = []  # (tokens, tags, intent, ambiguous)
    for (a, b), count in zip(cfg.ambiguous_pairs, plan):
        shared = _shared_templates((a, b))
        for j in range(0, count, 2):
            toks, tags = fill(shared[int(rng.integers(len(shared)))], rng)
            members = (a, b) if count - j >= 2 else (a,)
            for name in members:
                drafts.append((toks, tags, name, True))
                remaining[name] -= 1
    for intent in cfg.intents:
        temps = _templates_for(intent)
        for _ in range(remaining[intent]):
            toks, tags = fill(temps[int(rng.integers(len(temps)))], rng)
            drafts.append((toks, tags, intent, False))
    for _ in range(cfg.n_non_command):
        t = NON_COMMAND_TEMPLATES[int(rng.integers(len(NON_COMMAND_TEMPLATES)))]
        toks, tags = fill(t, rng)
        drafts.append((toks, tags, None, False))

    order = rng.permutation(len(drafts))
    width = max(5, len(str(len(drafts))))
    utts, acoustic, cabin, road, amb_ids = [], {}, {}, {}, set()
    dims = cfg.resolved_signal_dims
    for n, k in enumerate(order):
        toks, tags, intent, amb = drafts[k]
        uid = f"u{n:0{width}d}"
        session = f"s{int(rng.integers(cfg.n_sessions)) + 1:02d}"
        utts.append(Utterance(uid, session, toks, tags, intent, uid, uid, uid))
        vec = rng.normal(0.0, cfg.noise_std, cfg.acoustic_dim) if cfg.noise_std > 0 else np.zeros(cfg.acoustic_dim)
        if amb:
            vec[list(dims[intent])] += cfg.signal_shift
            amb_ids.add(uid)
        acoustic[uid] = vec
        n_frames = int(rng.integers(1, cfg.max_frames + 1))
        cabin[uid] = [rng.normal(0.0, 1.0, cfg.visual_dim) for _ in range(n_frames)]
        road[uid] = [rng.normal(0.0, 1.0, cfg.visual_dim) for _ in range(n_frames)]

    schema = Schema(intents=tuple(cfg.intents))
    return SyntheticData(Corpus(tuple(utts), schema), acoustic, cabin, road, frozenset(amb_ids))


def synthetic_embeddings(vocab, dim: int, seed: int, coverage: float = 1.0):
    """Random unit-scale vectors for ``coverage`` of ``vocab`` (sorted order)."""
    rng = np.random.default_rng(seed)
    words = sorted(set(vocab))
    keep = [w for w in words if rng.random() < coverage] if coverage < 1.0 else words
    matrix = rng.normal(0.0, 1.0 / np.sqrt(dim), (len(keep), dim))
    return keep, matrix
