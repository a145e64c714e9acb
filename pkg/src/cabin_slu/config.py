"""JSON run configuration shared by the train / eval / ablate commands.

Relative paths are resolved against the directory of the config file.
Example::

    {
      "name": "text+acoustic",
      "seed": 7,
      "corpus": "data/corpus.jsonl",
      "embeddings": [{"name": "word", "path": "data/word.txt"}],
      "acoustic": "data/acoustic.tsv",
      "output_dir": "runs/text_acoustic",
      "fusion": {"utterance_feats": ["acoustic"], "projection_dim": 128},
      "hyper": {"hidden_dim": 64, "epochs": 100, "patience": 10},
      "split": {"kind": "holdout", "test_fraction": 0.2, "dev_fraction": 0.1}
    }
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path

from .embeddings import ALIGNMENTS, OOV_POLICIES, ZERO_FILL
from .errors import ConfigError
from .model import FusionConfig, HyperParams

SPLIT_KINDS = ("holdout", "kfold", "none")
_TOP_KEYS = {
    "name", "seed", "corpus", "embeddings", "alignment", "acoustic", "visual_cabin", "visual_road",
    "visual_pooling", "output_dir", "fusion", "hyper", "split", "extra_intents", "strict_features",
}


@dataclass(frozen=True)
class EmbeddingSpec:
    name: str
    path: Path
    oov_policy: str = ZERO_FILL


@dataclass(frozen=True)
class SplitSpec:
    kind: str = "holdout"
    test_fraction: float = 0.2
    dev_fraction: float = 0.1
    k: int = 5
    fold: int = 0
    stratified: bool = True

    def __post_init__(self):
        if self.kind not in SPLIT_KINDS:
            raise ConfigError(f"split kind must be one of {SPLIT_KINDS}")
        if not 0.0 <= self.dev_fraction < 1.0:
            raise ConfigError("dev_fraction must be in [0, 1)")
        if self.kind == "kfold" and not 0 <= self.fold < self.k:
            raise ConfigError(f"fold {self.fold} outside 0..{self.k - 1}")


@dataclass(frozen=True)
class RunConfig:
    name: str
    seed: int
    corpus: Path
    embeddings: tuple
    output_dir: Path
    fusion: FusionConfig
    hyper: HyperParams = HyperParams()
    split: SplitSpec = SplitSpec()
    alignment: str = "union"
    acoustic: Path | None = None
    visual_cabin: Path | None = None
    visual_road: Path | None = None
    visual_pooling: str = "mean"
    extra_intents: tuple = ()
    strict_features: bool = True
    raw: dict = field(default_factory=dict, compare=False, repr=False)

    def check_paths(self) -> None:
        needed = [("corpus", self.corpus)] + [(f"embedding {e.name}", e.path) for e in self.embeddings]
        feats = self.fusion.utterance_feats
        for key in ("acoustic", "visual_cabin", "visual_road"):
            if key in feats:
                p = getattr(self, key)
                if p is None:
                    raise ConfigError(f"{key} is enabled in fusion but no {key} path is configured")
                needed.append((key, p))
        for what, p in needed:
            if not Path(p).is_file():
                raise ConfigError(f"{what} file not found: {p}")


def _path(base: Path, value):
    if value is None:
        return None
    p = Path(value)
    return p if p.is_absolute() else base / p


def parse_run_config(d: dict, base_dir=".", default_name="run") -> RunConfig:
    base = Path(base_dir)
    unknown = set(d) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if "seed" not in d:
        raise ConfigError("config must set an explicit integer 'seed'")
    for key in ("corpus", "embeddings", "output_dir"):
        if key not in d:
            raise ConfigError(f"config is missing {key!r}")
    embs = []
    for e in d["embeddings"]:
        if isinstance(e, str):
            e = {"path": e}
        policy = e.get("oov_policy", ZERO_FILL)
        if policy not in OOV_POLICIES:
            raise ConfigError(f"oov_policy must be one of {OOV_POLICIES}")
        p = _path(base, e["path"])
        embs.append(EmbeddingSpec(e.get("name", p.stem), p, policy))
    if not embs:
        raise ConfigError("at least one embedding file is required")
    alignment = d.get("alignment", "union")
    if alignment not in ALIGNMENTS:
        raise ConfigError(f"alignment must be one of {ALIGNMENTS}")
    fusion_d = dict(d.get("fusion", {}))
    fusion_d.setdefault("token_spaces", [e.name for e in embs])
    hyper_d = dict(d.get("hyper", {}))
    if "lambda" in hyper_d:
        hyper_d["lam"] = hyper_d.pop("lambda")
    try:
        hyper = HyperParams(**hyper_d)
        split = SplitSpec(**d.get("split", {}))
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    pooling = d.get("visual_pooling", "mean")
    if pooling not in ("mean", "max"):
        raise ConfigError("visual_pooling must be 'mean' or 'max'")
    return RunConfig(
        name=d.get("name", default_name),
        seed=int(d["seed"]),
        corpus=_path(base, d["corpus"]),
        embeddings=tuple(embs),
        output_dir=_path(base, d["output_dir"]),
        fusion=FusionConfig.from_dict(fusion_d),
        hyper=hyper,
        split=split,
        alignment=alignment,
        acoustic=_path(base, d.get("acoustic")),
        visual_cabin=_path(base, d.get("visual_cabin")),
        visual_road=_path(base, d.get("visual_road")),
        visual_pooling=pooling,
        extra_intents=tuple(d.get("extra_intents", ())),
        strict_features=bool(d.get("strict_features", True)),
        raw=d,
    )


def read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None


def load_run_config(path) -> RunConfig:
    path = Path(path)
    return parse_run_config(read_json(path), path.parent, path.stem)


def deep_merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = deep_merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def load_ablation(path) -> list:
    """Raw run dicts from an ablation file ``{"base": {...}, "runs": [...]}``.

    Each run entry is ``{"name": ..., <overrides>}``; overrides are deep-merged
    into ``base``. Runs without an ``output_dir`` get ``<base output_dir>/<name>``.
    A plain run config yields a single entry. Parsing is left to the caller so
    that one bad run does not abort the others.
    """
    path = Path(path)
    d = read_json(path)
    if "runs" not in d:
        d = dict(d)
        d.setdefault("name", path.stem)
        return [d]
    base = d.get("base", {})
    out = []
    for entry in d["runs"]:
        entry = dict(entry)
        name = entry.pop("name", None)
        if not name:
            raise ConfigError("every ablation run needs a name")
        merged = deep_merge(base, entry)
        merged["name"] = name
        if "output_dir" not in entry and "output_dir" in base:
            merged["output_dir"] = str(Path(base["output_dir"]) / name)
        out.append(merged)
    return out
