"""Resolve per-utterance feature references against loaded sidecars."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..errors import DataError
from .schema import Corpus

log = logging.getLogger(__name__)

REF_FIELDS = {
    "acoustic": "acoustic_ref",
    "visual_cabin": "visual_cabin_ref",
    "visual_road": "visual_road_ref",
}


@dataclass
class ResolvedFeatures:
    """``vectors[modality][utterance id]`` for every utterance and provided modality."""

    vectors: dict = field(default_factory=dict)
    dims: dict = field(default_factory=dict)
    missing: list = field(default_factory=list)  # (utterance id, modality, ref)

    @property
    def warnings(self) -> int:
        return len(self.missing)

    def for_utterance(self, uid: str) -> dict:
        return {m: vecs[uid] for m, vecs in self.vectors.items() if uid in vecs}


def _dim_of(mapping) -> int | None:
    for vec in mapping.values():
        return int(np.asarray(vec).size)
    return None


def attach_features(corpus: Corpus, acoustic=None, visual_cabin=None, visual_road=None,
                    strict: bool = True, dims: dict | None = None) -> ResolvedFeatures:
    """Look up every utterance's references in the given ``id -> vector`` maps.

    Utterances without a reference get a zero vector silently. A reference
    naming an id absent from its map raises ``DataError`` in strict mode and
    is zero-filled and counted in lenient mode. ``dims`` overrides the
    per-modality dimension (needed when a map is empty).
    """
    maps = {"acoustic": acoustic, "visual_cabin": visual_cabin, "visual_road": visual_road}
    out = ResolvedFeatures()
    for modality, mapping in maps.items():
        if mapping is None:
            continue
        dim = (dims or {}).get(modality) or _dim_of(mapping)
        if dim is None:
            raise DataError(f"cannot infer {modality} dimension from an empty map")
        out.dims[modality] = dim
        resolved = {}
        for utt in corpus:
            ref = getattr(utt, REF_FIELDS[modality])
            if ref is None:
                resolved[utt.id] = np.zeros(dim)
                continue
            vec = mapping.get(ref)
            if vec is None:
                if strict:
                    raise DataError(f"utterance {utt.id!r}: {modality} feature id {ref!r} not found")
                out.missing.append((utt.id, modality, ref))
                resolved[utt.id] = np.zeros(dim)
                continue
            vec = np.asarray(vec, dtype=np.float64)
            if vec.size != dim:
                raise DataError(
                    f"utterance {utt.id!r}: {modality} vector {ref!r} has dim {vec.size}, expected {dim}"
                )
            resolved[utt.id] = vec
        out.vectors[modality] = resolved
    if out.missing:
        log.warning("%d missing feature references zero-filled", len(out.missing))
    return out
