"""Per-utterance visual vectors from precomputed per-frame CNN descriptors.

Two camera views are supported: ``cabin`` (passenger-facing) and ``road``
(dash-cam). Frames sampled during one utterance are pooled into one vector,
and views are concatenated in fixed (cabin, road) order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import sidecar
from .errors import ConfigError, EmptyInputError, ShapeError

CABIN = "cabin"
ROAD = "road"
VIEWS = (CABIN, ROAD)
CNN_DIM = 4096
POOLING = ("mean", "max")


@dataclass(frozen=True)
class FrameFeatureSet:
    utterance_id: str
    view: str
    frames: tuple  # of 1-D arrays, ordered by frame index

    @property
    def dim(self):
        return self.frames[0].size if self.frames else None


@dataclass(frozen=True)
class UtteranceVisuals:
    vector: np.ndarray
    views_included: frozenset

    @property
    def dim(self) -> int:
        return int(self.vector.size)


def _check_view(view):
    if view not in VIEWS:
        raise ConfigError(f"unknown view {view!r}; expected one of {VIEWS}")


def load_frame_features(path, view: str) -> list:
    _check_view(view)
    grouped = sidecar.read_frames(path)
    return [
        FrameFeatureSet(uid, view, tuple(frames[i] for i in sorted(frames)))
        for uid, frames in grouped.items()
    ]


def pool_frames(fs: FrameFeatureSet, policy: str = "mean") -> np.ndarray:
    if policy not in POOLING:
        raise ConfigError(f"pooling must be one of {POOLING}")
    if not fs.frames:
        raise EmptyInputError(f"no frames for {fs.utterance_id!r}")
    stack = np.stack(fs.frames)
    return stack.mean(axis=0) if policy == "mean" else stack.max(axis=0)


def combine_views(cabin=None, road=None) -> UtteranceVisuals:
    parts, views = [], set()
    if cabin is not None:
        parts.append(np.asarray(cabin, dtype=np.float64))
        views.add(CABIN)
    if road is not None:
        parts.append(np.asarray(road, dtype=np.float64))
        views.add(ROAD)
    if not parts:
        raise EmptyInputError("combine_views needs at least one view")
    return UtteranceVisuals(np.concatenate(parts), frozenset(views))


def load_view_vectors(path, view: str, pooling: str = "mean") -> dict:
    """``id -> vector`` for one view from either sidecar flavour.

    Three-field rows are frame features and get pooled; two-field rows are
    already one vector per utterance.
    """
    _check_view(view)
    n = sidecar.field_count(path)
    if n is None:
        return {}
    if n == 2:
        return sidecar.read_vectors(path)
    return {fs.utterance_id: pool_frames(fs, pooling) for fs in load_frame_features(path, view)}


def visual_vector(cabin_map, road_map, uid: str, dims) -> np.ndarray:
    """Combined vector for ``uid`` with zero fallback for missing views.

    ``dims`` maps each enabled view to its per-view dimension; only views in
    ``dims`` are included.
    """
    cabin = road = None
    if CABIN in dims:
        cabin = cabin_map.get(uid) if cabin_map is not None else None
        cabin = np.zeros(dims[CABIN]) if cabin is None else cabin
        if cabin.size != dims[CABIN]:
            raise ShapeError(f"cabin vector for {uid!r} has dim {cabin.size}, expected {dims[CABIN]}")
    if ROAD in dims:
        road = road_map.get(uid) if road_map is not None else None
        road = np.zeros(dims[ROAD]) if road is None else road
        if road.size != dims[ROAD]:
            raise ShapeError(f"road vector for {uid!r} has dim {road.size}, expected {dims[ROAD]}")
    return combine_views(cabin, road).vector
