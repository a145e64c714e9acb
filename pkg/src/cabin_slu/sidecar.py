"""Tab-separated feature sidecars shared by the acoustic and visual modules.

Utterance rows: ``id<TAB>v1,v2,...``.
Frame rows:     ``id<TAB>frame_index<TAB>v1,v2,...``.
"""

from __future__ import annotations

from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import FormatError


def format_vector(vec) -> str:
    return ",".join(repr(float(v)) for v in vec)


def _parse_vector(text: str, path, lineno: int) -> np.ndarray:
    try:
        return np.array([float(v) for v in text.split(",")], dtype=np.float64)
    except ValueError as exc:
        raise FormatError(f"bad number ({exc})", path, lineno) from None


def _rows(path):
    with Path(path).open("r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\r\n")
            if line:
                yield lineno, line.split("\t")


def field_count(path) -> int | None:
    """Number of tab-separated fields on the first row, ``None`` if empty."""
    for _, fields in _rows(path):
        return len(fields)
    return None


def read_vectors(path) -> dict:
    """Read an utterance sidecar into an insertion-ordered ``id -> vector`` map."""
    out: dict = {}
    dim = None
    for lineno, fields in _rows(path):
        if len(fields) != 2:
            raise FormatError(f"expected 2 tab-separated fields, got {len(fields)}", path, lineno)
        uid, text = fields
        if uid in out:
            raise FormatError(f"duplicate id {uid!r}", path, lineno)
        vec = _parse_vector(text, path, lineno)
        if dim is None:
            dim = vec.size
        elif vec.size != dim:
            raise FormatError(f"row has {vec.size} values, expected {dim}", path, lineno)
        out[uid] = vec
    return out


def write_vectors(path, vectors: Mapping[str, np.ndarray]) -> None:
    lines = [f"{uid}\t{format_vector(vec)}\n" for uid, vec in vectors.items()]
    Path(path).write_text("".join(lines), encoding="utf-8")


def read_frames(path) -> dict:
    """Read a frame sidecar into ``id -> {frame_index: vector}``."""
    out: dict = {}
    dim = None
    for lineno, fields in _rows(path):
        if len(fields) != 3:
            raise FormatError(f"expected 3 tab-separated fields, got {len(fields)}", path, lineno)
        uid, idx_text, text = fields
        try:
            idx = int(idx_text)
        except ValueError:
            raise FormatError(f"frame index {idx_text!r} is not an integer", path, lineno) from None
        frames = out.setdefault(uid, {})
        if idx in frames:
            raise FormatError(f"duplicate frame ({uid!r}, {idx})", path, lineno)
        vec = _parse_vector(text, path, lineno)
        if dim is None:
            dim = vec.size
        elif vec.size != dim:
            raise FormatError(f"row has {vec.size} values, expected {dim}", path, lineno)
        frames[idx] = vec
    return out


def write_frames(path, frames: Mapping[str, list]) -> None:
    lines = []
    for uid, vecs in frames.items():
        for idx, vec in enumerate(vecs):
            lines.append(f"{uid}\t{idx}\t{format_vector(vec)}\n")
    Path(path).write_text("".join(lines), encoding="utf-8")
