"""Pretrained token-embedding tables and their concatenation.

Files use the plain-text GloVe / Word2Vec layout: one ``token v1 v2 ...``
entry per line, optionally preceded by a ``count dim`` header line.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, EmptyInputError, FormatError

log = logging.getLogger(__name__)

ZERO_FILL = "zero"
TRAINABLE_UNK = "unk"
OOV_POLICIES = (ZERO_FILL, TRAINABLE_UNK)
ALIGNMENTS = ("union", "intersection")


def normalize_token(token: str) -> str:
    return token.lower()


@dataclass(frozen=True)
class EmbeddingTable:
    """``vocab`` maps each token exactly as stored to its row of ``matrix``."""

    name: str
    vocab: dict
    matrix: np.ndarray
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        index = {normalize_token(tok): idx for tok, idx in reversed(list(self.vocab.items()))}
        # exact lowercase entries beat case-folded aliases
        index.update({tok: idx for tok, idx in self.vocab.items() if tok == normalize_token(tok)})
        object.__setattr__(self, "_index", index)

    @classmethod
    def from_tokens(cls, name: str, tokens: Sequence[str], matrix) -> "EmbeddingTable":
        return cls(name, {tok: i for i, tok in enumerate(tokens)}, np.asarray(matrix, dtype=np.float64))

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def __len__(self) -> int:
        return len(self.vocab)

    def __contains__(self, token: str) -> bool:
        return normalize_token(token) in self._index

    def get(self, token: str):
        idx = self._index.get(normalize_token(token))
        return None if idx is None else self.matrix[idx]

    def __eq__(self, other):
        if not isinstance(other, EmbeddingTable):
            return NotImplemented
        return (
            self.name == other.name
            and self.vocab == other.vocab
            and np.array_equal(self.matrix, other.matrix)
        )

    __hash__ = None


def _is_header(fields: list) -> bool:
    if len(fields) != 2:
        return False
    try:
        int(fields[0]), int(fields[1])
    except ValueError:
        return False
    return True


def load_table(path, name: str | None = None) -> EmbeddingTable:
    """Parse a GloVe (headerless) or Word2Vec (``count dim`` header) text file."""
    path = Path(path)
    name = name or path.stem
    tokens: list = []
    rows: list = []
    dim = None
    declared = None
    with path.open("r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            fields = raw.rstrip("\r\n").rstrip(" ").split(" ")
            if fields == [""]:
                continue
            if lineno == 1 and _is_header(fields):
                declared = (int(fields[0]), int(fields[1]))
                continue
            token, values = fields[0], fields[1:]
            if dim is None:
                dim = len(values)
                if dim < 1:
                    raise FormatError(f"token {token!r} has no vector", path, lineno)
                if declared and declared[1] != dim:
                    raise FormatError(
                        f"header declares dim {declared[1]}, data has {dim}", path, lineno
                    )
            elif len(values) != dim:
                raise FormatError(
                    f"expected {dim} values for {token!r}, found {len(values)}", path, lineno
                )
            try:
                rows.append([float(v) for v in values])
            except ValueError as exc:
                raise FormatError(f"bad number ({exc})", path, lineno) from None
            tokens.append(token)
    if not tokens:
        raise FormatError("no embedding entries", path)

    vocab: dict = {}
    for idx, tok in enumerate(tokens):
        if tok in vocab:
            raise FormatError(f"duplicate token {tok!r}", path)
        vocab[tok] = idx
    matrix = np.asarray(rows, dtype=np.float64)
    if declared and declared[0] != len(tokens):
        log.warning("%s: header declares %d entries, read %d", path, declared[0], len(tokens))
    return EmbeddingTable(name, vocab, matrix)


def write_table(path, table_tokens: Sequence[str], matrix: np.ndarray, header: bool = False):
    """Write vectors in the text format ``load_table`` reads."""
    path = Path(path)
    lines = []
    if header:
        lines.append(f"{len(table_tokens)} {matrix.shape[1]}")
    for tok, row in zip(table_tokens, matrix):
        lines.append(tok + " " + " ".join(repr(float(v)) for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


@dataclass(frozen=True)
class CompositeEmbedder:
    """Ordered concatenation of embedding spaces.

    ``alignment="intersection"`` treats a token as out-of-vocabulary in every
    space unless all spaces contain it.
    """

    tables: tuple
    oov_policies: tuple
    alignment: str = "union"
    offsets: tuple = field(init=False)

    def __post_init__(self):
        if len(self.oov_policies) != len(self.tables):
            raise ConfigError("one OOV policy per embedding space required")
        bad = [p for p in self.oov_policies if p not in OOV_POLICIES]
        if bad:
            raise ConfigError(f"unknown OOV policy {bad[0]!r}; use one of {OOV_POLICIES}")
        if self.alignment not in ALIGNMENTS:
            raise ConfigError(f"alignment must be one of {ALIGNMENTS}")
        offs = [0]
        for t in self.tables:
            offs.append(offs[-1] + t.dim)
        object.__setattr__(self, "offsets", tuple(offs))

    @property
    def names(self) -> list:
        return [t.name for t in self.tables]

    @property
    def dims(self) -> list:
        return [t.dim for t in self.tables]

    @property
    def total_dim(self) -> int:
        return self.offsets[-1]

    def presence(self, token: str) -> list:
        hits = [token in t for t in self.tables]
        if self.alignment == "intersection" and not all(hits):
            return [False] * len(hits)
        return hits

    def lookup(self, token: str, unk_rows: dict | None = None) -> np.ndarray:
        """Concatenated vector; absent spaces contribute zeros or their UNK row."""
        out = np.zeros(self.total_dim)
        for k, (table, present) in enumerate(zip(self.tables, self.presence(token))):
            seg = slice(self.offsets[k], self.offsets[k + 1])
            if present:
                out[seg] = table.get(token)
            elif self.oov_policies[k] == TRAINABLE_UNK and unk_rows is not None:
                out[seg] = unk_rows[table.name]
        return out


def concat_spaces(tables: Sequence[EmbeddingTable], oov_policies=None, alignment="union") -> CompositeEmbedder:
    if not tables:
        raise EmptyInputError("at least one embedding table is required")
    names = [t.name for t in tables]
    if len(set(names)) != len(names):
        raise ConfigError(f"embedding space names must be unique: {names}")
    if oov_policies is None:
        oov_policies = [ZERO_FILL] * len(tables)
    elif isinstance(oov_policies, str):
        oov_policies = [oov_policies] * len(tables)
    return CompositeEmbedder(tuple(tables), tuple(oov_policies), alignment)


@dataclass(frozen=True)
class Coverage:
    covered: int
    oov_rate: float


def coverage_report(embedder: CompositeEmbedder, corpus_vocab: Iterable[str]) -> dict:
    vocab = {normalize_token(t) for t in corpus_vocab}
    if not vocab:
        raise EmptyInputError("empty corpus vocabulary")
    report = {}
    for table in embedder.tables:
        covered = sum(1 for tok in vocab if tok in table)
        report[table.name] = Coverage(covered, float(Fraction(len(vocab) - covered, len(vocab))))
    return report
