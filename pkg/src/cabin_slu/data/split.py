"""Deterministic k-fold and holdout splits, optionally stratified by intent."""

from __future__ import annotations

import math

import numpy as np

from ..errors import ConfigError
from .schema import Corpus

NO_INTENT = "<none>"


def _strata(corpus: Corpus) -> dict:
    groups: dict = {}
    for i, u in enumerate(corpus.utterances):
        groups.setdefault(u.intent if u.intent is not None else NO_INTENT, []).append(i)
    order = [k for k in corpus.schema.intents if k in groups]
    if NO_INTENT in groups:
        order.append(NO_INTENT)
    return {k: groups[k] for k in order}


def fold_assignment(corpus: Corpus, k: int, seed: int, stratified: bool = True) -> np.ndarray:
    """Fold id per utterance.

    Stratified mode shuffles each intent group and deals the concatenated
    groups round-robin, so every fold holds each class within +-1.
    """
    if k < 2:
        raise ConfigError(f"k must be at least 2, got {k}")
    if k > len(corpus):
        raise ConfigError(f"k={k} exceeds corpus size {len(corpus)}")
    rng = np.random.default_rng(seed)
    if stratified:
        order = []
        for idx in _strata(corpus).values():
            order.extend(rng.permutation(idx).tolist())
    else:
        order = rng.permutation(len(corpus)).tolist()
    folds = np.empty(len(corpus), dtype=np.int64)
    for pos, i in enumerate(order):
        folds[i] = pos % k
    return folds


def kfold_split(corpus: Corpus, k: int, seed: int, stratified: bool = True) -> list:
    """``k`` (train, test) corpus pairs whose test parts partition ``corpus``."""
    folds = fold_assignment(corpus, k, seed, stratified)
    out = []
    for f in range(k):
        test = np.flatnonzero(folds == f)
        train = np.flatnonzero(folds != f)
        out.append((corpus.subset(train), corpus.subset(test)))
    return out


def holdout_indices(corpus: Corpus, test_fraction: float, seed: int, stratified: bool = True):
    if not 0.0 < test_fraction < 1.0:
        raise ConfigError(f"test fraction must be in (0, 1), got {test_fraction}")
    rng = np.random.default_rng(seed)
    groups = _strata(corpus).values() if stratified else [list(range(len(corpus)))]
    test = []
    for idx in groups:
        perm = rng.permutation(idx).tolist()
        n_test = int(math.floor(test_fraction * len(perm) + 0.5))
        test.extend(perm[:n_test])
    test_set = set(test)
    train = [i for i in range(len(corpus)) if i not in test_set]
    return train, sorted(test)


def holdout_split(corpus: Corpus, test_fraction: float, seed: int, stratified: bool = True):
    train, test = holdout_indices(corpus, test_fraction, seed, stratified)
    return corpus.subset(train), corpus.subset(test)
