"""Precision / recall / F1 scoring for intents and slots, and ablation tables.

All counts are turned into exact fractions before the final float conversion,
so results do not depend on summation order. ``0/0`` is defined as 0.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .errors import EmptyInputError, ShapeError

OUTSIDE = "O"


def _ratio(num, den) -> Fraction:
    return Fraction(num, den) if den else Fraction(0)


def _f1(p: Fraction, r: Fraction) -> Fraction:
    return 2 * p * r / (p + r) if p + r else Fraction(0)


@dataclass(frozen=True)
class ClassScores:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass(frozen=True)
class ConfusionMatrix:
    labels: tuple
    counts: np.ndarray  # rows gold, cols predicted

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass(frozen=True)
class Metrics:
    per_class: dict  # label -> ClassScores
    micro_precision: float
    micro_recall: float
    micro_f1: float
    macro_f1: float
    weighted_f1: float
    n_items: int

    def as_row(self) -> dict:
        return {
            "micro_f1": self.micro_f1,
            "macro_f1": self.macro_f1,
            "weighted_f1": self.weighted_f1,
            "micro_precision": self.micro_precision,
            "micro_recall": self.micro_recall,
            "n_items": self.n_items,
            "per_class": {
                k: {"precision": v.precision, "recall": v.recall, "f1": v.f1, "support": v.support}
                for k, v in self.per_class.items()
            },
        }


def scores_from_counts(labels, tp: dict, fp: dict, fn: dict, n_items: int) -> Metrics:
    per_class = {}
    f1s = {}
    support = {}
    for lab in labels:
        p = _ratio(tp.get(lab, 0), tp.get(lab, 0) + fp.get(lab, 0))
        r = _ratio(tp.get(lab, 0), tp.get(lab, 0) + fn.get(lab, 0))
        f1s[lab] = _f1(p, r)
        support[lab] = tp.get(lab, 0) + fn.get(lab, 0)
        per_class[lab] = ClassScores(float(p), float(r), float(f1s[lab]), support[lab])
    TP = sum(tp.get(l, 0) for l in labels)
    FP = sum(fp.get(l, 0) for l in labels)
    FN = sum(fn.get(l, 0) for l in labels)
    mp, mr = _ratio(TP, TP + FP), _ratio(TP, TP + FN)
    macro = sum(f1s.values(), Fraction(0)) / len(labels) if labels else Fraction(0)
    total_support = sum(support.values())
    weighted = (
        sum((f1s[l] * support[l] for l in labels), Fraction(0)) / total_support
        if total_support else Fraction(0)
    )
    return Metrics(per_class, float(mp), float(mr), float(_f1(mp, mr)), float(macro), float(weighted), n_items)


def confusion_matrix(gold: Sequence, pred: Sequence, labels: Sequence | None = None) -> ConfusionMatrix:
    if len(gold) != len(pred):
        raise ShapeError(f"{len(gold)} gold labels but {len(pred)} predictions")
    if labels is None:
        labels = sorted(set(gold) | set(pred))
    index = {lab: i for i, lab in enumerate(labels)}
    counts = np.zeros((len(labels), len(labels)), dtype=np.int64)
    for g, p in zip(gold, pred):
        counts[index[g], index[p]] += 1
    return ConfusionMatrix(tuple(labels), counts)


def intent_metrics(gold: Sequence, pred: Sequence, labels: Sequence | None = None):
    """Single-label multi-class scores; returns ``(Metrics, ConfusionMatrix)``.

    ``labels`` defaults to the sorted union of observed labels. Passing the
    full intent inventory includes unseen classes (F1 0) in the macro
    average; they carry weight 0 in the weighted average.
    """
    if len(gold) != len(pred):
        raise ShapeError(f"{len(gold)} gold labels but {len(pred)} predictions")
    if not gold:
        raise EmptyInputError("nothing to score")
    cm = confusion_matrix(gold, pred, labels)
    tp, fp, fn = {}, {}, {}
    for i, lab in enumerate(cm.labels):
        tp[lab] = int(cm.counts[i, i])
        fp[lab] = int(cm.counts[:, i].sum()) - tp[lab]
        fn[lab] = int(cm.counts[i, :].sum()) - tp[lab]
    return scores_from_counts(list(cm.labels), tp, fp, fn, len(gold)), cm


def spans(tags: Sequence) -> set:
    """Maximal runs of one non-O label as ``(start, end_inclusive, label)``."""
    out = set()
    start = None
    for i, tag in enumerate(list(tags) + [OUTSIDE]):
        if start is not None and tag != tags[start]:
            out.add((start, i - 1, tags[start]))
            start = None
        if start is None and tag != OUTSIDE and i < len(tags):
            start = i
    return out


def slot_metrics(gold_seqs: Sequence[Sequence], pred_seqs: Sequence[Sequence], mode: str = "token",
                 labels: Sequence | None = None, ids: Sequence | None = None) -> Metrics:
    """Slot scores over non-O labels, per token or per exact-match span."""
    if mode not in ("token", "span"):
        raise ValueError(f"mode must be 'token' or 'span', got {mode!r}")
    if len(gold_seqs) != len(pred_seqs):
        raise ShapeError(f"{len(gold_seqs)} gold sequences but {len(pred_seqs)} predicted")
    tp, fp, fn = {}, {}, {}
    seen = set()
    n_items = 0
    for k, (g, p) in enumerate(zip(gold_seqs, pred_seqs)):
        if len(g) != len(p):
            name = ids[k] if ids is not None else k
            raise ShapeError(f"utterance {name!r}: {len(g)} gold tags but {len(p)} predicted")
        if mode == "token":
            for a, b in zip(g, p):
                if a == OUTSIDE and b == OUTSIDE:
                    continue
                n_items += 1
                seen.update(x for x in (a, b) if x != OUTSIDE)
                if a == b:
                    tp[a] = tp.get(a, 0) + 1
                    continue
                if b != OUTSIDE:
                    fp[b] = fp.get(b, 0) + 1
                if a != OUTSIDE:
                    fn[a] = fn.get(a, 0) + 1
        else:
            gs, ps = spans(list(g)), spans(list(p))
            n_items += len(gs | ps)
            for s in gs & ps:
                tp[s[2]] = tp.get(s[2], 0) + 1
            for s in ps - gs:
                fp[s[2]] = fp.get(s[2], 0) + 1
            for s in gs - ps:
                fn[s[2]] = fn.get(s[2], 0) + 1
            seen.update(s[2] for s in gs | ps)
    if labels is None:
        labels = sorted(seen)
    else:
        labels = [l for l in labels if l != OUTSIDE]
    return scores_from_counts(list(labels), tp, fp, fn, n_items)


@dataclass(frozen=True)
class AblationReport:
    rows: list  # dicts with "config" plus metric fields
    failures: list  # (config, message)

    def text(self) -> str:
        head = ("config", "micro_f1", "macro_f1", "weighted_f1", "n")
        body = [
            (r["config"], f"{r['micro_f1'] * 100:.2f}", f"{r['macro_f1'] * 100:.2f}",
             f"{r['weighted_f1'] * 100:.2f}", str(r["n_items"]))
            for r in self.rows
        ]
        widths = [max(len(x[i]) for x in [head] + body) for i in range(len(head))]
        fmt = lambda cells: "  ".join(
            c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(cells, widths))
        )
        lines = [fmt(head), fmt(["-" * w for w in widths])] + [fmt(b) for b in body]
        for name, msg in self.failures:
            lines.append(f"FAILED {name}: {msg}")
        return "\n".join(lines) + "\n"

    def jsonl(self) -> str:
        out = [json.dumps(r, sort_keys=True) for r in self.rows]
        out += [json.dumps({"config": n, "error": m}, sort_keys=True) for n, m in self.failures]
        return "".join(line + "\n" for line in out)


def ablation_report(runs: Sequence, failures: Sequence = ()) -> AblationReport:
    """Rows in the given order; ``micro_f1`` is the headline column."""
    if not runs and not failures:
        raise EmptyInputError("ablation report needs at least one run")
    rows = []
    for name, metrics in runs:
        row = {"config": name}
        row.update(metrics.as_row())
        rows.append(row)
    return AblationReport(rows, list(failures))
