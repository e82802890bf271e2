"""Word-level precision / recall / F1 / similarity and dataset filters."""
from __future__ import annotations

import json
from collections import Counter
from dataclasses import asdict, dataclass
from pathlib import Path

from .charset import DEFAULT_CHARSET, Charset
from .merge import levenshtein

MIN_CROP_HEIGHT = 20
MIN_LABEL_CHARS = 3


@dataclass(frozen=True)
class EvalReport:
    precision: float
    recall: float
    f1: float
    similarity: float
    n_labels: int
    n_predictions: int
    n_intersection: int
    # kept so reports can be pooled (micro-averaged) later
    edit_distance: int = 0
    max_length: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def word_tokens(text: str, charset: Charset = DEFAULT_CHARSET, dataset_filter: bool = False) -> list[str]:
    """Whitespace tokens, lowercased and charset-restricted, punctuation trimmed at the edges."""
    edge = charset.specials
    out = []
    for raw in text.split():
        tok = charset.restrict(raw).strip(edge)
        if not tok:
            continue
        if dataset_filter and len(tok) < MIN_LABEL_CHARS:
            continue
        out.append(tok)
    return out


def tokenize_words(text: str, charset: Charset = DEFAULT_CHARSET, dataset_filter: bool = False) -> Counter:
    return Counter(word_tokens(text, charset, dataset_filter))


def normalize_text(text: str, charset: Charset = DEFAULT_CHARSET, dataset_filter: bool = False) -> str:
    return " ".join(word_tokens(text, charset, dataset_filter))


def multiset_intersection(labels: Counter, preds: Counter) -> int:
    return sum((labels & preds).values())


def f1_score(precision: float, recall: float) -> float:
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def _ratios(n_inter, n_labels, n_preds, dist, longest):
    if n_labels == 0 and n_preds == 0:
        return 1.0, 1.0, 1.0, 1.0
    precision = n_inter / n_preds if n_preds else 0.0
    recall = n_inter / n_labels if n_labels else 0.0
    similarity = 1.0 - dist / longest if longest else 1.0
    return precision, recall, f1_score(precision, recall), similarity


def score(labels: Counter, preds: Counter, label_text: str, pred_text: str) -> EvalReport:
    """Score one (labels, predictions) pair.

    Zero denominators: no predictions gives precision 0, no labels gives
    recall 0, and an empty task with empty output scores 1 everywhere.
    """
    n_labels, n_preds = sum(labels.values()), sum(preds.values())
    n_inter = multiset_intersection(labels, preds)
    dist = levenshtein(label_text, pred_text)
    longest = max(len(label_text), len(pred_text))
    p, r, f1, sim = _ratios(n_inter, n_labels, n_preds, dist, longest)
    return EvalReport(p, r, f1, sim, n_labels, n_preds, n_inter, dist, longest)


def score_texts(label_text: str, pred_text: str, charset: Charset = DEFAULT_CHARSET) -> EvalReport:
    lab = normalize_text(label_text, charset)
    pred = normalize_text(pred_text, charset)
    return score(Counter(lab.split()), Counter(pred.split()), lab, pred)


def micro_average(reports) -> EvalReport:
    """Pool counts and edit distances across reports before dividing."""
    reports = list(reports)
    n_labels = sum(r.n_labels for r in reports)
    n_preds = sum(r.n_predictions for r in reports)
    n_inter = sum(r.n_intersection for r in reports)
    dist = sum(r.edit_distance for r in reports)
    longest = sum(r.max_length for r in reports)
    p, r, f1, sim = _ratios(n_inter, n_labels, n_preds, dist, longest)
    return EvalReport(p, r, f1, sim, n_labels, n_preds, n_inter, dist, longest)


def apply_dataset_filters(crops, labels, min_height: int = MIN_CROP_HEIGHT,
                          min_chars: int = MIN_LABEL_CHARS) -> list[tuple]:
    """Drop (crop, label) pairs whose crop is under 20 px tall or label under 3 characters.

    ``crops`` may hold raw arrays or objects with an ``image`` attribute.
    """
    crops, labels = list(crops), list(labels)
    if len(crops) != len(labels):
        raise ValueError(f"{len(crops)} crops but {len(labels)} labels")
    kept = []
    for crop, label in zip(crops, labels):
        img = getattr(crop, "image", crop)
        if img.shape[0] < min_height or len(label) < min_chars:
            continue
        kept.append((crop, label))
    return kept


@dataclass(frozen=True)
class GroundTruthBox:
    x: int
    y: int
    w: int
    h: int
    text: str


def load_ground_truth(path) -> dict[int, list[GroundTruthBox]]:
    """Read per-frame ground truth: JSON lines or a JSON array of
    ``{frame_index, boxes: [{x, y, w, h, text}]}`` objects."""
    raw = Path(path).read_text(encoding="utf-8").strip()
    if not raw:
        return {}
    if raw.startswith("["):
        records = json.loads(raw)
    else:
        records = [json.loads(line) for line in raw.splitlines() if line.strip()]
    out = {}
    for rec in records:
        out[int(rec["frame_index"])] = [
            GroundTruthBox(int(b["x"]), int(b["y"]), int(b["w"]), int(b["h"]), str(b["text"]))
            for b in rec.get("boxes", [])
        ]
    return out


def dump_ground_truth(path, frames: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for idx in sorted(frames):
            boxes = [asdict(b) for b in frames[idx]]
            fh.write(json.dumps({"frame_index": idx, "boxes": boxes}) + "\n")


def format_table(rows: list[tuple[str, EvalReport]]) -> str:
    header = ("", "precision", "recall", "f1", "similarity", "labels", "preds", "matched")
    body = [
        (name, f"{r.precision:.3f}", f"{r.recall:.3f}", f"{r.f1:.3f}", f"{r.similarity:.3f}",
         str(r.n_labels), str(r.n_predictions), str(r.n_intersection))
        for name, r in rows
    ]
    widths = [max(len(row[i]) for row in [header, *body]) for i in range(len(header))]
    lines = []
    for row in [header, *body]:
        cells = [row[0].ljust(widths[0])] + [c.rjust(w) for c, w in zip(row[1:], widths[1:])]
        lines.append("  ".join(cells).rstrip())
    return "\n".join(lines)
