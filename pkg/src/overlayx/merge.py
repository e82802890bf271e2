"""Edit distance, cross-frame overlay de-duplication and dictionary autocorrection."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numba import njit

DEFAULT_MERGE_THRESHOLD = 0.5


@dataclass(frozen=True)
class TimedOverlay:
    text: str
    timestamp: float
    frame_index: int


@njit(cache=True)
def _column_step(prev, cur, a, ch):
    # one DP column: distances from every prefix of `a` to (b_prefix + ch)
    cur[0] = prev[0] + 1
    for r in range(1, a.shape[0] + 1):
        best = prev[r - 1] + (0 if a[r - 1] == ch else 1)
        alt = prev[r] + 1
        if alt < best:
            best = alt
        alt = cur[r - 1] + 1
        if alt < best:
            best = alt
        cur[r] = best


@njit(cache=True)
def _lev_codes(a, b):
    m = a.shape[0]
    prev = np.arange(m + 1).astype(np.int32)
    cur = np.empty(m + 1, np.int32)
    for j in range(b.shape[0]):
        _column_step(prev, cur, a, b[j])
        prev, cur = cur, prev
    return prev[m]


@njit(cache=True)
def _lev_table(a_codes, a_offs, b_codes, b_offs, lcp, max_b, max_a):
    n_a = a_offs.shape[0] - 1
    n_b = b_offs.shape[0] - 1
    out = np.empty((n_a, n_b), np.int32)
    # cols[k] is the DP column for the first k symbols of the current b word;
    # b words arrive sorted so columns for a shared prefix are reused.
    cols = np.empty((max_b + 1, max_a + 1), np.int32)
    for i in range(n_a):
        a = a_codes[a_offs[i]:a_offs[i + 1]]
        m = a.shape[0]
        for r in range(m + 1):
            cols[0, r] = r
        for j in range(n_b):
            b = b_codes[b_offs[j]:b_offs[j + 1]]
            for k in range(lcp[j] + 1, b.shape[0] + 1):
                # _column_step inlined on the 2-D buffer; row views cost more than the arithmetic
                ch = b[k - 1]
                cols[k, 0] = cols[k - 1, 0] + 1
                for r in range(1, m + 1):
                    best = cols[k - 1, r - 1] + (0 if a[r - 1] == ch else 1)
                    alt = cols[k - 1, r] + 1
                    if alt < best:
                        best = alt
                    alt = cols[k, r - 1] + 1
                    if alt < best:
                        best = alt
                    cols[k, r] = best
            out[i, j] = cols[b.shape[0], m]
    return out


def _codes(s: str) -> np.ndarray:
    return np.frombuffer(s.encode("utf-32-le"), dtype=np.uint32)


def _pack(words):
    codes = [_codes(w) for w in words]
    offs = np.zeros(len(words) + 1, dtype=np.int64)
    offs[1:] = np.cumsum([len(c) for c in codes])
    flat = np.concatenate(codes) if codes else np.zeros(0, np.uint32)
    return flat.astype(np.uint32), offs


def levenshtein(a: str, b: str) -> int:
    """Unit-cost insert/delete/substitute edit distance."""
    return int(_lev_codes(_codes(a), _codes(b)))


def levenshtein_table(rows, cols) -> np.ndarray:
    """Distance matrix ``D[i, j] = levenshtein(rows[i], cols[j])``.

    Same DP recurrence as :func:`levenshtein`; ``cols`` are visited in sorted
    order so DP columns of shared prefixes are computed once.
    """
    rows, cols = list(rows), list(cols)
    if not rows or not cols:
        return np.zeros((len(rows), len(cols)), dtype=np.int32)
    order = sorted(range(len(cols)), key=lambda j: cols[j])
    sorted_cols = [cols[j] for j in order]
    lcp = np.zeros(len(cols), dtype=np.int64)
    for j in range(1, len(sorted_cols)):
        p, q = sorted_cols[j - 1], sorted_cols[j]
        k, lim = 0, min(len(p), len(q))
        while k < lim and p[k] == q[k]:
            k += 1
        lcp[j] = k
    a_codes, a_offs = _pack(rows)
    b_codes, b_offs = _pack(sorted_cols)
    table = _lev_table(a_codes, a_offs, b_codes, b_offs, lcp,
                       max(len(c) for c in cols), max(len(r) for r in rows))
    out = np.empty_like(table)
    out[:, order] = table
    return out


def normalized_distance(a: str, b: str) -> float:
    longest = max(len(a), len(b))
    if longest == 0:
        return 0.0
    return levenshtein(a, b) / longest


def merge_overlays(overlays, threshold: float = DEFAULT_MERGE_THRESHOLD) -> list[TimedOverlay]:
    """Drop overlays that are partial versions of a neighbouring overlay.

    Overlays are visited newest first and each consecutive pair of that
    ordering is compared; when their normalized distance is below
    ``threshold`` the one with fewer characters is discarded (on equal length,
    the earlier one). Pairs are taken from the full ordering, so a dropped
    overlay still takes part in the comparison with its other neighbour.
    Survivors come back oldest first.
    """
    if not 0.0 < threshold <= 1.0:
        raise ValueError(f"merge threshold must lie in (0, 1], got {threshold}")
    ordered = sorted(overlays, key=lambda o: (o.timestamp, o.frame_index), reverse=True)
    dropped = [False] * len(ordered)
    for k in range(len(ordered) - 1):
        later, earlier = ordered[k], ordered[k + 1]
        if normalized_distance(later.text, earlier.text) < threshold:
            if len(later.text) >= len(earlier.text):
                dropped[k + 1] = True
            else:
                dropped[k] = True
    return [o for o, gone in zip(reversed(ordered), reversed(dropped)) if not gone]


class Dictionary:
    """Set of valid lowercase words, indexed by length for candidate lookup."""

    def __init__(self, words):
        self.words = frozenset(w.strip().lower() for w in words if w.strip())
        self._by_len: dict[int, list[str]] = {}
        for w in sorted(self.words):
            self._by_len.setdefault(len(w), []).append(w)

    def __contains__(self, word: str) -> bool:
        return word in self.words

    def __len__(self) -> int:
        return len(self.words)

    def near_length(self, n: int, slack: int) -> list[str]:
        out: list[str] = []
        for k in range(max(0, n - slack), n + slack + 1):
            out.extend(self._by_len.get(k, ()))
        return out

    @classmethod
    def load(cls, path) -> Dictionary:
        return cls(Path(path).read_text(encoding="utf-8").splitlines())


def autocorrect_word(word: str, dictionary: Dictionary, max_dist: int = 1) -> str:
    if word in dictionary or not any(c.isalpha() for c in word):
        return word
    candidates = dictionary.near_length(len(word), max_dist)
    if not candidates:
        return word
    dists = levenshtein_table([word], candidates)[0]
    best = int(dists.min())
    if best > max_dist or int((dists == best).sum()) != 1:
        return word
    return candidates[int(dists.argmin())]


def autocorrect(text: str, dictionary: Dictionary, max_dist: int = 1) -> str:
    """Replace each unknown word by its unique nearest dictionary word within ``max_dist``."""
    return " ".join(autocorrect_word(w, dictionary, max_dist) for w in text.split())
