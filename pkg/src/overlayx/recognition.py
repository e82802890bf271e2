"""Word transcription: backend contract, height normalisation, template backend."""
from __future__ import annotations

import json
import shlex
import subprocess
import tempfile
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np
from PIL import Image as PILImage, ImageDraw
from scipy import ndimage

from . import imaging
from .charset import DEFAULT_CHARSET, Charset
from .detection import TextBox, _DisjointSet, foreground_mask

MODEL_HEIGHT = 32


class RecognizerError(RuntimeError):
    pass


@dataclass(frozen=True)
class WordImage:
    image: np.ndarray
    source_box: TextBox | None = None
    frame_index: int = 0


@dataclass(frozen=True)
class Recognition:
    text: str
    confidence: float


class RecognizerBackend(Protocol):
    single_flight: bool

    def transcribe(self, images: Sequence[np.ndarray]) -> list[tuple[str, float | None]]: ...


def normalize_height(img: np.ndarray, target_h: int = MODEL_HEIGHT) -> np.ndarray:
    """Rescale to ``target_h`` rows keeping the aspect ratio (width rounded, at least 1)."""
    h, w = img.shape[:2]
    new_w = max(1, int(np.floor(w * target_h / h + 0.5)))
    if (new_w, target_h) == (w, h):
        return img.copy()
    return imaging.resize_antialias(img, new_w, target_h)


def clean_transcription(text: str, charset: Charset = DEFAULT_CHARSET) -> str:
    text = "".join(c for c in text if unicodedata.category(c)[0] != "C")
    return charset.restrict(text)


def recognize_many(words: Sequence[WordImage], backend: RecognizerBackend,
                   charset: Charset = DEFAULT_CHARSET) -> list[Recognition]:
    if not words:
        return []
    try:
        raw = backend.transcribe([w.image for w in words])
    except RecognizerError:
        raise
    except Exception as exc:
        raise RecognizerError(f"{type(backend).__name__} failed: {exc}") from exc
    if len(raw) != len(words):
        raise RecognizerError(f"backend returned {len(raw)} results for {len(words)} images")
    out = []
    for text, conf in raw:
        conf = 1.0 if conf is None else min(1.0, max(0.0, float(conf)))
        out.append(Recognition(clean_transcription(str(text), charset), conf))
    return out


def recognize(word: WordImage, backend: RecognizerBackend,
              charset: Charset = DEFAULT_CHARSET) -> Recognition:
    """Transcribe one word: lowercased, restricted to ``charset``, confidence defaulting to 1."""
    return recognize_many([word], backend, charset)[0]


# -- template backend ---------------------------------------------------------

GRID = 16


def _grid_bitmap(mask: np.ndarray) -> np.ndarray:
    """Ink mask stretched onto a GRID x GRID cell, values in [0, 1]."""
    img = mask.astype(np.uint8) * 255
    return imaging.resize_antialias(img, GRID, GRID).astype(np.float64).ravel() / 255.0


@dataclass
class FontTemplates:
    family: str
    chars: str
    bitmaps: np.ndarray  # (n_chars, GRID*GRID)
    top: np.ndarray      # ink top relative to baseline, in em (negative = above)
    bottom: np.ndarray
    width: np.ndarray    # ink width in em


@dataclass
class GlyphAtlas:
    fonts: list[FontTemplates]
    charset: Charset = DEFAULT_CHARSET

    @classmethod
    def build(cls, fonts, charset: Charset = DEFAULT_CHARSET, ref_size: int = 96) -> GlyphAtlas:
        """Render every charset symbol in every font at ``ref_size`` px."""
        from .synthgen import load_font

        out = []
        for entry in fonts:
            font = load_font(entry.path, ref_size)
            bitmaps, top, bottom, width = [], [], [], []
            for ch in charset:
                mask, t, b = _ink_on_baseline(font, ch, ref_size)
                bitmaps.append(_grid_bitmap(mask))
                top.append(t / ref_size)
                bottom.append(b / ref_size)
                width.append(mask.shape[1] / ref_size)
            out.append(FontTemplates(entry.family, charset.symbols, np.array(bitmaps),
                                     np.array(top), np.array(bottom), np.array(width)))
        return cls(out, charset)


def _ink_on_baseline(font, ch: str, size: int):
    """Tight ink mask of ``ch`` plus its top and bottom rows relative to the baseline.

    Measured from pixels: layout boxes report the line extent for marks such
    as the apostrophe, not where the ink sits.
    """
    canvas = PILImage.new("L", (3 * size, 3 * size), 0)
    ImageDraw.Draw(canvas).text((size, 2 * size), ch, font=font, fill=255, anchor="ls")
    mask = np.asarray(canvas) >= 128
    ys, xs = np.nonzero(mask)
    if ys.size == 0:
        raise RecognizerError(f"font renders no ink for {ch!r}")
    crop = mask[ys.min():ys.max() + 1, xs.min():xs.max() + 1]
    return crop, int(ys.min()) - 2 * size, int(ys.max()) + 1 - 2 * size


@dataclass
class Glyph:
    x0: int
    x1: int
    y0: int
    y1: int
    bitmap: np.ndarray
    mask: np.ndarray  # own ink, cropped to (y0:y1, x0:x1)

    @property
    def width(self) -> int:
        return self.x1 - self.x0


def _glyph(mask: np.ndarray, x0: int, x1: int) -> Glyph | None:
    sub = mask[:, x0:x1]
    rows = np.nonzero(sub.any(axis=1))[0]
    if len(rows) == 0:
        return None
    y0, y1 = int(rows[0]), int(rows[-1]) + 1
    return Glyph(x0, x1, y0, y1, _grid_bitmap(sub[y0:y1]), sub[y0:y1])


def segment_glyphs(mask: np.ndarray) -> list[Glyph]:
    """Split an ink mask into glyphs, left to right.

    Connected components are the units; components whose column ranges overlap
    by at least half the narrower one are stacked into one glyph (dots, colon).
    Kerned pairs such as "ry" share columns but not pixels, so a plain column
    projection would fuse them.
    """
    if not mask.any():
        return []
    labels, count = ndimage.label(mask, structure=np.ones((3, 3), dtype=int))
    spans = [(sl[1].start, sl[1].stop) for sl in ndimage.find_objects(labels)]
    ds = _DisjointSet(count)
    for i in range(count):
        for j in range(i + 1, count):
            overlap = min(spans[i][1], spans[j][1]) - max(spans[i][0], spans[j][0])
            narrow = min(spans[i][1] - spans[i][0], spans[j][1] - spans[j][0])
            if overlap >= 0.5 * narrow:
                ds.union(i, j)
    glyphs = []
    for group in ds.groups():
        own = np.isin(labels, np.array(group) + 1)
        x0 = min(spans[k][0] for k in group)
        x1 = max(spans[k][1] for k in group)
        glyphs.append(_glyph(own, x0, x1))
    return sorted(glyphs, key=lambda g: (g.x0, g.x1))


def _shift(g: Glyph, dx: int) -> Glyph:
    return Glyph(g.x0 + dx, g.x1 + dx, g.y0, g.y1, g.bitmap, g.mask)


def join_glyphs(a: Glyph, b: Glyph) -> Glyph:
    """One glyph holding the ink of both (for strokes broken by binarisation)."""
    x0, x1 = min(a.x0, b.x0), max(a.x1, b.x1)
    y0, y1 = min(a.y0, b.y0), max(a.y1, b.y1)
    canvas = np.zeros((y1, x1 - x0), dtype=bool)
    for g in (a, b):
        canvas[g.y0:g.y1, g.x0 - x0:g.x1 - x0] |= g.mask
    return _shift(_glyph(canvas, 0, x1 - x0), x0)


def split_candidates(glyph: Glyph, max_cuts: int = 6) -> list[tuple[Glyph, Glyph]]:
    """Two-piece splits of a glyph that may hold touching characters.

    Cuts sit at thin columns (local minima of the ink projection) away from
    the edges; the thinnest ``max_cuts`` are returned.
    """
    w = glyph.width
    if w < 4:
        return []
    proj = glyph.mask.sum(axis=0)
    lo, hi = max(1, int(0.15 * w)), min(w - 1, int(np.ceil(0.85 * w)))
    cuts = [c for c in range(lo, hi)
            if proj[c] <= proj[c - 1] and proj[c] <= proj[min(c + 1, w - 1)]]
    cuts = sorted(cuts, key=lambda c: (proj[c], c))[:max_cuts]
    full = np.zeros((glyph.y1, w), dtype=bool)
    full[glyph.y0:] = glyph.mask
    out = []
    for c in sorted(cuts):
        left, right = _glyph(full, 0, c), _glyph(full, c, w)
        if left is not None and right is not None:
            out.append((_shift(left, glyph.x0), _shift(right, glyph.x0)))
    return out


@dataclass
class _Fit:
    baseline: float
    scale: float   # px per em, vertical
    xscale: float  # px per em, horizontal


def _fit_geometry(tops, bottoms, widths, t_top, t_bottom, t_width, weights) -> _Fit:
    # least squares for y = baseline + scale * y_em over glyph tops and bottoms
    ys = np.concatenate([tops, bottoms])
    es = np.concatenate([t_top, t_bottom])
    wt = np.concatenate([weights, weights])
    a = np.stack([np.ones_like(es), es], axis=1) * wt[:, None]
    sol, *_ = np.linalg.lstsq(a, ys * wt, rcond=None)
    baseline, scale = float(sol[0]), float(sol[1])
    if not scale > 0:
        heights = bottoms - tops
        scale = float(np.median(heights / np.maximum(t_bottom - t_top, 1e-3)))
        baseline = float(np.median(bottoms - scale * t_bottom))
    if len(widths) > 1:
        xscale = float(np.median(widths / np.maximum(t_width, 1e-3)))
    else:
        xscale = scale
    return _Fit(baseline, scale, xscale)


@dataclass
class TemplateRecognizer:
    """Reference recogniser matching segmented glyphs against rendered font templates.

    Glyph shapes are compared as stretched 16x16 bitmaps. Shapes that only
    differ in size or position (``.`` and ``'``, ``o`` and ``0``) are told apart
    by a word-level baseline and scale: each (unit, likely character) pair
    proposes one, the proposal with the cheapest full reading wins and is then
    refined by weighted least squares. A unit may also be read as two touching
    characters, and two close units as one broken character, when that is
    cheaper. Every font is tried and the cheapest
    reading wins. Confidence is the mean bitmap similarity of the chosen glyphs.
    """

    atlas: GlyphAtlas
    geometry_weight: float = 1.0
    width_weight: float = 0.5
    aspect_weight: float = 0.5
    split_penalty: float = 0.15
    join_penalty: float = 0.15
    join_gap: float = 0.05  # largest gap between joinable units, as a fraction of word height
    proposals_per_unit: int = 3
    iterations: int = 2
    single_flight: bool = False

    @classmethod
    def default(cls, charset: Charset = DEFAULT_CHARSET) -> TemplateRecognizer:
        from .synthgen import load_fontset
        return cls(GlyphAtlas.build(load_fontset(), charset))

    def transcribe(self, images):
        return [self.read(img) for img in images]

    def read(self, img: np.ndarray) -> tuple[str, float]:
        imaging.check_image(img)
        units = segment_glyphs(foreground_mask(img))
        if not units:
            return "", 0.0
        pieces = list(units)
        options = []  # per unit, alternative piece tuples; the first is the unit itself
        for i, unit in enumerate(units):
            opts = [(i,)]
            for left, right in split_candidates(unit):
                pieces += [left, right]
                opts.append((len(pieces) - 2, len(pieces) - 1))
            options.append(opts)
        joins = {}  # unit i -> piece joining units i and i + 1
        gap_limit = self.join_gap * max(u.y1 for u in units)
        for i in range(len(units) - 1):
            if units[i + 1].x0 - units[i].x1 <= gap_limit:
                pieces.append(join_glyphs(units[i], units[i + 1]))
                joins[i] = len(pieces) - 1
        plan = (options, joins)
        best = None
        for font in self.atlas.fonts:
            cand = self._decode(pieces, plan, font)
            if best is None or cand[0] < best[0]:
                best = cand
        _, text, conf = best
        return text, conf

    def _costs(self, geom, font, fit: _Fit) -> np.ndarray:
        tops, bottoms, widths, shape = geom
        s = max(fit.scale, 1e-6)
        geo = (np.abs(tops[:, None] - (fit.baseline + s * font.top[None, :]))
               + np.abs(bottoms[:, None] - (fit.baseline + s * font.bottom[None, :]))) / s
        wid = np.abs(widths[:, None] - fit.xscale * font.width[None, :]) / s
        return shape + self.geometry_weight * geo + self.width_weight * wid

    def _select(self, cost: np.ndarray, plan) -> tuple[float, list[int]]:
        """Cheapest reading of the unit sequence: each step takes one unit
        (whole or split in two) or joins two neighbouring units."""
        options, joins = plan
        piece_best = cost.min(axis=1)
        n = len(options)
        best = np.zeros(n + 1)
        back = [((), 0)] * (n + 1)  # (pieces, units consumed)
        for i in range(1, n + 1):
            vals = [piece_best[list(o)].sum() + self.split_penalty * (len(o) - 1) for o in options[i - 1]]
            k = int(np.argmin(vals))
            best[i], back[i] = best[i - 1] + vals[k], (options[i - 1][k], 1)
            j = joins.get(i - 2)
            if j is not None:
                joined = best[i - 2] + piece_best[j] + self.join_penalty
                if joined < best[i]:
                    best[i], back[i] = joined, ((j,), 2)
        chosen, i = [], n
        while i > 0:
            taken, step = back[i]
            chosen[:0] = taken
            i -= step
        return float(best[n]), chosen

    def _decode(self, pieces: list[Glyph], plan, font: FontTemplates):
        q = np.stack([g.bitmap for g in pieces])
        bitmap_cost = np.abs(q[:, None, :] - font.bitmaps[None, :, :]).mean(axis=2)
        tops = np.array([g.y0 for g in pieces], dtype=np.float64)
        bottoms = np.array([g.y1 for g in pieces], dtype=np.float64)
        widths = np.array([g.width for g in pieces], dtype=np.float64)
        t_heights = np.maximum(font.bottom - font.top, 1e-3)
        aspect = np.abs(np.log((widths / (bottoms - tops))[:, None] / (font.width / t_heights)[None, :]))
        shape = bitmap_cost + self.aspect_weight * aspect
        geom = (tops, bottoms, widths, shape)

        best = None
        for i in range(len(plan[0])):
            for c in np.argsort(shape[i], kind="stable")[:self.proposals_per_unit]:
                scale = (bottoms[i] - tops[i]) / t_heights[c]
                fit = _Fit(bottoms[i] - scale * font.bottom[c], scale, scale)
                cost = self._costs(geom, font, fit)
                total, chosen = self._select(cost, plan)
                if best is None or total < best[0]:
                    best = (total, chosen, cost)
        total, chosen, cost = best
        for _ in range(self.iterations if len(chosen) > 1 else 0):
            idx = np.array(chosen)
            choice = cost[idx].argmin(axis=1)
            resid = cost[idx, choice] - shape[idx, choice]
            weights = 1.0 / (1.0 + (resid / 0.1) ** 2)
            fit = _fit_geometry(tops[idx], bottoms[idx], widths[idx], font.top[choice],
                                font.bottom[choice], font.width[choice], weights)
            new_cost = self._costs(geom, font, fit)
            new_total, new_chosen = self._select(new_cost, plan)
            if new_total >= total:
                break
            total, chosen, cost = new_total, new_chosen, new_cost
        idx = np.array(chosen)
        choice = cost[idx].argmin(axis=1)
        text = "".join(font.chars[c] for c in choice)
        conf = float(np.clip(1.0 - bitmap_cost[idx, choice], 0.0, 1.0).mean())
        return total, text, conf


def template_recognize(word: WordImage, atlas: GlyphAtlas) -> Recognition:
    """Read one word with the template backend; blank input gives ("", 0)."""
    return recognize(word, TemplateRecognizer(atlas), atlas.charset)


# -- external backend ---------------------------------------------------------

@dataclass
class ExternalRecognizer:
    """Subprocess adapter: crop PNG paths on stdin, one ``{"text", "confidence"}`` JSON line back per path."""

    command: list[str] | str
    timeout: float | None = 300.0
    single_flight: bool = False

    def transcribe(self, images):
        if not images:
            return []
        argv = shlex.split(self.command) if isinstance(self.command, str) else list(self.command)
        with tempfile.TemporaryDirectory(prefix="overlayx-rec-") as tmp:
            paths = []
            for i, img in enumerate(images):
                p = Path(tmp) / f"word_{i:05d}.png"
                imaging.save_image(p, img)
                paths.append(str(p))
            try:
                proc = subprocess.run(argv, input="\n".join(paths) + "\n", capture_output=True,
                                      text=True, timeout=self.timeout)
            except (OSError, subprocess.TimeoutExpired) as exc:
                raise RecognizerError(f"recogniser adapter failed to run: {exc}") from exc
        if proc.returncode != 0:
            raise RecognizerError(f"recogniser adapter exited with {proc.returncode}: {proc.stderr[-500:]}")
        lines = [ln for ln in proc.stdout.splitlines() if ln.strip()]
        if len(lines) != len(images):
            raise RecognizerError(f"recogniser adapter answered {len(lines)} lines for {len(images)} crops")
        out = []
        for ln in lines:
            try:
                rec = json.loads(ln)
                out.append((str(rec.get("text", "")), rec.get("confidence")))
            except (ValueError, AttributeError) as exc:
                raise RecognizerError(f"bad recogniser output line {ln!r}") from exc
        return out
