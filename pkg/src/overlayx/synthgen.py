"""Synthetic word images for recogniser training, and full-frame test fixtures.

A sample is fully described by a :class:`SampleSpec`; every random choice is
drawn from a per-sample generator derived from the master seed and the sample
index, so serial and parallel generation produce the same bytes.
"""
from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
from PIL import Image as PILImage, ImageDraw, ImageFont

from . import imaging
from .charset import DEFAULT_CHARSET, Charset
from .evaluation import MIN_LABEL_CHARS, GroundTruthBox, dump_ground_truth

log = logging.getLogger(__name__)

FONT_DIR = Path(__file__).parent / "assets" / "fonts"
FONT_EXTENSIONS = (".ttf", ".otf")
SAMPLE_W, SAMPLE_H = 100, 32
FONT_SIZE_RANGE = (18, 42)
MIN_LUMA_CONTRAST = 40
MARGIN = 0.10
MAX_RETRIES = 20


class AssetError(RuntimeError):
    pass


class WordListError(ValueError):
    pass


@dataclass(frozen=True)
class FontEntry:
    family: str
    path: str


@dataclass
class Assets:
    fonts: list[FontEntry]
    backgrounds: list[np.ndarray]

    def __post_init__(self):
        if not self.fonts:
            raise AssetError("font set is empty")
        if not self.backgrounds:
            raise AssetError("background pool is empty")
        for f in self.fonts:
            try:
                load_font(f.path, 20)
            except OSError as exc:
                raise AssetError(f"cannot load font {f.path}: {exc}") from exc
        for i, bg in enumerate(self.backgrounds):
            imaging.check_image(bg, channels=3)


@dataclass(frozen=True)
class SampleSpec:
    word: str
    font_id: int
    size: int
    color: tuple[int, int, int]
    background_id: int
    crop_offset: tuple[int, int]
    seed: int


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    label: str
    spec: SampleSpec

    def to_json(self) -> str:
        return json.dumps({"path": self.path, "label": self.label, "spec": asdict(self.spec)})


# -- assets -----------------------------------------------------------------

def load_fontset(font_dir=FONT_DIR) -> list[FontEntry]:
    paths = sorted(p for p in Path(font_dir).iterdir() if p.suffix.lower() in FONT_EXTENSIONS)
    if not paths:
        raise AssetError(f"no fonts found in {font_dir}")
    return [FontEntry(p.stem, str(p)) for p in paths]


@lru_cache(maxsize=512)
def load_font(path: str, size: int) -> ImageFont.FreeTypeFont:
    # basic layout: no ligatures, so one character is one glyph
    return ImageFont.truetype(path, size, layout_engine=ImageFont.Layout.BASIC)


def load_backgrounds(bg_dir) -> list[np.ndarray]:
    paths = sorted(p for p in Path(bg_dir).iterdir()
                   if p.suffix.lower() in (".png", ".jpg", ".jpeg", ".bmp"))
    out = []
    for p in paths:
        try:
            out.append(imaging.load_image(p))
        except OSError as exc:
            raise AssetError(f"cannot load background {p}: {exc}") from exc
    if not out:
        raise AssetError(f"no background images in {bg_dir}")
    return out


def procedural_backgrounds(n: int = 12, width: int = 960, height: int = 200, seed: int = 0,
                           solid_only: bool = False) -> list[np.ndarray]:
    """Stand-in background pool: solid fills, gradients, noise and blurred blobs."""
    rng = np.random.default_rng(seed)
    kinds = ["solid"] if solid_only else ["solid", "gradient", "noise", "blobs"]
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    out = []
    for i in range(n):
        kind = kinds[i % len(kinds)]
        c0 = rng.integers(0, 256, 3).astype(np.float64)
        if kind == "solid":
            img = np.broadcast_to(c0, (height, width, 3)).copy()
        elif kind == "gradient":
            c1 = rng.integers(0, 256, 3).astype(np.float64)
            angle = rng.uniform(0, np.pi)
            t = xx * np.cos(angle) + yy * np.sin(angle)
            t = (t - t.min()) / max(t.max() - t.min(), 1e-9)
            img = c0 * (1 - t[..., None]) + c1 * t[..., None]
        elif kind == "noise":
            img = c0 + rng.normal(0, rng.uniform(5, 30), (height, width, 3))
        else:
            coarse = rng.uniform(0, 255, (height // 25 + 2, width // 25 + 2, 3)).astype(np.uint8)
            smooth = np.asarray(PILImage.fromarray(coarse).resize((width, height), PILImage.BICUBIC),
                                dtype=np.float64)
            img = 0.6 * smooth + 0.4 * c0
        out.append(np.clip(np.rint(img), 0, 255).astype(np.uint8))
    return out


def default_assets(seed: int = 0, solid_only: bool = False) -> Assets:
    return Assets(load_fontset(), procedural_backgrounds(seed=seed, solid_only=solid_only))


# -- word list ----------------------------------------------------------------

def wordlist_from_texts(texts, charset: Charset = DEFAULT_CHARSET,
                        min_chars: int = MIN_LABEL_CHARS) -> list[str]:
    """Unique words from free text, followed by the digit and special-character tokens."""
    words = set()
    for text in texts:
        for tok in text.split():
            tok = charset.restrict(tok)
            if len(tok) >= min_chars:
                words.add(tok)
    if not words:
        raise WordListError("no usable words in the inputs")
    extras = [c for c in charset.digits + charset.specials if c not in words]
    return sorted(words) + extras


def build_wordlist(transcripts, freq_list=None, charset: Charset = DEFAULT_CHARSET) -> list[str]:
    """Word list from transcript files plus an optional frequency-list file."""
    paths = [Path(p) for p in transcripts]
    if freq_list is not None:
        paths.append(Path(freq_list))
    return wordlist_from_texts((p.read_text(encoding="utf-8") for p in paths), charset)


# -- rendering ----------------------------------------------------------------

def render_text_mask(word: str, font_path: str, size: int) -> np.ndarray:
    """Anti-aliased coverage mask of ``word``, cropped tight to its ink."""
    font = load_font(font_path, size)
    left, top, right, bottom = font.getbbox(word)
    pad = 2
    canvas = PILImage.new("L", (right - left + 2 * pad, bottom - top + 2 * pad), 0)
    ImageDraw.Draw(canvas).text((pad - left, pad - top), word, font=font, fill=255)
    mask = np.asarray(canvas, dtype=np.uint8)
    ys, xs = np.nonzero(mask)
    if ys.size == 0:
        raise AssetError(f"font {font_path} renders no ink for {word!r}")
    return mask[ys.min():ys.max() + 1, xs.min():xs.max() + 1]


def composite(background: np.ndarray, mask: np.ndarray, color, x: int = 0, y: int = 0) -> np.ndarray:
    out = background.astype(np.float64)
    h, w = mask.shape
    alpha = mask.astype(np.float64)[..., None] / 255.0
    region = out[y:y + h, x:x + w]
    out[y:y + h, x:x + w] = region * (1 - alpha) + np.asarray(color, np.float64) * alpha
    return np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8)


def _luma(rgb) -> float:
    r, g, b = rgb
    return 0.299 * r + 0.587 * g + 0.114 * b


def _crop_size(mask: np.ndarray) -> tuple[int, int]:
    h, w = mask.shape
    return w + 2 * math.ceil(MARGIN * w), h + 2 * math.ceil(MARGIN * h)


def sample_spec(word: str, assets: Assets, seed: int) -> SampleSpec:
    """Draw font, size, colour, background and crop offset for one sample."""
    rng = np.random.default_rng(seed)
    for _ in range(MAX_RETRIES):
        font_id = int(rng.integers(len(assets.fonts)))
        size = int(rng.integers(FONT_SIZE_RANGE[0], FONT_SIZE_RANGE[1] + 1))
        cw, ch = _crop_size(render_text_mask(word, assets.fonts[font_id].path, size))
        bg_id = int(rng.integers(len(assets.backgrounds)))
        bh, bw = assets.backgrounds[bg_id].shape[:2]
        if cw > bw or ch > bh:
            continue
        ox, oy = int(rng.integers(bw - cw + 1)), int(rng.integers(bh - ch + 1))
        bg_luma = float(imaging.to_grayscale(assets.backgrounds[bg_id][oy:oy + ch, ox:ox + cw]).mean())
        color = None
        for _ in range(100):
            cand = tuple(int(v) for v in rng.integers(0, 256, 3))
            if abs(_luma(cand) - bg_luma) >= MIN_LUMA_CONTRAST:
                color = cand
                break
        if color is None:
            color = (0, 0, 0) if bg_luma > 127 else (255, 255, 255)
        return SampleSpec(word, font_id, size, color, bg_id, (ox, oy), seed)
    raise AssetError(f"no background large enough for {word!r} after {MAX_RETRIES} attempts")


def render_word(spec: SampleSpec, assets: Assets) -> np.ndarray:
    """The un-resized sample: background crop with the word composited in its margin box."""
    mask = render_text_mask(spec.word, assets.fonts[spec.font_id].path, spec.size)
    cw, ch = _crop_size(mask)
    ox, oy = spec.crop_offset
    bg = assets.backgrounds[spec.background_id]
    if ox + cw > bg.shape[1] or oy + ch > bg.shape[0]:
        raise AssetError(f"crop of {cw}x{ch} at {spec.crop_offset} exceeds background {spec.background_id}")
    region = bg[oy:oy + ch, ox:ox + cw]
    mx, my = (cw - mask.shape[1]) // 2, (ch - mask.shape[0]) // 2
    return composite(region, mask, spec.color, mx, my)


def render_sample(spec: SampleSpec, assets: Assets) -> tuple[np.ndarray, str]:
    img = render_word(spec, assets)
    return imaging.resize_antialias(img, SAMPLE_W, SAMPLE_H), spec.word


def sample_seed(master_seed: int, index: int) -> int:
    ss = np.random.SeedSequence([master_seed, index])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def generate_dataset(words, assets: Assets, out_dir, samples_per_word: int = 100, seed: int = 0,
                     workers: int = 1, quality: int = imaging.JPEG_QUALITY) -> list[ManifestEntry]:
    """Render ``samples_per_word`` JPEGs per word into ``out_dir`` with a ``manifest.jsonl``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    jobs = [(wi, k, word) for wi, word in enumerate(words) for k in range(samples_per_word)]

    def run(job):
        wi, k, word = job
        index = wi * samples_per_word + k
        spec = sample_spec(word, assets, sample_seed(seed, index))
        img, label = render_sample(spec, assets)
        name = f"{wi:06d}_{k:04d}.jpg"
        (out_dir / name).write_bytes(imaging.encode_image(img, "JPEG", quality))
        return ManifestEntry(name, label, spec)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            entries = list(pool.map(run, jobs))
    else:
        entries = [run(j) for j in jobs]
    with open(out_dir / "manifest.jsonl", "w", encoding="utf-8") as fh:
        for e in entries:
            fh.write(e.to_json() + "\n")
    return entries


def read_manifest(path) -> list[ManifestEntry]:
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            rec = json.loads(line)
            spec = rec["spec"]
            spec["color"] = tuple(spec["color"])
            spec["crop_offset"] = tuple(spec["crop_offset"])
            out.append(ManifestEntry(rec["path"], rec["label"], SampleSpec(**spec)))
    return out


# -- frame fixtures -----------------------------------------------------------

@dataclass
class FrameStyle:
    width: int = 640
    height: int = 360
    font_id: int = 0
    size: int = 44
    background: tuple[int, int, int] = (24, 28, 40)
    color: tuple[int, int, int] = (245, 245, 235)


def random_style(assets: Assets, seed: int, **overrides) -> FrameStyle:
    """Clean high-contrast style: solid background, random font and polarity."""
    rng = np.random.default_rng(seed)
    dark = tuple(int(v) for v in rng.integers(0, 70, 3))
    light = tuple(int(v) for v in rng.integers(190, 256, 3))
    bg, fg = (dark, light) if rng.random() < 0.5 else (light, dark)
    style = FrameStyle(font_id=int(rng.integers(len(assets.fonts))), background=bg, color=fg)
    for k, v in overrides.items():
        setattr(style, k, v)
    return style


def generate_frame_fixture(layout, assets: Assets, seed: int = 0,
                           style: FrameStyle | None = None) -> tuple[np.ndarray, list[GroundTruthBox]]:
    """Render ``(word, (x, y))`` pairs onto a solid frame.

    ``(x, y)`` is the top-left corner of the word's ink. Returned boxes are the
    exact ink extents. Overlapping or out-of-frame words raise ``ValueError``.
    """
    style = style or random_style(assets, seed)
    frame = np.empty((style.height, style.width, 3), np.uint8)
    frame[...] = style.background
    font = assets.fonts[style.font_id]
    boxes: list[GroundTruthBox] = []
    for word, (x, y) in layout:
        mask = render_text_mask(word, font.path, style.size)
        h, w = mask.shape
        box = GroundTruthBox(int(x), int(y), w, h, word)
        if x < 0 or y < 0 or x + w > style.width or y + h > style.height:
            raise ValueError(f"word {word!r} at {(x, y)} does not fit the frame")
        for other in boxes:
            if x < other.x + other.w and other.x < x + w and y < other.y + other.h and other.y < y + h:
                raise ValueError(f"word {word!r} overlaps {other.text!r}")
        frame = composite(frame, mask, style.color, x, y)
        boxes.append(box)
    return frame, boxes


def word_extent(word: str, assets: Assets, style: FrameStyle) -> tuple[int, int]:
    h, w = render_text_mask(word, assets.fonts[style.font_id].path, style.size).shape
    return w, h


def flow_layout(words, assets: Assets, style: FrameStyle, gap_factor: float = 2.0,
                margin: int = 16, line_gap_factor: float = 1.5) -> list[tuple[str, tuple[int, int]]]:
    """Place words left to right, wrapping lines, with gaps of ``gap_factor`` x text height."""
    extents = [word_extent(w, assets, style) for w in words]
    line_h = max((h for _, h in extents), default=0)
    gap = int(math.ceil(gap_factor * line_h))
    x, y = margin, margin
    layout = []
    for word, (w, h) in zip(words, extents):
        if x > margin and x + w > style.width - margin:
            x = margin
            y += int(math.ceil(line_h * (1 + line_gap_factor)))
        if y + h > style.height - margin or x + w > style.width - margin:
            raise ValueError(f"layout of {len(words)} words does not fit a {style.width}x{style.height} frame")
        layout.append((word, (x, y)))
        x += w + gap
    return layout


def generate_frame_set(words, n_frames: int, assets: Assets, out_dir=None, seed: int = 0,
                       words_per_frame: int = 5, min_chars: int = MIN_LABEL_CHARS, **style_overrides):
    """Clean frames of flowed words with their ground truth.

    Each frame draws ``words_per_frame`` words and a style from its own seed.
    With ``out_dir`` the frames go to ``out_dir/frames/frame_NNNN.png`` and the
    truth to ``out_dir/ground_truth.jsonl``. Returns ``(frames, {frame_index: boxes})``.
    Words shorter than ``min_chars`` are left out, as in the labelled data.
    """
    words = [w for w in words if len(w) >= min_chars]
    if not words:
        raise WordListError(f"no words of at least {min_chars} characters")
    frames, truth = [], {}
    for i in range(n_frames):
        fseed = sample_seed(seed, i)
        rng = np.random.default_rng(fseed)
        picked = [words[int(k)] for k in rng.integers(len(words), size=words_per_frame)]
        style = random_style(assets, fseed, **style_overrides)
        frame, boxes = generate_frame_fixture(flow_layout(picked, assets, style), assets, style=style)
        frames.append(frame)
        truth[i] = boxes
    if out_dir is not None:
        out = Path(out_dir)
        (out / "frames").mkdir(parents=True, exist_ok=True)
        for i, frame in enumerate(frames):
            imaging.save_image(out / "frames" / f"frame_{i:04d}.png", frame)
        dump_ground_truth(out / "ground_truth.jsonl", truth)
    return frames, truth
