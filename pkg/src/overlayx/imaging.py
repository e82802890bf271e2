"""Raster primitives and the grayscale preprocessing variants.

Images are plain ``numpy.uint8`` arrays: ``(H, W)`` for grayscale and
``(H, W, 3)`` for RGB. Every function here is pure and returns a new array.
"""
from __future__ import annotations

import enum
import io
from functools import lru_cache
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

GAUSS_SIGMA = 1.1
JPEG_QUALITY = 90


class ImageError(ValueError):
    """Raised when an array does not satisfy the shape/dtype contract of an op."""


class PreprocessMethod(str, enum.Enum):
    NONE = "none"
    OTSU = "otsu"
    BLUR_OTSU = "blur_otsu"
    BLUR_OTSU_OPEN = "blur_otsu_open"
    MAX_RGB = "max_rgb"


def check_image(img, channels=None) -> np.ndarray:
    if not isinstance(img, np.ndarray) or img.dtype != np.uint8:
        raise ImageError("image must be a uint8 numpy array")
    if img.ndim == 2:
        ch = 1
    elif img.ndim == 3 and img.shape[2] == 3:
        ch = 3
    else:
        raise ImageError(f"unsupported image shape {img.shape}")
    if img.shape[0] < 1 or img.shape[1] < 1:
        raise ImageError("image must have at least one pixel")
    if channels is not None and ch != channels:
        raise ImageError(f"expected a {channels}-channel image, got {ch} channels")
    return img


def n_channels(img: np.ndarray) -> int:
    return 1 if img.ndim == 2 else img.shape[2]


def round_half_up(x: np.ndarray) -> np.ndarray:
    return np.clip(np.floor(x + 0.5), 0, 255).astype(np.uint8)


def to_grayscale(img: np.ndarray) -> np.ndarray:
    """BT.601 luma, rounded half up. Rejects images that are already grayscale."""
    check_image(img, channels=3)
    rgb = img.astype(np.int64)
    # integer arithmetic keeps the .5 cases exact
    luma = 299 * rgb[..., 0] + 587 * rgb[..., 1] + 114 * rgb[..., 2]
    return ((luma + 500) // 1000).astype(np.uint8)


def max_rgb_filter(img: np.ndarray) -> np.ndarray:
    check_image(img, channels=3)
    return img.max(axis=2)


def otsu_threshold(img: np.ndarray) -> int:
    """Global threshold maximising between-class variance of {p <= t} vs {p > t}.

    Ties resolve to the smallest t. A constant image returns its own value.
    Comparisons are exact: with N pixels, S the total intensity and n0/S0 the
    count/sum of the lower class, N^2 times the between-class variance equals
    (N*S0 - S*n0)^2 / (n0*n1), compared by cross-multiplication.
    """
    check_image(img, channels=1)
    hist = np.bincount(img.ravel(), minlength=256).tolist()
    n = int(img.size)
    total = sum(v * c for v, c in enumerate(hist))
    lo, hi = int(img.min()), int(img.max())
    if lo == hi:
        return lo
    best_t, best_num, best_den = 0, 0, 1
    n0 = s0 = 0
    for t in range(255):
        c = hist[t]
        n0 += c
        s0 += c * t
        n1 = n - n0
        if n0 == 0 or n1 == 0:
            continue
        num = (n * s0 - total * n0) ** 2
        den = n0 * n1
        if num * best_den > best_num * den:
            best_t, best_num, best_den = t, num, den
    return best_t


def binarize(img: np.ndarray, t: int) -> np.ndarray:
    check_image(img, channels=1)
    return np.where(img > t, 255, 0).astype(np.uint8)


def gaussian_kernel_5x5(sigma: float = GAUSS_SIGMA) -> np.ndarray:
    """Normalised 5x5 kernel. For sigma=1.1 the 1-D taps are roughly
    [0.0708, 0.2445, 0.3695, 0.2445, 0.0708]."""
    x = np.arange(-2, 3, dtype=np.float64)
    g = np.exp(-(x ** 2) / (2.0 * sigma ** 2))
    g /= g.sum()
    return np.outer(g, g)


def _windows(img: np.ndarray, radius: int):
    """Yield (dy, dx, shifted view) over a (2r+1)^2 window with edge replication."""
    h, w = img.shape
    padded = np.pad(img, radius, mode="edge")
    size = 2 * radius + 1
    for dy in range(size):
        for dx in range(size):
            yield dy, dx, padded[dy:dy + h, dx:dx + w]


def gaussian_blur_5x5(img: np.ndarray, sigma: float = GAUSS_SIGMA) -> np.ndarray:
    check_image(img, channels=1)
    kernel = gaussian_kernel_5x5(sigma)
    acc = np.zeros(img.shape, dtype=np.float64)
    for dy, dx, view in _windows(img, 2):
        acc += kernel[dy, dx] * view
    return round_half_up(acc)


def _check_binary(img: np.ndarray):
    check_image(img, channels=1)
    if np.any((img != 0) & (img != 255)):
        raise ImageError("morphology expects a binary image with values in {0, 255}")


def erode_3x3(img: np.ndarray) -> np.ndarray:
    _check_binary(img)
    out = img.copy()
    for _, _, view in _windows(img, 1):
        np.minimum(out, view, out=out)
    return out


def dilate_3x3(img: np.ndarray) -> np.ndarray:
    _check_binary(img)
    out = img.copy()
    for _, _, view in _windows(img, 1):
        np.maximum(out, view, out=out)
    return out


def morphological_open(img: np.ndarray) -> np.ndarray:
    """Erosion then dilation with a 3x3 square structuring element."""
    return dilate_3x3(erode_3x3(img))


def _otsu_binarize(gray: np.ndarray) -> np.ndarray:
    return binarize(gray, otsu_threshold(gray))


def preprocess(img: np.ndarray, method: PreprocessMethod | str) -> np.ndarray:
    """Collapse ``img`` to one channel with one of the five preprocessing variants.

    Grayscale input skips the colour-collapse step, which makes ``NONE`` and
    ``MAX_RGB`` idempotent.
    """
    method = PreprocessMethod(method)
    check_image(img)
    if method is PreprocessMethod.MAX_RGB:
        return img.copy() if img.ndim == 2 else max_rgb_filter(img)
    gray = img.copy() if img.ndim == 2 else to_grayscale(img)
    if method is PreprocessMethod.NONE:
        return gray
    if method is PreprocessMethod.OTSU:
        return _otsu_binarize(gray)
    blurred = _otsu_binarize(gaussian_blur_5x5(gray))
    if method is PreprocessMethod.BLUR_OTSU:
        return blurred
    return morphological_open(blurred)


@lru_cache(maxsize=256)
def _axis_weights(src: int, dst: int) -> np.ndarray:
    """(dst, src) resampling matrix: box-area coverage when shrinking, bilinear when growing."""
    if src == dst:
        return np.eye(dst)
    weights = np.zeros((dst, src))
    if dst < src:
        scale = src / dst
        for i in range(dst):
            lo, hi = i * scale, (i + 1) * scale
            for k in range(int(np.floor(lo)), min(int(np.ceil(hi)), src)):
                overlap = min(hi, k + 1) - max(lo, k)
                if overlap > 0:
                    weights[i, k] = overlap / scale
    else:
        for i in range(dst):
            x = min(max((i + 0.5) * src / dst - 0.5, 0.0), src - 1.0)
            x0 = int(np.floor(x))
            x1 = min(x0 + 1, src - 1)
            frac = x - x0
            weights[i, x0] += 1.0 - frac
            weights[i, x1] += frac
    weights.flags.writeable = False
    return weights


def resize_antialias(img: np.ndarray, new_w: int, new_h: int) -> np.ndarray:
    check_image(img)
    if new_w < 1 or new_h < 1:
        raise ImageError(f"target size must be positive, got {new_w}x{new_h}")
    h, w = img.shape[:2]
    wy = _axis_weights(h, new_h)
    wx = _axis_weights(w, new_w)
    data = img.astype(np.float64)
    if img.ndim == 2:
        out = wy @ data @ wx.T
    else:
        out = np.tensordot(wy, data, axes=(1, 0))
        out = np.einsum("ilc,lk->ikc", out, wx.T)
    return round_half_up(out)


def crop(img: np.ndarray, x: int, y: int, w: int, h: int) -> np.ndarray:
    check_image(img)
    if x < 0 or y < 0 or w < 1 or h < 1 or x + w > img.shape[1] or y + h > img.shape[0]:
        raise ImageError(f"crop ({x},{y},{w},{h}) outside image of shape {img.shape}")
    return img[y:y + h, x:x + w].copy()


def load_image(path, mode: str = "RGB") -> np.ndarray:
    with PILImage.open(path) as im:
        return np.asarray(im.convert(mode), dtype=np.uint8).copy()


def _format_for(path) -> str:
    suffix = Path(path).suffix.lower()
    return "JPEG" if suffix in (".jpg", ".jpeg") else "PNG"


def encode_image(img: np.ndarray, fmt: str = "PNG", quality: int = JPEG_QUALITY) -> bytes:
    check_image(img)
    buf = io.BytesIO()
    pil = PILImage.fromarray(img)
    if fmt.upper() in ("JPEG", "JPG"):
        pil.save(buf, format="JPEG", quality=quality)
    else:
        pil.save(buf, format="PNG")
    return buf.getvalue()


def save_image(path, img: np.ndarray, quality: int = JPEG_QUALITY) -> None:
    Path(path).write_bytes(encode_image(img, _format_for(path), quality))
