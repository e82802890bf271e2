"""Keyframe sources: I-frames via an external codec tool, or an image directory."""
from __future__ import annotations

import enum
import logging
import os
import shlex
import shutil
import subprocess
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import imaging

log = logging.getLogger(__name__)

FFMPEG_ENV = "OVERLAYX_FFMPEG"
TIMESTAMP_FILE = "timestamps.txt"

# Argument template for the codec tool. {input} and {outdir} are substituted.
# The select filter keeps intra-coded frames only; passthrough keeps one output
# per selected frame; the mkvtimestamp_v2 muxer writes one presentation time
# in milliseconds per line for the same frames.
IFRAME_ARGS = (
    "-hide_banner", "-loglevel", "error", "-nostdin", "-y",
    "-i", "{input}",
    "-filter_complex", r"[0:v]select='eq(pict_type\,I)',split[a][b]",
    "-map", "[a]", "-fps_mode", "passthrough", "{outdir}/%06d.png",
    "-map", "[b]", "-fps_mode", "passthrough", "-c:v", "rawvideo",
    "-f", "mkvtimestamp_v2", "{outdir}/" + TIMESTAMP_FILE,
)


class CodecUnavailableError(RuntimeError):
    """The external codec tool could not be found."""


class CodecError(RuntimeError):
    """The codec tool ran but failed; carries a stderr excerpt."""


@dataclass(frozen=True)
class KeyFrame:
    image: np.ndarray
    timestamp: float
    index: int


class SourceKind(str, enum.Enum):
    VIDEO = "video"
    IMAGE_DIR = "dir"


@dataclass(frozen=True)
class FrameSource:
    kind: SourceKind
    path: Path

    @classmethod
    def infer(cls, path) -> FrameSource:
        p = Path(path)
        if not p.exists():
            raise FileNotFoundError(f"frame source {p} does not exist")
        return cls(SourceKind.IMAGE_DIR if p.is_dir() else SourceKind.VIDEO, p)


def codec_command() -> list[str]:
    return shlex.split(os.environ.get(FFMPEG_ENV, "ffmpeg"))


def iframe_argv(video, outdir, command: list[str] | None = None) -> list[str]:
    command = codec_command() if command is None else list(command)
    return command + [a.format(input=str(video), outdir=str(outdir)) for a in IFRAME_ARGS]


def _read_timestamps(path: Path) -> list[float]:
    if not path.exists():
        return []
    out = []
    for line in path.read_text().splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            out.append(float(line) / 1000.0)
    return out


def extract_iframes(video, command: list[str] | None = None) -> list[KeyFrame]:
    """Decode the I-frames of ``video`` in presentation order.

    Timestamps are the container's presentation times in seconds (negative
    edit-list offsets clamp to 0). A zero-byte file yields no frames.
    """
    video = Path(video)
    if not video.exists():
        raise FileNotFoundError(f"video {video} does not exist")
    if video.stat().st_size == 0:
        return []
    command = codec_command() if command is None else list(command)
    if not command or shutil.which(command[0]) is None:
        tool = command[0] if command else ""
        raise CodecUnavailableError(f"codec tool {tool!r} not found; install ffmpeg or set {FFMPEG_ENV}")
    with tempfile.TemporaryDirectory(prefix="overlayx-iframes-") as tmp:
        argv = iframe_argv(video, tmp, command)
        try:
            proc = subprocess.run(argv, capture_output=True, text=True)
        except OSError as exc:
            raise CodecUnavailableError(f"cannot run {argv[0]!r}: {exc}") from exc
        pngs = sorted(Path(tmp).glob("*.png"))
        if proc.returncode != 0:
            raise CodecError(f"{argv[0]} exited with {proc.returncode}: {proc.stderr.strip()[-500:]}")
        stamps = _read_timestamps(Path(tmp) / TIMESTAMP_FILE)
        if len(stamps) != len(pngs):
            raise CodecError(f"{len(pngs)} frames but {len(stamps)} timestamps from {argv[0]}")
        frames = [KeyFrame(imaging.load_image(p), max(0.0, t), i)
                  for i, (p, t) in enumerate(zip(pngs, stamps))]
    return frames


def frames_from_dir(path, fps_hint: float = 1.0, skipped: list | None = None) -> list[KeyFrame]:
    """Images of a directory in lexicographic filename order, timestamp = index / fps_hint.

    Files that fail to decode are skipped with a warning and appended to
    ``skipped`` when given. Indices stay contiguous over the kept frames.
    """
    if fps_hint <= 0:
        raise ValueError(f"fps_hint must be positive, got {fps_hint}")
    root = Path(path)
    if not root.is_dir():
        raise FileNotFoundError(f"image directory {root} does not exist")
    frames = []
    for p in sorted(q for q in root.iterdir() if q.is_file()):
        try:
            img = imaging.load_image(p)
        except Exception as exc:  # PIL raises several types for bad files
            log.warning("skipping undecodable frame %s: %s", p.name, exc)
            if skipped is not None:
                skipped.append(str(p))
            continue
        idx = len(frames)
        frames.append(KeyFrame(img, idx / fps_hint, idx))
    return frames


def load_frames(source: FrameSource, fps_hint: float = 1.0, skipped: list | None = None) -> list[KeyFrame]:
    if source.kind is SourceKind.IMAGE_DIR:
        return frames_from_dir(source.path, fps_hint, skipped)
    return extract_iframes(source.path)
