"""End-to-end orchestration: frames, preprocess, detect, recognise, merge, autocorrect."""
from __future__ import annotations

import hashlib
import json
import logging
import os
import shlex
import shutil
import threading
import time
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from contextlib import nullcontext
from dataclasses import asdict, dataclass, field, fields, replace
from functools import lru_cache
from pathlib import Path

import numpy as np

from . import __version__, detection, evaluation, frames, imaging, merge, recognition

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    pass


class StageError(RuntimeError):
    def __init__(self, stage: str, frame_index: int | None, cause: BaseException):
        where = f" on frame {frame_index}" if frame_index is not None else ""
        super().__init__(f"{stage} failed{where}: {cause}")
        self.stage = stage
        self.frame_index = frame_index


@dataclass(frozen=True)
class BackendSpec:
    """``builtin`` (detector), ``template`` (recogniser) or ``external`` with a command."""

    kind: str
    command: tuple[str, ...] = ()

    @classmethod
    def parse(cls, value) -> BackendSpec:
        if isinstance(value, BackendSpec):
            return value
        if isinstance(value, dict):
            cmd = value.get("command", ())
            cmd = shlex.split(cmd) if isinstance(cmd, str) else cmd
            return cls(str(value.get("kind", "")), tuple(cmd))
        text = str(value)
        if text.startswith("external:"):
            return cls("external", tuple(shlex.split(text[len("external:"):])))
        return cls(text)

    def to_json(self):
        return {"kind": self.kind, "command": list(self.command)} if self.command else {"kind": self.kind}


@dataclass(frozen=True)
class PipelineConfig:
    source: str
    preprocess: imaging.PreprocessMethod = imaging.PreprocessMethod.OTSU
    detector: BackendSpec = BackendSpec("builtin")
    recognizer: BackendSpec = BackendSpec("template")
    merge_threshold: float = merge.DEFAULT_MERGE_THRESHOLD
    nms_iou: float = detection.DEFAULT_IOU_THRESHOLD
    min_box_height: int = detection.MIN_BOX_HEIGHT
    dictionary: str | None = None
    autocorrect_distance: int = 1
    fps_hint: float = 1.0
    output: str | None = None
    report: str | None = None
    workers: int | None = None  # None means one per logical CPU

    # settings that change where output goes or how fast, never what it says
    NON_SEMANTIC = ("output", "report", "workers")

    def __post_init__(self):
        object.__setattr__(self, "preprocess", imaging.PreprocessMethod(self.preprocess))
        object.__setattr__(self, "detector", BackendSpec.parse(self.detector))
        object.__setattr__(self, "recognizer", BackendSpec.parse(self.recognizer))

    def validate(self) -> PipelineConfig:
        if not Path(self.source).exists():
            raise ConfigError(f"source {self.source} does not exist")
        if not 0.0 < self.merge_threshold <= 1.0:
            raise ConfigError(f"merge_threshold must lie in (0, 1], got {self.merge_threshold}")
        if not 0.0 < self.nms_iou <= 1.0:
            raise ConfigError(f"nms_iou must lie in (0, 1], got {self.nms_iou}")
        if self.fps_hint <= 0:
            raise ConfigError(f"fps_hint must be positive, got {self.fps_hint}")
        if self.workers is not None and self.workers < 1:
            raise ConfigError(f"workers must be at least 1, got {self.workers}")
        if self.dictionary is not None and not Path(self.dictionary).is_file():
            raise ConfigError(f"dictionary {self.dictionary} not found")
        _check_backend(self.detector, "builtin", "detector")
        _check_backend(self.recognizer, "template", "recognizer")
        return self

    def to_json(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, BackendSpec):
                v = v.to_json()
            elif isinstance(v, imaging.PreprocessMethod):
                v = v.value
            out[f.name] = v
        return out

    def digest(self) -> str:
        semantic = {k: v for k, v in self.to_json().items() if k not in self.NON_SEMANTIC}
        return hashlib.sha256(json.dumps(semantic, sort_keys=True).encode()).hexdigest()

    @classmethod
    def from_dict(cls, data: dict) -> PipelineConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "source" not in data:
            raise ConfigError("config needs a 'source'")
        try:
            return cls(**data)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc


def _check_backend(spec: BackendSpec, builtin: str, role: str) -> None:
    if spec.kind == builtin:
        return
    if spec.kind != "external":
        raise ConfigError(f"unknown {role} backend {spec.kind!r} (use {builtin!r} or 'external')")
    if not spec.command:
        raise ConfigError(f"external {role} needs a command")
    if shutil.which(spec.command[0]) is None:
        raise ConfigError(f"{role} command {spec.command[0]!r} not found")


def load_config(path, **overrides) -> PipelineConfig:
    """JSON config file, then non-None keyword overrides on top."""
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8")) if path else {}
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a JSON object")
    data.update({k: v for k, v in overrides.items() if v is not None})
    return PipelineConfig.from_dict(data)


@lru_cache(maxsize=1)
def _template_recognizer() -> recognition.TemplateRecognizer:
    # the atlas takes a moment to render; share it across runs
    return recognition.TemplateRecognizer.default()


def make_detector(spec: BackendSpec):
    if spec.kind == "builtin":
        return detection.BuiltinDetector()
    return detection.ExternalDetector(list(spec.command))


def make_recognizer(spec: BackendSpec):
    if spec.kind == "template":
        return _template_recognizer()
    return recognition.ExternalRecognizer(list(spec.command))


@dataclass
class TranscriptEntry:
    timestamp: float
    text: str
    frame_index: int


@dataclass
class Transcript:
    entries: list[TranscriptEntry]
    metadata: dict

    def to_json(self) -> str:
        body = {"entries": [asdict(e) for e in self.entries], "metadata": self.metadata}
        return json.dumps(body, indent=2, sort_keys=True) + "\n"

    @property
    def texts(self) -> list[str]:
        return [e.text for e in self.entries]


@dataclass
class FrameResult:
    frame_index: int
    timestamp: float
    boxes: list[detection.TextBox]
    words: list[str]
    failed_words: int
    seconds: dict = field(default_factory=dict)

    @property
    def text(self) -> str:
        return " ".join(w for w in self.words if w)


@dataclass
class RunReport:
    """Timings and counters that vary run to run; kept out of the transcript."""

    phases: dict = field(default_factory=dict)
    stage_seconds: dict = field(default_factory=dict)
    wall_seconds: float = 0.0
    workers: int = 1
    skipped_files: list = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"


class _Backends:
    def __init__(self, cfg: PipelineConfig, detector=None, recognizer=None):
        self.detector = detector if detector is not None else make_detector(cfg.detector)
        self.recognizer = recognizer if recognizer is not None else make_recognizer(cfg.recognizer)
        self.det_lock = threading.Lock() if self.detector.single_flight else nullcontext()
        self.rec_lock = threading.Lock() if self.recognizer.single_flight else nullcontext()


def _recognize_words(words, backends: _Backends) -> tuple[list[str], int]:
    with backends.rec_lock:
        try:
            return [r.text for r in recognition.recognize_many(words, backends.recognizer)], 0
        except recognition.RecognizerError as exc:
            log.warning("batch recognition failed (%s); retrying word by word", exc)
    texts, failed = [], 0
    for w in words:
        with backends.rec_lock:
            try:
                texts.append(recognition.recognize(w, backends.recognizer).text)
            except recognition.RecognizerError as exc:
                log.warning("word on frame %d unreadable: %s", w.frame_index, exc)
                texts.append("")
                failed += 1
    return texts, failed


def process_frame(kf: frames.KeyFrame, cfg: PipelineConfig, backends: _Backends) -> FrameResult:
    """preprocess, detect, filter, NMS, crop, normalise height, recognise."""
    seconds = {}
    stage = "preprocess"
    try:
        t = time.perf_counter()
        img = imaging.preprocess(kf.image, cfg.preprocess)
        seconds["preprocess"] = time.perf_counter() - t

        stage, t = "detect", time.perf_counter()
        with backends.det_lock:
            raw = backends.detector.detect(img)
        boxes = detection.nms(detection.filter_boxes(raw, cfg.min_box_height), cfg.nms_iou)
        boxes = detection.reading_order(boxes)
        seconds["detect"] = time.perf_counter() - t

        stage, t = "recognize", time.perf_counter()
        crops = detection.crop_words(img, boxes)
        words = [recognition.WordImage(recognition.normalize_height(c), b, kf.index)
                 for c, b in zip(crops, boxes)]
        texts, failed = _recognize_words(words, backends)
        seconds["recognize"] = time.perf_counter() - t
    except Exception as exc:
        raise StageError(stage, kf.index, exc) from exc
    return FrameResult(kf.index, kf.timestamp, boxes, texts, failed, seconds)


def _load(cfg: PipelineConfig, report: RunReport) -> list[frames.KeyFrame]:
    try:
        source = frames.FrameSource.infer(cfg.source)
        return frames.load_frames(source, cfg.fps_hint, report.skipped_files)
    except Exception as exc:
        raise StageError("extract", None, exc) from exc


def process_frames(keyframes, cfg: PipelineConfig, workers: int, detector=None,
                   recognizer=None) -> list[FrameResult]:
    """Bounded pool over frames; results come back in frame order whatever the pool size."""
    backends = _Backends(cfg, detector, recognizer)
    if workers <= 1 or len(keyframes) <= 1:
        return [process_frame(kf, cfg, backends) for kf in keyframes]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda kf: process_frame(kf, cfg, backends), keyframes))


def _versions() -> dict:
    return {"overlayx": __version__, "numpy": np.__version__}


def run_pipeline(cfg: PipelineConfig, report: RunReport | None = None, *, detector=None,
                 recognizer=None) -> Transcript:
    """Run every stage over the configured source.

    ``detector`` and ``recognizer`` instances, when given, replace the backends
    named in the config. Timings land in ``report``, not in the transcript.
    """
    cfg.validate()
    report = report if report is not None else RunReport()
    workers = cfg.workers or os.cpu_count() or 1
    report.workers = workers
    start = time.perf_counter()

    def phase(name, t0):
        now = time.perf_counter()
        report.phases[name] = now - t0
        return now

    t = start
    keyframes = _load(cfg, report)
    t = phase("extract", t)
    results = process_frames(keyframes, cfg, workers, detector, recognizer)
    t = phase("frames", t)
    for r in results:
        for k, v in r.seconds.items():
            report.stage_seconds[k] = report.stage_seconds.get(k, 0.0) + v

    overlays = [merge.TimedOverlay(r.text, r.timestamp, r.frame_index) for r in results if r.text]
    try:
        merged = merge.merge_overlays(overlays, cfg.merge_threshold)
    except Exception as exc:
        raise StageError("merge", None, exc) from exc
    t = phase("merge", t)
    if cfg.dictionary:
        try:
            dictionary = merge.Dictionary.load(cfg.dictionary)
            merged = [replace(o, text=merge.autocorrect(o.text, dictionary, cfg.autocorrect_distance))
                      for o in merged]
        except Exception as exc:
            raise StageError("autocorrect", None, exc) from exc
    t = phase("autocorrect", t)

    transcript = Transcript(
        [TranscriptEntry(o.timestamp, o.text, o.frame_index) for o in merged],
        {
            "config_hash": cfg.digest(),
            "versions": _versions(),
            "frames": len(keyframes),
            "words": sum(len(r.words) for r in results),
            "failed_words": sum(r.failed_words for r in results),
            "skipped_files": len(report.skipped_files),
        },
    )
    if cfg.output:
        Path(cfg.output).write_text(transcript.to_json(), encoding="utf-8")
    phase("write", t)
    report.wall_seconds = time.perf_counter() - start
    if cfg.report:
        Path(cfg.report).write_text(report.to_json(), encoding="utf-8")
    return transcript


@dataclass
class EvalResult:
    frames: list[tuple[int, evaluation.EvalReport]]
    aggregate: evaluation.EvalReport
    missing: list[int]

    def table(self) -> str:
        rows = [(f"frame {i}", r) for i, r in self.frames] + [("total", self.aggregate)]
        return evaluation.format_table(rows)

    def to_json(self) -> str:
        body = {
            "frames": [{"frame_index": i, **r.to_dict()} for i, r in self.frames],
            "aggregate": self.aggregate.to_dict(),
            "missing_ground_truth": self.missing,
        }
        return json.dumps(body, indent=2, sort_keys=True) + "\n"


def _label_text(boxes: list[evaluation.GroundTruthBox]) -> str:
    as_text_boxes = {detection.TextBox(b.x, b.y, b.w, b.h): b.text for b in boxes}
    return " ".join(as_text_boxes[b] for b in detection.reading_order(list(as_text_boxes)))


def run_eval(cfg: PipelineConfig, ground_truth, *, detector=None, recognizer=None) -> EvalResult:
    """Per-frame scores of the recognised frame text (before merging) plus a micro-averaged total.

    ``ground_truth`` is a path or a ``{frame_index: [GroundTruthBox]}`` mapping.
    Frames without ground truth are skipped with a warning.
    """
    cfg.validate()
    if not isinstance(ground_truth, dict):
        ground_truth = evaluation.load_ground_truth(ground_truth)
    report = RunReport()
    keyframes = _load(cfg, report)
    results = process_frames(keyframes, cfg, cfg.workers or os.cpu_count() or 1, detector, recognizer)
    per_frame, missing = [], []
    for r in results:
        if r.frame_index not in ground_truth:
            log.warning("no ground truth for frame %d; skipped", r.frame_index)
            missing.append(r.frame_index)
            continue
        label = evaluation.normalize_text(_label_text(ground_truth[r.frame_index]))
        pred = evaluation.normalize_text(r.text)
        per_frame.append((r.frame_index, evaluation.score(Counter(label.split()), Counter(pred.split()),
                                                          label, pred)))
    return EvalResult(per_frame, evaluation.micro_average(r for _, r in per_frame), missing)
