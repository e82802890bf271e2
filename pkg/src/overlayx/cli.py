"""``overlayx`` command line: extract, eval, synthgen, preprocess.

Exit codes: 0 success, 1 configuration or usage error, 2 a stage failed.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import __version__, imaging, pipeline, synthgen
from .charset import DEFAULT_CHARSET

EXIT_OK, EXIT_CONFIG, EXIT_STAGE = 0, 1, 2

log = logging.getLogger("overlayx")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _pipeline_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("source", nargs="?", help="video file or directory of frame images")
    p.add_argument("--config", help="JSON config file; flags override its keys")
    p.add_argument("--preprocess", choices=[m.value for m in imaging.PreprocessMethod])
    p.add_argument("--detector", help="'builtin' or 'external:<command>'")
    p.add_argument("--recognizer", help="'template' or 'external:<command>'")
    p.add_argument("--merge-threshold", type=float, dest="merge_threshold")
    p.add_argument("--nms-iou", type=float, dest="nms_iou")
    p.add_argument("--dictionary", help="word list for autocorrection, one word per line")
    p.add_argument("--fps-hint", type=float, dest="fps_hint", help="frame rate for image directories")
    p.add_argument("--workers", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="overlayx", description="Extract textual overlays from videos.")
    parser.add_argument("--version", action="version", version=f"overlayx {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    ex = sub.add_parser("extract", help="run the pipeline and write a transcript")
    _pipeline_args(ex)
    ex.add_argument("--out", dest="output", help="transcript JSON path (default: stdout)")
    ex.add_argument("--report", help="run report JSON path (timings, skipped files)")

    ev = sub.add_parser("eval", help="score recognised frame text against ground truth")
    _pipeline_args(ev)
    ev.add_argument("--ground-truth", required=True, help="JSON lines of {frame_index, boxes}")
    ev.add_argument("--json", dest="json_out", help="also write per-frame scores as JSON")

    sg = sub.add_parser("synthgen", help="render a synthetic word-image dataset")
    words = sg.add_mutually_exclusive_group(required=True)
    words.add_argument("--words", help="word file, one word per line")
    words.add_argument("--transcripts", nargs="+",
                       help="text files to harvest words from (digits and marks are appended)")
    sg.add_argument("--out", required=True)
    sg.add_argument("--samples-per-word", type=int, default=100)
    sg.add_argument("--seed", type=int, default=0)
    sg.add_argument("--fonts-dir", help="directory of .ttf/.otf fonts (default: bundled)")
    sg.add_argument("--backgrounds-dir", help="directory of background images (default: procedural)")
    sg.add_argument("--workers", type=int, default=1)
    sg.add_argument("--frames", type=int, metavar="N",
                    help="render N full frames with ground truth instead of word samples")

    pp = sub.add_parser("preprocess", help="apply one preprocessing method to an image")
    pp.add_argument("image")
    pp.add_argument("--method", required=True, choices=[m.value for m in imaging.PreprocessMethod])
    pp.add_argument("--out", required=True)
    return parser


def _config(args) -> pipeline.PipelineConfig:
    keys = ("source", "preprocess", "detector", "recognizer", "merge_threshold", "nms_iou",
            "dictionary", "fps_hint", "workers", "output", "report")
    overrides = {k: getattr(args, k, None) for k in keys}
    return pipeline.load_config(args.config, **overrides).validate()


def _cmd_extract(args) -> int:
    cfg = _config(args)
    transcript = pipeline.run_pipeline(cfg)
    if not cfg.output:
        sys.stdout.write(transcript.to_json())
    return EXIT_OK


def _cmd_eval(args) -> int:
    cfg = _config(args)
    if not Path(args.ground_truth).is_file():
        raise pipeline.ConfigError(f"ground truth {args.ground_truth} not found")
    result = pipeline.run_eval(cfg, args.ground_truth)
    print(result.table())
    if args.json_out:
        Path(args.json_out).write_text(result.to_json(), encoding="utf-8")
    return EXIT_OK


def _read_words(path) -> list[str]:
    words = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        w = DEFAULT_CHARSET.restrict(line.strip())
        if w:
            words.append(w)
    if not words:
        raise synthgen.WordListError(f"no usable words in {path}")
    return words


def _cmd_synthgen(args) -> int:
    if args.samples_per_word < 1 or args.workers < 1:
        raise pipeline.ConfigError("--samples-per-word and --workers must be at least 1")
    try:
        words = _read_words(args.words) if args.words else synthgen.build_wordlist(args.transcripts)
        fonts = synthgen.load_fontset(args.fonts_dir) if args.fonts_dir else synthgen.load_fontset()
        if args.backgrounds_dir:
            backgrounds = synthgen.load_backgrounds(args.backgrounds_dir)
        else:
            backgrounds = synthgen.procedural_backgrounds(seed=args.seed, solid_only=args.frames is not None)
        assets = synthgen.Assets(fonts, backgrounds)
    except (OSError, synthgen.AssetError, synthgen.WordListError) as exc:
        raise pipeline.ConfigError(str(exc)) from exc
    try:
        if args.frames is not None:
            synthgen.generate_frame_set(words, args.frames, assets, args.out, seed=args.seed)
            print(f"wrote {args.frames} frames to {Path(args.out) / 'frames'}")
        else:
            entries = synthgen.generate_dataset(words, assets, args.out, args.samples_per_word,
                                                args.seed, args.workers)
            print(f"wrote {len(entries)} samples to {args.out}")
    except Exception as exc:
        raise pipeline.StageError("synthgen", None, exc) from exc
    return EXIT_OK


def _cmd_preprocess(args) -> int:
    try:
        img = imaging.load_image(args.image)
        imaging.save_image(args.out, imaging.preprocess(img, args.method))
    except Exception as exc:
        raise pipeline.StageError("preprocess", None, exc) from exc
    return EXIT_OK


COMMANDS = {"extract": _cmd_extract, "eval": _cmd_eval, "synthgen": _cmd_synthgen,
            "preprocess": _cmd_preprocess}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except pipeline.ConfigError as exc:
        print(f"overlayx: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except pipeline.StageError as exc:
        print(f"overlayx: {exc}", file=sys.stderr)
        return EXIT_STAGE


if __name__ == "__main__":
    sys.exit(main())
