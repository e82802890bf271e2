"""Generate a synthetic frame set, run the pipeline over it and print per-frame scores.

Example: python scripts/end_to_end.py --frames 20 --seed 3 --out /tmp/e2e
"""
import argparse
import tempfile
import time
from pathlib import Path

from overlayx import pipeline, synthgen

WORDS = Path(__file__).resolve().parents[1] / "tests" / "data" / "words.txt"


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--frames", type=int, default=10)
    ap.add_argument("--seed", type=int, default=2024)
    ap.add_argument("--workers", type=int, default=None)
    ap.add_argument("--textured", action="store_true", help="use procedural backgrounds, not solid fills")
    ap.add_argument("--out", type=Path, default=None, help="keep frames and transcript here")
    args = ap.parse_args()

    root = args.out or Path(tempfile.mkdtemp(prefix="overlayx-e2e-"))
    words = synthgen.wordlist_from_texts([WORDS.read_text()])
    assets = synthgen.default_assets(solid_only=not args.textured)
    t0 = time.perf_counter()
    synthgen.generate_frame_set(words, args.frames, assets, root, seed=args.seed)
    t1 = time.perf_counter()
    cfg = pipeline.PipelineConfig(source=str(root / "frames"), workers=args.workers,
                                  output=str(root / "transcript.json"))
    result = pipeline.run_eval(cfg, root / "ground_truth.jsonl")
    t2 = time.perf_counter()
    pipeline.run_pipeline(cfg)
    print(result.table())
    print(f"generate {t1 - t0:.1f}s, eval {t2 - t1:.1f}s; artefacts in {root}")


if __name__ == "__main__":
    main()
