"""Write a small training set and a frame set side by side for visual inspection."""
import argparse
from pathlib import Path

from overlayx import synthgen

WORDS = Path(__file__).resolve().parents[1] / "tests" / "data" / "words.txt"


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("out", type=Path)
    ap.add_argument("--words", type=int, default=10)
    ap.add_argument("--per-word", type=int, default=5)
    ap.add_argument("--frames", type=int, default=4)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    words = [w for w in synthgen.wordlist_from_texts([WORDS.read_text()]) if len(w) >= 3][:args.words]
    assets = synthgen.default_assets(seed=args.seed)
    synthgen.generate_dataset(words, assets, args.out / "crops", args.per_word, seed=args.seed)
    _, truth = synthgen.generate_frame_set(words, args.frames, assets, args.out / "frames", seed=args.seed)
    n_crops = len(list((args.out / "crops").glob("*.jpg")))
    print(f"{n_crops} crops in {args.out / 'crops'}")
    print(f"{len(truth)} frames in {args.out / 'frames'}")


if __name__ == "__main__":
    main()
