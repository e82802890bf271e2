"""Exact-word accuracy of the template recognizer on clean synthetic crops, broken down by font."""
import argparse
from collections import Counter
from pathlib import Path

import numpy as np

from overlayx import recognition as rc
from overlayx import synthgen as sg

WORDS = Path(__file__).resolve().parents[1] / "tests" / "data" / "words.txt"


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--samples", type=int, default=500)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--show-errors", type=int, default=10)
    args = ap.parse_args()

    assets = sg.default_assets(solid_only=True)
    words = sg.wordlist_from_texts([WORDS.read_text()])
    rec = rc.TemplateRecognizer.default()
    rng = np.random.default_rng(args.seed)
    seen, hits, errors = Counter(), Counter(), []
    for _ in range(args.samples):
        w = words[rng.integers(len(words))]
        base = sg.sample_spec(w, assets, int(rng.integers(2**32)))
        spec = sg.SampleSpec(w, base.font_id, int(rng.integers(44, 57)), base.color,
                             base.background_id, (0, 0), base.seed)
        got = rec.read(rc.normalize_height(sg.render_word(spec, assets)))[0]
        font = Path(assets.fonts[spec.font_id].path).stem
        seen[font] += 1
        if got == w:
            hits[font] += 1
        else:
            errors.append((font, w, got))
    for font in sorted(seen):
        print(f"{font:24s} {hits[font]:4d}/{seen[font]:<4d} {hits[font] / seen[font]:.3f}")
    print(f"{'overall':24s} {sum(hits.values()):4d}/{args.samples:<4d} {sum(hits.values()) / args.samples:.3f}")
    for font, w, got in errors[:args.show_errors]:
        print(f"  {font}: {w!r} -> {got!r}")


if __name__ == "__main__":
    main()
