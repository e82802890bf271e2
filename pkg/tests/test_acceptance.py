"""Acceptance criteria, one check each, every check printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py`` (lines appear in the terminal
summary) or ``python tests/test_acceptance.py``.
"""
from __future__ import annotations

import hashlib
import sys
import time
from pathlib import Path

import numpy as np
import pytest

HERE = Path(__file__).parent
sys.path.insert(0, str(HERE))

from conftest import ACCEPTANCE_LINES  # noqa: E402
from oracles import all_strings, levenshtein_recursive_table, nms_bruteforce, otsu_exhaustive_batch  # noqa: E402

from overlayx import detection, evaluation, merge, pipeline, synthgen  # noqa: E402
from overlayx.imaging import otsu_threshold  # noqa: E402

# pinned tolerances
LEV_MAX_LEN, LEV_BUDGET_S = 8, 30.0
F1_TOL = 0.005
OTSU_IMAGES, OTSU_BUDGET_S = 1000, 10.0
SYNTH_WORDS, SYNTH_PER_WORD = 10, 100
E2E_FRAMES, E2E_MIN_F1, E2E_MIN_SIM, E2E_BUDGET_S = 10, 0.9, 0.9, 60.0
NMS_MAX_BOXES = 12

PUBLISHED_PRF = [  # model, precision, recall, published F1
    ("tesseract", 0.284, 0.266, 0.274),
    ("crnn", 0.368, 0.343, 0.352),
    ("finetuned-all", 0.40, 0.375, 0.386),
    ("finetuned-last-lstm", 0.406, 0.378, 0.389),
    ("finetuned-both-lstm", 0.45, 0.42, 0.432),
]


def report(name: str, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def _corpus_words() -> list[str]:
    return synthgen.wordlist_from_texts([(HERE / "data" / "words.txt").read_text()])


def _tree_digest(folder: Path) -> str:
    h = hashlib.sha256()
    for p in sorted(folder.iterdir()):
        h.update(p.name.encode())
        h.update(p.read_bytes())
    return h.hexdigest()


@pytest.fixture(scope="module")
def frame_fixture(tmp_path_factory):
    root = tmp_path_factory.mktemp("e2e")
    t = time.perf_counter()
    synthgen.generate_frame_set(_corpus_words(), E2E_FRAMES, synthgen.default_assets(solid_only=True),
                                root, seed=2024)
    return root, time.perf_counter() - t


def test_levenshtein_exhaustive():
    strs = all_strings("abc", LEV_MAX_LEN)
    merge.levenshtein_table(["ab"], ["ba"])  # compile outside the timed region
    t = time.perf_counter()
    ours = merge.levenshtein_table(strs, strs)
    elapsed = time.perf_counter() - t
    oracle = levenshtein_recursive_table("abc", LEV_MAX_LEN)
    mismatches = int((ours != oracle).sum())
    pairs = len(strs) ** 2
    report("levenshtein oracle equivalence", mismatches == 0 and elapsed < LEV_BUDGET_S,
           f"{pairs} pairs over {{a,b,c}} up to length {LEV_MAX_LEN}, {mismatches} mismatches, "
           f"{elapsed:.1f}s (budget {LEV_BUDGET_S:.0f}s)")


def test_published_f1():
    worst = max(abs(evaluation.f1_score(p, r) - f1) for _, p, r, f1 in PUBLISHED_PRF)
    report("published F1 regression", worst <= F1_TOL,
           f"max |f1(p, r) - published| = {worst:.4f} over {len(PUBLISHED_PRF)} rows (tolerance {F1_TOL})")


def test_otsu_equivalence():
    imgs = np.random.default_rng(7).integers(0, 256, (OTSU_IMAGES, 16, 16), dtype=np.uint8)
    t = time.perf_counter()
    ours = [otsu_threshold(img) for img in imgs]
    elapsed = time.perf_counter() - t
    oracle = otsu_exhaustive_batch(imgs)
    bad = sum(a != b for a, b in zip(ours, oracle))
    report("otsu equivalence", bad == 0 and elapsed < OTSU_BUDGET_S,
           f"{OTSU_IMAGES} random 16x16 images, {bad} mismatches, {elapsed:.2f}s (budget {OTSU_BUDGET_S:.0f}s)")


def test_synthgen_contract(tmp_path):
    from PIL import Image

    words = [w for w in _corpus_words() if len(w) >= 3][:SYNTH_WORDS]
    assets = synthgen.default_assets(seed=11)
    synthgen.generate_dataset(words, assets, tmp_path / "a", SYNTH_PER_WORD, seed=5)
    synthgen.generate_dataset(words, assets, tmp_path / "b", SYNTH_PER_WORD, seed=5)
    jpgs = sorted((tmp_path / "a").glob("*.jpg"))
    sizes = set()
    for p in jpgs:
        with Image.open(p) as im:
            sizes.add((im.format, im.size))
    same = _tree_digest(tmp_path / "a") == _tree_digest(tmp_path / "b")
    expected = SYNTH_WORDS * SYNTH_PER_WORD
    report("synthetic generator contract", len(jpgs) == expected and sizes == {("JPEG", (100, 32))} and same,
           f"{len(jpgs)}/{expected} files, formats/sizes {sorted(sizes)}, reruns identical: {same}")


def test_merge_fixture():
    fixture = [merge.TimedOverlay("we have", 1.0, 0), merge.TimedOverlay("we have many", 2.0, 1),
               merge.TimedOverlay("we have many options", 3.0, 2)]
    d1 = merge.normalized_distance(fixture[2].text, fixture[1].text)
    d2 = merge.normalized_distance(fixture[1].text, fixture[0].text)
    out = merge.merge_overlays(fixture, 0.5)
    ok = [o.text for o in out] == ["we have many options"] and abs(d1 - 0.4) < 1e-12 and abs(d2 - 5 / 12) < 1e-12
    report("merge filter correctness", ok,
           f"distances {d1:.3f} and {d2:.3f}, survivors {[o.text for o in out]}")


def test_end_to_end(frame_fixture):
    root, gen_s = frame_fixture
    cfg = pipeline.PipelineConfig(source=str(root / "frames"))
    t = time.perf_counter()
    result = pipeline.run_eval(cfg, root / "ground_truth.jsonl")
    elapsed = time.perf_counter() - t + gen_s
    agg = result.aggregate
    ok = (agg.f1 >= E2E_MIN_F1 and agg.similarity >= E2E_MIN_SIM and elapsed < E2E_BUDGET_S
          and len(result.frames) == E2E_FRAMES)
    report("end-to-end fixture", ok,
           f"{len(result.frames)} frames, F1 {agg.f1:.3f} (min {E2E_MIN_F1}), similarity {agg.similarity:.3f} "
           f"(min {E2E_MIN_SIM}), {elapsed:.1f}s including fixture generation (budget {E2E_BUDGET_S:.0f}s)")


def _random_boxes(rng, n):
    out = []
    for _ in range(n):
        x, y = (int(v) for v in rng.integers(0, 40, 2))
        w, h = (int(v) for v in rng.integers(1, 30, 2))
        out.append(detection.TextBox(x, y, w, h, float(rng.choice([0.2, 0.5, 0.5, 0.8, 0.9]))))
    return out


def test_nms_bruteforce():
    rng = np.random.default_rng(12)
    checked = bad = 0
    for n in range(NMS_MAX_BOXES + 1):
        for _ in range(12):
            boxes = _random_boxes(rng, n)
            for t in (0.2, 0.45, 0.7):
                checked += 1
                bad += detection.nms(boxes, t) != nms_bruteforce(boxes, t)
    # every subset of one 10-box set as well
    base = _random_boxes(rng, 10)
    for mask in range(1 << len(base)):
        subset = [b for i, b in enumerate(base) if mask >> i & 1]
        checked += 1
        bad += detection.nms(subset, 0.45) != nms_bruteforce(subset, 0.45)
    report("nms brute-force equivalence", bad == 0,
           f"{checked} box sets of 0..{NMS_MAX_BOXES} boxes, {bad} disagreements with subset enumeration")


def test_determinism(frame_fixture, tmp_path):
    root, _ = frame_fixture
    outputs = []
    for run, workers in enumerate((1, 1, 4)):
        out = tmp_path / f"t{run}.json"
        cfg = pipeline.PipelineConfig(source=str(root / "frames"), workers=workers, output=str(out))
        pipeline.run_pipeline(cfg)
        outputs.append(out.read_bytes())
    same = len(set(outputs)) == 1
    report("pipeline determinism", same,
           f"3 runs (workers 1, 1, 4), transcripts byte-identical: {same} ({len(outputs[0])} bytes)")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
