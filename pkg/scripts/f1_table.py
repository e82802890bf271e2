"""Recompute F1 from the published precision/recall pairs and show the rounding gap."""
from overlayx.evaluation import f1_score

ROWS = [
    ("tesseract", 0.284, 0.266, 0.274),
    ("crnn", 0.368, 0.343, 0.352),
    ("finetuned-all", 0.40, 0.375, 0.386),
    ("finetuned-last-lstm", 0.406, 0.378, 0.389),
    ("finetuned-both-lstm", 0.45, 0.42, 0.432),
]

if __name__ == "__main__":
    print(f"{'model':22s} {'P':>6s} {'R':>6s} {'F1':>7s} {'pub':>6s} {'gap':>7s}")
    for name, p, r, pub in ROWS:
        f = f1_score(p, r)
        print(f"{name:22s} {p:6.3f} {r:6.3f} {f:7.4f} {pub:6.3f} {f - pub:+7.4f}")
