from collections import Counter

import numpy as np
import pytest
from hypothesis import given, strategies as st

from overlayx import evaluation as ev

# (model, precision, recall, published F1) from the model-comparison table
PUBLISHED_PRF = [
    ("tesseract", 0.284, 0.266, 0.274),
    ("crnn", 0.368, 0.343, 0.352),
    ("finetuned-all", 0.40, 0.375, 0.386),
    ("finetuned-last-lstm", 0.406, 0.378, 0.389),
    ("finetuned-both-lstm", 0.45, 0.42, 0.432),
]

bags = st.lists(st.sampled_from(["a", "b", "c", "dd", "eee"]), max_size=10).map(Counter)


def intersection_oracle(a: Counter, b: Counter) -> int:
    # expand both multisets and greedily pair equal items
    pool = list(b.elements())
    hits = 0
    for w in a.elements():
        if w in pool:
            pool.remove(w)
            hits += 1
    return hits


class TestTokenize:
    def test_edge_punctuation(self):
        assert ev.tokenize_words("We have, many") == Counter({"we": 1, "have": 1, "many": 1})

    def test_empty(self):
        assert ev.tokenize_words("") == Counter()

    def test_counts(self):
        assert ev.tokenize_words("a a a") == Counter({"a": 3})

    def test_inner_punctuation_kept(self):
        assert ev.word_tokens("Don't stop-now!!") == ["don't", "stop-now"]

    def test_foreign_symbols_dropped(self):
        assert ev.word_tokens("café €5 --") == ["caf", "5"]

    def test_dataset_filter(self):
        assert ev.word_tokens("we have it all", dataset_filter=True) == ["have", "all"]


class TestIntersection:
    def test_hand_value(self):
        assert ev.multiset_intersection(Counter(a=2, b=1), Counter(a=1, c=1)) == 1

    @given(bags)
    def test_self_and_empty(self, x):
        assert ev.multiset_intersection(x, x) == sum(x.values())
        assert ev.multiset_intersection(x, Counter()) == 0

    @given(bags, bags)
    def test_oracle_symmetry_bound(self, a, b):
        n = ev.multiset_intersection(a, b)
        assert n == intersection_oracle(a, b) == ev.multiset_intersection(b, a)
        assert n <= min(sum(a.values()), sum(b.values()))


class TestScore:
    def test_hand_example(self):
        labels, preds = Counter("abcd"), Counter("abx")
        assert intersection_oracle(labels, preds) == 2
        r = ev.score(labels, preds, "a b c d", "a b x")
        assert r.precision == pytest.approx(2 / 3)
        assert r.recall == pytest.approx(0.5)
        assert r.f1 == pytest.approx(2 * (2 / 3) * 0.5 / (2 / 3 + 0.5))
        assert round(r.f1, 4) == 0.5714
        # c->x, then delete " d"
        assert r.similarity == pytest.approx(1 - 3 / 7)

    def test_perfect(self):
        r = ev.score(Counter("ab"), Counter("ab"), "a b", "a b")
        assert (r.precision, r.recall, r.f1, r.similarity) == (1, 1, 1, 1)

    def test_conventions(self):
        silent = ev.score(Counter(["x"]), Counter(), "x", "")
        assert (silent.precision, silent.recall, silent.f1, silent.similarity) == (0, 0, 0, 0)
        vacuous = ev.score(Counter(), Counter(), "", "")
        assert (vacuous.precision, vacuous.recall, vacuous.f1, vacuous.similarity) == (1, 1, 1, 1)
        spurious = ev.score(Counter(), Counter(["x"]), "", "x")
        assert spurious.precision == 0 and spurious.recall == 0 and spurious.f1 == 0

    def test_f1_published_last_row(self):
        assert ev.f1_score(0.45, 0.42) == pytest.approx(0.432, abs=0.005)

    @pytest.mark.parametrize("name,p,r,f1", PUBLISHED_PRF)
    def test_published_rows(self, name, p, r, f1):
        assert abs(ev.f1_score(p, r) - f1) <= 0.005

    @given(bags, bags, st.text(alphabet="ab ", max_size=12), st.text(alphabet="ab ", max_size=12))
    def test_bounds(self, a, b, ta, tb):
        r = ev.score(a, b, ta, tb)
        for v in (r.precision, r.recall, r.f1, r.similarity):
            assert 0.0 <= v <= 1.0
        lo = min(r.precision, r.recall)
        assert r.f1 <= 2 * lo + 1e-12
        assert lo >= r.f1 / 2 - 1e-12
        if r.precision + r.recall > 0 and (r.n_labels or r.n_predictions):
            assert r.f1 == pytest.approx(2 * r.precision * r.recall / (r.precision + r.recall))

    @given(bags, st.text(alphabet="ab ", max_size=12))
    def test_identity(self, x, t):
        r = ev.score(x, x, t, t)
        assert (r.precision, r.recall, r.f1, r.similarity) == (1, 1, 1, 1)


class TestMicroAverage:
    def test_pools_counts(self):
        a = ev.score(Counter("ab"), Counter("a"), "a b", "a")
        b = ev.score(Counter("cdef"), Counter("cdef"), "c d e f", "c d e f")
        agg = ev.micro_average([a, b])
        assert agg.n_labels == 6 and agg.n_predictions == 5 and agg.n_intersection == 5
        assert agg.precision == pytest.approx(1.0)
        assert agg.recall == pytest.approx(5 / 6)
        assert agg.similarity == pytest.approx(1 - (2 + 0) / (3 + 7))

    def test_empty(self):
        agg = ev.micro_average([])
        assert agg.f1 == 1.0


class TestDatasetFilters:
    def test_rules(self):
        crops = [np.zeros((19, 50), np.uint8), np.zeros((30, 50), np.uint8), np.zeros((30, 50), np.uint8)]
        kept = ev.apply_dataset_filters(crops, ["hello", "is", "the"])
        assert len(kept) == 1 and kept[0][1] == "the"

    def test_boundary(self):
        kept = ev.apply_dataset_filters([np.zeros((20, 40), np.uint8)], ["abc"])
        assert len(kept) == 1

    def test_mismatch(self):
        with pytest.raises(ValueError):
            ev.apply_dataset_filters([np.zeros((20, 40), np.uint8)], [])


class TestGroundTruthIO:
    def test_roundtrip_jsonl(self, tmp_path):
        frames = {0: [ev.GroundTruthBox(1, 2, 30, 24, "hello")], 3: []}
        p = tmp_path / "gt.jsonl"
        ev.dump_ground_truth(p, frames)
        assert ev.load_ground_truth(p) == frames

    def test_json_array(self, tmp_path):
        p = tmp_path / "gt.json"
        p.write_text('[{"frame_index": 2, "boxes": [{"x":0,"y":0,"w":5,"h":5,"text":"ok"}]}]')
        assert ev.load_ground_truth(p)[2][0].text == "ok"

    def test_table_format(self):
        r = ev.score(Counter("ab"), Counter("a"), "a b", "a")
        table = ev.format_table([("frame 0", r), ("total", r)])
        lines = table.splitlines()
        assert len(lines) == 3
        assert "precision" in lines[0] and lines[1].startswith("frame 0")
