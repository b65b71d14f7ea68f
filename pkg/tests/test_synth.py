import math
import random
from collections import Counter

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import make_bank, make_doc
from hanjakit.augment import crop_image, CropRegion
from hanjakit.corpus import ClassHistogram, Corpus, class_inventory, load_corpus, validate_corpus
from hanjakit.raster import Raster
from hanjakit.reading_order import cluster_columns, sequence_text
from hanjakit.synth import (
    GlyphBank,
    GridSpec,
    MissingImageError,
    compose_synthetic_page,
    deficits,
    gini,
    harvest_glyphs,
    imbalance_metrics,
    load_bank,
    missing_classes,
    plan_pages,
    resize_nearest,
    save_bank,
    synthesize_pages,
)


def gini_double_sum(values):
    """Mean absolute difference over twice the mean."""
    n = len(values)
    total = sum(values)
    if n == 0 or total == 0:
        return 0.0
    return sum(abs(a - b) for a in values for b in values) / (2 * n * total)


class TestCoverage:
    def test_missing(self):
        hist = ClassHistogram({"A": 3, "B": 1})
        assert missing_classes(hist, "ABCD") == {"C", "D"}

    def test_empty_universe(self):
        with pytest.raises(ValueError):
            missing_classes(ClassHistogram({}), [])

    def test_deficits(self):
        assert deficits(ClassHistogram({"A": 5, "B": 1}), "ABC", 3) == {"B": 2, "C": 3}

    def test_fixture_unseen_classes(self, corpus12_dir, fixtures_dir):
        corpus = load_corpus(corpus12_dir)
        universe = (fixtures_dir / "universe.txt").read_text(encoding="utf-8").split()
        missing = missing_classes(class_inventory(corpus), universe)
        assert {chr(0x9000 + i) for i in range(40)} <= missing


class TestGini:
    def test_even(self):
        assert gini([4, 4, 4, 4]) == pytest.approx(0)

    def test_one_holds_everything(self):
        # n - 1 over n for a single non-zero among n
        assert gini([0, 0, 0, 10]) == pytest.approx(3 / 4)

    @given(st.lists(st.integers(0, 1000), min_size=1, max_size=60))
    def test_matches_double_sum(self, values):
        assert gini(values) == pytest.approx(gini_double_sum(values), abs=1e-9)

    @given(st.lists(st.integers(0, 1000), min_size=1, max_size=30), st.randoms())
    def test_order_free_and_bounded(self, values, rnd):
        shuffled = values[:]
        rnd.shuffle(shuffled)
        assert gini(values) == pytest.approx(gini(shuffled))
        assert 0 <= gini(values) < 1

    def test_metrics_include_zeros(self):
        report = imbalance_metrics(ClassHistogram({"A": 10, "B": 2}), "ABC")
        assert report.gini == pytest.approx(gini([10, 2, 0]))
        assert report.max_min_ratio == 5.0
        assert report.missing == {"C"}

    def test_all_zero_warns(self):
        with pytest.warns(RuntimeWarning):
            report = imbalance_metrics(ClassHistogram({}), "AB")
        assert report.gini == 0.0 and report.warnings

    def test_outside_universe(self):
        report = imbalance_metrics(ClassHistogram({"A": 1, "Z": 2}), "AB")
        assert report.outside_universe == {"Z"}


def page_with_boxes():
    rng = np.random.default_rng(5)
    pixels = rng.integers(0, 256, (120, 200), dtype=np.uint8)
    doc = make_doc("p", [((10, 10, 20, 30), "A"), ((50, 5, 33, 17), "B"), ((100.5, 40.2, 10, 10), "A")], (200, 120))
    return Raster(pixels), doc


class TestHarvest:
    def test_dims_and_pixels(self):
        page, doc = page_with_boxes()
        bank = harvest_glyphs(Corpus([doc]), {"p": page})
        assert bank.classes() == {"A", "B"} and len(bank) == 3
        a0 = bank.glyphs["A"][0]
        assert (a0.raster.width, a0.raster.height) == (20, 30)
        assert a0.raster == crop_image(page, CropRegion(10, 10, 20, 30))
        # fractional box covers whole pixels 100..110 x 40..50
        a1 = bank.glyphs["A"][1].raster
        assert (a1.width, a1.height) == (11, 11)
        for j in range(a1.height):
            for i in range(a1.width):
                assert a1.pixels[j, i] == page.pixels[40 + j, 100 + i]

    def test_class_filter(self):
        page, doc = page_with_boxes()
        bank = harvest_glyphs(Corpus([doc]), lambda d: page, classes={"B"})
        assert bank.classes() == {"B"} and len(bank) == 1

    def test_missing_image_names_document(self, tmp_path):
        corpus = Corpus([make_doc("ghost", [((0, 0, 5, 5), "A")], (10, 10))], root=tmp_path)
        with pytest.raises(MissingImageError) as exc:
            harvest_glyphs(corpus)
        assert exc.value.doc_id == "ghost"

    def test_fixture_from_disk(self, corpus12_dir):
        corpus = load_corpus(corpus12_dir)
        bank = harvest_glyphs(corpus, jobs=3)
        assert len(bank) == corpus.annotation_count()
        assert dict(Counter({c: len(g) for c, g in bank.glyphs.items()})) == class_inventory(corpus).counts

    def test_save_load_round_trip(self, tmp_path):
        bank = make_bank("體体國", np.random.default_rng(0))
        save_bank(bank, tmp_path / "bank")
        assert (tmp_path / "bank" / "U+9AD4").is_dir()
        again = load_bank(tmp_path / "bank")
        assert again.glyphs == bank.glyphs


class TestCompose:
    def test_two_by_two(self):
        bank = make_bank("ABCD", np.random.default_rng(1))
        page, rec = compose_synthetic_page(bank, GridSpec(2, 2), "ABCD", np.random.default_rng(0))
        assert (page.width, page.height) == rec.image_dims == GridSpec(2, 2).page_size
        assert sequence_text(cluster_columns(rec.annotations)) == "AB\nCD"

    def test_empty_page(self):
        page, rec = compose_synthetic_page(GlyphBank(), GridSpec(3, 3), [], np.random.default_rng(0))
        assert rec.annotations == () and (page.pixels == 255).all()

    def test_multiset_and_validity(self):
        rng = np.random.default_rng(2)
        bank = make_bank("甲乙丙丁戊", rng)
        seq = [random.Random(3).choice("甲乙丙丁戊") for _ in range(30)]
        page, rec = compose_synthetic_page(bank, GridSpec(5, 6), seq, rng)
        assert Counter(a.label for a in rec.annotations) == Counter(seq)
        assert len(validate_corpus(Corpus([rec]))) == 0

    def test_boxes_hold_the_glyph(self):
        rng = np.random.default_rng(4)
        bank = make_bank("AB", rng, per_class=1)
        page, rec = compose_synthetic_page(bank, GridSpec(2, 1, jitter_fraction=0), "AB", rng)
        for ann in rec.annotations:
            src = bank.glyphs[ann.label][0].raster
            b = ann.bbox
            pasted = Raster(page.pixels[b.y : b.y2, b.x : b.x2].copy())
            assert pasted == resize_nearest(src, b.width, b.height)
        # everything outside the boxes is background
        mask = np.ones(page.pixels.shape, bool)
        for ann in rec.annotations:
            b = ann.bbox
            mask[b.y : b.y2, b.x : b.x2] = False
        assert (page.pixels[mask] == 255).all()

    def test_coverage_closure(self):
        hist = ClassHistogram({"A": 3, "B": 2})
        universe = "ABCDE"
        missing = sorted(missing_classes(hist, universe))
        bank = make_bank(missing, np.random.default_rng(6))
        pages = synthesize_pages(bank, GridSpec(2, 2), plan_pages(missing, 4), seed=1)
        extra = Counter(a.label for _, rec in pages for a in rec.annotations)
        assert not missing_classes(ClassHistogram(dict(Counter(hist.counts) + extra)), universe)

    def test_absent_class(self):
        with pytest.raises(KeyError):
            compose_synthetic_page(make_bank("A", np.random.default_rng(0)), GridSpec(2, 2), "AZ", np.random.default_rng(0))

    def test_too_long(self):
        with pytest.raises(ValueError):
            compose_synthetic_page(make_bank("A", np.random.default_rng(0)), GridSpec(1, 1), "AA", np.random.default_rng(0))

    @pytest.mark.parametrize("seed", range(5))
    def test_reading_order_round_trip(self, seed):
        rng = np.random.default_rng(seed)
        labels = [chr(0x4E00 + i) for i in range(60)]
        bank = make_bank(labels, rng)
        seq = [labels[i] for i in rng.integers(0, 60, 48)]
        grid = GridSpec(6, 8)
        _, rec = compose_synthetic_page(bank, grid, seq, rng)
        expected = "\n".join("".join(seq[c * 8 : c * 8 + 8]) for c in range(6))
        assert sequence_text(cluster_columns(rec.annotations)) == expected

    def test_synthesize_is_jobs_independent(self):
        bank = make_bank("ABCDEF", np.random.default_rng(7))
        plan = plan_pages(list("ABCDEF"), 4, copies=3)
        one = synthesize_pages(bank, GridSpec(2, 2), plan, seed=3, jobs=1)
        four = synthesize_pages(bank, GridSpec(2, 2), plan, seed=3, jobs=4)
        assert one == four and len(one) == math.ceil(18 / 4)

    def test_plan_pages(self):
        assert plan_pages("ab", 3, copies=2) == [["a", "a", "b"], ["b"]]
