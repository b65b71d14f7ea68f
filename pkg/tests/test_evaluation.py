import random
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import make_doc
from hanjakit.corpus import CharAnnotation, Corpus
from hanjakit.evaluation import (
    Detection,
    EvalReport,
    Matching,
    MatchingError,
    UnknownDocumentError,
    compare_policies,
    evaluate,
    match_detections,
    score,
)
from hanjakit.geometry import Box, iou
from hanjakit.variants import EquivalenceIndex, build_index


def gt(x, y, w=10, h=10, label="A", aid=None):
    return CharAnnotation(Box(x, y, w, h), label, aid or f"g{x}-{y}")


def det(x, y, w=10, h=10, label="A", conf=1.0, doc="d"):
    return Detection(doc, Box(x, y, w, h), label, conf)


def max_matching_size(dets, gts, thr):
    """Exhaustive maximum bipartite matching over pairs with IoU >= thr."""
    ok = [[iou(d.bbox, g.bbox) >= thr for g in gts] for d in dets]
    best = 0

    def rec(i, used, size):
        nonlocal best
        if size + (len(dets) - i) <= best:
            return
        if i == len(dets):
            best = max(best, size)
            return
        for j in range(len(gts)):
            if ok[i][j] and not used & (1 << j):
                rec(i + 1, used | (1 << j), size + 1)
        rec(i + 1, used, size)

    rec(0, 0, 0)
    return best


def random_instance(rng, max_boxes=6, labels="ABCD"):
    gts = [gt(rng.randint(0, 40), rng.randint(0, 40), rng.randint(5, 15), rng.randint(5, 15), rng.choice(labels), f"g{i}")
           for i in range(rng.randint(0, max_boxes))]
    dets = []
    for _ in range(rng.randint(0, max_boxes)):
        if gts and rng.random() < 0.7:
            base = rng.choice(gts).bbox
            box = Box(base.x + rng.randint(-4, 4), base.y + rng.randint(-4, 4), base.width + rng.randint(-3, 3), base.height)
            if box.width <= 0:
                box = base
        else:
            box = Box(rng.randint(0, 40), rng.randint(0, 40), rng.randint(5, 15), rng.randint(5, 15))
        dets.append(Detection("d", box, rng.choice(labels), round(rng.random(), 2)))
    return dets, gts


class TestIou:
    def test_identical(self):
        assert iou(Box(3, 4, 10, 7), Box(3, 4, 10, 7)) == 1.0

    def test_disjoint(self):
        assert iou(Box(0, 0, 10, 10), Box(20, 0, 10, 10)) == 0.0

    def test_touching_edges(self):
        assert iou(Box(0, 0, 10, 10), Box(10, 0, 10, 10)) == 0.0

    def test_half_shift(self):
        # intersection 50, union 150
        assert iou(Box(0, 0, 10, 10), Box(5, 0, 10, 10)) == pytest.approx(1 / 3)

    boxes = st.builds(Box, st.integers(-50, 50), st.integers(-50, 50), st.integers(1, 40), st.integers(1, 40))

    @given(boxes, boxes)
    def test_symmetric_and_bounded(self, a, b):
        assert iou(a, b) == iou(b, a)
        assert 0.0 <= iou(a, b) <= 1.0
        assert iou(a, a) == 1.0

    @given(boxes, boxes)
    def test_matches_exact_rational(self, a, b):
        ix = max(0, min(a.x2, b.x2) - max(a.x, b.x))
        iy = max(0, min(a.y2, b.y2) - max(a.y, b.y))
        inter = ix * iy
        expected = Fraction(inter, a.area + b.area - inter)
        assert iou(a, b) == pytest.approx(float(expected), abs=1e-12)


class TestMatch:
    def test_single_pair(self):
        # 10x10 vs 10x10 shifted by 2: iou = 80 / 120
        m = match_detections([det(2, 0)], [gt(0, 0)], 0.5)
        assert len(m) == 1 and m.pairs[0][:2] == (0, 0)

    def test_higher_confidence_wins(self):
        m = match_detections([det(0, 0, conf=0.4), det(1, 0, conf=0.9)], [gt(0, 0)], 0.5)
        assert [p[0] for p in m.pairs] == [1]
        assert m.unmatched_detections == (0,)

    def test_below_threshold(self):
        m = match_detections([det(6, 0)], [gt(0, 0)], 0.5)
        assert len(m) == 0 and m.unmatched_ground_truth == (0,)

    def test_best_iou_ground_truth(self):
        m = match_detections([det(4, 0)], [gt(0, 0, aid="far"), gt(5, 0, aid="near")], 0.3)
        assert m.pairs[0][1] == 1

    def test_confidence_tie_uses_input_order(self):
        m = match_detections([det(1, 0, conf=0.5), det(0, 0, conf=0.5)], [gt(0, 0)], 0.5)
        assert m.pairs[0][0] == 0

    def test_mixed_documents(self):
        with pytest.raises(MatchingError):
            match_detections([det(0, 0, doc="a"), det(0, 0, doc="b")], [gt(0, 0)])

    @pytest.mark.parametrize("seed", range(5))
    def test_maximal_and_close_to_optimum(self, seed):
        rng = random.Random(seed)
        for _ in range(100):
            dets, gts = random_instance(rng)
            m = match_detections(dets, gts, 0.5)
            ud, ug = set(m.unmatched_detections), set(m.unmatched_ground_truth)
            assert not any(iou(dets[i].bbox, gts[j].bbox) >= 0.5 for i in ud for j in ug)
            assert all(v >= 0.5 for _, _, v in m.pairs)
            # a maximal matching is at least half a maximum one
            assert 2 * len(m) >= max_matching_size(dets, gts, 0.5) >= len(m)


class TestScore:
    def test_perfect(self):
        gts = [gt(i * 20, 0, label=c, aid=str(i)) for i, c in enumerate("ABCD")]
        dets = [det(g.bbox.x, 0, label=g.label) for g in gts]
        r = score(match_detections(dets, gts), dets, gts)
        assert r.raw_accuracy == r.variant_accuracy == r.recall == r.precision == 1.0

    def test_variant_pair(self):
        index = build_index([("variant", "a", "b")])
        gts, dets = [gt(0, 0, label="a")], [det(0, 0, label="b")]
        r = score(match_detections(dets, gts), dets, gts, index)
        assert (r.raw_accuracy, r.variant_accuracy) == (0.0, 1.0)

    def test_no_index_means_variant_equals_raw(self):
        gts, dets = [gt(0, 0, label="a")], [det(0, 0, label="b")]
        r = score(match_detections(dets, gts), dets, gts)
        assert r.raw_accuracy == r.variant_accuracy == 0.0

    def test_confusable_hits(self):
        index = build_index([("confusable", "己", "已")])
        gts = [gt(0, 0, label="己"), gt(20, 0, label="未")]
        dets = [det(0, 0, label="已"), det(20, 0, label="天")]
        r = score(match_detections(dets, gts), dets, gts, index)
        assert r.confusable_hits == 1 and r.variant_correct == 0

    def test_inconsistent_matching(self):
        gts, dets = [gt(0, 0)], [det(0, 0)]
        with pytest.raises(MatchingError):
            score(Matching(((0, 0, 1.0), (0, 0, 1.0)), (), ()), dets, gts)
        with pytest.raises(MatchingError):
            score(Matching(((0, 0, 1.0),), (), (0,)), dets, gts)
        with pytest.raises(MatchingError):
            score(Matching(((0, 0, 1.0),), (), ()), [det(50, 50)], gts)

    @pytest.mark.parametrize("seed", range(5))
    def test_count_identities(self, seed):
        rng = random.Random(seed)
        index = build_index([("variant", "A", "B")])
        for _ in range(100):
            dets, gts = random_instance(rng)
            r = score(match_detections(dets, gts), dets, gts, index)
            assert r.raw_correct + r.raw_incorrect + r.unmatched_ground_truth == len(gts)
            assert sum(s.support for s in r.per_class.values()) == len(gts)
            assert 0 <= r.raw_accuracy <= r.variant_accuracy <= r.recall <= 1


class TestComparePolicies:
    def test_empty_index(self):
        gts = [gt(i * 20, 0, label="A", aid=str(i)) for i in range(5)]
        dets = [det(i * 20, 0, label="B") for i in range(5)]
        rep = compare_policies(dets, gts, EquivalenceIndex())
        assert rep.delta == 0 and all(row[4] == 0 for row in rep.rows())

    def test_one_variant_mismatch_in_ten(self):
        index = build_index([("variant", "a", "b")])
        gts = [gt(i * 20, 0, label="a", aid=str(i)) for i in range(10)]
        dets = [det(i * 20, 0, label="b" if i == 3 else "a") for i in range(10)]
        rep = compare_policies(dets, gts, index)
        assert rep.delta == pytest.approx(0.1)
        assert [(c.annotation_id, c.truth, c.predicted) for c in rep.changed] == [("3", "a", "b")]

    def test_against_brute_force_rescoring(self):
        rng = random.Random(21)
        index = build_index([("variant", "A", "B"), ("simplified", "C", "D")])
        for _ in range(200):
            docs, dets = [], []
            for d in range(3):
                ds, gs = random_instance(rng)
                doc = make_doc(f"p{d}", [((g.bbox.x, g.bbox.y, g.bbox.width, g.bbox.height), g.label) for g in gs], (100, 100))
                docs.append(doc)
                dets += [Detection(doc.doc_id, x.bbox, x.label, x.confidence) for x in ds]
            rep = compare_policies(dets, Corpus(docs), index)
            # rescore: walk the matchings and count label verdicts directly
            n_gt = sum(len(d.annotations) for d in docs)
            raw = var = 0
            for doc in docs:
                mine = [x for x in dets if x.doc_id == doc.doc_id]
                for di, gi, _ in match_detections(mine, doc.annotations).pairs:
                    t, p = doc.annotations[gi].label, mine[di].label
                    raw += t == p
                    var += t == p or {t, p} <= {"A", "B"} or {t, p} <= {"C", "D"}
            expected = (var - raw) / n_gt if n_gt else 0.0
            assert rep.delta == pytest.approx(expected, abs=1e-12)

    def test_csv(self):
        index = build_index([("variant", "a", "b")])
        gts = [gt(0, 0, label="a", aid="0"), gt(20, 0, label="c", aid="1")]
        dets = [det(0, 0, label="b"), det(20, 0, label="c")]
        csv_text = compare_policies(dets, gts, index).to_csv()
        assert csv_text.splitlines() == [
            "class,support,raw,variant,delta",
            "a,1,0.000000,1.000000,1.000000",
            "c,1,1.000000,1.000000,0.000000",
        ]


class TestEvaluate:
    def test_multi_document_sum(self):
        d1 = make_doc("p1", [((0, 0, 10, 10), "A"), ((20, 0, 10, 10), "B")], (100, 100))
        d2 = make_doc("p2", [((0, 0, 10, 10), "C")], (100, 100))
        dets = [Detection("p1", Box(0, 0, 10, 10), "A"), Detection("p2", Box(0, 0, 10, 10), "X")]
        r = evaluate(dets, Corpus([d1, d2]))
        assert (r.n_ground_truth, r.n_detections, r.n_matched, r.raw_correct) == (3, 2, 2, 1)
        assert r == evaluate(dets, Corpus([d1, d2]), jobs=3)

    def test_unknown_document(self):
        d1 = make_doc("p1", [((0, 0, 10, 10), "A")], (100, 100))
        with pytest.raises(UnknownDocumentError) as exc:
            evaluate([Detection("nope", Box(0, 0, 5, 5), "A")], Corpus([d1]))
        assert exc.value.doc_ids == ["nope"]

    def test_merge_is_associative(self):
        rng = random.Random(2)
        reports = []
        for _ in range(3):
            dets, gts = random_instance(rng)
            reports.append(score(match_detections(dets, gts), dets, gts))
        a, b, c = reports
        assert ((a + b) + c).to_dict() == (a + (b + c)).to_dict() == ((c + a) + b).to_dict()

    def test_detection_validation(self):
        with pytest.raises(ValueError):
            Detection("d", Box(0, 0, 0, 5), "A")
        with pytest.raises(ValueError):
            Detection("d", Box(0, 0, 5, 5), "A", 1.5)

    def test_report_json_and_table(self):
        r = EvalReport(n_ground_truth=4, n_detections=5, n_matched=3, raw_correct=2, variant_correct=3)
        d = r.to_dict()
        assert (d["raw_accuracy"], d["variant_accuracy"], d["precision"], d["recall"]) == (0.5, 0.75, 0.6, 0.75)
        assert "variant accuracy   0.7500" in r.format_table()
