"""Score detector output against ground-truth character boxes.

Detections are matched to ground truth greedily by IoU; a matched pair is
raw-correct when the labels are identical and variant-correct when the
labels normalize to the same representative. Accuracies are taken over the
ground-truth count, so they read as a character recognition rate.
"""

from __future__ import annotations

import csv
import io
import json
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, Union

from .corpus import CharAnnotation, Corpus, DocumentRecord
from .geometry import Box, iou
from .variants import EquivalenceIndex

DEFAULT_IOU_THRESHOLD = 0.5


class MatchingError(ValueError):
    pass


class UnknownDocumentError(KeyError):
    def __init__(self, doc_ids: Iterable[str]):
        self.doc_ids = sorted(set(doc_ids))
        super().__init__(f"detections reference unknown doc_id(s): {self.doc_ids}")

    def __str__(self) -> str:
        return self.args[0]


@dataclass(frozen=True)
class Detection:
    doc_id: str
    bbox: Box
    label: str
    confidence: float = 1.0

    def __post_init__(self):
        if not isinstance(self.bbox, Box):
            object.__setattr__(self, "bbox", Box.from_seq(self.bbox))
        if not self.bbox.is_positive():
            raise ValueError(f"detection bbox must have positive extent: {list(self.bbox)}")
        if not 0 <= self.confidence <= 1:
            raise ValueError(f"confidence must be in [0, 1], got {self.confidence}")

    def to_dict(self) -> dict:
        return {
            "doc_id": self.doc_id,
            "bbox": self.bbox.tolist(),
            "label": self.label,
            "confidence": self.confidence,
        }


@dataclass(frozen=True)
class Matching:
    pairs: tuple  # (detection index, ground-truth index, iou)
    unmatched_detections: tuple
    unmatched_ground_truth: tuple
    iou_threshold: float = DEFAULT_IOU_THRESHOLD

    def __len__(self) -> int:
        return len(self.pairs)


def match_detections(
    dets: Sequence[Detection],
    gts: Sequence[CharAnnotation],
    iou_threshold: float = DEFAULT_IOU_THRESHOLD,
) -> Matching:
    """Greedy one-to-one matching for a single document.

    Detections are visited by descending confidence (ties by input order);
    each claims the unmatched ground truth with the highest IoU at or above
    the threshold (ties by ground-truth order). The result is maximal: no
    unmatched detection overlaps an unmatched ground truth enough to pair.
    """
    if not 0 < iou_threshold <= 1:
        raise ValueError(f"iou_threshold must be in (0, 1], got {iou_threshold}")
    doc_ids = {d.doc_id for d in dets}
    if len(doc_ids) > 1:
        raise MatchingError(f"detections span several documents: {sorted(doc_ids)}")
    order = sorted(range(len(dets)), key=lambda i: (-dets[i].confidence, i))
    taken = [False] * len(gts)
    pairs = []
    matched_dets = set()
    for di in order:
        best, best_iou = -1, -1.0
        for gi, gt in enumerate(gts):
            if taken[gi]:
                continue
            v = iou(dets[di].bbox, gt.bbox)
            if v >= iou_threshold and v > best_iou:
                best, best_iou = gi, v
        if best >= 0:
            taken[best] = True
            matched_dets.add(di)
            pairs.append((di, best, best_iou))
    return Matching(
        tuple(pairs),
        tuple(i for i in range(len(dets)) if i not in matched_dets),
        tuple(i for i in range(len(gts)) if not taken[i]),
        iou_threshold,
    )


@dataclass
class ClassScore:
    support: int = 0
    raw_correct: int = 0
    variant_correct: int = 0

    @property
    def raw_accuracy(self) -> float:
        return _ratio(self.raw_correct, self.support)

    @property
    def variant_accuracy(self) -> float:
        return _ratio(self.variant_correct, self.support)


def _ratio(num: int, den: int) -> float:
    # empty denominators score 0 rather than raising
    return num / den if den else 0.0


@dataclass
class EvalReport:
    """Count-based report; ratios are derived so reports add up across pages."""

    n_ground_truth: int = 0
    n_detections: int = 0
    n_matched: int = 0
    raw_correct: int = 0
    variant_correct: int = 0
    confusable_hits: int = 0
    per_class: dict = field(default_factory=dict)
    iou_threshold: float = DEFAULT_IOU_THRESHOLD

    @property
    def raw_accuracy(self) -> float:
        return _ratio(self.raw_correct, self.n_ground_truth)

    @property
    def variant_accuracy(self) -> float:
        return _ratio(self.variant_correct, self.n_ground_truth)

    @property
    def precision(self) -> float:
        return _ratio(self.n_matched, self.n_detections)

    @property
    def recall(self) -> float:
        return _ratio(self.n_matched, self.n_ground_truth)

    @property
    def raw_incorrect(self) -> int:
        return self.n_matched - self.raw_correct

    @property
    def unmatched_ground_truth(self) -> int:
        return self.n_ground_truth - self.n_matched

    def __add__(self, other: "EvalReport") -> "EvalReport":
        if self.iou_threshold != other.iou_threshold:
            raise ValueError("cannot merge reports computed at different IoU thresholds")
        per_class = {c: ClassScore(s.support, s.raw_correct, s.variant_correct) for c, s in self.per_class.items()}
        for c, s in other.per_class.items():
            acc = per_class.setdefault(c, ClassScore())
            acc.support += s.support
            acc.raw_correct += s.raw_correct
            acc.variant_correct += s.variant_correct
        return EvalReport(
            self.n_ground_truth + other.n_ground_truth,
            self.n_detections + other.n_detections,
            self.n_matched + other.n_matched,
            self.raw_correct + other.raw_correct,
            self.variant_correct + other.variant_correct,
            self.confusable_hits + other.confusable_hits,
            per_class,
            self.iou_threshold,
        )

    def to_dict(self) -> dict:
        return {
            "iou_threshold": self.iou_threshold,
            "ground_truth": self.n_ground_truth,
            "detections": self.n_detections,
            "matched": self.n_matched,
            "raw_correct": self.raw_correct,
            "variant_correct": self.variant_correct,
            "confusable_hits": self.confusable_hits,
            "raw_accuracy": self.raw_accuracy,
            "variant_accuracy": self.variant_accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "per_class": {
                c: {"support": s.support, "raw_correct": s.raw_correct, "variant_correct": s.variant_correct}
                for c, s in sorted(self.per_class.items())
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, indent=2) + "\n"

    def format_table(self, max_classes: Optional[int] = 20) -> str:
        lines = [
            f"IoU threshold      {self.iou_threshold:.2f}",
            f"ground truth       {self.n_ground_truth}",
            f"detections         {self.n_detections}",
            f"matched            {self.n_matched}",
            f"precision          {self.precision:.4f}",
            f"recall             {self.recall:.4f}",
            f"raw accuracy       {self.raw_accuracy:.4f}",
            f"variant accuracy   {self.variant_accuracy:.4f}",
            f"confusable hits    {self.confusable_hits}",
            "",
            f"{'class':<8}{'support':>9}{'raw':>9}{'variant':>9}",
        ]
        rows = sorted(self.per_class.items(), key=lambda kv: (-kv[1].support, kv[0]))
        for c, s in rows[:max_classes]:
            lines.append(f"{c:<8}{s.support:>9}{s.raw_accuracy:>9.3f}{s.variant_accuracy:>9.3f}")
        if max_classes is not None and len(rows) > max_classes:
            lines.append(f"... {len(rows) - max_classes} more classes")
        return "\n".join(lines) + "\n"


def _check_matching(matching: Matching, dets, gts) -> None:
    det_idx = [p[0] for p in matching.pairs]
    gt_idx = [p[1] for p in matching.pairs]
    if len(set(det_idx)) != len(det_idx) or len(set(gt_idx)) != len(gt_idx):
        raise MatchingError("an index appears in more than one pair")
    if sorted(det_idx + list(matching.unmatched_detections)) != list(range(len(dets))):
        raise MatchingError("matching does not partition the detections")
    if sorted(gt_idx + list(matching.unmatched_ground_truth)) != list(range(len(gts))):
        raise MatchingError("matching does not partition the ground truth")
    for di, gi, _ in matching.pairs:
        if iou(dets[di].bbox, gts[gi].bbox) < matching.iou_threshold:
            raise MatchingError(f"pair ({di}, {gi}) is below the IoU threshold")


def score(
    matching: Matching,
    dets: Sequence[Detection],
    gts: Sequence[CharAnnotation],
    index: Optional[EquivalenceIndex] = None,
) -> EvalReport:
    _check_matching(matching, dets, gts)
    report = EvalReport(
        n_ground_truth=len(gts),
        n_detections=len(dets),
        n_matched=len(matching.pairs),
        iou_threshold=matching.iou_threshold,
    )
    for gt in gts:
        report.per_class.setdefault(gt.label, ClassScore()).support += 1
    for di, gi, _ in matching.pairs:
        truth, guess = gts[gi].label, dets[di].label
        cls = report.per_class[truth]
        if guess == truth:
            report.raw_correct += 1
            report.variant_correct += 1
            cls.raw_correct += 1
            cls.variant_correct += 1
            continue
        if index is not None:
            if index.are_equivalent(truth, guess):
                report.variant_correct += 1
                cls.variant_correct += 1
            if index.is_confusable(truth, guess):
                report.confusable_hits += 1
    return report


def group_by_doc(detections: Iterable[Detection]) -> dict[str, list[Detection]]:
    grouped: dict[str, list[Detection]] = defaultdict(list)
    for det in detections:
        grouped[det.doc_id].append(det)
    return dict(grouped)


def _documents(
    detections: Sequence[Detection],
    ground_truth: Union[Corpus, Iterable[DocumentRecord], Sequence[CharAnnotation]],
) -> list[tuple[str, Sequence[CharAnnotation]]]:
    if isinstance(ground_truth, Corpus):
        return [(doc.doc_id, doc.annotations) for doc in ground_truth.documents]
    items = list(ground_truth)
    if all(isinstance(item, CharAnnotation) for item in items):
        # a bare annotation list is one page
        doc_ids = {d.doc_id for d in detections}
        if len(doc_ids) > 1:
            raise MatchingError("bare ground-truth list given with detections from several documents")
        return [(next(iter(doc_ids), ""), items)]
    return [(doc.doc_id, doc.annotations) for doc in items]


def evaluate(
    detections: Sequence[Detection],
    ground_truth,
    index: Optional[EquivalenceIndex] = None,
    iou_threshold: float = DEFAULT_IOU_THRESHOLD,
    jobs: int = 1,
) -> EvalReport:
    """Match and score every page, then sum the per-page reports.

    `ground_truth` is a Corpus, an iterable of DocumentRecord, or a plain
    annotation list for a single page.
    """
    docs = _documents(detections, ground_truth)
    by_doc = group_by_doc(detections)
    unknown = set(by_doc) - {doc_id for doc_id, _ in docs}
    if unknown:
        raise UnknownDocumentError(unknown)

    def work(item):
        doc_id, gts = item
        dets = by_doc.get(doc_id, [])
        return score(match_detections(dets, gts, iou_threshold), dets, gts, index)

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        reports = list(pool.map(work, docs))
    total = EvalReport(iou_threshold=iou_threshold)
    for r in reports:
        total = total + r
    return total


@dataclass(frozen=True)
class ChangedVerdict:
    doc_id: str
    annotation_id: str
    truth: str
    predicted: str
    representative: str


@dataclass
class CorrectionReport:
    """Raw vs. variant-aware accuracy, overall and per class."""

    report: EvalReport
    changed: list[ChangedVerdict]

    @property
    def raw_accuracy(self) -> float:
        return self.report.raw_accuracy

    @property
    def variant_accuracy(self) -> float:
        return self.report.variant_accuracy

    @property
    def delta(self) -> float:
        return self.variant_accuracy - self.raw_accuracy

    def rows(self) -> list[tuple[str, int, float, float, float]]:
        out = []
        for c, s in sorted(self.report.per_class.items()):
            out.append((c, s.support, s.raw_accuracy, s.variant_accuracy, s.variant_accuracy - s.raw_accuracy))
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["class", "support", "raw", "variant", "delta"])
        for c, support, raw, var, delta in self.rows():
            writer.writerow([c, support, f"{raw:.6f}", f"{var:.6f}", f"{delta:.6f}"])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "raw_accuracy": self.raw_accuracy,
            "variant_accuracy": self.variant_accuracy,
            "delta": self.delta,
            "per_class": [
                {"class": c, "support": n, "raw": r, "variant": v, "delta": d}
                for c, n, r, v, d in self.rows()
            ],
            "changed": [
                {
                    "doc_id": ch.doc_id,
                    "annotation_id": ch.annotation_id,
                    "truth": ch.truth,
                    "predicted": ch.predicted,
                    "representative": ch.representative,
                }
                for ch in self.changed
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, indent=2) + "\n"


def compare_policies(
    detections: Sequence[Detection],
    ground_truth,
    index: EquivalenceIndex,
    iou_threshold: float = DEFAULT_IOU_THRESHOLD,
) -> CorrectionReport:
    """Score once with exact labels and once modulo the equivalence index.

    Lists every matched character whose verdict flips from wrong to right
    under normalization.
    """
    docs = _documents(detections, ground_truth)
    by_doc = group_by_doc(detections)
    unknown = set(by_doc) - {doc_id for doc_id, _ in docs}
    if unknown:
        raise UnknownDocumentError(unknown)
    total = EvalReport(iou_threshold=iou_threshold)
    changed = []
    for doc_id, gts in docs:
        dets = by_doc.get(doc_id, [])
        matching = match_detections(dets, gts, iou_threshold)
        total = total + score(matching, dets, gts, index)
        for di, gi, _ in matching.pairs:
            truth, guess = gts[gi].label, dets[di].label
            if truth != guess and index.are_equivalent(truth, guess):
                changed.append(
                    ChangedVerdict(doc_id, gts[gi].annotation_id, truth, guess, index.normalize(truth))
                )
    return CorrectionReport(total, changed)
