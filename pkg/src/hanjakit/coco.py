"""COCO-style dataset export/import and detection result loading.

Exported files carry two extra keys so a corpus survives the round trip:
``doc_id`` and ``style`` on images, ``ann_key`` (the annotation id) on
annotations. Detector stacks that read COCO ignore unknown keys.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

from .corpus import CharAnnotation, Corpus, DocumentRecord
from .evaluation import Detection, UnknownDocumentError
from .geometry import Box


class UnknownClassError(KeyError):
    def __init__(self, labels: Iterable[str]):
        self.labels = sorted(set(labels))
        super().__init__(f"classes missing from the category list: {self.labels}")

    def __str__(self) -> str:
        return self.args[0]


def build_categories(classes: Iterable[str]) -> list[dict]:
    """Sorted class list with 1-based ids."""
    return [{"id": i, "name": c} for i, c in enumerate(sorted(set(classes)), start=1)]


def export_coco(corpus: Union[Corpus, Iterable[DocumentRecord]], categories: Optional[Sequence[dict]] = None) -> dict:
    """COCO detection dataset for a corpus (or an augmented corpus' combined set).

    Without `categories`, ids follow the sorted labels present in the corpus.
    With a fixed category list, a label outside it raises UnknownClassError.
    """
    docs = sorted(corpus, key=lambda d: d.doc_id)
    if categories is None:
        categories = build_categories(a.label for d in docs for a in d.annotations)
    cat_id = {c["name"]: c["id"] for c in categories}
    unknown = {a.label for d in docs for a in d.annotations if a.label not in cat_id}
    if unknown:
        raise UnknownClassError(unknown)

    images, annotations = [], []
    ann_id = 1
    for image_id, doc in enumerate(docs, start=1):
        images.append(
            {
                "id": image_id,
                "file_name": doc.image_path,
                "width": doc.width,
                "height": doc.height,
                "doc_id": doc.doc_id,
                "style": doc.style.value,
            }
        )
        for ann in doc.annotations:
            annotations.append(
                {
                    "id": ann_id,
                    "image_id": image_id,
                    "category_id": cat_id[ann.label],
                    "bbox": ann.bbox.tolist(),
                    "area": ann.bbox.area,
                    "iscrowd": 0,
                    "ann_key": ann.annotation_id,
                }
            )
            ann_id += 1
    return {
        "images": images,
        "annotations": annotations,
        "categories": [{"id": c["id"], "name": c["name"]} for c in categories],
    }


def dumps_coco(dataset: dict) -> str:
    return json.dumps(dataset, ensure_ascii=False, indent=2) + "\n"


def import_coco(dataset: dict) -> Corpus:
    """Rebuild a corpus from a COCO dataset (inverse of export_coco)."""
    names = {c["id"]: c["name"] for c in dataset["categories"]}
    per_image: dict[int, list[CharAnnotation]] = {img["id"]: [] for img in dataset["images"]}
    for ann in dataset["annotations"]:
        key = ann.get("ann_key", str(ann["id"]))
        per_image[ann["image_id"]].append(CharAnnotation(Box(*ann["bbox"]), names[ann["category_id"]], key))
    docs = []
    for img in dataset["images"]:
        doc_id = img.get("doc_id", Path(img["file_name"]).stem)
        docs.append(
            DocumentRecord(
                doc_id,
                img["file_name"],
                (img["width"], img["height"]),
                tuple(per_image[img["id"]]),
                img.get("style", "cursive"),
            )
        )
    return Corpus(docs)


def _parse_native(records: list) -> list[Detection]:
    dets = []
    for i, rec in enumerate(records):
        try:
            dets.append(
                Detection(rec["doc_id"], Box(*rec["bbox"]), rec["label"], float(rec.get("confidence", 1.0)))
            )
        except (KeyError, TypeError) as exc:
            raise ValueError(f"detection record {i} is malformed: {exc}") from None
    return dets


def _parse_coco_results(records: list, dataset: dict) -> list[Detection]:
    doc_of = {img["id"]: img.get("doc_id", Path(img["file_name"]).stem) for img in dataset["images"]}
    name_of = {c["id"]: c["name"] for c in dataset["categories"]}
    dets, bad_images = [], set()
    for i, rec in enumerate(records):
        if rec["image_id"] not in doc_of:
            bad_images.add(str(rec["image_id"]))
            continue
        if rec["category_id"] not in name_of:
            raise ValueError(f"result {i}: unknown category_id {rec['category_id']}")
        dets.append(
            Detection(
                doc_of[rec["image_id"]],
                Box(*rec["bbox"]),
                name_of[rec["category_id"]],
                float(rec.get("score", 1.0)),
            )
        )
    if bad_images:
        raise UnknownDocumentError(bad_images)
    return dets


def import_detections(
    source: Union[str, Path, bytes, list],
    fmt: str = "native",
    coco_dataset: Optional[dict] = None,
    corpus: Optional[Corpus] = None,
) -> list[Detection]:
    """Load detections from the native results format or COCO results.

    Native: ``[{"doc_id", "bbox": [x, y, w, h], "label", "confidence"}]``;
    a missing confidence counts as 1.0. COCO results need the exported
    dataset to map image and category ids back. When `corpus` is given,
    detections for unknown documents raise UnknownDocumentError.
    """
    if isinstance(source, (str, Path)):
        records = json.loads(Path(source).read_text(encoding="utf-8"))
    elif isinstance(source, bytes):
        records = json.loads(source.decode("utf-8"))
    else:
        records = source
    if not isinstance(records, list):
        raise ValueError("detection file must hold a JSON array")
    if fmt == "native":
        dets = _parse_native(records)
    elif fmt == "coco":
        if coco_dataset is None:
            raise ValueError("COCO results need the COCO dataset they refer to")
        dets = _parse_coco_results(records, coco_dataset)
    else:
        raise ValueError(f"unknown detection format {fmt!r}")
    if corpus is not None:
        known = set(corpus.doc_ids)
        unknown = {d.doc_id for d in dets if d.doc_id not in known}
        if unknown:
            raise UnknownDocumentError(unknown)
    return dets


def dumps_detections(dets: Iterable[Detection]) -> str:
    return json.dumps([d.to_dict() for d in dets], ensure_ascii=False, indent=2) + "\n"
