"""Labeled document corpus: label files, validation, split and class inventory.

One label file describes one document image::

    {"doc_id": "d001",
     "image": {"path": "d001.png", "width": 1000, "height": 800},
     "style": "cursive",
     "annotations": [{"id": "a0", "bbox": [10, 10, 50, 60], "label": "A"}]}
"""

from __future__ import annotations

import json
import math
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Optional, Union

import numpy as np

from .geometry import Box

LABEL_SUFFIX = ".json"


class ParseError(ValueError):
    """Label file content is not valid JSON or does not follow the schema."""

    def __init__(self, message: str, offset: Optional[int] = None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)


class ValidationError(ValueError):
    """A structurally valid label file violates a record invariant."""

    def __init__(self, message: str, annotation_id: Optional[str] = None):
        self.annotation_id = annotation_id
        super().__init__(message)


class Style(str, Enum):
    CURSIVE = "cursive"
    OTHER = "other"


@dataclass(frozen=True)
class CharAnnotation:
    bbox: Box
    label: str
    annotation_id: str

    def __post_init__(self):
        if not isinstance(self.bbox, Box):
            object.__setattr__(self, "bbox", Box.from_seq(self.bbox))


@dataclass(frozen=True)
class DocumentRecord:
    doc_id: str
    image_path: str
    image_dims: tuple[int, int]
    annotations: tuple[CharAnnotation, ...] = ()
    style: Style = Style.CURSIVE

    def __post_init__(self):
        object.__setattr__(self, "annotations", tuple(self.annotations))
        object.__setattr__(self, "image_dims", tuple(self.image_dims))
        object.__setattr__(self, "style", Style(self.style))

    @property
    def width(self) -> int:
        return self.image_dims[0]

    @property
    def height(self) -> int:
        return self.image_dims[1]

    @property
    def labels(self) -> list[str]:
        return [a.label for a in self.annotations]


@dataclass
class Corpus:
    documents: list[DocumentRecord]
    class_universe: Optional[frozenset] = None
    # directory that relative image paths are resolved against
    root: Optional[Path] = None

    def __len__(self) -> int:
        return len(self.documents)

    def __iter__(self):
        return iter(self.documents)

    @property
    def doc_ids(self) -> list[str]:
        return [d.doc_id for d in self.documents]

    def get(self, doc_id: str) -> DocumentRecord:
        for doc in self.documents:
            if doc.doc_id == doc_id:
                return doc
        raise KeyError(doc_id)

    def image_file(self, doc: DocumentRecord) -> Path:
        path = Path(doc.image_path)
        if not path.is_absolute() and self.root is not None:
            path = self.root / path
        return path

    def annotation_count(self) -> int:
        return sum(len(d.annotations) for d in self.documents)


# --------------------------------------------------------------------------
# Label file I/O
# --------------------------------------------------------------------------


def _require(obj: dict, key: str, kind, where: str):
    if not isinstance(obj, dict) or key not in obj:
        raise ParseError(f"{where}: missing key {key!r}")
    value = obj[key]
    # bool is an int subclass; reject it for numeric fields
    if not isinstance(value, kind) or (kind is not bool and isinstance(value, bool)):
        raise ParseError(f"{where}: {key!r} has wrong type {type(value).__name__}")
    return value


def check_record(record: DocumentRecord) -> None:
    """Raise ValidationError on the first invariant a record violates."""
    w, h = record.image_dims
    if w < 1 or h < 1:
        raise ValidationError(f"{record.doc_id}: image dims must be >= 1, got {w}x{h}")
    seen = set()
    for ann in record.annotations:
        aid = ann.annotation_id
        if aid in seen:
            raise ValidationError(f"{record.doc_id}: duplicate annotation id {aid!r}", aid)
        seen.add(aid)
        if not ann.bbox.is_positive():
            raise ValidationError(
                f"{record.doc_id}: annotation {aid!r} has non-positive extent {list(ann.bbox)}", aid
            )
        if not ann.bbox.inside(w, h):
            raise ValidationError(
                f"{record.doc_id}: annotation {aid!r} bbox {list(ann.bbox)} outside image {w}x{h}",
                aid,
            )
        if not ann.label:
            raise ValidationError(f"{record.doc_id}: annotation {aid!r} has an empty label", aid)


def parse_label_file(raw: Union[bytes, str]) -> DocumentRecord:
    """Parse one canonical label file into a validated DocumentRecord."""
    if isinstance(raw, bytes):
        try:
            text = raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ParseError(f"invalid UTF-8: {exc.reason}", exc.start) from None
    else:
        text = raw
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        offset = len(text[: exc.pos].encode("utf-8"))
        raise ParseError(f"malformed JSON: {exc.msg}", offset) from None

    if not isinstance(data, dict):
        raise ParseError("top level must be an object")
    doc_id = _require(data, "doc_id", str, "document")
    image = _require(data, "image", dict, doc_id)
    path = _require(image, "path", str, f"{doc_id}.image")
    width = _require(image, "width", int, f"{doc_id}.image")
    height = _require(image, "height", int, f"{doc_id}.image")
    style = data.get("style", "cursive")
    if style not in ("cursive", "other"):
        raise ParseError(f"{doc_id}: unknown style {style!r}")
    items = _require(data, "annotations", list, doc_id)

    annotations = []
    for i, item in enumerate(items):
        where = f"{doc_id}.annotations[{i}]"
        aid = _require(item, "id", str, where)
        bbox = _require(item, "bbox", list, where)
        if len(bbox) != 4 or not all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in bbox
        ):
            raise ParseError(f"{where}: bbox must be 4 numbers [x, y, w, h]")
        label = _require(item, "label", str, where)
        annotations.append(CharAnnotation(Box(*bbox), label, aid))

    record = DocumentRecord(doc_id, path, (width, height), tuple(annotations), Style(style))
    check_record(record)
    return record


def record_to_dict(record: DocumentRecord) -> dict:
    return {
        "doc_id": record.doc_id,
        "image": {"path": record.image_path, "width": record.width, "height": record.height},
        "style": record.style.value,
        "annotations": [
            {"id": a.annotation_id, "bbox": a.bbox.tolist(), "label": a.label}
            for a in record.annotations
        ],
    }


def serialize_label_file(record: DocumentRecord) -> bytes:
    return (json.dumps(record_to_dict(record), ensure_ascii=False, indent=2) + "\n").encode("utf-8")


def load_corpus(
    directory: Union[str, Path],
    class_universe: Optional[Iterable[str]] = None,
    jobs: int = 1,
) -> Corpus:
    """Parse every ``*.json`` label file directly under `directory`.

    Records are returned sorted by doc_id, whatever the file-system order.
    ``manifest.json`` is skipped.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"corpus directory not found: {directory}")
    files = sorted(
        p for p in directory.glob(f"*{LABEL_SUFFIX}") if p.name != "manifest.json"
    )

    def _load(path: Path) -> DocumentRecord:
        try:
            return parse_label_file(path.read_bytes())
        except (ParseError, ValidationError) as exc:
            exc.args = (f"{path.name}: {exc.args[0]}",)
            raise

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        records = list(pool.map(_load, files))
    records.sort(key=lambda r: r.doc_id)
    universe = frozenset(class_universe) if class_universe is not None else None
    return Corpus(records, universe, directory)


def write_corpus(corpus: Corpus, directory: Union[str, Path]) -> list[Path]:
    """Write one canonical label file per document, named ``{doc_id}.json``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for doc in corpus.documents:
        path = directory / f"{doc.doc_id}{LABEL_SUFFIX}"
        path.write_bytes(serialize_label_file(doc))
        paths.append(path)
    return paths


def load_class_universe(path: Union[str, Path]) -> frozenset:
    """Read a class universe file: one class per line, blank lines and ``#`` comments ignored."""
    classes = set()
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            classes.add(line)
    return frozenset(classes)


# --------------------------------------------------------------------------
# Validation
# --------------------------------------------------------------------------


class FindingKind(str, Enum):
    DUPLICATE_DOC_ID = "DuplicateDocId"
    DUPLICATE_ANNOTATION_ID = "DuplicateAnnotationId"
    BAD_IMAGE_DIMS = "BadImageDims"
    NON_POSITIVE_BOX = "NonPositiveBox"
    OUT_OF_BOUNDS = "OutOfBounds"
    EMPTY_LABEL = "EmptyLabel"
    UNKNOWN_CLASS = "UnknownClass"
    MULTI_CODEPOINT_LABEL = "MultiCodepointLabel"


WARNING_KINDS = frozenset({FindingKind.MULTI_CODEPOINT_LABEL})


@dataclass(frozen=True)
class Finding:
    kind: FindingKind
    doc_id: str
    annotation_id: Optional[str] = None
    detail: str = ""

    @property
    def is_warning(self) -> bool:
        return self.kind in WARNING_KINDS

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "doc_id": self.doc_id,
            "annotation_id": self.annotation_id,
            "detail": self.detail,
        }


@dataclass
class ValidationReport:
    findings: list[Finding] = field(default_factory=list)

    @property
    def errors(self) -> list[Finding]:
        return [f for f in self.findings if not f.is_warning]

    @property
    def warnings(self) -> list[Finding]:
        return [f for f in self.findings if f.is_warning]

    @property
    def is_valid(self) -> bool:
        """Valid iff there are no error findings; warnings do not count."""
        return not self.errors

    def __len__(self) -> int:
        return len(self.findings)

    def to_dict(self) -> dict:
        return {
            "valid": self.is_valid,
            "errors": [f.to_dict() for f in self.errors],
            "warnings": [f.to_dict() for f in self.warnings],
        }


def validate_corpus(corpus: Corpus) -> ValidationReport:
    report = ValidationReport()
    add = report.findings.append
    seen_docs = set()
    universe = corpus.class_universe
    for doc in corpus.documents:
        if doc.doc_id in seen_docs:
            add(Finding(FindingKind.DUPLICATE_DOC_ID, doc.doc_id))
        seen_docs.add(doc.doc_id)
        w, h = doc.image_dims
        if w < 1 or h < 1:
            add(Finding(FindingKind.BAD_IMAGE_DIMS, doc.doc_id, detail=f"{w}x{h}"))
        seen_anns = set()
        for ann in doc.annotations:
            aid = ann.annotation_id
            if aid in seen_anns:
                add(Finding(FindingKind.DUPLICATE_ANNOTATION_ID, doc.doc_id, aid))
            seen_anns.add(aid)
            if not ann.bbox.is_positive():
                add(Finding(FindingKind.NON_POSITIVE_BOX, doc.doc_id, aid, str(list(ann.bbox))))
            elif not ann.bbox.inside(w, h):
                add(Finding(FindingKind.OUT_OF_BOUNDS, doc.doc_id, aid, str(list(ann.bbox))))
            if not ann.label:
                add(Finding(FindingKind.EMPTY_LABEL, doc.doc_id, aid))
                continue
            if universe is not None and ann.label not in universe:
                add(Finding(FindingKind.UNKNOWN_CLASS, doc.doc_id, aid, ann.label))
            if len(ann.label) > 1:
                add(Finding(FindingKind.MULTI_CODEPOINT_LABEL, doc.doc_id, aid, ann.label))
    return report


# --------------------------------------------------------------------------
# Train / validation split
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SplitResult:
    train: tuple[str, ...]
    val: tuple[str, ...]
    seed: int
    val_fraction: float

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "val_fraction": self.val_fraction,
            "train": list(self.train),
            "val": list(self.val),
        }

    def to_json(self) -> bytes:
        return (json.dumps(self.to_dict(), ensure_ascii=False, indent=2) + "\n").encode("utf-8")

    @classmethod
    def from_json(cls, raw: Union[bytes, str]) -> "SplitResult":
        data = json.loads(raw)
        return cls(tuple(data["train"]), tuple(data["val"]), data["seed"], data["val_fraction"])


def validation_size(n: int, val_fraction: float) -> int:
    """floor(n * val_fraction), evaluated on the decimal value of the fraction.

    Going through the decimal string keeps e.g. 100 * 0.29 at 29 rather than
    the 28.999... that binary floating point produces.
    """
    return math.floor(n * Fraction(repr(float(val_fraction))))


def seeded_permutation(items: list, seed: int) -> list:
    """Fisher-Yates shuffle driven by a PCG64 stream seeded with `seed`."""
    rng = np.random.Generator(np.random.PCG64(seed))
    out = list(items)
    for i in range(len(out) - 1, 0, -1):
        j = int(rng.integers(0, i + 1))
        out[i], out[j] = out[j], out[i]
    return out


def split_corpus(corpus: Union[Corpus, Iterable[str]], val_fraction: float = 0.12, seed: int = 0) -> SplitResult:
    """Seeded train/validation split with ``|val| = floor(N * val_fraction)``.

    Doc ids are sorted before shuffling, so the result depends only on the
    set of ids and the seed. Accepts a Corpus or a plain iterable of doc ids.
    """
    if not 0 < val_fraction < 1:
        raise ValueError(f"val_fraction must be in (0, 1), got {val_fraction}")
    if seed < 0:
        raise ValueError("seed must be a non-negative integer")
    ids = corpus.doc_ids if isinstance(corpus, Corpus) else list(corpus)
    if len(set(ids)) != len(ids):
        raise ValueError("doc ids must be unique to split")
    n = len(ids)
    if n < 2:
        raise ValueError(f"need at least 2 documents to split, got {n}")
    n_val = validation_size(n, val_fraction)
    shuffled = seeded_permutation(sorted(ids), seed)
    val = tuple(sorted(shuffled[:n_val]))
    train = tuple(sorted(shuffled[n_val:]))
    return SplitResult(train, val, seed, val_fraction)


def subset(corpus: Corpus, doc_ids: Iterable[str]) -> Corpus:
    wanted = set(doc_ids)
    return Corpus([d for d in corpus.documents if d.doc_id in wanted], corpus.class_universe, corpus.root)


# --------------------------------------------------------------------------
# Class inventory
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ClassHistogram:
    counts: dict

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def __getitem__(self, label: str) -> int:
        return self.counts.get(label, 0)

    def most_common(self, n: Optional[int] = None) -> list[tuple[str, int]]:
        return sorted(self.counts.items(), key=lambda kv: (-kv[1], kv[0]))[:n]

    def to_dict(self) -> dict:
        return {"total": self.total, "counts": dict(self.most_common())}


def class_inventory(corpus: Union[Corpus, Iterable[DocumentRecord]]) -> ClassHistogram:
    counts = Counter()
    for doc in corpus:
        counts.update(a.label for a in doc.annotations)
    return ClassHistogram(dict(counts))
