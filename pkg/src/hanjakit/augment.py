"""Random variable-size crop augmentation.

Each source page yields `k` crops. A crop's side lengths are drawn
independently per axis as a uniform fraction of the page size, and its
position uniformly among the placements that keep it inside the page.
Annotations are clipped to the crop and kept when enough of their area
survives. The training set for multiplier `k` is the originals plus all
crops, ``N * (1 + k)`` images.
"""

from __future__ import annotations

import hashlib
import logging
import shutil
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path, PurePosixPath
from typing import Callable, NamedTuple, Optional, Sequence, Union

import numpy as np

from .corpus import (
    CharAnnotation,
    Corpus,
    DocumentRecord,
    serialize_label_file,
    validate_corpus,
)
from .geometry import Box, intersection
from .raster import Raster, load_raster, save_png

log = logging.getLogger(__name__)

# identifies the seed-mixing scheme below; bump if derive_rng changes
GENERATOR_ID = "blake2b128(seed|doc_id|crop_index)->numpy.PCG64/v1"

LADDER_MULTIPLIERS = (0, 1, 3, 5, 10, 30, 50, 100)


class CropError(ValueError):
    pass


@dataclass(frozen=True)
class CropParams:
    min_fraction: float = 0.3
    max_fraction: float = 0.9
    min_crop_px: int = 64
    visibility_tau: float = 0.5

    def __post_init__(self):
        if not 0 < self.min_fraction <= self.max_fraction <= 1:
            raise ValueError(
                f"need 0 < min_fraction <= max_fraction <= 1, got {self.min_fraction}, {self.max_fraction}"
            )
        if not 0 < self.visibility_tau <= 1:
            raise ValueError(f"visibility_tau must be in (0, 1], got {self.visibility_tau}")
        if self.min_crop_px < 1:
            raise ValueError("min_crop_px must be >= 1")


class CropRegion(NamedTuple):
    x: int
    y: int
    width: int
    height: int

    @property
    def rect(self) -> Box:
        return Box(self.x, self.y, self.width, self.height)


def derive_rng(seed: int, doc_id: str, crop_index: int) -> np.random.Generator:
    """Generator for one crop, independent of the order documents are visited in."""
    key = f"{seed}\x1f{doc_id}\x1f{crop_index}".encode("utf-8")
    digest = hashlib.blake2b(key, digest_size=16).digest()
    return np.random.Generator(np.random.PCG64(int.from_bytes(digest, "big")))


def sample_crop_region(
    image_dims: tuple[int, int], params: CropParams, rng: np.random.Generator
) -> CropRegion:
    width, height = image_dims
    if width < params.min_crop_px or height < params.min_crop_px:
        raise CropError(
            f"image {width}x{height} is smaller than min_crop_px={params.min_crop_px}"
        )
    fw = rng.uniform(params.min_fraction, params.max_fraction)
    fh = rng.uniform(params.min_fraction, params.max_fraction)
    w = min(width, max(params.min_crop_px, int(round(fw * width))))
    h = min(height, max(params.min_crop_px, int(round(fh * height))))
    x = int(rng.integers(0, width - w + 1))
    y = int(rng.integers(0, height - h + 1))
    return CropRegion(x, y, w, h)


def clip_annotations(
    annotations: Sequence[CharAnnotation], region: CropRegion, visibility_tau: float = 0.5
) -> list[CharAnnotation]:
    """Clip boxes to `region` and move them into crop-local coordinates.

    A box survives when intersection_area / original_area >= visibility_tau.
    """
    rect = region.rect if isinstance(region, CropRegion) else Box(*region)
    kept = []
    for ann in annotations:
        inter = intersection(ann.bbox, rect)
        if inter is None:
            continue
        if inter.area / ann.bbox.area >= visibility_tau:
            kept.append(CharAnnotation(inter.translate(-rect.x, -rect.y), ann.label, ann.annotation_id))
    return kept


def crop_image(raster: Raster, region: CropRegion) -> Raster:
    x, y, w, h = region
    if x < 0 or y < 0 or w < 1 or h < 1 or x + w > raster.width or y + h > raster.height:
        raise CropError(f"region {tuple(region)} outside raster {raster.width}x{raster.height}")
    return Raster(raster.pixels[y : y + h, x : x + w].copy())


def expected_total(n: int, k: int) -> int:
    """Size of the combined training set: originals plus k crops each."""
    if n < 0 or k < 0:
        raise ValueError("n and k must be non-negative")
    return n * (1 + k)


@dataclass(frozen=True)
class AugmentedCrop:
    source_doc_id: str
    crop_index: int
    region: CropRegion
    record: DocumentRecord
    attempts: int = 1


@dataclass
class AugmentedCorpus:
    base: Corpus
    k: int
    crops: list[AugmentedCrop]
    manifest: dict = field(default_factory=dict)

    @property
    def warnings(self) -> list[str]:
        return self.manifest.get("warnings", [])

    def combined(self) -> Corpus:
        """Originals followed by the crops, in source-document order."""
        records = list(self.base.documents) + [c.record for c in self.crops]
        return Corpus(records, self.base.class_universe, self.base.root)

    def __len__(self) -> int:
        return len(self.base) + len(self.crops)


def crop_doc_id(doc_id: str, crop_index: int) -> str:
    return f"{doc_id}__crop{crop_index}"


def _augment_document(
    doc: DocumentRecord, k: int, params: CropParams, seed: int, max_retries: int
) -> tuple[list[AugmentedCrop], list[str]]:
    crops, warnings = [], []
    for i in range(k):
        rng = derive_rng(seed, doc.doc_id, i)
        attempts = 0
        while True:
            attempts += 1
            region = sample_crop_region(doc.image_dims, params, rng)
            kept = clip_annotations(doc.annotations, region, params.visibility_tau)
            if kept or not doc.annotations or attempts > max_retries:
                break
        if not kept:
            warnings.append(
                f"{doc.doc_id} crop {i}: no annotation survived after {attempts} attempt(s); kept empty"
            )
        new_id = crop_doc_id(doc.doc_id, i)
        record = DocumentRecord(
            new_id, f"{new_id}.png", (region.width, region.height), tuple(kept), doc.style
        )
        crops.append(AugmentedCrop(doc.doc_id, i, region, record, attempts))
    return crops, warnings


def augment_corpus(
    corpus: Corpus,
    k: int,
    params: CropParams = CropParams(),
    seed: int = 0,
    jobs: int = 1,
    max_retries: int = 10,
) -> AugmentedCorpus:
    """Plan `k` random crops per document. No pixels are touched here.

    Crops left without any annotation are resampled up to `max_retries`
    times, then kept empty with a warning in the manifest.
    """
    if k < 0:
        raise ValueError(f"k must be >= 0, got {k}")
    report = validate_corpus(corpus)
    if not report.is_valid:
        first = report.errors[0]
        raise ValueError(
            f"corpus invalid ({len(report.errors)} error(s)); first: {first.kind.value} in {first.doc_id}"
        )

    def work(doc):
        return _augment_document(doc, k, params, seed, max_retries)

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        results = list(pool.map(work, corpus.documents))

    crops, warnings = [], []
    for doc_crops, doc_warnings in results:
        crops.extend(doc_crops)
        warnings.extend(doc_warnings)
    for w in warnings:
        log.warning(w)
    manifest = {
        "generator": GENERATOR_ID,
        "seed": seed,
        "k": k,
        "params": asdict(params),
        "max_retries": max_retries,
        "documents": len(corpus),
        "crops": len(crops),
        "total": expected_total(len(corpus), k),
        "warnings": warnings,
    }
    return AugmentedCorpus(corpus, k, crops, manifest)


def _output_image_path(image_path: str) -> str:
    p = PurePosixPath(image_path.replace("\\", "/"))
    if p.is_absolute() or ".." in p.parts:
        return p.name
    return str(p)


def materialize(
    augmented: AugmentedCorpus,
    out_dir: Union[str, Path],
    jobs: int = 1,
    image_loader: Optional[Callable[[Path], Raster]] = None,
) -> Corpus:
    """Write the combined training set to `out_dir`.

    Originals keep their label content and image bytes; each crop becomes
    ``{doc_id}__crop{i}.png`` plus a label file of the same stem. Returns
    the written corpus rooted at `out_dir`. The caller writes the manifest.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    loader = image_loader or load_raster
    base = augmented.base
    by_source: dict[str, list[AugmentedCrop]] = {}
    for crop in augmented.crops:
        by_source.setdefault(crop.source_doc_id, []).append(crop)

    def work(doc: DocumentRecord) -> DocumentRecord:
        src = base.image_file(doc)
        rel = _output_image_path(doc.image_path)
        dest = out_dir / rel
        dest.parent.mkdir(parents=True, exist_ok=True)
        if not src.is_file():
            raise FileNotFoundError(f"{doc.doc_id}: image not found at {src}")
        if src.resolve() != dest.resolve():
            shutil.copyfile(src, dest)
        if rel != doc.image_path:
            doc = DocumentRecord(doc.doc_id, rel, doc.image_dims, doc.annotations, doc.style)
        (out_dir / f"{doc.doc_id}.json").write_bytes(serialize_label_file(doc))
        crops = by_source.get(doc.doc_id, [])
        if crops:
            raster = loader(src)
            if (raster.width, raster.height) != doc.image_dims:
                raise ValueError(
                    f"{doc.doc_id}: image is {raster.width}x{raster.height}, label says {doc.image_dims}"
                )
            for crop in crops:
                save_png(crop_image(raster, crop.region), out_dir / crop.record.image_path)
                (out_dir / f"{crop.record.doc_id}.json").write_bytes(serialize_label_file(crop.record))
        return doc

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        originals = list(pool.map(work, base.documents))
    records = originals + [c.record for c in augmented.crops]
    return Corpus(records, base.class_universe, out_dir)
