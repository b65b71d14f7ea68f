"""Class coverage, imbalance metrics and synthetic page composition.

Rare and missing classes are remedied by cutting glyphs out of annotated
pages (or loading them from a glyph bank on disk) and pasting them onto a
blank grid page in vertical reading order. The generated pages use the
canonical label schema, so they flow through augmentation and export like
any scanned page.
"""

from __future__ import annotations

import json
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Optional, Sequence, Union

import numpy as np

from .augment import derive_rng
from .corpus import CharAnnotation, ClassHistogram, Corpus, DocumentRecord
from .geometry import Box
from .raster import Raster, load_raster, save_png

# --------------------------------------------------------------------------
# Coverage and imbalance
# --------------------------------------------------------------------------


def missing_classes(hist: ClassHistogram, universe: Iterable[str]) -> frozenset:
    universe = frozenset(universe)
    if not universe:
        raise ValueError("class universe is empty")
    present = {c for c, n in hist.counts.items() if n > 0}
    return universe - present


def gini(values: Sequence[float]) -> float:
    """Gini coefficient of non-negative values (0 = perfectly even).

    Uses the sorted-rank form ``2 * sum(i * x_i) / (n * sum(x)) - (n + 1) / n``.
    """
    x = np.sort(np.asarray(values, dtype=float))
    n = x.size
    total = x.sum()
    if n == 0 or total == 0:
        return 0.0
    if (x < 0).any():
        raise ValueError("gini needs non-negative values")
    ranks = np.arange(1, n + 1)
    return float(2 * (ranks * x).sum() / (n * total) - (n + 1) / n)


@dataclass(frozen=True)
class ImbalanceReport:
    missing: frozenset
    counts: ClassHistogram
    gini: float
    max_min_ratio: float
    universe_size: int
    # labels seen in the corpus but absent from the universe
    outside_universe: frozenset = frozenset()
    warnings: tuple = ()

    def to_dict(self) -> dict:
        return {
            "universe_size": self.universe_size,
            "present": self.universe_size - len(self.missing),
            "missing_count": len(self.missing),
            "missing": sorted(self.missing),
            "outside_universe": sorted(self.outside_universe),
            "gini": self.gini,
            "max_min_ratio": self.max_min_ratio,
            "total": self.counts.total,
            "warnings": list(self.warnings),
        }


def imbalance_metrics(hist: ClassHistogram, universe: Iterable[str]) -> ImbalanceReport:
    """Gini over the whole universe (absent classes count as 0) and max/min ratio."""
    universe = frozenset(universe)
    if not universe:
        raise ValueError("class universe is empty")
    values = [hist[c] for c in sorted(universe)]
    notes = []
    if not any(values):
        msg = "all class counts are zero; gini reported as 0"
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
        notes.append(msg)
    nonzero = [v for v in values if v > 0]
    ratio = max(values) / max(1, min(nonzero)) if nonzero else 0.0
    return ImbalanceReport(
        missing=missing_classes(hist, universe),
        counts=hist,
        gini=gini(values),
        max_min_ratio=float(ratio),
        universe_size=len(universe),
        outside_universe=frozenset(c for c in hist.counts if c not in universe),
        warnings=tuple(notes),
    )


def deficits(hist: ClassHistogram, universe: Iterable[str], target: int) -> dict[str, int]:
    """How many more samples each universe class needs to reach `target`."""
    return {c: target - hist[c] for c in sorted(universe) if hist[c] < target}


# --------------------------------------------------------------------------
# Glyph bank
# --------------------------------------------------------------------------


class MissingImageError(FileNotFoundError):
    def __init__(self, doc_id: str, path=None):
        self.doc_id = doc_id
        super().__init__(f"{doc_id}: image not found" + (f" at {path}" if path else ""))


@dataclass(frozen=True)
class Glyph:
    raster: Raster
    doc_id: str
    annotation_id: str


@dataclass
class GlyphBank:
    glyphs: dict = field(default_factory=dict)

    def add(self, label: str, glyph: Glyph) -> None:
        self.glyphs.setdefault(label, []).append(glyph)

    def classes(self) -> frozenset:
        return frozenset(c for c, g in self.glyphs.items() if g)

    def __contains__(self, label: str) -> bool:
        return bool(self.glyphs.get(label))

    def __len__(self) -> int:
        return sum(len(g) for g in self.glyphs.values())


def pixel_region(bbox: Box, width: int, height: int) -> tuple[int, int, int, int]:
    """Smallest whole-pixel rectangle covering `bbox`, clipped to the image."""
    x0 = max(0, math.floor(bbox.x))
    y0 = max(0, math.floor(bbox.y))
    x1 = min(width, math.ceil(bbox.x2))
    y1 = min(height, math.ceil(bbox.y2))
    return x0, y0, x1 - x0, y1 - y0


ImageSource = Union[Callable[[DocumentRecord], Raster], Mapping[str, Raster], None]


def _resolve_source(corpus: Corpus, rasters: ImageSource) -> Callable[[DocumentRecord], Raster]:
    if rasters is None:

        def load(doc):
            path = corpus.image_file(doc)
            if not path.is_file():
                raise MissingImageError(doc.doc_id, path)
            return load_raster(path)

        return load
    if isinstance(rasters, Mapping):

        def lookup(doc):
            try:
                return rasters[doc.doc_id]
            except KeyError:
                raise MissingImageError(doc.doc_id) from None

        return lookup
    return rasters


def harvest_glyphs(
    corpus: Corpus,
    rasters: ImageSource = None,
    classes: Optional[Iterable[str]] = None,
    jobs: int = 1,
) -> GlyphBank:
    """Cut every annotated character out of its page.

    `rasters` maps a document to its decoded image: a callable, a dict keyed
    by doc_id, or None to read ``corpus.image_file(doc)`` from disk.
    """
    source = _resolve_source(corpus, rasters)
    wanted = frozenset(classes) if classes is not None else None

    def work(doc: DocumentRecord):
        anns = [a for a in doc.annotations if wanted is None or a.label in wanted]
        if not anns:
            return []
        page = source(doc)
        out = []
        for ann in anns:
            x, y, w, h = pixel_region(ann.bbox, page.width, page.height)
            if w < 1 or h < 1:
                continue
            crop = Raster(page.pixels[y : y + h, x : x + w].copy())
            out.append((ann.label, Glyph(crop, doc.doc_id, ann.annotation_id)))
        return out

    bank = GlyphBank()
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        for found in pool.map(work, corpus.documents):
            for label, glyph in found:
                bank.add(label, glyph)
    return bank


def _class_dirname(label: str) -> str:
    return "_".join(f"U+{ord(ch):04X}" for ch in label)


def save_bank(bank: GlyphBank, directory: Union[str, Path]) -> Path:
    """Persist as ``<class>/glyph_<n>.png`` plus ``index.json``.

    Class directories are named by codepoint (``U+9AD4``) so any label is a
    safe file name; the index maps them back to labels.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    index = {}
    for label in sorted(bank.glyphs):
        sub = _class_dirname(label)
        (directory / sub).mkdir(exist_ok=True)
        entries = []
        for n, glyph in enumerate(bank.glyphs[label]):
            name = f"glyph_{n}.png"
            save_png(glyph.raster, directory / sub / name)
            entries.append({"file": f"{sub}/{name}", "doc_id": glyph.doc_id, "annotation_id": glyph.annotation_id})
        index[label] = entries
    path = directory / "index.json"
    path.write_text(json.dumps({"classes": index}, ensure_ascii=False, indent=2) + "\n", encoding="utf-8")
    return path


def load_bank(directory: Union[str, Path]) -> GlyphBank:
    directory = Path(directory)
    data = json.loads((directory / "index.json").read_text(encoding="utf-8"))
    bank = GlyphBank()
    for label, entries in data["classes"].items():
        for e in entries:
            bank.add(label, Glyph(load_raster(directory / e["file"]), e["doc_id"], e["annotation_id"]))
    return bank


# --------------------------------------------------------------------------
# Page composition
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class GridSpec:
    """Page grid. Glyphs are fitted into ``glyph_fraction`` of a cell and
    jittered by at most ``jitter_fraction`` of the cell size per axis."""

    columns: int
    rows: int
    cell_width: int = 64
    cell_height: int = 64
    margin: int = 16
    glyph_fraction: float = 0.5
    jitter_fraction: float = 0.05
    channels: int = 1
    background: int = 255

    def __post_init__(self):
        if self.columns < 1 or self.rows < 1:
            raise ValueError("grid needs at least one column and one row")
        if self.cell_width < 2 or self.cell_height < 2:
            raise ValueError("cells must be at least 2x2 pixels")
        if not 0 < self.glyph_fraction <= 1:
            raise ValueError("glyph_fraction must be in (0, 1]")
        if not 0 <= self.jitter_fraction < 0.5:
            raise ValueError("jitter_fraction must be in [0, 0.5)")
        if self.channels not in (1, 3):
            raise ValueError("channels must be 1 or 3")

    @property
    def capacity(self) -> int:
        return self.columns * self.rows

    @property
    def page_size(self) -> tuple[int, int]:
        return (
            2 * self.margin + self.columns * self.cell_width,
            2 * self.margin + self.rows * self.cell_height,
        )

    def cell_origin(self, slot: int) -> tuple[int, int]:
        """Top-left of the slot-th cell in fill order (rightmost column first)."""
        col, row = divmod(slot, self.rows)
        x = self.margin + (self.columns - 1 - col) * self.cell_width
        y = self.margin + row * self.cell_height
        return x, y


def resize_nearest(raster: Raster, width: int, height: int) -> Raster:
    """Nearest-neighbour resample sampling source pixel centres."""
    src_h, src_w = raster.height, raster.width
    ys = ((np.arange(height) + 0.5) * src_h / height).astype(np.int64)
    xs = ((np.arange(width) + 0.5) * src_w / width).astype(np.int64)
    ys = np.minimum(ys, src_h - 1)
    xs = np.minimum(xs, src_w - 1)
    return Raster(raster.pixels[ys[:, None], xs[None, :]])


def fit_size(width: int, height: int, max_width: int, max_height: int) -> tuple[int, int]:
    scale = min(max_width / width, max_height / height)
    return (
        max(1, min(max_width, math.floor(width * scale))),
        max(1, min(max_height, math.floor(height * scale))),
    )


def compose_synthetic_page(
    bank: GlyphBank,
    grid: GridSpec,
    class_sequence: Sequence[str],
    rng: np.random.Generator,
    doc_id: str = "synth",
    image_path: Optional[str] = None,
) -> tuple[Raster, DocumentRecord]:
    """Paste one glyph per class into the grid in vertical reading order.

    Cells fill top to bottom within a column, columns right to left. Each
    annotation box is exactly the pasted glyph's footprint.
    """
    if len(class_sequence) > grid.capacity:
        raise ValueError(f"sequence of {len(class_sequence)} does not fit a {grid.columns}x{grid.rows} grid")
    for label in class_sequence:
        if label not in bank:
            raise KeyError(f"class {label!r} has no glyph in the bank")

    page_w, page_h = grid.page_size
    shape = (page_h, page_w) if grid.channels == 1 else (page_h, page_w, 3)
    pixels = np.full(shape, grid.background, dtype=np.uint8)
    max_w = max(1, math.floor(grid.cell_width * grid.glyph_fraction))
    max_h = max(1, math.floor(grid.cell_height * grid.glyph_fraction))
    jit_x = math.floor(grid.cell_width * grid.jitter_fraction)
    jit_y = math.floor(grid.cell_height * grid.jitter_fraction)

    annotations = []
    for slot, label in enumerate(class_sequence):
        choices = bank.glyphs[label]
        glyph = choices[int(rng.integers(0, len(choices)))]
        dx = int(rng.integers(-jit_x, jit_x + 1))
        dy = int(rng.integers(-jit_y, jit_y + 1))
        src = glyph.raster.to_channels(grid.channels)
        w, h = fit_size(src.width, src.height, max_w, max_h)
        scaled = resize_nearest(src, w, h)
        cx, cy = grid.cell_origin(slot)
        ox = min(max((grid.cell_width - w) // 2 + dx, 0), grid.cell_width - w)
        oy = min(max((grid.cell_height - h) // 2 + dy, 0), grid.cell_height - h)
        x, y = cx + ox, cy + oy
        pixels[y : y + h, x : x + w] = scaled.pixels
        annotations.append(CharAnnotation(Box(x, y, w, h), label, f"a{slot:04d}"))

    record = DocumentRecord(
        doc_id, image_path or f"{doc_id}.png", (page_w, page_h), tuple(annotations), "cursive"
    )
    return Raster(pixels), record


def plan_pages(classes: Sequence[str], per_page: int, copies: int = 1) -> list[list[str]]:
    """Chunk ``copies`` of each class into page-sized sequences, in the given order."""
    if per_page < 1:
        raise ValueError("per_page must be >= 1")
    flat = [c for c in classes for _ in range(copies)]
    return [flat[i : i + per_page] for i in range(0, len(flat), per_page)]


def synthesize_pages(
    bank: GlyphBank,
    grid: GridSpec,
    sequences: Sequence[Sequence[str]],
    seed: int = 0,
    prefix: str = "synth",
    jobs: int = 1,
) -> list[tuple[Raster, DocumentRecord]]:
    """Compose one page per sequence, each from its own seeded stream."""

    def work(item):
        i, seq = item
        doc_id = f"{prefix}{i:05d}"
        return compose_synthetic_page(bank, grid, seq, derive_rng(seed, doc_id, 0), doc_id)

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        return list(pool.map(work, enumerate(sequences)))
