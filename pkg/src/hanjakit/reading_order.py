"""Vertical reading order: columns right to left, characters top to bottom."""

from __future__ import annotations

import json
import statistics
from dataclasses import dataclass
from typing import Any, Generic, Sequence, TypeVar

from .geometry import Box

T = TypeVar("T")

DEFAULT_GAP_FACTOR = 1.5


def _box_of(item) -> Box:
    box = getattr(item, "bbox", item)
    return box if isinstance(box, Box) else Box(*box)


def _label_of(item) -> str:
    return getattr(item, "label", "")


@dataclass(frozen=True)
class ColumnLayout(Generic[T]):
    """Columns in reading order, each a list of items in reading order.

    Items are whatever was clustered: bare boxes, CharAnnotation or Detection.
    """

    columns: tuple

    def __len__(self) -> int:
        return len(self.columns)

    def items(self) -> list:
        return [item for column in self.columns for item in column]


def cluster_columns(
    items: Sequence[T], gap_factor: float = DEFAULT_GAP_FACTOR, right_to_left: bool = True
) -> ColumnLayout[T]:
    """Group boxes into vertical columns by their horizontal centers.

    Centers are swept from right to left; a box opens a new column when its
    distance to the current column's running mean center exceeds
    ``gap_factor * median box width``. Within a column, items are ordered by
    top edge. `items` may be boxes or anything with a ``bbox`` attribute.
    """
    if not items:
        raise ValueError("cannot cluster an empty set of boxes")
    boxes = [_box_of(it) for it in items]
    for b in boxes:
        if not b.is_positive():
            raise ValueError(f"box must have positive extent: {list(b)}")
    threshold = gap_factor * statistics.median(b.width for b in boxes)

    # full tie-break key so that input order never matters
    def sweep_key(i):
        b = boxes[i]
        return (-b.center[0], b.y, b.x, b.width, b.height, _label_of(items[i]), i)

    columns: list[list[int]] = []
    running_sum = 0.0
    for i in sorted(range(len(items)), key=sweep_key):
        cx = boxes[i].center[0]
        if columns and abs(running_sum / len(columns[-1]) - cx) <= threshold:
            columns[-1].append(i)
            running_sum += cx
        else:
            columns.append([i])
            running_sum = cx

    def within_key(i):
        b = boxes[i]
        return (b.y, -b.center[0], b.height, b.width, _label_of(items[i]), i)

    ordered = [tuple(items[i] for i in sorted(col, key=within_key)) for col in columns]
    if not right_to_left:
        ordered.reverse()
    return ColumnLayout(tuple(ordered))


def sequence_text(layout: ColumnLayout) -> str:
    """Concatenate labels column by column, one line per column."""
    return "\n".join("".join(_label_of(it) for it in column) for column in layout.columns)


def order_sidecar(layout: ColumnLayout) -> list[dict[str, Any]]:
    """Per output character: its label, column, row and source box."""
    out = []
    for ci, column in enumerate(layout.columns):
        for ri, item in enumerate(column):
            entry = {"char": _label_of(item), "column": ci, "row": ri, "bbox": _box_of(item).tolist()}
            aid = getattr(item, "annotation_id", None)
            if aid is not None:
                entry["annotation_id"] = aid
            conf = getattr(item, "confidence", None)
            if conf is not None:
                entry["confidence"] = conf
            out.append(entry)
    return out


def order_document(items: Sequence, gap_factor: float = DEFAULT_GAP_FACTOR, right_to_left: bool = True) -> tuple[str, str]:
    """Text and JSON sidecar for one page; empty pages give empty text."""
    if not items:
        return "", "[]\n"
    layout = cluster_columns(items, gap_factor, right_to_left)
    sidecar = json.dumps(order_sidecar(layout), ensure_ascii=False, indent=2) + "\n"
    return sequence_text(layout), sidecar
