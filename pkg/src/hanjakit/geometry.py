"""Axis-aligned rectangles in pixel coordinates (origin top-left)."""

from __future__ import annotations

from typing import NamedTuple, Optional, Sequence


class Box(NamedTuple):
    x: float
    y: float
    width: float
    height: float

    @classmethod
    def from_seq(cls, values: Sequence[float]) -> "Box":
        if len(values) != 4:
            raise ValueError(f"bbox needs 4 values [x, y, w, h], got {len(values)}")
        return cls(*values)

    @property
    def x2(self) -> float:
        return self.x + self.width

    @property
    def y2(self) -> float:
        return self.y + self.height

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> tuple[float, float]:
        return (self.x + self.width / 2, self.y + self.height / 2)

    def is_positive(self) -> bool:
        return self.width > 0 and self.height > 0

    def inside(self, width: float, height: float) -> bool:
        """True if the box lies within an image of the given size."""
        return self.x >= 0 and self.y >= 0 and self.x2 <= width and self.y2 <= height

    def translate(self, dx: float, dy: float) -> "Box":
        return Box(self.x + dx, self.y + dy, self.width, self.height)

    def tolist(self) -> list:
        return [self.x, self.y, self.width, self.height]


def intersection(a: Box, b: Box) -> Optional[Box]:
    """Overlap rectangle of `a` and `b`, or None when they share no area."""
    x1 = max(a.x, b.x)
    y1 = max(a.y, b.y)
    x2 = min(a.x2, b.x2)
    y2 = min(a.y2, b.y2)
    if x2 <= x1 or y2 <= y1:
        return None
    return Box(x1, y1, x2 - x1, y2 - y1)


def intersection_area(a: Box, b: Box) -> float:
    inter = intersection(a, b)
    return 0 if inter is None else inter.area


def iou(a: Box, b: Box) -> float:
    """Intersection over union of two positive-extent boxes."""
    a, b = Box(*a), Box(*b)
    inter = intersection_area(a, b)
    if inter == 0:
        return 0.0
    return inter / (a.area + b.area - inter)
