"""Axis-aligned box arithmetic: IoU, size buckets, offset coding, NMS.

Boxes use corner coordinates (x1, y1) top-left, (x2, y2) bottom-right, with
strictly positive width and height. All functions here are pure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kernels

SIZE_BUCKETS = ("small", "medium", "large")
SMALL_MAX_AREA = 32 * 32
MEDIUM_MAX_AREA = 96 * 96


@dataclass(frozen=True)
class Box:
    """Axis-aligned rectangle with real-valued corner coordinates in pixels."""

    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x1) and math.isfinite(self.y1)
                and math.isfinite(self.x2) and math.isfinite(self.y2)):
            raise ValueError(f"box coordinates must be finite: {self}")
        if not (self.x1 < self.x2 and self.y1 < self.y2):
            raise ValueError(f"degenerate box (needs x1 < x2 and y1 < y2): {self}")

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1

    @property
    def area(self) -> float:
        return (self.x2 - self.x1) * (self.y2 - self.y1)

    @property
    def center(self) -> tuple[float, float]:
        return 0.5 * (self.x1 + self.x2), 0.5 * (self.y1 + self.y2)

    def as_array(self) -> np.ndarray:
        return np.array([self.x1, self.y1, self.x2, self.y2], dtype=np.float64)

    def sort_key(self) -> tuple[float, float, float, float]:
        return (self.x1, self.y1, self.x2, self.y2)


@dataclass(frozen=True)
class BoxDelta:
    """Dimensionless regression offsets: center shift over proposal size, log size ratios."""

    dx: float
    dy: float
    dw: float
    dh: float

    def as_array(self) -> np.ndarray:
        return np.array([self.dx, self.dy, self.dw, self.dh], dtype=np.float64)

    @staticmethod
    def from_array(values: np.ndarray) -> "BoxDelta":
        dx, dy, dw, dh = (float(v) for v in values)
        return BoxDelta(dx, dy, dw, dh)


def boxes_to_array(boxes: Sequence[Box]) -> np.ndarray:
    """Stack boxes into an (N, 4) float64 array; empty input gives (0, 4)."""
    if not boxes:
        return np.zeros((0, 4), dtype=np.float64)
    return np.array([[b.x1, b.y1, b.x2, b.y2] for b in boxes], dtype=np.float64)


def iou(a: Box, b: Box) -> float:
    """Intersection over union of two boxes; 0 when disjoint."""
    iw = min(a.x2, b.x2) - max(a.x1, b.x1)
    if iw <= 0.0:
        return 0.0
    ih = min(a.y2, b.y2) - max(a.y1, b.y1)
    if ih <= 0.0:
        return 0.0
    inter = iw * ih
    union = a.area + b.area - inter
    return inter / union


def size_bucket(box: Box) -> str:
    """Assign a box to a COCO-style area bucket.

    Half-open intervals: small [0, 32**2), medium [32**2, 96**2),
    large [96**2, inf), so every box lands in exactly one bucket.
    """
    area = box.area
    if area < SMALL_MAX_AREA:
        return "small"
    if area < MEDIUM_MAX_AREA:
        return "medium"
    return "large"


def encode_offsets(proposal: Box, gt: Box) -> BoxDelta:
    """Regression target from a proposal box to a ground-truth box."""
    pw, ph = proposal.width, proposal.height
    pcx, pcy = proposal.center
    gcx, gcy = gt.center
    return BoxDelta(
        dx=(gcx - pcx) / pw,
        dy=(gcy - pcy) / ph,
        dw=math.log(gt.width / pw),
        dh=math.log(gt.height / ph),
    )


def decode_offsets(delta: BoxDelta, proposal: Box) -> Box:
    """Apply regression offsets to a proposal box."""
    pw, ph = proposal.width, proposal.height
    pcx, pcy = proposal.center
    cx = pcx + delta.dx * pw
    cy = pcy + delta.dy * ph
    w = pw * math.exp(delta.dw)
    h = ph * math.exp(delta.dh)
    return Box(cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h)


def clip_box(box: Box, width: float, height: float) -> Box | None:
    """Clip a box to [0, width] x [0, height]; None if nothing remains."""
    x1 = min(max(box.x1, 0.0), width)
    y1 = min(max(box.y1, 0.0), height)
    x2 = min(max(box.x2, 0.0), width)
    y2 = min(max(box.y2, 0.0), height)
    if x1 < x2 and y1 < y2:
        return Box(x1, y1, x2, y2)
    return None


def nms(detections: Sequence[tuple[Box, float]], iou_threshold: float = 0.5) -> list[tuple[Box, float]]:
    """Greedy non-maximum suppression over (box, score) pairs.

    Processes detections in descending score order (ties broken by ascending
    corner coordinates) and keeps a box only while its IoU with every
    previously kept box stays at or below ``iou_threshold``. Returns the kept
    pairs in processing order.
    """
    if not detections:
        return []
    for _, score in detections:
        if not math.isfinite(score):
            raise ValueError(f"non-finite detection score: {score}")
    boxes = boxes_to_array([box for box, _ in detections])
    scores = np.array([score for _, score in detections], dtype=np.float64)
    keep = kernels.nms_keep(boxes, scores, float(iou_threshold))
    return [(detections[int(i)][0], detections[int(i)][1]) for i in keep]
