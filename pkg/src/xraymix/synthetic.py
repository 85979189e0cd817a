"""Synthetic X-ray-like corpora for tests, demos and benchmarks.

Images are smooth pseudo-colour backgrounds with textured objects drawn in
their annotated boxes. A configurable share of images carries a pair of
heavily overlapping objects so isolation gating has something to reject.
"""

from __future__ import annotations

from typing import Dict, List, Optional, Sequence

import numpy as np

from .dataset_io import Dataset, Sample
from .geometry import BoundingBox, ImageExtent, iou
from .imageops import Annotation, PixelImage

OPIXRAY_CLASSES = {
    1: "folding knife",
    2: "straight knife",
    3: "scissor",
    4: "utility knife",
    5: "multi-tool knife",
}
SIXRAY_CLASSES = {1: "gun", 2: "knife", 3: "wrench", 4: "pliers", 5: "scissors"}


def _background(rng, h: int, w: int) -> np.ndarray:
    base = rng.uniform(170, 235, size=3).astype(np.float32)
    tilt = rng.uniform(-40, 40, size=(3, 2)).astype(np.float32)
    ys = (np.arange(h, dtype=np.float32) / h)[:, None, None]
    xs = (np.arange(w, dtype=np.float32) / w)[None, :, None]
    img = base + ys * tilt[:, 0] + xs * tilt[:, 1]
    img = img + rng.integers(-10, 11, size=(h, w, 1), dtype=np.int16).astype(np.float32)
    return img


def _paint(img: np.ndarray, box: BoundingBox, rng) -> None:
    x0, y0 = int(box.x_min), int(box.y_min)
    x1, y1 = int(box.x_max), int(box.y_max)
    h, w = y1 - y0, x1 - x0
    tone = rng.uniform(30, 140, size=3)
    yy, xx = np.ogrid[0:h, 0:w]
    stripes = 25.0 * np.sin(xx / rng.uniform(2, 6) + yy / rng.uniform(3, 9))
    region = img[y0:y1, x0:x1]
    region[...] = 0.35 * region + 0.65 * (tone + stripes[:, :, None])


def _random_box(rng, width: int, height: int, lo: int, hi: int) -> BoundingBox:
    bw = int(rng.integers(lo, min(hi, width - 1) + 1))
    bh = int(rng.integers(lo, min(hi, height - 1) + 1))
    x = int(rng.integers(0, width - bw + 1))
    y = int(rng.integers(0, height - bh + 1))
    return BoundingBox(x, y, bw, bh)


def make_sample(
    sample_id: str,
    extent: ImageExtent,
    rng,
    classes: Sequence[int],
    max_objects: int = 4,
    overlap: bool = False,
) -> Sample:
    lo = max(2, min(extent.width, extent.height) // 16)
    hi = max(lo, min(extent.width, extent.height) // 3)
    boxes: List[BoundingBox] = []
    for _ in range(int(rng.integers(1, max_objects + 1))):
        boxes.append(_random_box(rng, extent.width, extent.height, lo, hi))
    if overlap:
        anchor = boxes[0]
        dx = int(anchor.width * rng.uniform(0.0, 0.25))
        dy = int(anchor.height * rng.uniform(0.0, 0.25))
        x = min(anchor.x_min + dx, extent.width - anchor.width)
        y = min(anchor.y_min + dy, extent.height - anchor.height)
        boxes.append(BoundingBox(x, y, anchor.width, anchor.height))
    img = _background(rng, extent.height, extent.width)
    anns = []
    for box in boxes:
        _paint(img, box, rng)
        anns.append(Annotation(box, int(classes[int(rng.integers(0, len(classes)))])))
    pixels = PixelImage(np.clip(np.floor(img + 0.5), 0, 255).astype(np.uint8))
    return Sample(sample_id, f"images/{sample_id}.png", extent, anns, image=pixels)


def make_corpus(
    n: int,
    width: int = 512,
    height: int = 512,
    seed: int = 0,
    classes: Optional[Dict[int, str]] = None,
    overlap_share: float = 0.3,
    max_objects: int = 4,
) -> Dataset:
    """In-memory dataset of ``n`` synthetic samples with ids ``0..n-1``."""
    classes = dict(classes or OPIXRAY_CLASSES)
    rng = np.random.default_rng(seed)
    extent = ImageExtent(width, height)
    samples = [
        make_sample(
            str(i),
            extent,
            rng,
            sorted(classes),
            max_objects=max_objects,
            overlap=bool(rng.random() < overlap_share),
        )
        for i in range(n)
    ]
    return Dataset(samples, classes, None, {"description": f"synthetic corpus seed={seed}"})


def overlapping_pairs(sample: Sample, threshold: float = 0.3):
    """Index pairs of annotations whose IoU reaches ``threshold``."""
    boxes = sample.boxes
    return [
        (i, j)
        for i in range(len(boxes))
        for j in range(i + 1, len(boxes))
        if iou(boxes[i], boxes[j]) >= threshold
    ]
