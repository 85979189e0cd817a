"""Sample-combination augmentations adapted to detection.

``mixup`` blends two whole images and keeps the boxes of both.
``bbox_mixup`` blends only the area of one isolated object from the second
image into the same coordinates of the first. ``cutmix`` composites half of
one isolated object's box with the resized box of another, and
``class_cutmix`` restricts that pairing to two configured classes.

Objects are only ever selected when their IoU with every other object in
their own image is below the isolation threshold, so no partial object
without its annotation leaks into the output.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import MixerIneligible, ParameterError
from .geometry import BoundingBox, ImageExtent, Scale, is_isolated, pixel_region, transform_box
from .imageops import Annotation, PixelImage, resize_bilinear, round_half_up

MASK_SIDES = ("left", "right", "top", "bottom")


@dataclass(frozen=True)
class MixerParams:
    lam: float = 0.5
    mask_proportion: float = 0.5
    isolation_threshold: float = 0.3
    class_pair: Optional[Tuple[int, int]] = None

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ParameterError(f"lambda must lie in [0, 1], got {self.lam}")
        if not 0.0 < self.mask_proportion <= 1.0:
            raise ParameterError(f"mask_proportion must lie in (0, 1], got {self.mask_proportion}")
        if not 0.0 <= self.isolation_threshold <= 1.0:
            raise ParameterError(f"isolation_threshold must lie in [0, 1], got {self.isolation_threshold}")
        if self.class_pair is not None and len(tuple(self.class_pair)) != 2:
            raise ParameterError(f"class_pair must hold two class ids, got {self.class_pair}")


def isolated_indices(annotations: Sequence[Annotation], threshold: float, classes=None) -> List[int]:
    """Indices of annotations whose box overlaps no co-object at IoU >= threshold."""
    boxes = [a.box for a in annotations]
    out = []
    for i, ann in enumerate(annotations):
        if classes is not None and ann.class_id not in classes:
            continue
        if is_isolated(ann.box, boxes[:i] + boxes[i + 1 :], threshold):
            out.append(i)
    return out


def blend(a: np.ndarray, b: np.ndarray, lam: float) -> np.ndarray:
    """``round_half_up(lam * a + (1 - lam) * b)`` elementwise."""
    return round_half_up(lam * a.astype(np.float64) + (1.0 - lam) * b.astype(np.float64))


def half_split_mask(width: int, height: int, proportion: float, side: str) -> np.ndarray:
    """Boolean ``(height, width)`` mask with ``round(proportion * area)`` ones.

    Ones fill the named side of the box, sweeping whole columns (``left`` /
    ``right``) or rows (``top`` / ``bottom``) inward and finishing with a
    partial line, so the ones always form a single contiguous region.
    """
    if side not in MASK_SIDES:
        raise ParameterError(f"side must be one of {MASK_SIDES}, got {side!r}")
    if width < 1 or height < 1:
        raise ParameterError(f"mask needs a positive size, got {width}x{height}")
    area = width * height
    ones = min(area, int(np.floor(proportion * area + 0.5)))
    if side in ("left", "right"):
        # Column-major scan: fill column by column.
        flat = np.zeros(area, dtype=bool)
        flat[:ones] = True
        mask = flat.reshape(width, height).T
        return mask[:, ::-1].copy() if side == "right" else mask
    flat = np.zeros(area, dtype=bool)
    flat[:ones] = True
    mask = flat.reshape(height, width)
    return mask[::-1, :].copy() if side == "bottom" else mask


def _with_provenance(sample, image, annotations, **prov):
    merged = dict(sample.provenance)
    merged.setdefault("mixers", [])
    merged["mixers"] = list(merged["mixers"]) + [prov]
    return sample.with_image(image, annotations, provenance=merged)


def _scaled_annotations(sample, extent: ImageExtent, provenance: str) -> List[Annotation]:
    src = sample.image.extent
    scale = Scale(extent.width / src.width, extent.height / src.height)
    out = []
    for ann in sample.annotations:
        box = transform_box(ann.box, scale) if src != extent else ann.box
        out.append(Annotation(box, ann.class_id, ann.weight, provenance))
    return out


def _require_image(sample):
    if sample.image is None:
        raise ParameterError(f"sample {sample.id} has no decoded image attached")
    return sample.image


def mixup(sample_i, sample_j, params: MixerParams = MixerParams()):
    """Blend two whole images; the output keeps the annotations of both.

    ``x_j`` is resized to ``x_i``'s extent and its boxes are scaled with it.
    """
    img_i, img_j = _require_image(sample_i), _require_image(sample_j)
    img_j = resize_bilinear(img_j, img_i.extent)
    out = PixelImage(blend(img_i.array, img_j.array, params.lam))
    anns = list(sample_i.annotations) + _scaled_annotations(sample_j, img_i.extent, "mixup")
    return _with_provenance(sample_i, out, anns, kind="mixup", partner=sample_j.id)


def bbox_mixup(sample_i, sample_j, params: MixerParams = MixerParams(), rng=None, target_class=None):
    """Blend one isolated object of ``x_j`` into the same area of ``x_i``.

    Raises:
        MixerIneligible: ``x_j`` has no isolated object (of ``target_class``).
    """
    img_i, img_j = _require_image(sample_i), _require_image(sample_j)
    classes = None if target_class is None else {target_class}
    eligible = isolated_indices(sample_j.annotations, params.isolation_threshold, classes)
    if not eligible:
        raise MixerIneligible(f"sample {sample_j.id} has no isolated object to blend")
    pick = eligible[_index(rng, len(eligible))]
    img_j = resize_bilinear(img_j, img_i.extent)
    chosen = _scaled_annotations(sample_j, img_i.extent, "bbox_mixup")[pick]
    c0, r0, c1, r1 = pixel_region(chosen.box, img_i.extent)
    out = img_i.array.copy()
    out[r0:r1, c0:c1] = blend(img_i.array[r0:r1, c0:c1], img_j.array[r0:r1, c0:c1], params.lam)
    anns = list(sample_i.annotations) + [chosen]
    return _with_provenance(
        sample_i, PixelImage(out), anns, kind="bbox_mixup", partner=sample_j.id, partner_index=pick
    )


def _index(rng, n: int) -> int:
    if n == 1 and rng is None:
        return 0
    if rng is None:
        raise ParameterError("an rng stream is required to choose among several candidates")
    return int(rng.integers(0, n))


def _cutmix_pair(sample_i, idx_i: int, sample_j, idx_j: int, params: MixerParams, rng, tag: str):
    img_i, img_j = _require_image(sample_i), _require_image(sample_j)
    ann_i = sample_i.annotations[idx_i]
    ann_j = sample_j.annotations[idx_j]
    c0, r0, c1, r1 = pixel_region(ann_i.box, img_i.extent)
    bw, bh = c1 - c0, r1 - r0
    d0, s0, d1, s1 = pixel_region(ann_j.box, img_j.extent)
    patch_j = PixelImage(img_j.array[s0:s1, d0:d1])
    patch_j = resize_bilinear(patch_j, ImageExtent(bw, bh)).array
    side = MASK_SIDES[int(rng.integers(0, len(MASK_SIDES)))]
    mask = half_split_mask(bw, bh, params.mask_proportion, side)
    out = img_i.array.copy()
    region = out[r0:r1, c0:c1]
    out[r0:r1, c0:c1] = np.where(mask[:, :, None], region, patch_j)

    p = params.mask_proportion
    hybrid = [Annotation(ann_i.box, ann_i.class_id, p, tag)]
    if p < 1.0:
        hybrid.append(Annotation(ann_i.box, ann_j.class_id, 1.0 - p, tag))
    anns = list(sample_i.annotations[:idx_i]) + hybrid + list(sample_i.annotations[idx_i + 1 :])
    return _with_provenance(
        sample_i,
        PixelImage(out),
        anns,
        kind=tag,
        partner=sample_j.id,
        index=idx_i,
        partner_index=idx_j,
        side=side,
    )


def cutmix(sample_i, sample_j, params: MixerParams = MixerParams(), rng=None):
    """Composite half of an isolated object of ``x_i`` with one from ``x_j``.

    Draws, in order: the object of ``x_i``, the object of ``x_j`` and the
    side of the box that keeps ``x_i``'s pixels. The selected annotation is
    replaced by one annotation per source class at ``b_i``'s coordinates,
    weighted by the mask proportion and its complement.

    Raises:
        MixerIneligible: either image lacks an isolated object.
    """
    if rng is None:
        raise ParameterError("cutmix needs an rng stream")
    elig_i = isolated_indices(sample_i.annotations, params.isolation_threshold)
    if not elig_i:
        raise MixerIneligible(f"sample {sample_i.id} has no isolated object")
    elig_j = isolated_indices(sample_j.annotations, params.isolation_threshold)
    if not elig_j:
        raise MixerIneligible(f"sample {sample_j.id} has no isolated object")
    idx_i = elig_i[int(rng.integers(0, len(elig_i)))]
    idx_j = elig_j[int(rng.integers(0, len(elig_j)))]
    return _cutmix_pair(sample_i, idx_i, sample_j, idx_j, params, rng, "cutmix")


def class_cutmix(sample_i, pool, params: MixerParams, rng):
    """CutMix restricted to the two classes of ``params.class_pair``.

    ``pool`` is a ``Dataset``; it is only read. Partners are drawn uniformly
    among pool samples other than ``sample_i`` that hold an isolated object
    of the complementary class.

    Raises:
        MixerIneligible: no paired-class object in ``sample_i`` or no partner.
    """
    if params.class_pair is None:
        raise ParameterError("class_cutmix needs params.class_pair")
    a, b = params.class_pair
    elig_i = isolated_indices(sample_i.annotations, params.isolation_threshold, {a, b})
    if not elig_i:
        raise MixerIneligible(f"sample {sample_i.id} has no isolated object of class {a} or {b}")
    idx_i = elig_i[int(rng.integers(0, len(elig_i)))]
    other = b if sample_i.annotations[idx_i].class_id == a else a

    partners = []
    for cand in pool.samples:
        if cand.id == sample_i.id:
            continue
        found = isolated_indices(cand.annotations, params.isolation_threshold, {other})
        if found:
            partners.append((cand, found))
    if not partners:
        raise MixerIneligible(f"no partner sample holds an isolated object of class {other}")
    partner, found = partners[int(rng.integers(0, len(partners)))]
    idx_j = found[int(rng.integers(0, len(found)))]
    return _cutmix_pair(sample_i, idx_i, pool.materialized(partner), idx_j, params, rng, "class_cutmix")
