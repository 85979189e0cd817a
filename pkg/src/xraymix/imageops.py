"""Standard image augmentations with annotation propagation.

Every operation takes ``(image, annotations)`` and returns a new pair; inputs
are never mutated. Wherever interpolation produces a non-integer intensity
the value is rounded half-up to 8 bits.
"""

from __future__ import annotations

import io
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np
from PIL import Image
from scipy import ndimage

from .errors import CodecError, ParameterError
from .geometry import (
    BoundingBox,
    Crop,
    HFlip,
    ImageExtent,
    Rotate90,
    RotateAngle,
    VFlip,
    transform_box,
)

PROVENANCE_TAGS = ("original", "mixup", "bbox_mixup", "cutmix", "class_cutmix")


@dataclass(frozen=True, eq=False)
class PixelImage:
    """8-bit RGB raster stored as a ``(height, width, 3)`` uint8 array."""

    array: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.array)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise ParameterError(f"expected an HxWx3 array, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ParameterError("image must be at least 1x1")
        if arr.dtype != np.uint8:
            if arr.min() < 0 or arr.max() > 255:
                raise ParameterError("channel values must lie in [0, 255]")
            arr = arr.astype(np.uint8)
        arr = np.ascontiguousarray(arr)
        arr.setflags(write=False)
        object.__setattr__(self, "array", arr)

    @classmethod
    def from_buffer(cls, pixels: bytes, extent: ImageExtent) -> "PixelImage":
        if len(pixels) != extent.area * 3:
            raise ParameterError(
                f"buffer length {len(pixels)} != {extent.width}x{extent.height}x3"
            )
        arr = np.frombuffer(pixels, dtype=np.uint8).reshape(extent.height, extent.width, 3)
        return cls(arr.copy())

    @classmethod
    def filled(cls, extent: ImageExtent, value=0) -> "PixelImage":
        arr = np.empty((extent.height, extent.width, 3), dtype=np.uint8)
        arr[...] = value
        return cls(arr)

    @property
    def extent(self) -> ImageExtent:
        return ImageExtent(self.array.shape[1], self.array.shape[0])

    @property
    def width(self) -> int:
        return self.array.shape[1]

    @property
    def height(self) -> int:
        return self.array.shape[0]

    @property
    def pixels(self) -> bytes:
        """Row-major RGB buffer of length ``width * height * 3``."""
        return self.array.tobytes()

    def __eq__(self, other):
        if not isinstance(other, PixelImage):
            return NotImplemented
        return self.array.shape == other.array.shape and np.array_equal(self.array, other.array)

    __hash__ = None


@dataclass(frozen=True)
class Annotation:
    box: BoundingBox
    class_id: int
    weight: float = 1.0
    provenance: str = "original"

    def __post_init__(self):
        if not 0.0 < self.weight <= 1.0:
            raise ParameterError(f"annotation weight must lie in (0, 1], got {self.weight}")
        if self.provenance not in PROVENANCE_TAGS:
            raise ParameterError(f"unknown provenance tag {self.provenance!r}")

    def with_box(self, box: BoundingBox) -> "Annotation":
        return replace(self, box=box)


Annotations = List[Annotation]


def round_half_up(values: np.ndarray) -> np.ndarray:
    """Round to the nearest integer with ties going up, then clamp to 8 bits."""
    buf = np.array(values, dtype=np.float64, copy=True)
    buf += 0.5
    np.floor(buf, out=buf)
    np.clip(buf, 0, 255, out=buf)
    return buf.astype(np.uint8)


def _map_annotations(anns: Sequence[Annotation], transform) -> Annotations:
    out = []
    for ann in anns:
        box = transform_box(ann.box, transform)
        if box is not None:
            out.append(ann.with_box(box))
    return out


def flip(image: PixelImage, anns: Sequence[Annotation], axis: str) -> Tuple[PixelImage, Annotations]:
    """Mirror the image left-right (``horizontal``) or top-bottom (``vertical``)."""
    if axis == "horizontal":
        return PixelImage(image.array[:, ::-1]), _map_annotations(anns, HFlip(image.extent))
    if axis == "vertical":
        return PixelImage(image.array[::-1, :]), _map_annotations(anns, VFlip(image.extent))
    raise ParameterError(f"axis must be 'horizontal' or 'vertical', got {axis!r}")


def crop(image: PixelImage, anns: Sequence[Annotation], window: Crop) -> Tuple[PixelImage, Annotations]:
    """Cut a fixed window out of the image; boxes follow the crop retention rule."""
    arr = image.array[window.y : window.y + window.height, window.x : window.x + window.width]
    return PixelImage(arr), _map_annotations(anns, window)


def random_crop(
    image: PixelImage,
    anns: Sequence[Annotation],
    rng,
    min_frac: float = 0.75,
    max_frac: float = 1.0,
) -> Tuple[PixelImage, Annotations]:
    """Crop a window whose sides are independently 75-100% of the image's.

    Draws, in order: width fraction, height fraction, x offset, y offset.
    """
    if not 0.0 < min_frac <= max_frac <= 1.0:
        raise ParameterError(f"need 0 < min_frac <= max_frac <= 1, got {min_frac}, {max_frac}")
    if image.width < 2 or image.height < 2:
        raise ParameterError("random_crop needs an image of at least 2x2")
    W, H = image.width, image.height
    cw = min(W, max(1, math.floor(rng.uniform(min_frac, max_frac) * W + 0.5)))
    ch = min(H, max(1, math.floor(rng.uniform(min_frac, max_frac) * H + 0.5)))
    x = rng.integers(0, W - cw + 1)
    y = rng.integers(0, H - ch + 1)
    return crop(image, anns, Crop(image.extent, x, y, cw, ch))


def rotate90(image: PixelImage, anns: Sequence[Annotation], k: int) -> Tuple[PixelImage, Annotations]:
    """Rotate by ``k`` clockwise quarter turns."""
    k = k % 4
    if k == 0:
        return image, list(anns)
    return PixelImage(np.rot90(image.array, k=-k)), _map_annotations(anns, Rotate90(image.extent, k))


def rotate_angle(image: PixelImage, anns: Sequence[Annotation], degrees: float) -> Tuple[PixelImage, Annotations]:
    """Rotate clockwise by an arbitrary angle about the centre, same canvas.

    Uncovered corners are filled with black. Boxes become the hull of their
    rotated corners, which over-covers the object for non-right angles.
    """
    if float(degrees) % 90 == 0:
        return rotate90(image, anns, int(round(float(degrees) / 90)) % 4)
    H, W = image.height, image.width
    theta = math.radians(degrees)
    cos_t, sin_t = math.cos(theta), math.sin(theta)
    # Inverse map from output (row, col) pixel centres to input pixel indices.
    cy, cx = H / 2.0 - 0.5, W / 2.0 - 0.5
    matrix = np.array([[cos_t, -sin_t], [sin_t, cos_t]])
    offset = np.array([cy, cx]) - matrix @ np.array([cy, cx])
    out = np.empty_like(image.array)
    for c in range(3):
        chan = ndimage.affine_transform(
            image.array[:, :, c].astype(np.float64), matrix, offset=offset, order=1, mode="constant", cval=0.0
        )
        out[:, :, c] = round_half_up(chan)
    return PixelImage(out), _map_annotations(anns, RotateAngle(image.extent, degrees))


def rotate(
    image: PixelImage,
    anns: Sequence[Annotation],
    rng,
    angle_set: Sequence[float] = (90, 180, 270),
    allow_arbitrary: bool = False,
) -> Tuple[PixelImage, Annotations]:
    """Rotate by an angle drawn uniformly from ``angle_set``.

    Angles that are not multiples of 90 degrees are refused unless
    ``allow_arbitrary`` is set, since their boxes are loose hulls.
    """
    if not angle_set:
        raise ParameterError("angle_set must not be empty")
    angle = float(angle_set[rng.integers(0, len(angle_set))])
    if angle % 90 == 0:
        return rotate90(image, anns, int(round(angle / 90)) % 4)
    if not allow_arbitrary:
        raise ParameterError(f"angle {angle} is not a multiple of 90; set allow_arbitrary to use it")
    warnings.warn(f"rotating by {angle} degrees loosens bounding boxes", stacklevel=2)
    return rotate_angle(image, anns, angle)


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Normalized 1-D Gaussian taps with radius ``ceil(3 * sigma)``."""
    if sigma <= 0:
        raise ParameterError(f"sigma must be positive, got {sigma}")
    radius = int(math.ceil(3.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    taps = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return taps / taps.sum()


def gaussian_blur(image: PixelImage, sigma: float) -> PixelImage:
    """Separable Gaussian blur with half-sample reflection at the borders."""
    taps = gaussian_kernel(sigma)
    data = image.array.astype(np.float64)
    data = ndimage.correlate1d(data, taps, axis=0, mode="reflect")
    data = ndimage.correlate1d(data, taps, axis=1, mode="reflect")
    return PixelImage(round_half_up(data))


def blur(
    image: PixelImage,
    anns: Sequence[Annotation],
    rng,
    sigma_range: Tuple[float, float] = (0.5, 1.5),
) -> Tuple[PixelImage, Annotations]:
    lo, hi = sigma_range
    if not 0 < lo <= hi:
        raise ParameterError(f"invalid sigma range {sigma_range}")
    return gaussian_blur(image, rng.uniform(lo, hi)), list(anns)


def equalize_channel(channel: np.ndarray) -> np.ndarray:
    hist = np.bincount(channel.ravel(), minlength=256)
    if np.count_nonzero(hist) <= 1:
        return channel.copy()
    cdf = np.cumsum(hist)
    cdf_min = cdf[np.nonzero(hist)[0][0]]
    n = channel.size
    # Integer arithmetic keeps the half-up rounding exact.
    lut = (2 * 255 * (cdf - cdf_min) + (n - cdf_min)) // (2 * (n - cdf_min))
    lut = np.clip(lut, 0, 255).astype(np.uint8)
    return lut[channel]


def equalize(image: PixelImage, anns: Sequence[Annotation]) -> Tuple[PixelImage, Annotations]:
    """Per-channel histogram equalization over 256 bins."""
    out = np.empty_like(image.array)
    for c in range(3):
        out[:, :, c] = equalize_channel(image.array[:, :, c])
    return PixelImage(out), list(anns)


def encode_jpeg(image: PixelImage, quality: int) -> bytes:
    """Baseline JPEG with 4:2:0 chroma subsampling."""
    if not 1 <= int(quality) <= 100:
        raise ParameterError(f"JPEG quality must lie in 1..100, got {quality}")
    buf = io.BytesIO()
    try:
        Image.fromarray(image.array, mode="RGB").save(
            buf, format="JPEG", quality=int(quality), subsampling=2, optimize=False, progressive=False
        )
    except (OSError, ValueError) as exc:
        raise CodecError(f"JPEG encode failed: {exc}") from exc
    return buf.getvalue()


def decode_image(data: bytes) -> PixelImage:
    try:
        with Image.open(io.BytesIO(data)) as img:
            return PixelImage(np.asarray(img.convert("RGB")))
    except (OSError, ValueError) as exc:
        raise CodecError(f"image decode failed: {exc}") from exc


def jpeg_degrade(image: PixelImage, anns: Sequence[Annotation], quality: int = 10) -> Tuple[PixelImage, Annotations]:
    """Round-trip the image through a JPEG encode at the given quality."""
    return decode_image(encode_jpeg(image, quality)), list(anns)


def resize_bilinear(image: PixelImage, extent: ImageExtent) -> PixelImage:
    """Bilinear resize with pixel-centre alignment and edge clamping.

    Resizing to the same extent returns the pixels unchanged.
    """
    if image.extent == extent:
        return image
    src = image.array
    H, W = image.height, image.width

    def _axis(n_out, n_in):
        pos = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
        pos = np.clip(pos, 0.0, n_in - 1)
        i0 = np.floor(pos).astype(np.intp)
        i1 = np.minimum(i0 + 1, n_in - 1)
        return i0, i1, pos - i0

    r0, r1, fr = _axis(extent.height, H)
    c0, c1, fc = _axis(extent.width, W)
    fr = fr[:, None, None]
    fc = fc[None, :, None]
    # Separable: interpolate rows first, then columns.
    rows = np.take(src, r0, axis=0) * (1 - fr)
    rows += np.take(src, r1, axis=0) * fr
    out = np.take(rows, c0, axis=1) * (1 - fc)
    out += np.take(rows, c1, axis=1) * fc
    return PixelImage(round_half_up(out))
