"""COCO-style dataset loading, canonical saving and validation."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from PIL import Image

from . import canonical
from .errors import CodecError, ParseError, ValidationError
from .geometry import BoundingBox, ImageExtent, clip_box
from .imageops import Annotation, PixelImage, encode_jpeg

log = logging.getLogger(__name__)

ANNOTATION_FILENAME = "annotations.json"


@dataclass(frozen=True)
class Sample:
    """One image and its annotations.

    ``image`` holds decoded pixels for samples produced in memory (augmented
    outputs); samples loaded from disk leave it unset and are decoded on
    demand through ``Dataset.image_of``.
    """

    id: str
    image_path: str
    extent: ImageExtent
    annotations: Tuple[Annotation, ...] = ()
    image: Optional[PixelImage] = field(default=None, compare=False, repr=False)
    provenance: Dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "id", str(self.id))
        object.__setattr__(self, "annotations", tuple(self.annotations))

    def with_image(self, image: PixelImage, annotations=None, **changes) -> "Sample":
        anns = self.annotations if annotations is None else tuple(annotations)
        return replace(self, image=image, extent=image.extent, annotations=anns, **changes)

    @property
    def boxes(self) -> List[BoundingBox]:
        return [a.box for a in self.annotations]


IMAGE_CACHE_SIZE = 256


@dataclass
class Dataset:
    samples: List[Sample]
    classes: Dict[int, str]
    root: Optional[Path] = None
    metadata: Dict = field(default_factory=dict)

    def __post_init__(self):
        self._cache: "OrderedDict[str, PixelImage]" = OrderedDict()
        self._lock = threading.Lock()
        seen = set()
        dupes = [s.id for s in self.samples if s.id in seen or seen.add(s.id)]
        if dupes:
            raise ValidationError(f"duplicate sample ids: {sorted(set(dupes))}", dupes)
        unknown = sorted(
            {a.class_id for s in self.samples for a in s.annotations if a.class_id not in self.classes}
        )
        if unknown:
            raise ValidationError(f"annotations reference unknown category ids: {unknown}", unknown)

    def __len__(self):
        return len(self.samples)

    def by_id(self) -> Dict[str, Sample]:
        return {s.id: s for s in self.samples}

    def class_id(self, name_or_id) -> int:
        """Resolve a catalog entry given either its id or its name."""
        if isinstance(name_or_id, int) and name_or_id in self.classes:
            return name_or_id
        for cid, name in self.classes.items():
            if name == name_or_id or str(cid) == str(name_or_id):
                return cid
        raise ValidationError(f"unknown class {name_or_id!r}", [name_or_id])

    def image_of(self, sample: Sample) -> PixelImage:
        if sample.image is not None:
            return sample.image
        if self.root is None:
            raise ValidationError(f"sample {sample.id} has no pixels and the dataset has no image root")
        key = sample.image_path
        with self._lock:
            if key in self._cache:
                self._cache.move_to_end(key)
                return self._cache[key]
        image = read_image(Path(self.root) / key)
        self.remember(sample, image)
        return image

    def remember(self, sample: Sample, image: PixelImage) -> None:
        """Keep decoded pixels for a disk-backed sample in the bounded cache."""
        with self._lock:
            self._cache[sample.image_path] = image
            while len(self._cache) > IMAGE_CACHE_SIZE:
                self._cache.popitem(last=False)

    def materialized(self, sample: Sample) -> Sample:
        if sample.image is not None:
            return sample
        return replace(sample, image=self.image_of(sample))


def read_image(path) -> PixelImage:
    try:
        with Image.open(path) as img:
            return PixelImage(np.asarray(img.convert("RGB")))
    except FileNotFoundError:
        raise
    except (OSError, ValueError) as exc:
        raise CodecError(f"cannot decode {path}: {exc}") from exc


def _sort_key(sample_id: str):
    # Numeric ids sort numerically, ahead of any non-numeric id.
    if sample_id.isdigit():
        return (0, int(sample_id), sample_id)
    return (1, 0, sample_id)


def _json_id(sample_id: str):
    if sample_id.isdigit() and (sample_id == "0" or not sample_id.startswith("0")):
        return int(sample_id)
    return sample_id


def _parse_json(path: Path):
    try:
        text = path.read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError(f"{path}: not UTF-8 ({exc})") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc


def _check_image(root: Path, sample: Sample):
    """Decode one image; returns ``(pixels, None)`` or ``(None, problem)``."""
    path = root / sample.image_path
    try:
        pixels = read_image(path)
    except FileNotFoundError:
        return None, f"{sample.id}: missing image {sample.image_path}"
    except CodecError as exc:
        return None, f"{sample.id}: {exc}"
    if pixels.extent != sample.extent:
        return None, (
            f"{sample.id}: image {sample.image_path} is {pixels.width}x{pixels.height}, "
            f"declared {sample.extent.width}x{sample.extent.height}"
        )
    return pixels, None


def load_dataset(annotation_file, image_root=None, strict: bool = True, workers: int = 4) -> Dataset:
    """Load a COCO-style annotation file.

    Boxes extending past the image are clipped; boxes with no area inside the
    image and degenerate boxes are errors in strict mode and dropped with a
    warning otherwise. When ``image_root`` is given every image is decoded
    and checked against its declared size; in lenient mode mismatching
    samples are skipped and reported via ``metadata["skipped"]``.

    Raises:
        FileNotFoundError: the annotation file does not exist.
        ParseError: the file is not valid JSON or lacks the COCO arrays.
        ValidationError: strict-mode violations, unknown category ids.
    """
    path = Path(annotation_file)
    doc = _parse_json(path)
    if not isinstance(doc, dict) or not all(isinstance(doc.get(k), list) for k in ("images", "annotations", "categories")):
        raise ParseError(f"{path}: expected object with 'images', 'annotations' and 'categories' arrays")

    try:
        classes = {int(c["id"]): str(c["name"]) for c in doc["categories"]}
        images = {}
        for entry in doc["images"]:
            sid = str(entry["id"])
            if sid in images:
                raise ValidationError(f"duplicate image id {sid}", [sid])
            images[sid] = (str(entry["file_name"]), ImageExtent(int(entry["width"]), int(entry["height"])))
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"{path}: malformed images/categories entry ({exc})") from exc

    problems: List[str] = []
    per_image: Dict[str, List[Tuple[int, Annotation]]] = {sid: [] for sid in images}
    for pos, entry in enumerate(doc["annotations"]):
        try:
            sid = str(entry["image_id"])
            cid = int(entry["category_id"])
            x, y, w, h = (float(v) for v in entry["bbox"])
            weight = float(entry.get("weight", 1.0))
            prov = str(entry.get("provenance", "original"))
            order = entry.get("id", pos)
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"{path}: annotation #{pos} malformed ({exc})") from exc
        if sid not in images:
            raise ValidationError(f"annotation #{pos} references unknown image id {sid}", [sid])
        if cid not in classes:
            raise ValidationError(f"annotation #{pos} references unknown category id {cid}", [cid])
        extent = images[sid][1]
        box = None
        if w > 0 and h > 0:
            try:
                box = clip_box(BoundingBox(x, y, w, h), extent)
            except ValueError:
                box = None
        if box is None:
            msg = f"{sid}: annotation #{pos} box [{x}, {y}, {w}, {h}] is degenerate or outside the image"
            if strict:
                raise ValidationError(msg, [sid])
            log.warning("dropping %s", msg)
            problems.append(msg)
            continue
        per_image[sid].append((order, Annotation(box, cid, weight, prov)))

    samples = []
    for sid, (file_name, extent) in images.items():
        anns = [a for _, a in sorted(per_image[sid], key=lambda t: (str(type(t[0])), t[0]))]
        samples.append(Sample(sid, file_name, extent, anns))
    samples.sort(key=lambda s: _sort_key(s.id))

    root = Path(image_root) if image_root is not None else None
    skipped: List[str] = []
    decoded = []
    if root is not None:
        with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
            checked = list(pool.map(lambda s: _check_image(root, s), samples))
        errors = [e for _, e in checked]
        decoded = [(s, px) for s, (px, _) in zip(samples, checked) if px is not None]
        bad = [(s, e) for s, e in zip(samples, errors) if e]
        if bad and strict:
            raise ValidationError(
                "image validation failed:\n  " + "\n  ".join(e for _, e in bad), [s.id for s, _ in bad]
            )
        for s, e in bad:
            log.warning("skipping %s", e)
            problems.append(e)
            skipped.append(s.id)
        samples = [s for s, e in zip(samples, errors) if not e]

    metadata = dict(doc.get("info") or {})
    if problems:
        metadata["load_problems"] = problems
    if skipped:
        metadata["skipped"] = skipped
    dataset = Dataset(samples, classes, root, metadata)
    for sample, pixels in decoded[:IMAGE_CACHE_SIZE]:
        dataset.remember(sample, pixels)
    return dataset


def to_coco(dataset: Dataset) -> dict:
    """COCO document in canonical order: samples by id, annotations numbered from 1."""
    images, annotations = [], []
    next_id = 1
    for sample in sorted(dataset.samples, key=lambda s: _sort_key(s.id)):
        images.append(
            {
                "id": _json_id(sample.id),
                "file_name": sample.image_path,
                "width": sample.extent.width,
                "height": sample.extent.height,
            }
        )
        for ann in sample.annotations:
            annotations.append(
                {
                    "id": next_id,
                    "image_id": _json_id(sample.id),
                    "category_id": ann.class_id,
                    "bbox": [float(v) for v in ann.box.as_xywh()],
                    "area": float(ann.box.area),
                    "iscrowd": 0,
                    "weight": float(ann.weight),
                    "provenance": ann.provenance,
                }
            )
            next_id += 1
    categories = [{"id": cid, "name": name} for cid, name in sorted(dataset.classes.items())]
    info = {k: v for k, v in dataset.metadata.items() if k not in ("load_problems", "skipped")}
    return {"info": info, "images": images, "annotations": annotations, "categories": categories}


def serialize(dataset: Dataset) -> bytes:
    return canonical.dump_bytes(to_coco(dataset))


def encode_png(image: PixelImage) -> bytes:
    import io

    buf = io.BytesIO()
    Image.fromarray(image.array, mode="RGB").save(buf, format="PNG", compress_level=1)
    return buf.getvalue()


def _image_bytes(dataset: Dataset, sample: Sample, image_format: str, quality: int) -> bytes:
    image = dataset.image_of(sample)
    if image_format == "png":
        return encode_png(image)
    return encode_jpeg(image, quality)


def save_dataset(
    dataset: Dataset,
    out_dir,
    image_format: str = "png",
    quality: int = 95,
    workers: int = 1,
    annotation_name: str = ANNOTATION_FILENAME,
) -> dict:
    """Write images and a canonical annotation file under ``out_dir``.

    Image paths are rewritten to ``images/<id>.<ext>``. Returns a manifest
    mapping each written path (relative to ``out_dir``) to its byte size,
    plus ``total_bytes``.
    """
    if image_format not in ("png", "jpeg"):
        raise ValueError(f"image_format must be 'png' or 'jpeg', got {image_format!r}")
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    ext = "png" if image_format == "png" else "jpg"
    renamed = [replace(s, image_path=f"images/{_safe_name(s.id)}.{ext}") for s in dataset.samples]

    def _write(pair):
        src, dst = pair
        data = _image_bytes(dataset, src, image_format, quality)
        (out / dst.image_path).write_bytes(data)
        return dst.image_path, len(data)

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        written = list(pool.map(_write, zip(dataset.samples, renamed)))

    doc = serialize(Dataset(renamed, dataset.classes, out, dataset.metadata))
    (out / annotation_name).write_bytes(doc)
    files = dict(sorted(written))
    files[annotation_name] = len(doc)
    return {"files": files, "total_bytes": sum(files.values())}


def _safe_name(sample_id: str) -> str:
    keep = "".join(c if c.isalnum() or c in "-_." else "_" for c in sample_id)
    if keep != sample_id:
        keep += "-" + hashlib.sha1(sample_id.encode()).hexdigest()[:8]
    return keep


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def tree_digest(root) -> Dict[str, str]:
    """sha256 of every file below ``root`` keyed by relative path."""
    root = Path(root)
    return {
        str(p.relative_to(root)).replace(os.sep, "/"): sha256_file(p)
        for p in sorted(root.rglob("*"))
        if p.is_file()
    }
