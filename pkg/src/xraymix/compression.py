"""Lossy JPEG dataset variants and their storage/fidelity report."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import canonical
from .dataset_io import ANNOTATION_FILENAME, Dataset, Sample, serialize
from .errors import CodecError, ParameterError, ToolkitError
from .imageops import PixelImage, decode_image, encode_jpeg

log = logging.getLogger(__name__)

DEFAULT_LEVELS = (95, 50, 10)


def psnr(original: PixelImage, degraded: PixelImage) -> float:
    """Peak signal-to-noise ratio in dB; ``math.inf`` for identical images."""
    if original.extent != degraded.extent:
        raise ParameterError(
            f"extent mismatch: {original.width}x{original.height} vs {degraded.width}x{degraded.height}"
        )
    diff = original.array.astype(np.float64) - degraded.array.astype(np.float64)
    mse = float(np.mean(diff * diff))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(255.0 * 255.0 / mse)


@dataclass
class LevelReport:
    quality: int
    total_bytes: int
    ratio_vs_original: float
    sizes: Dict[str, int]
    mean_psnr_db: Optional[float] = None
    failures: List[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "quality": self.quality,
            "total_bytes": self.total_bytes,
            "ratio_vs_original": self.ratio_vs_original,
            "sizes": dict(self.sizes),
            "mean_psnr_db": self.mean_psnr_db,
            "failures": list(self.failures),
        }


@dataclass
class CompressionReport:
    original_bytes: int
    levels: List[LevelReport]

    def to_dict(self) -> dict:
        return {"original_bytes": self.original_bytes, "levels": [lv.to_dict() for lv in self.levels]}

    def to_json(self) -> str:
        return canonical.dumps(self.to_dict())

    def table(self) -> str:
        lines = [f"{'quality':>7}  {'bytes':>12}  {'ratio':>7}  {'PSNR dB':>8}"]
        lines.append(f"{'orig':>7}  {self.original_bytes:>12d}  {1.0:>7.3f}  {'-':>8}")
        for lv in self.levels:
            ps = "-" if lv.mean_psnr_db is None else f"{lv.mean_psnr_db:.2f}"
            lines.append(f"{lv.quality:>7d}  {lv.total_bytes:>12d}  {lv.ratio_vs_original:>7.3f}  {ps:>8}")
        return "\n".join(lines)


def _source_size(dataset: Dataset, sample: Sample) -> int:
    if dataset.root is not None:
        path = Path(dataset.root) / sample.image_path
        if path.is_file():
            return path.stat().st_size
    from .dataset_io import encode_png

    return len(encode_png(dataset.image_of(sample)))


def _variant_path(image_path: str) -> str:
    return str(Path(image_path).with_suffix(".jpg")).replace("\\", "/")


def compress_dataset(
    dataset: Dataset,
    levels: Sequence[int] = DEFAULT_LEVELS,
    out_dir=None,
    strict: bool = True,
    workers: int = 1,
    with_psnr: bool = True,
) -> Tuple[Dict[int, Dataset], CompressionReport]:
    """Re-encode every image as baseline JPEG at each quality level.

    Variants keep the source's relative layout with a ``.jpg`` suffix under
    ``out_dir/q<level>/`` and share one annotation document. Codec failures
    abort in strict mode and are recorded and skipped otherwise.
    """
    levels = [int(q) for q in levels]
    if not levels:
        raise ParameterError("at least one quality level is required")
    bad = [q for q in levels if not 1 <= q <= 100]
    if bad:
        raise ParameterError(f"quality levels must lie in 1..100, got {bad}")
    if len(set(levels)) != len(levels):
        raise ParameterError(f"duplicate quality levels in {levels}")

    samples = list(dataset.samples)
    original_bytes = sum(_source_size(dataset, s) for s in samples)

    def _encode(job):
        sample, quality = job
        try:
            original = dataset.image_of(sample)
            data = encode_jpeg(original, quality)
            score = psnr(original, decode_image(data)) if with_psnr else None
            return sample.id, data, score, None
        except (CodecError, OSError, ToolkitError) as exc:
            if strict:
                raise
            return sample.id, None, None, f"{sample.id}: {exc}"

    variants: Dict[int, Dataset] = {}
    reports: List[LevelReport] = []
    for quality in levels:
        with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
            results = list(pool.map(_encode, [(s, quality) for s in samples]))
        failures = [err for _, _, _, err in results if err]
        for err in failures:
            log.warning("q=%d skipping %s", quality, err)
        kept = [(s, r) for s, r in zip(samples, results) if r[1] is not None]
        variant_samples = [replace(s, image_path=_variant_path(s.image_path), image=None) for s, _ in kept]
        root = Path(out_dir) / f"q{quality}" if out_dir is not None else None
        if root is not None:
            for vs, (_, (_, data, _, _)) in zip(variant_samples, kept):
                target = root / vs.image_path
                target.parent.mkdir(parents=True, exist_ok=True)
                target.write_bytes(data)
        variant = Dataset(variant_samples, dict(dataset.classes), root, dict(dataset.metadata))
        if root is None:
            variant_samples = [
                vs.with_image(decode_image(r[1])) for vs, (_, r) in zip(variant_samples, kept)
            ]
            variant = Dataset(variant_samples, dict(dataset.classes), None, dict(dataset.metadata))
        else:
            (root / ANNOTATION_FILENAME).write_bytes(serialize(variant))
        sizes = {sid: len(data) for sid, data, _, _ in (r for _, r in kept)}
        total = sum(sizes.values())
        scores = [r[2] for _, r in kept if r[2] is not None]
        reports.append(
            LevelReport(
                quality=quality,
                total_bytes=total,
                ratio_vs_original=total / original_bytes if original_bytes else math.nan,
                sizes=sizes,
                mean_psnr_db=float(np.mean(scores)) if scores else None,
                failures=failures,
            )
        )
        variants[quality] = variant
    return variants, CompressionReport(original_bytes, reports)
