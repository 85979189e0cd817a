"""Seeded, declarative augmentation pipelines.

Each (seed, sample id, spec index) triple owns an independent Philox stream,
so results do not depend on how samples are scheduled across workers.
"""

from __future__ import annotations

import hashlib
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import yaml

from . import imageops, mixers
from .dataset_io import Dataset, Sample
from .errors import ConfigError, MixerIneligible, ParseError

log = logging.getLogger(__name__)

KINDS = (
    "RandomFlip",
    "RandomCrop",
    "Rotate",
    "Blur",
    "Equalise",
    "JPEG",
    "MixUp",
    "BboxMixUp",
    "CutMix",
    "ClassCutMix",
)
MIXER_KINDS = ("MixUp", "BboxMixUp", "CutMix", "ClassCutMix")
OUTPUT_MODES = ("transform", "extend")
SEED_MASK = (1 << 64) - 1


class RandomStream:
    """Thin wrapper over a Philox generator that counts its draws."""

    def __init__(self, key: int):
        self._gen = np.random.Generator(np.random.Philox(key=key))
        self.draws = 0

    def random(self) -> float:
        self.draws += 1
        return float(self._gen.random())

    def uniform(self, low: float, high: float) -> float:
        self.draws += 1
        return float(self._gen.uniform(low, high))

    def integers(self, low: int, high: int) -> int:
        """Uniform integer in ``[low, high)``."""
        self.draws += 1
        return int(self._gen.integers(low, high))


def derive_stream(seed: int, sample_id: str, spec_index: int) -> RandomStream:
    """Stream keyed by a BLAKE2b digest of the triple."""
    material = f"{int(seed) & SEED_MASK}\x1f{sample_id}\x1f{int(spec_index)}".encode("utf-8")
    key = int.from_bytes(hashlib.blake2b(material, digest_size=16).digest(), "little")
    return RandomStream(key)


_DEFAULT_PARAMS: Dict[str, Dict[str, Any]] = {
    "RandomFlip": {"axes": ["horizontal", "vertical"]},
    "RandomCrop": {"min_frac": 0.75, "max_frac": 1.0},
    "Rotate": {"angles": [90, 180, 270], "allow_arbitrary": False},
    "Blur": {"sigma_range": [0.5, 1.5]},
    "Equalise": {},
    "JPEG": {"quality": 10},
    "MixUp": {"lambda": 0.5},
    "BboxMixUp": {"lambda": 0.5, "isolation_threshold": 0.3, "target_class": None},
    "CutMix": {"mask_proportion": 0.5, "isolation_threshold": 0.3},
    "ClassCutMix": {"mask_proportion": 0.5, "isolation_threshold": 0.3, "class_pair": None},
}


@dataclass(frozen=True)
class AugmentSpec:
    kind: str
    probability: float = 0.5
    params: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown augmentation kind {self.kind!r}; expected one of {KINDS}")
        if not 0.0 <= float(self.probability) <= 1.0:
            raise ConfigError(f"{self.kind}: probability must lie in [0, 1], got {self.probability}")
        unknown = set(self.params) - set(_DEFAULT_PARAMS[self.kind])
        if unknown:
            raise ConfigError(f"{self.kind}: unknown parameters {sorted(unknown)}")
        merged = dict(_DEFAULT_PARAMS[self.kind])
        merged.update(self.params)
        object.__setattr__(self, "params", merged)
        object.__setattr__(self, "probability", float(self.probability))
        if self.kind in MIXER_KINDS:
            self.mixer_params(None)
        elif self.kind == "JPEG" and not 1 <= int(merged["quality"]) <= 100:
            raise ConfigError(f"JPEG quality must lie in 1..100, got {merged['quality']}")

    @property
    def always_fires(self) -> bool:
        # The crop's randomness lives in its window, not in whether it runs.
        return self.kind == "RandomCrop"

    def mixer_params(self, dataset: Optional[Dataset]) -> mixers.MixerParams:
        p = self.params
        pair = p.get("class_pair")
        if pair is not None and dataset is not None:
            pair = tuple(dataset.class_id(c) for c in pair)
        try:
            return mixers.MixerParams(
                lam=float(p.get("lambda", 0.5)),
                mask_proportion=float(p.get("mask_proportion", 0.5)),
                isolation_threshold=float(p.get("isolation_threshold", 0.3)),
                class_pair=tuple(pair) if pair is not None else None,
            )
        except ValueError as exc:
            raise ConfigError(f"{self.kind}: {exc}") from exc

    def to_dict(self) -> dict:
        return {"kind": self.kind, "probability": self.probability, "params": dict(self.params)}


@dataclass(frozen=True)
class PipelineConfig:
    seed: int
    specs: Tuple[AugmentSpec, ...]
    output_mode: str = "transform"
    image_format: str = "png"

    def __post_init__(self):
        if self.seed is None or isinstance(self.seed, bool) or not isinstance(self.seed, int):
            raise ConfigError(f"an explicit integer seed is required, got {self.seed!r}")
        if self.output_mode not in OUTPUT_MODES:
            raise ConfigError(f"output_mode must be one of {OUTPUT_MODES}, got {self.output_mode!r}")
        if self.image_format not in ("png", "jpeg"):
            raise ConfigError(f"image_format must be png or jpeg, got {self.image_format!r}")
        object.__setattr__(self, "specs", tuple(self.specs))

    @classmethod
    def from_dict(cls, doc: dict, seed: Optional[int] = None) -> "PipelineConfig":
        """Build from parsed YAML; an explicit ``seed`` overrides the file's."""
        if not isinstance(doc, dict):
            raise ConfigError("pipeline config must be a mapping")
        unknown = set(doc) - {"seed", "specs", "output_mode", "image_format"}
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        specs = []
        for entry in doc.get("specs") or []:
            if not isinstance(entry, dict) or "kind" not in entry:
                raise ConfigError(f"each spec needs a 'kind': {entry!r}")
            specs.append(
                AugmentSpec(entry["kind"], entry.get("probability", 0.5), dict(entry.get("params") or {}))
            )
        return cls(
            seed=seed if seed is not None else doc.get("seed"),
            specs=tuple(specs),
            output_mode=doc.get("output_mode", "transform"),
            image_format=doc.get("image_format", "png"),
        )

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "output_mode": self.output_mode,
            "image_format": self.image_format,
            "specs": [s.to_dict() for s in self.specs],
        }


def load_config(path, seed: Optional[int] = None) -> PipelineConfig:
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    return PipelineConfig.from_dict(doc or {}, seed=seed)


def _partner(dataset: Dataset, sample_id: str, rng: RandomStream) -> Sample:
    candidates = [s for s in dataset.samples if s.id != sample_id]
    return dataset.materialized(candidates[rng.integers(0, len(candidates))])


def apply_spec(spec: AugmentSpec, sample: Sample, rng: RandomStream, dataset: Dataset) -> Sample:
    """Run one augmentation on a sample that already carries its pixels."""
    p = spec.params
    image, anns = sample.image, list(sample.annotations)
    kind = spec.kind
    if kind == "RandomFlip":
        axes = p["axes"]
        image, anns = imageops.flip(image, anns, axes[rng.integers(0, len(axes))])
    elif kind == "RandomCrop":
        image, anns = imageops.random_crop(image, anns, rng, p["min_frac"], p["max_frac"])
    elif kind == "Rotate":
        image, anns = imageops.rotate(image, anns, rng, p["angles"], p["allow_arbitrary"])
    elif kind == "Blur":
        image, anns = imageops.blur(image, anns, rng, tuple(p["sigma_range"]))
    elif kind == "Equalise":
        image, anns = imageops.equalize(image, anns)
    elif kind == "JPEG":
        image, anns = imageops.jpeg_degrade(image, anns, int(p["quality"]))
    else:
        params = spec.mixer_params(dataset)
        if kind == "ClassCutMix":
            return mixers.class_cutmix(sample, dataset, params, rng)
        partner = _partner(dataset, sample.id, rng)
        if kind == "MixUp":
            return mixers.mixup(sample, partner, params)
        if kind == "BboxMixUp":
            target = p.get("target_class")
            target = dataset.class_id(target) if target is not None else None
            return mixers.bbox_mixup(sample, partner, params, rng, target)
        return mixers.cutmix(sample, partner, params, rng)
    return sample.with_image(image, anns)


def augment_sample(config: PipelineConfig, dataset: Dataset, sample: Sample) -> Sample:
    """Apply every spec in order, each firing on its own derived stream."""
    current = dataset.materialized(sample)
    fired, skipped, draws = [], [], []
    for index, spec in enumerate(config.specs):
        rng = derive_stream(config.seed, sample.id, index)
        if spec.always_fires or rng.random() < spec.probability:
            try:
                current = apply_spec(spec, current, rng, dataset)
                fired.append(spec.kind)
            except MixerIneligible as exc:
                log.info("sample %s: %s passed through (%s)", sample.id, spec.kind, exc)
                skipped.append(spec.kind)
        draws.append(rng.draws)
    prov = dict(current.provenance)
    prov.update(source=sample.id, fired=fired, ineligible=skipped, rng_draws=draws)
    return replace(current, provenance=prov)


def apply_pipeline(config: PipelineConfig, dataset: Dataset, workers: int = 1) -> Dataset:
    """Augment every sample of ``dataset``.

    ``transform`` mode yields one output per input under the same id;
    ``extend`` mode keeps the originals and adds ``<id>_aug`` copies.

    Raises:
        ConfigError: mixer specs on a dataset with fewer than two samples.
    """
    if any(s.kind in MIXER_KINDS for s in config.specs) and len(dataset) < 2:
        raise ConfigError("sample-combination augmentations need a dataset of at least two samples")
    for spec in config.specs:
        if spec.kind in MIXER_KINDS:
            spec.mixer_params(dataset)

    def _one(sample):
        return augment_sample(config, dataset, sample)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            augmented = list(pool.map(_one, dataset.samples))
    else:
        augmented = [_one(s) for s in dataset.samples]

    if config.output_mode == "transform":
        samples = augmented
    else:
        samples = []
        for orig, aug in zip(dataset.samples, augmented):
            samples.append(dataset.materialized(orig))
            samples.append(replace(aug, id=f"{orig.id}_aug"))
    return Dataset(samples, dict(dataset.classes), dataset.root, dict(dataset.metadata))
