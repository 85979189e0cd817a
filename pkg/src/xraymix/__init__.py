"""Bounding-box-aware augmentation, compression variants and detection metrics."""

__version__ = "0.1.0"

from .errors import (
    CodecError,
    ConfigError,
    MixerIneligible,
    ParameterError,
    ParseError,
    ToolkitError,
    ValidationError,
)
from .geometry import BoundingBox, ImageExtent, iou, is_isolated, transform_box
from .imageops import Annotation, PixelImage
from .dataset_io import Dataset, Sample, load_dataset, save_dataset
from .mixers import MixerParams, bbox_mixup, class_cutmix, cutmix, mixup
from .pipeline import AugmentSpec, PipelineConfig, apply_pipeline, derive_stream
from .compression import CompressionReport, compress_dataset, psnr
from .evaluation import Detection, EvalReport, ModelMeta, average_precision, evaluate, match_detections
