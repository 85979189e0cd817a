"""Command-line entry point.

Exit codes: 0 success, 1 validation failure, 2 usage or configuration
error, 3 IO or codec error.
"""

from __future__ import annotations

import logging
import sys
from collections import Counter
from pathlib import Path

import click
import numpy as np

from . import __version__, canonical
from .compression import compress_dataset
from .dataset_io import ANNOTATION_FILENAME, load_dataset, save_dataset, sha256_file
from .errors import CodecError, ConfigError, ParameterError, ToolkitError, ValidationError
from .evaluation import evaluate, load_detections, load_meta
from .pipeline import apply_pipeline, load_config

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_USAGE = 2
EXIT_IO = 3

log = logging.getLogger("xraymix")


def _setup_logging(verbose: bool) -> None:
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("level=%(levelname)s logger=%(name)s msg=%(message)r"))
    root = logging.getLogger("xraymix")
    root.handlers[:] = [handler]
    root.setLevel(logging.DEBUG if verbose else logging.INFO)
    root.propagate = False


def _emit(payload, out=None) -> None:
    text = canonical.dumps(payload)
    if out is not None:
        Path(out).write_text(text, encoding="utf-8")
    click.echo(text, nl=False)


def _input_hashes(annotation_file, dataset) -> dict:
    images = {}
    if dataset.root is not None:
        for s in dataset.samples:
            path = Path(dataset.root) / s.image_path
            if path.is_file():
                images[s.image_path] = sha256_file(path)
    return {"annotations": sha256_file(annotation_file), "images": images}


def _write_manifest(out_dir, command: str, config: dict, inputs: dict, outputs: dict) -> None:
    manifest = {
        "tool": "xraymix",
        "version": __version__,
        "command": command,
        "config": config,
        "inputs": inputs,
        "outputs": outputs,
    }
    (Path(out_dir) / "run-manifest.json").write_bytes(canonical.dump_bytes(manifest))


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.option("-v", "--verbose", is_flag=True, help="Debug logging on stderr.")
@click.version_option(__version__, prog_name="xraymix")
def main(verbose):
    """Augment, compress and score X-ray detection datasets."""
    _setup_logging(verbose)


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False), help="Pipeline YAML file.")
@click.option("--in", "annotations", required=True, type=click.Path(dir_okay=False), help="COCO annotation JSON.")
@click.option("--images", required=True, type=click.Path(file_okay=False), help="Image root directory.")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False), help="Output directory.")
@click.option("--seed", type=int, default=None, help="Overrides the config seed.")
@click.option("--workers", type=click.IntRange(min=1), default=1, show_default=True)
@click.option("--strict/--lenient", default=True, show_default=True)
def augment(config_path, annotations, images, out_dir, seed, workers, strict):
    """Materialize an augmented copy of a dataset."""
    config = load_config(config_path, seed=seed)
    if not config.specs:
        raise ConfigError("config lists no augmentation specs")
    dataset = load_dataset(annotations, images, strict=strict, workers=workers)
    log.info("augmenting %d samples with %d specs, seed=%d", len(dataset), len(config.specs), config.seed)
    result = apply_pipeline(config, dataset, workers=workers)
    manifest = save_dataset(result, out_dir, image_format=config.image_format, workers=workers)
    fired = Counter(k for s in result.samples for k in s.provenance.get("fired", []))
    passed = Counter(k for s in result.samples for k in s.provenance.get("ineligible", []))
    _write_manifest(
        out_dir, "augment", config.to_dict(), _input_hashes(annotations, dataset), manifest["files"]
    )
    _emit(
        {
            "samples_in": len(dataset),
            "samples_out": len(result),
            "fired": dict(fired),
            "ineligible": dict(passed),
            "total_bytes": manifest["total_bytes"],
        }
    )


def _parse_levels(ctx, param, value):
    try:
        levels = [int(v) for v in value.split(",") if v.strip()]
    except ValueError:
        raise click.BadParameter(f"expected comma-separated integers, got {value!r}")
    if not levels or any(not 1 <= q <= 100 for q in levels):
        raise click.BadParameter("levels must be integers in 1..100")
    return levels


@main.command()
@click.option("--levels", default="95,50,10", show_default=True, callback=_parse_levels)
@click.option("--in", "annotations", required=True, type=click.Path(dir_okay=False))
@click.option("--images", required=True, type=click.Path(file_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--workers", type=click.IntRange(min=1), default=1, show_default=True)
@click.option("--strict/--lenient", default=True, show_default=True)
def compress(levels, annotations, images, out_dir, workers, strict):
    """Write JPEG variants at each quality level plus a storage report."""
    dataset = load_dataset(annotations, images, strict=strict, workers=workers)
    Path(out_dir).mkdir(parents=True, exist_ok=True)
    _, report = compress_dataset(dataset, levels, out_dir, strict=strict, workers=workers)
    (Path(out_dir) / "compression-report.json").write_text(report.to_json(), encoding="utf-8")
    _write_manifest(
        out_dir, "compress", {"levels": levels}, _input_hashes(annotations, dataset), {"report": "compression-report.json"}
    )
    for line in report.table().splitlines():
        log.info("%s", line)
    _emit(report.to_dict())


@main.command(name="eval")
@click.option("--gt", required=True, type=click.Path(dir_okay=False), help="Ground-truth COCO JSON.")
@click.option("--dets", required=True, type=click.Path(dir_okay=False), help="COCO results JSON.")
@click.option("--meta", required=True, type=click.Path(dir_okay=False), help="Model metadata JSON.")
@click.option("--iou", "iou_threshold", type=click.FloatRange(0.0, 1.0), default=0.5, show_default=True)
@click.option("--out", "out_file", type=click.Path(dir_okay=False), default=None)
def eval_cmd(gt, dets, meta, iou_threshold, out_file):
    """Score a detector's results: per-class AP, mAP, mAP:C, fps."""
    dataset = load_dataset(gt, None, strict=True)
    report = evaluate(dataset, load_detections(dets), load_meta(meta), iou_threshold)
    for line in report.table().splitlines():
        log.info("%s", line)
    _emit(report.to_dict(), out_file)


@main.command()
@click.option("--in", "annotations", required=True, type=click.Path(dir_okay=False))
@click.option("--out", "out_file", type=click.Path(dir_okay=False), default=None)
def stats(annotations, out_file):
    """Class histogram, box-size distribution and objects per image."""
    dataset = load_dataset(annotations, None, strict=False)
    classes = Counter(dataset.classes[a.class_id] for s in dataset.samples for a in s.annotations)
    areas = np.array([a.box.area for s in dataset.samples for a in s.annotations], dtype=np.float64)
    per_image = Counter(len(s.annotations) for s in dataset.samples)
    size_buckets = {
        "small": int(np.sum(areas < 32**2)),
        "medium": int(np.sum((areas >= 32**2) & (areas < 96**2))),
        "large": int(np.sum(areas >= 96**2)),
    }
    quantiles = {}
    if areas.size:
        for q in (0, 25, 50, 75, 100):
            quantiles[f"p{q}"] = float(np.percentile(areas, q))
    _emit(
        {
            "images": len(dataset),
            "objects": int(areas.size),
            "class_histogram": {name: classes.get(name, 0) for name in dataset.classes.values()},
            "box_area": {"buckets": size_buckets, "quantiles": quantiles},
            "objects_per_image": {str(k): v for k, v in sorted(per_image.items())},
        },
        out_file,
    )


@main.command()
@click.option("--in", "annotations", required=True, type=click.Path(dir_okay=False))
@click.option("--images", type=click.Path(file_okay=False), default=None)
@click.option("--strict", is_flag=True, help="Abort on the first problem instead of reporting all.")
def validate(annotations, images, strict):
    """Check annotations (and images, when given) for consistency."""
    dataset = load_dataset(annotations, images, strict=strict)
    problems = dataset.metadata.get("load_problems", [])
    _emit({"valid": not problems, "samples": len(dataset), "problems": problems})
    if problems:
        raise SystemExit(EXIT_VALIDATION)


@main.command()
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--n", "count", type=click.IntRange(min=1), default=200, show_default=True)
@click.option("--size", type=click.IntRange(min=8), default=512, show_default=True)
@click.option("--seed", type=int, required=True)
def synth(out_dir, count, size, seed):
    """Generate a synthetic X-ray-like corpus for trials and benchmarks."""
    from .synthetic import make_corpus

    dataset = make_corpus(count, size, size, seed=seed)
    manifest = save_dataset(dataset, out_dir)
    _emit({"samples": len(dataset), "total_bytes": manifest["total_bytes"]})


def run(argv=None) -> int:
    """Run the CLI and return its exit status instead of exiting."""
    try:
        main.main(args=argv, prog_name="xraymix", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.UsageError as exc:
        exc.show()
        return EXIT_USAGE
    except click.Abort:
        return EXIT_USAGE
    except SystemExit as exc:
        return int(exc.code or 0)
    except (ConfigError, ParameterError) as exc:
        log.error("%s", exc)
        return EXIT_USAGE
    except ValidationError as exc:
        log.error("%s", exc)
        return EXIT_VALIDATION
    except (CodecError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_IO
    except ToolkitError as exc:
        log.error("%s", exc)
        return EXIT_VALIDATION
    return EXIT_OK


def entry() -> None:
    sys.exit(run())


if __name__ == "__main__":
    entry()
