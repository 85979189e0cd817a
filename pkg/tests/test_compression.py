import math

import numpy as np
import pytest

from conftest import random_image
from oracles import brute_mse_psnr
from xraymix.compression import compress_dataset, psnr
from xraymix.dataset_io import Dataset, load_dataset, save_dataset
from xraymix.errors import ParameterError
from xraymix.geometry import ImageExtent
from xraymix.imageops import PixelImage, jpeg_degrade


def test_psnr_sentinel_and_zero_db():
    img = random_image(np.random.default_rng(0), 5, 5)
    assert psnr(img, img) == math.inf
    black = PixelImage.filled(ImageExtent(4, 4), 0)
    white = PixelImage.filled(ImageExtent(4, 4), 255)
    assert psnr(black, white) == 0.0


def test_psnr_extent_mismatch():
    with pytest.raises(ParameterError):
        psnr(PixelImage.filled(ImageExtent(4, 4)), PixelImage.filled(ImageExtent(4, 5)))


def test_psnr_symmetric_and_matches_brute_force():
    rng = np.random.default_rng(1)
    for _ in range(20):
        a, b = random_image(rng, 9, 7), random_image(rng, 9, 7)
        assert psnr(a, b) == psnr(b, a)
        assert abs(psnr(a, b) - brute_mse_psnr(a.array.astype(int), b.array.astype(int))) < 1e-9


def test_psnr_higher_at_high_quality(photo):
    hi, _ = jpeg_degrade(photo, [], 95)
    lo, _ = jpeg_degrade(photo, [], 10)
    assert psnr(photo, hi) > psnr(photo, lo)


def test_compress_in_memory(small_corpus):
    variants, report = compress_dataset(small_corpus, [95, 50, 10])
    assert sorted(variants) == [10, 50, 95]
    for q, v in variants.items():
        assert len(v) == len(small_corpus)
        assert [s.annotations for s in v.samples] == [s.annotations for s in small_corpus.samples]
    totals = [lv.total_bytes for lv in report.levels]
    assert totals[0] > totals[1] > totals[2]
    for lv in report.levels:
        assert lv.total_bytes == sum(lv.sizes.values())
        assert lv.ratio_vs_original > 0


def test_compress_rejects_bad_levels(small_corpus):
    for bad in ([], [0], [101], [50, 50]):
        with pytest.raises(ParameterError):
            compress_dataset(small_corpus, bad)


def test_compress_on_disk_layout(tmp_path, small_corpus):
    save_dataset(small_corpus, tmp_path / "src")
    ds = load_dataset(tmp_path / "src" / "annotations.json", tmp_path / "src")
    variants, report = compress_dataset(ds, [95, 10], tmp_path / "out")
    a = (tmp_path / "out" / "q95" / "annotations.json").read_bytes()
    assert a == (tmp_path / "out" / "q10" / "annotations.json").read_bytes()
    loaded = load_dataset(tmp_path / "out" / "q10" / "annotations.json", tmp_path / "out" / "q10")
    assert len(loaded) == len(ds)
    assert all(s.image_path.startswith("images/") and s.image_path.endswith(".jpg") for s in loaded.samples)
    for lv in report.levels:
        on_disk = sum(p.stat().st_size for p in (tmp_path / "out" / f"q{lv.quality}" / "images").iterdir())
        assert on_disk == lv.total_bytes
    assert report.original_bytes == sum(
        p.stat().st_size for p in (tmp_path / "src" / "images").iterdir()
    )
    assert "quality" in report.table()


def test_lenient_skips_undecodable(tmp_path, small_corpus):
    save_dataset(small_corpus, tmp_path / "src")
    ds = load_dataset(tmp_path / "src" / "annotations.json", tmp_path / "src")
    (tmp_path / "src" / ds.samples[0].image_path).write_bytes(b"not an image")
    # a fresh Dataset has no decoded pixels cached from load time
    ds = Dataset(ds.samples, ds.classes, ds.root)
    variants, report = compress_dataset(ds, [50], strict=False)
    assert len(variants[50]) == len(ds) - 1
    assert len(report.levels[0].failures) == 1
    from xraymix.errors import CodecError

    with pytest.raises(CodecError):
        compress_dataset(ds, [50], strict=True)
