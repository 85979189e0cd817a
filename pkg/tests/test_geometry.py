import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import raster_iou
from xraymix.errors import ParameterError
from xraymix.geometry import (
    BoundingBox,
    Crop,
    HFlip,
    ImageExtent,
    Rotate90,
    RotateAngle,
    Scale,
    VFlip,
    clip_box,
    iou,
    is_isolated,
    pixel_region,
    transform_box,
)


def test_iou_identity_and_disjoint():
    assert iou(BoundingBox(0, 0, 2, 2), BoundingBox(0, 0, 2, 2)) == 1.0
    assert iou(BoundingBox(0, 0, 2, 2), BoundingBox(5, 5, 1, 1)) == 0.0


def test_iou_partial_overlap_matches_raster():
    # raster oracle at 4 cells per pixel gives exactly 1/7
    expected = raster_iou((0, 0, 2, 2), (1, 1, 2, 2), grid=8, cells_per_px=4)
    assert expected == pytest.approx(1 / 7, abs=1e-12)
    assert iou(BoundingBox(0, 0, 2, 2), BoundingBox(1, 1, 2, 2)) == pytest.approx(expected, abs=1e-12)


def test_touching_boxes_do_not_overlap():
    assert iou(BoundingBox(0, 0, 2, 2), BoundingBox(2, 0, 2, 2)) == 0.0


def test_is_isolated_examples():
    box = BoundingBox(0, 0, 2, 2)
    assert is_isolated(box, [], 0.3)
    assert not is_isolated(box, [box], 0.3)
    assert is_isolated(box, [BoundingBox(1, 1, 2, 2)], 0.3)


def test_is_isolated_rejects_bad_threshold():
    with pytest.raises(ParameterError):
        is_isolated(BoundingBox(0, 0, 1, 1), [], 1.5)


def test_degenerate_box_rejected():
    with pytest.raises(ParameterError):
        BoundingBox(0, 0, 0, 3)
    with pytest.raises(ParameterError):
        BoundingBox(0, 0, 3, -1)


def test_hflip_example():
    out = transform_box(BoundingBox(10, 20, 30, 40), HFlip(ImageExtent(100, 80)))
    assert out == BoundingBox(60, 20, 30, 40)


def test_rotate90_example():
    # W=100, H=80: (x, y, w, h) -> (H - y - h, x, h, w)
    out = transform_box(BoundingBox(10, 20, 30, 40), Rotate90(ImageExtent(100, 80), 1))
    assert out == BoundingBox(80 - 20 - 40, 10, 40, 30)


def test_crop_retention_boundary():
    window = Crop(ImageExtent(100, 100), 10, 10, 90, 90)
    assert transform_box(BoundingBox(0, 0, 20, 20), window) == BoundingBox(0, 0, 10, 10)
    # 9x9 of 400 visible is below a quarter
    assert transform_box(BoundingBox(0, 0, 19, 19), window) is None
    assert transform_box(BoundingBox(0, 0, 5, 5), window) is None


def test_crop_window_outside_extent_raises():
    with pytest.raises(ParameterError):
        Crop(ImageExtent(10, 10), 5, 5, 6, 2)
    with pytest.raises(ParameterError):
        Crop(ImageExtent(10, 10), -1, 0, 2, 2)


def test_rotate90_bad_k():
    with pytest.raises(ParameterError):
        Rotate90(ImageExtent(4, 4), 4)


def test_scale_maps_corners():
    assert transform_box(BoundingBox(2, 4, 6, 8), Scale(0.5, 2.0)) == BoundingBox(1, 8, 3, 16)


def test_arbitrary_rotation_hull_contains_rotated_corners():
    ext = ImageExtent(100, 100)
    box = BoundingBox(40, 45, 20, 10)
    out = transform_box(box, RotateAngle(ext, 45))
    # 45 degrees about the centre: hull side = (20 + 10) / sqrt 2
    side = 30 / math.sqrt(2)
    assert out.width == pytest.approx(side, abs=2e-3)
    assert out.height == pytest.approx(side, abs=2e-3)
    assert out.within(ext)


def test_clip_box():
    ext = ImageExtent(10, 10)
    assert clip_box(BoundingBox(-5, 2, 10, 3), ext) == BoundingBox(0, 2, 5, 3)
    assert clip_box(BoundingBox(12, 2, 3, 3), ext) is None


def test_pixel_region_covers_fractional_box():
    assert pixel_region(BoundingBox(1.5, 2.25, 2, 1), ImageExtent(10, 10)) == (1, 2, 4, 4)
    assert pixel_region(BoundingBox(3, 3, 2, 2), ImageExtent(10, 10)) == (3, 3, 5, 5)


coord = st.floats(min_value=0, max_value=400, allow_nan=False)
size = st.floats(min_value=0.01, max_value=200, allow_nan=False)
extent_dim = st.integers(min_value=1, max_value=700)


@st.composite
def box_in_extent(draw):
    W, H = draw(extent_dim), draw(extent_dim)
    x0 = draw(st.floats(0, W - 0.01))
    y0 = draw(st.floats(0, H - 0.01))
    x1 = draw(st.floats(x0 + 0.005, W))
    y1 = draw(st.floats(y0 + 0.005, H))
    try:
        box = BoundingBox.from_corners(x0, y0, x1, y1)
    except ParameterError:
        box = BoundingBox(0, 0, W, H)
    return ImageExtent(W, H), box


@given(box_in_extent())
def test_flips_and_rotations_are_exact_involutions(case):
    ext, box = case
    assert transform_box(transform_box(box, HFlip(ext)), HFlip(ext)) == box
    assert transform_box(transform_box(box, VFlip(ext)), VFlip(ext)) == box
    r180 = Rotate90(ext, 2)
    assert transform_box(transform_box(box, r180), r180) == box
    cur, e = box, ext
    for _ in range(4):
        t = Rotate90(e, 1)
        cur, e = transform_box(cur, t), t.out_extent
    assert cur == box and e == ext
    # 90 then 270 is the identity as well
    t1 = Rotate90(ext, 1)
    assert transform_box(transform_box(box, t1), Rotate90(t1.out_extent, 3)) == box


@given(box_in_extent())
def test_transformed_boxes_stay_inside_output_extent(case):
    ext, box = case
    for t, out_ext in ((HFlip(ext), ext), (VFlip(ext), ext), (Rotate90(ext, 1), ImageExtent(ext.height, ext.width))):
        assert transform_box(box, t).within(out_ext)


@given(box_in_extent(), st.data())
def test_crop_output_lies_in_window(case, data):
    ext, box = case
    cw = data.draw(st.integers(1, ext.width))
    ch = data.draw(st.integers(1, ext.height))
    cx = data.draw(st.integers(0, ext.width - cw))
    cy = data.draw(st.integers(0, ext.height - ch))
    out = transform_box(box, Crop(ext, cx, cy, cw, ch))
    if out is not None:
        assert out.within(ImageExtent(cw, ch))
        assert out.area >= 0.25 * box.area - 1e-9


@given(box_in_extent(), box_in_extent())
def test_iou_symmetric_and_bounded(c1, c2):
    a, b = c1[1], c2[1]
    v = iou(a, b)
    assert 0.0 <= v <= 1.0
    assert v == iou(b, a)
    assert iou(a, a) == 1.0


def test_iou_matches_raster_oracle_on_random_integer_boxes():
    rng = np.random.default_rng(0)
    for _ in range(300):
        boxes = []
        for _ in range(2):
            x, y = rng.integers(0, 63, size=2)
            w = rng.integers(1, 64 - x + 1)
            h = rng.integers(1, 64 - y + 1)
            boxes.append((int(x), int(y), int(w), int(h)))
        assert iou(BoundingBox(*boxes[0]), BoundingBox(*boxes[1])) == pytest.approx(raster_iou(*boxes), abs=1e-6)
