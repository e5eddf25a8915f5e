import numpy as np
import pytest

from artseg.errors import EmptyMask
from artseg.geometry import (
    BBox3,
    StructuringElement,
    count_components,
    dilate,
    erode,
    expand_bbox,
    mask_bbox,
)
from artseg.volume_io import BinaryMask

from helpers import mask_from_points, random_blob_mask, random_noise_mask


def test_mask_bbox_tight():
    m = mask_from_points((8, 8, 8), [(2, 3, 4), (5, 3, 4)])
    box = mask_bbox(m)
    assert box.min == (2, 3, 4)
    assert box.max == (6, 4, 5)


def test_mask_bbox_single_voxel():
    m = mask_from_points((4, 4, 4), [(0, 0, 0)])
    box = mask_bbox(m)
    assert box.min == (0, 0, 0)
    assert box.max == (1, 1, 1)


def test_mask_bbox_empty_raises():
    m = BinaryMask(np.zeros((4, 4, 4), dtype=np.uint8))
    with pytest.raises(EmptyMask):
        mask_bbox(m)


def test_expand_bbox_arithmetic():
    box = BBox3((10, 10, 0), (20, 20, 1))
    out = expand_bbox(box, (2, 2, 0, 0, 0, 0), (64, 64, 64))
    assert out.min == (8, 10, 0)
    assert out.max == (22, 20, 1)


def test_expand_bbox_zero_deltas_identity():
    box = BBox3((3, 4, 5), (7, 8, 9))
    out = expand_bbox(box, (0,) * 6, (16, 16, 16))
    assert out == box


def test_expand_bbox_clips_at_grid():
    box = BBox3((0, 0, 0), (4, 4, 1))
    out = expand_bbox(box, (3, 0, 0, 0, 0, 0), (8, 8, 8))
    assert out.min == (0, 0, 0)
    assert out.max == (4, 4, 1)


def test_expand_bbox_overcontraction_clamps_to_unit_axis():
    box = BBox3((4, 4, 0), (10, 10, 1))
    out = expand_bbox(box, (-10, -10, 0, 0, 0, 0), (16, 16, 16))
    # midpoint of [4, 10) is 7
    assert out.min[0] == 7 and out.max[0] == 8
    assert (out.min[1], out.max[1]) == (4, 10)


def test_expand_bbox_random_always_valid(rng):
    for _ in range(200):
        dims = tuple(rng.integers(4, 32, size=3))
        lo = tuple(int(rng.integers(0, d - 1)) for d in dims)
        hi = tuple(int(rng.integers(a + 1, d + 1)) for a, d in zip(lo, dims))
        box = BBox3(lo, hi)
        deltas = rng.integers(-10, 11, size=6)
        out = expand_bbox(box, deltas, dims)
        assert out.within(dims)
        assert all(a < b for a, b in zip(out.min, out.max))


def test_erode_3x3_square_to_center():
    pts = [(i, j, 0) for i in range(2, 5) for j in range(2, 5)]
    m = mask_from_points((8, 8, 1), pts)
    out = erode(m, StructuringElement("cross4-in-plane", 1))
    assert out.count() == 1
    assert out.data[3, 3, 0] == 1


def test_erode_empty_and_single_voxel():
    empty = BinaryMask(np.zeros((5, 5, 5), dtype=np.uint8))
    se = StructuringElement("cross6", 1)
    assert erode(empty, se).count() == 0
    single = mask_from_points((5, 5, 5), [(2, 2, 2)])
    assert erode(single, se).count() == 0


def test_dilate_single_voxel_cross4():
    m = mask_from_points((9, 9, 1), [(4, 4, 0)])
    out = dilate(m, StructuringElement("cross4-in-plane", 1))
    assert out.count() == 5
    for p in [(4, 4, 0), (3, 4, 0), (5, 4, 0), (4, 3, 0), (4, 5, 0)]:
        assert out.data[p] == 1


def test_dilate_corner_clipped():
    m = mask_from_points((4, 4, 4), [(0, 0, 0)])
    out = dilate(m, StructuringElement("cross6", 1))
    assert out.count() == 4


def test_dilate_empty_is_empty():
    empty = BinaryMask(np.zeros((5, 5, 5), dtype=np.uint8))
    assert dilate(empty, StructuringElement("cube26", 1)).count() == 0


@pytest.mark.parametrize("kind", ["cross6", "cross4-in-plane", "cube26"])
@pytest.mark.parametrize("radius", [1, 2])
def test_erode_subset_mask_subset_dilate(rng, kind, radius):
    se = StructuringElement(kind, radius)
    for _ in range(10):
        m = random_noise_mask(rng, (12, 12, 6), p=0.3)
        e = erode(m, se).data.astype(bool)
        d = dilate(m, se).data.astype(bool)
        fg = m.data.astype(bool)
        assert np.all(e <= fg)
        assert np.all(fg <= d)


def test_opening_shrinks_closing_grows(rng):
    # closing-grows needs a background border: with out-of-bounds counting as
    # background for erosion, border-touching foreground cannot be restored.
    se = StructuringElement("cross6", 1)
    for _ in range(10):
        inner = random_blob_mask(rng, (10, 10, 6))
        grid = np.zeros((14, 14, 10), dtype=np.uint8)
        grid[2:12, 2:12, 2:8] = inner.data
        m = BinaryMask(grid)
        fg = m.data.astype(bool)
        opened = dilate(erode(m, se), se).data.astype(bool)
        closed = erode(dilate(m, se), se).data.astype(bool)
        assert np.all(opened <= fg)
        assert np.all(fg <= closed)


def test_erosion_dilation_duality_with_border(rng):
    # guaranteed 1-voxel background border
    se = StructuringElement("cross6", 1)
    for _ in range(10):
        inner = random_noise_mask(rng, (8, 8, 8), p=0.4)
        grid = np.zeros((10, 10, 10), dtype=np.uint8)
        grid[1:9, 1:9, 1:9] = inner.data
        m = BinaryMask(grid)
        comp = BinaryMask((1 - grid).astype(np.uint8))
        lhs = erode(m, se).data
        rhs = 1 - dilate(comp, se).data
        assert np.array_equal(lhs, rhs)


def test_count_components():
    m = mask_from_points((8, 8, 2), [(1, 1, 0), (1, 2, 0), (5, 5, 1), (7, 7, 0)])
    assert count_components(m) == 3
    empty = BinaryMask(np.zeros((4, 4, 4), dtype=np.uint8))
    assert count_components(empty) == 0


def test_structuring_element_validation():
    with pytest.raises(ValueError):
        StructuringElement("ball", 1)
    with pytest.raises(ValueError):
        StructuringElement("cross6", 0)
