import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from maskfill.pyramid import PyramidLevel, PyramidSpec, build_pyramid, resize_mask


def rand_image(h, w, seed=0):
    rng = np.random.default_rng(seed)
    return (rng.random((h, w, 3)).astype(np.float32) * 2 - 1)


def test_193x256_defaults_yield_8_levels():
    # derived by enumerating 193 * (3/4)^n >= 25
    spec = PyramidSpec()
    img = rand_image(193, 256)
    mask = np.zeros((193, 256), np.uint8)
    pyr = build_pyramid(img, mask, spec)
    assert len(pyr) == 8
    assert pyr[0].dims == (193, 256)
    assert 25 <= min(pyr[-1].dims) <= 33


def test_monotone_dims_and_ratio():
    spec = PyramidSpec()
    pyr = build_pyramid(rand_image(100, 140), np.zeros((100, 140), np.uint8), spec)
    for a, b in zip(pyr, pyr[1:]):
        assert b.dims[0] < a.dims[0] and b.dims[1] < a.dims[1]
        assert abs(b.dims[0] - a.dims[0] / spec.scale_factor) <= 1
        assert abs(b.dims[1] - a.dims[1] / spec.scale_factor) <= 1


def test_level_zero_is_input_exactly():
    img = rand_image(40, 50, 3)
    mask = (np.random.default_rng(4).random((40, 50)) > 0.8).astype(np.uint8)
    pyr = build_pyramid(img, mask, PyramidSpec(min_dimension=16))
    assert (pyr[0].image == img).all()
    assert (pyr[0].mask == mask).all()


def test_constant_masks_preserved_at_every_level():
    img = rand_image(64, 64)
    for const in (0, 1):
        mask = np.full((64, 64), const, np.uint8)
        pyr = build_pyramid(img, mask, PyramidSpec(min_dimension=16))
        assert len(pyr) >= 2
        for level in pyr:
            assert (level.mask == const).all()


def test_deterministic_rebuild():
    img = rand_image(60, 80, 7)
    mask = (np.random.default_rng(8).random((60, 80)) > 0.7).astype(np.uint8)
    spec = PyramidSpec(min_dimension=16)
    a = build_pyramid(img, mask, spec)
    b = build_pyramid(img, mask, spec)
    for la, lb in zip(a, b):
        assert (la.image == lb.image).all()
        assert (la.mask == lb.mask).all()


def test_small_input_single_level_with_warning():
    img = rand_image(20, 20)
    with pytest.warns(UserWarning):
        pyr = build_pyramid(img, np.zeros((20, 20), np.uint8), PyramidSpec(min_dimension=25))
    assert len(pyr) == 1
    assert pyr[0].dims == (20, 20)


def test_spec_validation():
    with pytest.raises(ValueError):
        PyramidSpec(scale_factor=1.0)
    with pytest.raises(ValueError):
        PyramidSpec(scale_factor=2.5)
    with pytest.raises(ValueError):
        PyramidSpec(min_dimension=8)


def test_resize_mask_threshold_behavior():
    # one masked pixel in a 4x4 block: area average 0.25 < 0.3 -> unmasked
    mask = np.zeros((8, 8), np.uint8)
    mask[0, 0] = 1
    out = resize_mask(mask, (4, 4), threshold=0.3)
    assert out[0, 0] == 0
    # two masked pixels in the block: 0.5 > 0.3 -> masked
    mask[0, 1] = 1
    out = resize_mask(mask, (4, 4), threshold=0.3)
    assert out[0, 0] == 1


@settings(deadline=None, max_examples=25)
@given(
    h=st.integers(32, 64),
    w=st.integers(32, 64),
    p=st.floats(0.0, 1.0),
    seed=st.integers(0, 2**16),
)
def test_mask_stays_binary_under_downsampling(h, w, p, seed):
    rng = np.random.default_rng(seed)
    mask = (rng.random((h, w)) < p).astype(np.uint8)
    pyr = build_pyramid(rand_image(h, w, seed), mask, PyramidSpec(min_dimension=16))
    for level in pyr:
        assert set(np.unique(level.mask)) <= {0, 1}
        assert level.mask.shape == level.image.shape[:2]


def test_level_dataclass_dims():
    img = rand_image(30, 40)
    level = PyramidLevel(0, img, np.zeros((30, 40), np.uint8))
    assert level.dims == (30, 40)
    assert not level.is_coarse
