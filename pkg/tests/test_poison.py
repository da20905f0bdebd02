import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tnml.encoding import Dataset, generate_synthetic
from tnml.errors import ShapeError
from tnml.poison import (
    BackgroundSpeckle,
    PoisonSpec,
    SinglePixel,
    apply_poison,
    default_background_mask,
    poison_background,
    poison_single_pixel,
)


@pytest.fixture
def ds():
    return generate_synthetic(64, 8, (8, 8), clutter_variance=0.2, seed=5)


@pytest.mark.parametrize("label,value", [(0, 0.8), (7, 0.1), (3, 0.5)])
def test_pixel_value_noise_free(label, value):
    base = Dataset(np.full((1, 4, 4), 0.3), [label], 8)
    out = poison_single_pixel(base, PoisonSpec(SinglePixel(5, 0.0), 0, 8))
    assert out.images[0].ravel()[5] == np.float32(value)


def test_pixel_generalizes_to_other_class_counts():
    base = Dataset(np.zeros((3, 2, 2)), [0, 1, 2], 3)
    out = poison_single_pixel(base, PoisonSpec(SinglePixel(0, 0.0), 0, 3))
    np.testing.assert_allclose(out.images[:, 0, 0], [3 / 5, 2 / 5, 1 / 5], rtol=1e-6)


def test_pixel_attack_is_local(ds):
    spec = PoisonSpec(SinglePixel(10), 1, 8)
    out = poison_single_pixel(ds, spec)
    a = ds.images.reshape(len(ds), -1)
    b = out.images.reshape(len(ds), -1)
    others = np.delete(np.arange(64), 10)
    assert a[:, others].tobytes() == b[:, others].tobytes()
    assert out.metadata["poison"] == spec.to_dict()


def test_pixel_noise_is_small_and_class_separated(ds):
    big = generate_synthetic(4000, 8, (8, 8), seed=1)
    out = poison_single_pixel(big, PoisonSpec(SinglePixel(0), 2, 8))
    vals = out.images[:, 0, 0].astype(np.float64)
    means = [vals[big.labels == c].mean() for c in range(8)]
    np.testing.assert_allclose(means, [(8 - c) / 10 for c in range(8)], atol=3e-3)
    assert np.all(np.diff(means) < -0.09)
    # relative noise sigma 0.01
    rel = vals / np.array([(8 - y) / 10 for y in big.labels])
    assert abs(rel.std() - 0.01) < 1e-3


def test_pixel_errors(ds):
    with pytest.raises(ShapeError):
        poison_single_pixel(ds, PoisonSpec(SinglePixel(64), 0, 8))
    with pytest.raises(TypeError):
        poison_single_pixel(ds, PoisonSpec(BackgroundSpeckle((0,)), 0, 8))
    with pytest.raises(ShapeError):
        poison_single_pixel(ds, PoisonSpec(SinglePixel(0), 0, 5))


def test_speckle_zero_variance_is_identity(ds):
    mask = default_background_mask(8, 8, 2)
    out = poison_background(ds, PoisonSpec(BackgroundSpeckle(mask, 0.0), 0, 8))
    assert out.images.tobytes() == ds.images.tobytes()


def test_speckle_pattern_shared_within_class():
    base = Dataset(np.full((16, 8, 8), 0.3), np.arange(16) % 8, 8)
    mask = default_background_mask(8, 8, 2)
    out = poison_background(base, PoisonSpec(BackgroundSpeckle(mask), 4, 8))
    np.testing.assert_array_equal(out.images[0], out.images[8])
    assert not np.array_equal(out.images[0], out.images[1])


def test_speckle_leaves_outside_untouched(ds):
    mask = default_background_mask(8, 8, 2)
    out = poison_background(ds, PoisonSpec(BackgroundSpeckle(mask), 4, 8))
    inside = np.setdiff1d(np.arange(64), mask)
    a = ds.images.reshape(len(ds), -1)[:, inside]
    b = out.images.reshape(len(ds), -1)[:, inside]
    assert a.tobytes() == b.tobytes()
    changed = np.any(ds.images.reshape(len(ds), -1) != out.images.reshape(len(ds), -1), axis=0)
    assert set(np.flatnonzero(changed)) <= set(mask)


def test_speckle_errors(ds):
    with pytest.raises(ShapeError):
        poison_background(ds, PoisonSpec(BackgroundSpeckle(()), 0, 8))
    with pytest.raises(ShapeError):
        poison_background(ds, PoisonSpec(BackgroundSpeckle((0, 64)), 0, 8))
    with pytest.raises(TypeError):
        poison_background(ds, PoisonSpec(SinglePixel(0), 0, 8))


def test_default_mask_counts():
    mask = default_background_mask(4, 4, 1)
    assert len(mask) == 12 and 5 not in mask and 10 not in mask
    ring = default_background_mask(8, 8, 3)
    assert len(ring) == 64 - 36
    with pytest.raises(ValueError):
        default_background_mask(4, 4, 2)
    with pytest.raises(ValueError):
        default_background_mask(4, 4, 0)


@pytest.mark.parametrize("h,w,e", [(8, 8, 1), (16, 16, 4), (16, 8, 3)])
def test_mask_partitions_the_image(h, w, e):
    mask = set(default_background_mask(h, w, e))
    r0, c0 = (h - 2 * e) // 2, (w - 2 * e) // 2
    square = {r * w + c for r in range(r0, r0 + 2 * e) for c in range(c0, c0 + 2 * e)}
    assert not mask & square and mask | square == set(range(h * w))


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31), kind=st.sampled_from(["pixel", "speckle"]))
def test_attacks_deterministic_and_in_range(seed, kind):
    d = generate_synthetic(24, 8, (8, 8), clutter_variance=1.0, seed=seed % 1000)
    if kind == "pixel":
        spec = PoisonSpec(SinglePixel(int(seed % 64), 0.5), seed, 8)
    else:
        spec = PoisonSpec(BackgroundSpeckle(default_background_mask(8, 8, 2), 2.0), seed, 8)
    a = apply_poison(d, spec)
    b = apply_poison(d, spec)
    assert a.images.tobytes() == b.images.tobytes()
    assert a.images.min() >= 0.0 and a.images.max() <= 1.0
    assert np.array_equal(a.labels, d.labels)


def test_spec_dict_round_trip():
    for spec in (PoisonSpec(SinglePixel(3, 1e-4), 2, 8), PoisonSpec(BackgroundSpeckle((5, 1, 3), 0.02), 9, 4)):
        assert PoisonSpec.from_dict(spec.to_dict()) == spec
