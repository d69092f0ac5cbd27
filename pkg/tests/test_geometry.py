import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from tokenbind.errors import DimensionMismatch, IndexOutOfRange, NonPositiveScale, ZeroVector
from tokenbind.geometry import GeometrySnapshot, cosine_angle, pairwise_mse, scale_embeddings, snapshot

finite = st.floats(-10, 10, allow_nan=False)


def test_mse_examples(rng):
    assert pairwise_mse([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert pairwise_mse([1.0, 0.0], [0.0, 1.0]) == 1.0
    a, b = rng.normal(size=8), rng.normal(size=8)
    brute = sum((x - y) ** 2 for x, y in zip(a, b)) / 8
    assert pairwise_mse(a, b) == pytest.approx(brute, rel=1e-14)


def test_mse_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        pairwise_mse([1.0, 2.0], [1.0, 2.0, 3.0])


def test_angle_examples():
    assert cosine_angle([1.0, 0.0], [0.0, 1.0]) == pytest.approx(math.pi / 2, abs=1e-15)
    assert cosine_angle([0.3, -2.0], [0.9, -6.0]) == pytest.approx(0.0, abs=1e-7)
    assert cosine_angle([1.0, 1.0], [1.0, 0.0]) == pytest.approx(math.pi / 4, abs=1e-15)
    # clamping keeps the antiparallel case inside [0, pi]
    assert 0.0 <= cosine_angle([1e-3, 7.0], [-1e-3, -7.0]) <= math.pi


def test_angle_zero_vector():
    with pytest.raises(ZeroVector):
        cosine_angle([0.0, 0.0], [1.0, 0.0])


def test_scale_examples():
    t = np.array([[1.0, 0.0], [0.0, 1.0], [3.0, 4.0]])
    np.testing.assert_array_equal(scale_embeddings(t, [1, 1, 1]), t)
    out = scale_embeddings(t, [1, 2, 1])
    assert np.linalg.norm(out[1]) == 2.0
    np.testing.assert_array_equal(out[[0, 2]], t[[0, 2]])
    # orthogonal unit pair scaled by 2: squared distance 2 -> 8
    s = scale_embeddings(t[:2], [2, 2])
    assert np.sum((s[0] - s[1]) ** 2) == pytest.approx(8.0)


@pytest.mark.parametrize("alphas", [[1.0, 0.0, 1.0], [1.0, -1.0, 2.0]])
def test_scale_nonpositive(alphas):
    with pytest.raises(NonPositiveScale):
        scale_embeddings(np.ones((3, 2)), alphas)


def test_snapshot_examples(rng):
    assert snapshot(np.eye(3), []).mse == []
    snap = snapshot(np.eye(4)[:2], [(0, 1)])
    assert snap.mse[0][1] == pytest.approx(2 / 4)
    assert snap.angles[0][1] == pytest.approx(math.pi / 2)
    np.testing.assert_array_equal(snap.norms, [1.0, 1.0])

    t = rng.normal(size=(6, 5))
    pairs = [(0, 3), (1, 4), (2, 5)]
    snap = snapshot(t, pairs)
    assert snap.pairs == pairs
    for (i, j), v in snap.mse:
        assert v == pairwise_mse(t[i], t[j])
    for (i, j), v in snap.angles:
        assert v == cosine_angle(t[i], t[j])
    np.testing.assert_allclose(snap.norms, np.linalg.norm(t, axis=1))


def test_snapshot_out_of_range():
    with pytest.raises(IndexOutOfRange):
        snapshot(np.eye(2), [(0, 2)])


def test_snapshot_dict_roundtrip(rng):
    snap = snapshot(rng.normal(size=(4, 3)), [(0, 2), (1, 3)])
    back = GeometrySnapshot.from_dict(snap.to_dict())
    assert back.pairs == snap.pairs
    np.testing.assert_array_equal(back.norms, snap.norms)
    assert back.mse == snap.mse and back.angles == snap.angles


# dyadic grid: differences are exact, so "zero iff equal" is not blurred by underflow
grid = st.integers(-640, 640).map(lambda k: k / 64)


@settings(max_examples=80, deadline=None)
@given(arrays(np.float64, 6, elements=grid), arrays(np.float64, 6, elements=grid))
def test_mse_symmetric_nonnegative(a, b):
    assert pairwise_mse(a, b) == pairwise_mse(b, a) >= 0.0
    assert (pairwise_mse(a, b) == 0.0) == bool(np.array_equal(a, b))


@settings(max_examples=80, deadline=None)
@given(
    arrays(np.float64, 4, elements=st.floats(0.1, 5)),
    arrays(np.float64, 4, elements=finite),
    st.floats(0.01, 100),
)
def test_angle_scale_invariant(a, b, c):
    if np.linalg.norm(b) < 1e-3:
        return
    assert cosine_angle(c * a, b) == pytest.approx(cosine_angle(a, b), abs=1e-6)
    assert 0.0 <= cosine_angle(a, b) <= math.pi


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(1.0001, 3.0))
def test_scaling_separates_pairs(seed, lam):
    # equal norms, cos < 0.5: scaling both by lam > 1 strictly increases the distance
    r = np.random.default_rng(seed)
    a = r.normal(size=5)
    b = r.normal(size=5)
    b *= np.linalg.norm(a) / np.linalg.norm(b)
    if np.dot(a, b) / np.dot(a, a) >= 0.5:
        return
    s = scale_embeddings(np.stack([a, b]), [lam, lam])
    assert np.sum((s[0] - s[1]) ** 2) > np.sum((a - b) ** 2)
