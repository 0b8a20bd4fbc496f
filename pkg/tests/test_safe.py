import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from walkclip.safe import SafeConfig, idw_weight, safe_aggregate, safe_aggregate_bruteforce, safe_transform
from walkclip.spatial import build_index, radius_query


def test_idw_weight_examples():
    cfg = SafeConfig(epsilon=1e-4)
    assert idw_weight(0.0, cfg) == pytest.approx(10000.0, rel=1e-12)
    # 1 / (0.005 + 0.0001) = 1 / 0.0051
    assert idw_weight(0.005, cfg) == pytest.approx(196.0784314, rel=1e-9)


@given(st.floats(0, 10), st.floats(0, 10))
def test_idw_monotone(a, b):
    if a < b:
        assert idw_weight(a) >= idw_weight(b)
        if b - a > 1e-6:
            assert idw_weight(a) > idw_weight(b)


def test_idw_rejects_negative():
    with pytest.raises(ValueError):
        idw_weight(-1.0)


def test_config_validation():
    for kw in ({"radius": 0}, {"epsilon": 0}, {"power": -1}):
        with pytest.raises(ValueError):
            SafeConfig(**kw)


def test_isolated_rows_unchanged(rng):
    xy = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]])
    f = rng.standard_normal((3, 5))
    out = safe_aggregate(f, build_index(xy, 0.01))
    np.testing.assert_allclose(out, f, rtol=0, atol=1e-15)


def test_coincident_points_average():
    u, v = np.array([1.0, 2.0]), np.array([3.0, -4.0])
    out = safe_aggregate(np.stack([u, v]), build_index(np.zeros((2, 2)), 0.01))
    np.testing.assert_allclose(out, np.stack([(u + v) / 2] * 2), atol=1e-15)


def test_three_point_line_hand_values():
    xy = np.array([[0.0, 0.0], [0.0, 0.005], [0.0, 0.02]])
    f = np.array([[1.0, 0.0], [0.0, 1.0], [5.0, 5.0]])
    out = safe_aggregate(f, build_index(xy, 0.01), SafeConfig(0.01, 1e-4))
    w_ab = 1 / 0.0051
    expect_a = (10000 * f[0] + w_ab * f[1]) / (10000 + w_ab)
    np.testing.assert_allclose(out[0], expect_a, rtol=1e-12)
    np.testing.assert_allclose(out[0], [10000 / 10196.0784314, 196.0784314 / 10196.0784314], rtol=1e-9)
    np.testing.assert_array_equal(out[2], f[2])


def test_bruteforce_matches_index(rng):
    for seed in range(10):
        r = np.random.default_rng(seed)
        n = int(r.integers(1, 300))
        xy = r.uniform(0, 0.05, size=(n, 2))
        f = r.standard_normal((n, 4))
        np.testing.assert_allclose(
            safe_aggregate(f, build_index(xy, 0.01)), safe_aggregate_bruteforce(f, xy), rtol=0, atol=1e-12
        )


def test_single_point_identity():
    f = np.array([[3.0, -1.0]])
    np.testing.assert_array_equal(safe_aggregate_bruteforce(f, [[1.0, 1.0]]), f)


def test_permutation_equivariance(rng):
    xy = rng.uniform(0, 0.03, size=(80, 2))
    f = rng.standard_normal((80, 3))
    perm = rng.permutation(80)
    out = safe_aggregate_bruteforce(f, xy)
    out_p = safe_aggregate_bruteforce(f[perm], xy[perm])
    np.testing.assert_allclose(out_p, out[perm], atol=1e-13)


def test_input_not_modified(rng):
    xy = rng.uniform(0, 0.02, size=(50, 2))
    f = rng.standard_normal((50, 3))
    before = f.copy()
    safe_aggregate(f, build_index(xy, 0.01))
    np.testing.assert_array_equal(f, before)


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        safe_aggregate(np.zeros((3, 2)), build_index(np.zeros((4, 2)), 0.01))


def test_weights_sum_to_one_and_range_preserved(rng):
    xy = rng.uniform(0, 0.03, size=(200, 2))
    # aggregating a constant column must return it; this is the weight sum
    f = np.column_stack([np.ones(200), rng.standard_normal((200, 3))])
    out = safe_aggregate(f, build_index(xy, 0.01))
    np.testing.assert_allclose(out[:, 0], 1.0, atol=1e-12)
    assert np.all(out.min(0) >= f.min(0) - 1e-12)
    assert np.all(out.max(0) <= f.max(0) + 1e-12)


def test_locality(rng):
    xy = rng.uniform(0, 0.05, size=(120, 2))
    f = rng.standard_normal((120, 2))
    idx = build_index(xy, 0.01)
    base = safe_aggregate(f, idx)
    k = 17
    g = f.copy()
    g[k] += 10.0
    changed = set(np.nonzero(np.any(safe_aggregate(g, idx) != base, axis=1))[0])
    d = np.hypot(*(xy - xy[k]).T)
    assert changed == set(np.nonzero(d < 0.01)[0])


@settings(max_examples=40, deadline=None)
@given(
    arrays(np.float64, st.tuples(st.integers(1, 25), st.just(2)), elements=st.floats(0, 0.02)),
    st.data(),
)
def test_convexity_property(xy, data):
    f = data.draw(arrays(np.float64, (xy.shape[0], 3), elements=st.floats(-100, 100)))
    idx = build_index(xy, 0.01)
    out = safe_aggregate(f, idx)
    for i in range(xy.shape[0]):
        members = f[[i, *radius_query(idx, i, 0.01)]]
        assert np.all(out[i] >= members.min(0) - 1e-9)
        assert np.all(out[i] <= members.max(0) + 1e-9)


def test_safe_transform_rows_sees_all_points():
    xy = np.array([[0.0, 0.0], [0.0, 0.005]])
    f = np.array([[0.0], [1.0]])
    held_out = safe_transform(f, xy, rows=[1])
    assert held_out.shape == (1, 1)
    assert 0 < held_out[0, 0] < 1
