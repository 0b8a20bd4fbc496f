import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from walkclip.datamodel import GeoCoord
from walkclip.evaluation import (
    EvalReport,
    GeoPrediction,
    evaluate,
    r_squared,
    random_directions,
    rmse,
    sliced_wasserstein,
    wasserstein_1d,
)
from walkclip.regressor import mse_loss


def brute_force_transport(a, b) -> float:
    """Minimum mean |a_i - b_pi(i)| over all n! matchings."""
    return min(sum(abs(x - b[j]) for x, j in zip(a, perm)) / len(a) for perm in itertools.permutations(range(len(b))))


def test_r2_examples(rng):
    t = rng.standard_normal(20)
    assert r_squared(t, t) == 1.0
    assert r_squared(np.full(20, t.mean()), t) == pytest.approx(0.0, abs=1e-12)
    assert r_squared([2, 1, 0], [0, 1, 2]) == pytest.approx(-3.0, abs=1e-12)
    with pytest.raises(ValueError):
        r_squared([1, 2], [3, 3])


@given(st.integers(0, 10_000))
def test_r2_permutation_invariant(seed):
    r = np.random.default_rng(seed)
    t, p = r.standard_normal(12), r.standard_normal(12)
    perm = r.permutation(12)
    assert r_squared(p[perm], t[perm]) == pytest.approx(r_squared(p, t), abs=1e-12)


def test_rmse_examples(rng):
    t = rng.standard_normal(10)
    assert rmse(t, t) == 0.0
    assert rmse(t + 3, t) == pytest.approx(3.0, abs=1e-12)
    p = rng.standard_normal(10)
    assert rmse(p, t) == pytest.approx(np.sqrt(mse_loss(p, t)), abs=1e-12)
    with pytest.raises(ValueError):
        rmse([1], [1, 2])


def test_w1_examples():
    assert wasserstein_1d([3, 1, 2], [1, 2, 3]) == 0.0
    assert wasserstein_1d([0], [3]) == 3.0
    assert wasserstein_1d([0, 1, 4], [1, 2, 3]) == 1.0
    assert brute_force_transport([0, 1, 4], [1, 2, 3]) == 1.0
    with pytest.raises(ValueError):
        wasserstein_1d([1, 2], [1])


def test_w1_equals_factorial_oracle():
    r = np.random.default_rng(0)
    for _ in range(100):
        n = int(r.integers(1, 8))
        # integer-valued samples keep both sides exact in floating point
        a = r.integers(-50, 50, n).astype(float)
        b = r.integers(-50, 50, n).astype(float)
        assert wasserstein_1d(a, b) == brute_force_transport(list(a), list(b))


@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=20), st.data())
def test_w1_symmetric_and_zero_iff_equal(a, data):
    b = data.draw(st.lists(st.floats(-1e3, 1e3), min_size=len(a), max_size=len(a)))
    assert wasserstein_1d(a, b) == wasserstein_1d(b, a)
    assert (wasserstein_1d(a, b) == 0) == (sorted(a) == sorted(b))


def test_directions_unit_and_seeded():
    d = random_directions(1000, 3, seed=4)
    np.testing.assert_allclose(np.linalg.norm(d, axis=1), 1.0, atol=1e-14)
    np.testing.assert_array_equal(d, random_directions(1000, 3, seed=4))


def test_swd_identical_clouds(rng):
    a = rng.standard_normal((30, 3))
    for seed in range(5):
        assert sliced_wasserstein(a, a.copy(), 64, seed) == 0.0


def test_swd_axis_direction_is_1d(rng):
    a, b = rng.standard_normal((20, 3)), rng.standard_normal((20, 3))
    for axis in range(3):
        e = np.eye(3)[axis : axis + 1]
        assert sliced_wasserstein(a, b, 1, directions=e) == pytest.approx(wasserstein_1d(a[:, axis], b[:, axis]), abs=1e-15)


def test_swd_monte_carlo_convergence():
    r = np.random.default_rng(7)
    a, b = r.standard_normal((50, 3)), r.standard_normal((50, 3)) + [0.5, 0.0, 1.0]
    lo = sliced_wasserstein(a, b, 10_000, seed=1)
    hi = sliced_wasserstein(a, b, 100_000, seed=2)
    assert abs(lo - hi) / hi < 0.02


def test_swd_symmetric_and_size_check(rng):
    a, b = rng.standard_normal((15, 3)), rng.standard_normal((15, 3))
    assert sliced_wasserstein(a, b, 50, 3) == pytest.approx(sliced_wasserstein(b, a, 50, 3), abs=1e-14)
    with pytest.raises(ValueError):
        sliced_wasserstein(a, b[:10])


def test_swd_monotone_in_value_offset():
    for seed in range(20):
        r = np.random.default_rng(seed)
        a = r.standard_normal((40, 3))
        b = a + 0.3 * r.standard_normal((40, 3))
        inflated = b.copy()
        inflated[:, 2] += 5.0
        assert sliced_wasserstein(a, inflated, 128, seed) > sliced_wasserstein(a, b, 128, seed)


def _geo(pred, target, seed=0):
    r = np.random.default_rng(seed)
    return [GeoPrediction(GeoCoord(44.9 + r.uniform(0, 0.1), -93.2 + r.uniform(0, 0.1)), p, t) for p, t in zip(pred, target)]


def test_evaluate_perfect_and_offset(rng):
    t = rng.uniform(0, 100, 50)
    rep = evaluate(_geo(t, t))
    assert (rep.r2, rep.rmse, rep.swd) == (1.0, 0.0, 0.0)
    rep = evaluate(_geo(t + 5, t))
    assert rep.rmse == pytest.approx(5.0, abs=1e-12) and rep.swd > 0


def test_evaluate_deterministic_and_serializes(rng):
    t = rng.uniform(0, 100, 30)
    p = t + rng.standard_normal(30)
    a, b = evaluate(_geo(p, t), 64, 5), evaluate(_geo(p, t), 64, 5)
    assert a == b and a.seed == 5 and a.swd_projections == 64 and a.n == 30
    assert EvalReport.from_text(a.to_text()) == a


def test_evaluate_constant_targets_reports_r2_error():
    rep = evaluate(_geo([1.0, 2.0, 3.0], [5.0, 5.0, 5.0]))
    assert rep.r2 is None and "constant" in rep.r2_error
    assert rep.rmse > 0
    with pytest.raises(ValueError):
        evaluate(_geo([1.0], [1.0]))
