import math

import numpy as np
import pytest

from src.channel.dmc import Dmc, bec, bsc, capacity, extend, identity, mutual_information, sample, z_channel
from src.utils.errors import StateSpaceError, ValidationError


def h(p):
    return 0.0 if p in (0.0, 1.0) else -p * math.log2(p) - (1 - p) * math.log2(1 - p)


def test_rejects_non_stochastic():
    with pytest.raises(ValidationError):
        Dmc(np.array([[0.5, 0.4], [0.0, 1.0]]))
    with pytest.raises(ValidationError):
        Dmc(np.array([[1.2, -0.2], [0.0, 1.0]]))


def test_capacity_examples():
    assert capacity(identity(2)).capacity == pytest.approx(1.0, abs=1e-9)
    assert capacity(bsc(0.5)).capacity == pytest.approx(0.0, abs=1e-9)
    assert capacity(bsc(0.1)).capacity == pytest.approx(0.5310044064107189, abs=1e-9)


@pytest.mark.parametrize("p", [0.05, 0.1, 0.25, 0.5])
def test_capacity_bsc_oracle(p):
    res = capacity(bsc(p), tol=1e-10)
    assert abs(res.capacity - (1 - h(p))) <= 1e-6
    assert res.gap < 1e-10
    np.testing.assert_allclose(res.optimal_input.sum(), 1.0)


def test_capacity_bec_and_z():
    assert capacity(bec(0.2), tol=1e-10).capacity == pytest.approx(0.8, abs=1e-8)
    p = 0.3
    z = math.log2(1 + (1 - p) * p ** (p / (1 - p)))
    res = capacity(z_channel(p), tol=1e-10)
    assert res.capacity == pytest.approx(z, abs=1e-8)
    assert res.capacity <= res.upper


def test_capacity_bounds_are_monotone():
    res = capacity(z_channel(0.3), tol=1e-10)
    lows = np.array(res.lower_bounds)
    assert res.iterations > 0
    assert np.all(np.diff(lows) >= -1e-12)


def test_capacity_of_extension_is_additive():
    ch = z_channel(0.3)
    base = capacity(ch, tol=1e-10).capacity
    assert capacity(extend(ch, 2), tol=1e-10).capacity == pytest.approx(2 * base, abs=1e-8)


def test_capacity_invariant_under_output_permutation():
    ch = Dmc(np.array([[0.7, 0.2, 0.1], [0.1, 0.3, 0.6]]))
    a = capacity(ch, tol=1e-10).capacity
    b = capacity(ch.permute_outputs([2, 0, 1]), tol=1e-10).capacity
    assert a == pytest.approx(b, abs=1e-9)


def test_capacity_rejects_bad_tol():
    with pytest.raises(ValidationError):
        capacity(bsc(0.1), tol=0.0)


def test_mutual_information_at_optimum():
    res = capacity(z_channel(0.3), tol=1e-10)
    assert mutual_information(res.optimal_input, z_channel(0.3)) == pytest.approx(res.capacity, abs=1e-9)


def test_extend_examples():
    p = 0.1
    np.testing.assert_allclose(extend(bsc(p), 1).transition, bsc(p).transition)
    w2 = extend(bsc(p), 2).transition
    assert w2[0, 0] == pytest.approx((1 - p) ** 2)
    e = extend(bec(0.2), 2)
    assert e.transition.shape == (4, 9)
    np.testing.assert_allclose(e.transition.sum(axis=1), 1.0)


def test_extend_ceiling():
    with pytest.raises(StateSpaceError):
        extend(bec(0.2), 14)


def test_sample_examples(rng):
    assert sample(identity(2), 1, rng) == 1
    assert sample(bsc(0.0), 0, rng) == 0
    ys = sample(bsc(0.3), np.zeros(100_000, dtype=np.int64), rng)
    assert ys.mean() == pytest.approx(0.3, abs=0.01)


def test_sample_out_of_range(rng):
    with pytest.raises(ValidationError):
        sample(bsc(0.1), 2, rng)
