import math

import numpy as np
import pytest

from src.kaspi.chain import AuxChain, embed, evaluate
from src.kaspi.grid import grid_search, simplex_grid
from src.kaspi.optimizer import minimize_lagrangian, optimize_point, random_chain, zero_rate_point
from src.source.source import dsbs, hamming, independent, rate_distortion
from src.utils.errors import InfeasibleError, StateSpaceError, ValidationError
from src.utils.rng import make_rng

H2 = hamming(2)
UNIFORM = independent([0.5, 0.5], [0.5, 0.5])


def h(p):
    return -p * math.log2(p) - (1 - p) * math.log2(1 - p)


def copy_chain():
    """U1 = X1, U2 constant; User 2 reads X1 off U1."""
    recon1 = np.zeros((2, 2, 1), dtype=np.int64)
    recon1[:, 1, :] = 1
    return AuxChain(
        (2, 1),
        (np.eye(2), np.ones((2, 2, 1))),
        recon1,
        np.zeros((2, 2, 1), dtype=np.int64),
    )


def test_chain_validation():
    with pytest.raises(ValidationError):
        AuxChain((2, 1, 1), (np.eye(2), np.ones((2, 2, 1)), np.ones((2, 2, 1, 1))),
                 np.zeros((2, 2, 1, 1)), np.zeros((2, 2, 1, 1)))
    with pytest.raises(ValidationError, match="row-stochastic"):
        AuxChain((2, 1), (np.full((2, 2), 0.6), np.ones((2, 2, 1))),
                 np.zeros((2, 2, 1)), np.zeros((2, 2, 1)))


def test_evaluate_lossless_corner():
    point = evaluate(copy_chain(), dsbs(0.2), H2, H2)
    assert point.rho1 == pytest.approx(h(0.2), abs=1e-9)
    assert point.rho2 == pytest.approx(0.0, abs=1e-12)
    assert point.D1 == pytest.approx(0.0, abs=1e-12)
    assert point.D2 == pytest.approx(0.5, abs=1e-12)
    assert point.round_rates[0] == pytest.approx(point.rho1)


def test_evaluate_zero_rate_corner():
    # each user still guesses from its own source
    point = zero_rate_point(dsbs(0.2), H2, H2, (2, 2))
    assert point.sum_rate == pytest.approx(0.0, abs=1e-12)
    assert point.D1 == pytest.approx(0.2) and point.D2 == pytest.approx(0.2)


def test_evaluate_alphabet_mismatch():
    ternary = independent([1 / 3, 1 / 3, 1 / 3], [0.5, 0.5])
    with pytest.raises(ValidationError):
        evaluate(copy_chain(), ternary, hamming(3), H2)


def test_embed_keeps_rates_and_distortions():
    base = evaluate(copy_chain(), dsbs(0.2), H2, H2)
    wide = evaluate(embed(copy_chain(), 4), dsbs(0.2), H2, H2)
    assert wide.q == 4
    assert (wide.rho1, wide.rho2, wide.D1, wide.D2) == pytest.approx((base.rho1, base.rho2, base.D1, base.D2), abs=1e-12)
    with pytest.raises(ValidationError):
        embed(copy_chain(), 3)


def test_chain_leaves_caller_arrays_writeable():
    cond = np.eye(2)
    recon1 = np.zeros((2, 2, 1), dtype=np.int64)
    chain = AuxChain((2, 1), (cond, np.ones((2, 2, 1))), recon1, np.zeros((2, 2, 1), dtype=np.int64))
    assert cond.flags.writeable and recon1.flags.writeable
    assert not chain.conditionals[0].flags.writeable and not chain.recon1.flags.writeable
    cond[0, 0] = 0.5
    assert chain.conditionals[0][0, 0] == 1.0


def test_embed_pads_to_larger_alphabets():
    base = evaluate(copy_chain(), dsbs(0.2), H2, H2)
    wide = embed(copy_chain(), 4, (3, 2, 2, 2))
    assert wide.aux_sizes == (3, 2, 2, 2)
    assert wide.conditionals[0][:, 2].sum() == 0.0
    point = evaluate(wide, dsbs(0.2), H2, H2)
    assert (point.rho1, point.rho2, point.D1, point.D2) == pytest.approx(
        (base.rho1, base.rho2, base.D1, base.D2), abs=1e-12
    )
    with pytest.raises(ValidationError, match="smaller"):
        embed(copy_chain(), 4, (1, 1, 1, 1))
    with pytest.raises(ValidationError, match="4 auxiliary sizes"):
        embed(copy_chain(), 4, (2, 2))


@pytest.mark.slow
def test_optimize_accepts_a_smaller_warm_start():
    source = dsbs(0.2)
    # both users reveal their source over 3-symbol auxiliaries
    reveal1 = np.zeros((2, 3))
    reveal1[[0, 1], [0, 1]] = 1.0
    reveal2 = np.zeros((2, 3, 3))
    reveal2[0, :, 0] = reveal2[1, :, 1] = 1.0
    recon1 = np.broadcast_to(np.arange(3)[None, :, None] % 2, (2, 3, 3))
    recon2 = np.broadcast_to(np.arange(3)[None, None, :] % 2, (2, 3, 3))
    start = AuxChain((3, 3), (reveal1, reveal2), recon1, recon2)
    assert evaluate(start, source, H2, H2).D1 == pytest.approx(0.0, abs=1e-12)
    point = optimize_point(source, H2, H2, 0.15, 0.15, q=4, aux_sizes=(4, 4, 4, 4), restarts=1,
                           rng=make_rng(6), max_sweeps=30, init=start)
    assert point.q == 4
    assert point.D1 <= 0.15 + 1e-6 and point.D2 <= 0.15 + 1e-6


def test_witness_dict_keeps_point():
    chain = random_chain(dsbs(0.2), (3, 2), make_rng(2))
    again = AuxChain.from_dict(chain.to_dict())
    a, b = evaluate(chain, dsbs(0.2), H2, H2), evaluate(again, dsbs(0.2), H2, H2)
    assert (a.rho1, a.rho2) == pytest.approx((b.rho1, b.rho2), abs=1e-12)


def test_alternating_minimisation_never_increases():
    start = random_chain(dsbs(0.2), (3, 3), make_rng(5))
    chain, trace = minimize_lagrangian(start, dsbs(0.2), H2, H2, 3.0, 2.0, max_sweeps=40)
    assert len(trace) >= 2
    assert np.all(np.diff(trace) <= 1e-9)
    assert chain.aux_sizes == (3, 3)


def test_optimize_at_constant_guess_is_zero_rate():
    point = optimize_point(UNIFORM, H2, H2, 0.5, 0.5, q=2)
    assert point.sum_rate == pytest.approx(0.0, abs=1e-12)
    assert point.method == "zero-rate"


def test_optimize_infeasible_reports_minimum():
    with pytest.raises(InfeasibleError) as e:
        optimize_point(UNIFORM, H2, H2, -0.1, 0.2)
    assert e.value.minimal == {"D1_min": 0.0, "D2_min": 0.0}


def test_optimize_rejects_odd_rounds():
    with pytest.raises(ValidationError):
        optimize_point(UNIFORM, H2, H2, 0.1, 0.1, q=3)
    with pytest.raises(ValidationError):
        optimize_point(UNIFORM, H2, H2, 0.1, 0.1, q=2, aux_sizes=(2,))


@pytest.mark.slow
@pytest.mark.parametrize("D1", [0.1, 0.2])
def test_optimize_reduces_to_one_way_rd(D1):
    point = optimize_point(UNIFORM, H2, H2, D1, 0.5, q=2, restarts=4, rng=make_rng(11))
    assert point.rho1 == pytest.approx(rate_distortion([0.5, 0.5], H2, D1), abs=2e-3)
    assert point.D1 <= D1 + 1e-6 and point.D2 <= 0.5 + 1e-6
    again = evaluate(point.witness, UNIFORM, H2, H2)
    assert (again.rho1, again.rho2, again.D1, again.D2) == pytest.approx(
        (point.rho1, point.rho2, point.D1, point.D2), abs=1e-9
    )


@pytest.mark.slow
def test_more_rounds_never_hurt():
    source = dsbs(0.2)
    two = optimize_point(source, H2, H2, 0.15, 0.15, q=2, aux_sizes=(2, 2), restarts=1,
                         rng=make_rng(3), max_sweeps=50)
    four = optimize_point(source, H2, H2, 0.15, 0.15, q=4, aux_sizes=(2, 2, 2, 2), restarts=1,
                          rng=make_rng(3), max_sweeps=50, init=two.witness)
    assert four.sum_rate <= two.sum_rate + 1e-6


def test_simplex_grid():
    g = simplex_grid(3, 4)
    assert g.shape == (15, 3)
    np.testing.assert_allclose(g.sum(axis=1), 1.0)
    assert simplex_grid(1, 64).shape == (1, 1)


def test_grid_search_brackets_one_way_rd():
    res = grid_search(UNIFORM, H2, H2, 0.1, 0.5, aux_sizes=(2, 1), resolution=16)
    exact = 1 - h(0.1)
    assert res.sum_rate >= exact - 1e-6
    assert res.sum_rate <= exact + 0.02
    assert res.D1 <= 0.1 + 1e-6
    assert res.single_point_rate >= res.sum_rate - 1e-12


def test_grid_search_limits():
    with pytest.raises(ValidationError):
        grid_search(UNIFORM, H2, H2, 0.1, 0.5, aux_sizes=(2, 1, 1))
    with pytest.raises(StateSpaceError):
        grid_search(UNIFORM, H2, H2, 0.1, 0.5, aux_sizes=(2, 1), resolution=16, cap=10)
