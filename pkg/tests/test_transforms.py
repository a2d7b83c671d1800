import pytest

from src.channel.dmc import bsc
from src.protocol.codes import Alphabets, Schedule, StaggeredCode, rates
from src.protocol.engine import exact_distortions, exact_distortions_by_position
from src.protocol.random_codes import random_general_code, random_round_lengths, random_schedule, random_staggered_code
from src.protocol.transforms import (
    as_general,
    as_staggered,
    boundary_pad,
    padding_slots,
    rate_excess,
    repetition_lift,
    separate,
    stagger_transform,
)
from src.source.source import dsbs
from src.utils.errors import StateSpaceError, ValidationError
from src.utils.rng import make_rng

A = Alphabets.binary()
MODEL = (dsbs(0.2), bsc(0.1), bsc(0.25))


def _general(rng, c1, c2, n=1):
    return random_general_code(n, Schedule(c1, c2), A, rng)


def test_stagger_transform_fixed_point(rng):
    code = _general(rng, (1, 0), (0, 1))
    assert stagger_transform(code) is code


def test_stagger_transform_splits_simultaneous_slot(rng):
    out = stagger_transform(_general(rng, (1,), (1,)))
    assert out.schedule.c1 == (1, 0)
    assert out.schedule.c2 == (0, 1)
    assert out.schedule.is_staggered


def test_stagger_transform_needs_boundary(rng):
    with pytest.raises(ValidationError, match="boundary_pad"):
        stagger_transform(_general(rng, (0, 1), (1, 1)))


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_stagger_transform_preserves_distortions_and_rates(seed):
    code = _general(make_rng(seed), (1, 1), (1, 1))
    out = stagger_transform(code)
    assert out.N <= 2 * code.N
    assert rates(out) == rates(code)
    before = exact_distortions(code, *MODEL)
    after = exact_distortions(out, *MODEL)
    assert after == pytest.approx(before, abs=1e-12)


def test_boundary_pad_noop(rng):
    code = _general(rng, (1, 1), (0, 1))
    assert boundary_pad(code) is code


def test_boundary_pad_front(rng):
    code = _general(rng, (0, 1), (1, 1), n=2)
    padded = boundary_pad(code)
    assert padded.schedule.c1 == (1, 0, 1)
    assert padded.schedule.c2 == (0, 1, 1)
    r0, r1 = rates(code), rates(padded)
    assert r1[0] - r0[0] == pytest.approx(1 / 2)
    assert r1[1] == r0[1]
    assert exact_distortions(padded, *MODEL) == pytest.approx(exact_distortions(code, *MODEL), abs=1e-12)


def test_boundary_pad_both_ends(rng):
    code = _general(rng, (0, 1), (1, 0))
    padded = boundary_pad(code)
    assert padded.schedule.c1[0] == 1 and padded.schedule.c2[-1] == 1
    assert padded.N == code.N + 2
    assert exact_distortions(padded, *MODEL) == pytest.approx(exact_distortions(code, *MODEL), abs=1e-12)


def test_repetition_lift_identity(rng):
    code = _general(rng, (1, 1), (1, 0))
    assert repetition_lift(code, 1) is code
    with pytest.raises(ValidationError):
        repetition_lift(code, 0)


def test_repetition_lift_keeps_rates_and_distortions(rng):
    code = _general(rng, (1, 0), (1, 1))
    lifted = repetition_lift(code, 3)
    assert lifted.n == 3 and lifted.N == 6
    assert rates(lifted) == pytest.approx(rates(code), abs=1e-12)
    assert exact_distortions(lifted, *MODEL) == pytest.approx(exact_distortions(code, *MODEL), abs=1e-12)


def test_rate_excess_scales_as_one_over_h(rng):
    code = _general(rng, (0, 1), (1, 0), n=2)
    assert padding_slots(code) == 2
    assert rate_excess(code, 1) == pytest.approx(1.0)
    assert rate_excess(code, 10) == pytest.approx(0.1)


@pytest.mark.parametrize("H", [1, 4, 16])
def test_separate_is_staggered_within_excess(rng, H):
    code = _general(rng, (0, 1, 1), (1, 1, 0))
    out = separate(code, H)
    assert out.schedule.is_staggered
    base = rates(code)
    new = rates(out)
    delta = rate_excess(code, H)
    assert new[0] - base[0] <= delta + 1e-12
    assert new[1] - base[1] <= delta + 1e-12
    assert delta <= 2 / (code.n * H) + 1e-12


def test_separate_then_group_keeps_distortions(rng):
    code = _general(rng, (0, 1, 1), (1, 1, 0))
    staggered = as_staggered(separate(code))
    assert isinstance(staggered, StaggeredCode)
    assert exact_distortions(staggered, *MODEL) == pytest.approx(exact_distortions(code, *MODEL), abs=1e-12)


@pytest.mark.parametrize("seed", [4, 5, 6])
def test_by_position_matches_full_enumeration(seed):
    rng = make_rng(seed)
    code = random_general_code(2, random_schedule(3, rng, 1), A, rng)
    assert exact_distortions_by_position(code, *MODEL) == pytest.approx(exact_distortions(code, *MODEL), abs=1e-12)
    lifted = separate(code, 2)
    assert exact_distortions_by_position(lifted, *MODEL) == pytest.approx(
        exact_distortions(lifted, *MODEL), abs=1e-12
    )


def test_sixteen_fold_lift_keeps_distortions_exactly(rng):
    code = _general(rng, (0, 1, 1), (1, 1, 0))
    lifted = separate(code, 16)
    with pytest.raises(StateSpaceError):
        exact_distortions(lifted, *MODEL)
    assert exact_distortions_by_position(lifted, *MODEL) == pytest.approx(exact_distortions(code, *MODEL), abs=1e-12)


def test_by_position_needs_a_general_code(rng):
    code = random_staggered_code(1, (1, 1), A, rng)
    with pytest.raises(ValidationError):
        exact_distortions_by_position(code, *MODEL)


def test_as_staggered_rejects_simultaneous(rng):
    with pytest.raises(ValidationError):
        as_staggered(_general(rng, (1,), (1,)))


def test_as_general_round_trip(rng):
    code = random_staggered_code(1, (2, 1, 1, 2), A, rng)
    general = as_general(code)
    assert general.schedule == code.schedule
    assert rates(general) == rates(code)
    assert exact_distortions(general, *MODEL) == pytest.approx(exact_distortions(code, *MODEL), abs=1e-12)
    assert as_staggered(general).round_lengths == code.round_lengths


def test_random_schedule_forces_simultaneous_slots(rng):
    for _ in range(20):
        s = random_schedule(5, rng, simultaneous=2)
        assert sum(a and b for a, b in zip(s.c1, s.c2)) >= 2
    with pytest.raises(ValidationError):
        random_schedule(2, rng, simultaneous=3)


def test_random_round_lengths(rng):
    lengths = random_round_lengths(4, [1, 2], rng)
    assert len(lengths) == 4 and set(lengths) <= {1, 2}
    with pytest.raises(ValidationError):
        random_round_lengths(3, [1], rng)
