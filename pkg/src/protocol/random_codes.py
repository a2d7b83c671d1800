from __future__ import annotations

from typing import List, Optional, Sequence, Tuple

import numpy as np

from src.protocol.codes import Alphabets, GeneralCode, Schedule, StaggeredCode
from src.protocol.tables import Table, random_lookup
from src.utils.errors import ValidationError


def _history_radices(alphabets: Alphabets, user: int, n: int, received: int) -> Tuple[int, ...]:
    if user == 1:
        return (alphabets.source1,) * n + (alphabets.out2,) * received
    return (alphabets.source2,) * n + (alphabets.out1,) * received


def random_schedule(N: int, rng: np.random.Generator, simultaneous: int = 0) -> Schedule:
    """
    Each slot is (1,0), (0,1) or (1,1) uniformly; at least `simultaneous`
    slots are forced to (1,1).
    """
    if N < 1:
        raise ValidationError(f"horizon must be >= 1, got {N}")
    if not 0 <= simultaneous <= N:
        raise ValidationError(f"cannot force {simultaneous} simultaneous slots in a horizon of {N}")
    kinds = rng.integers(0, 3, size=N)
    forced = rng.choice(N, size=simultaneous, replace=False)
    kinds[forced] = 2
    c1 = tuple(int(k != 1) for k in kinds)
    c2 = tuple(int(k != 0) for k in kinds)
    return Schedule(c1, c2)


def random_general_code(
    n: int,
    schedule: Schedule,
    alphabets: Alphabets,
    rng: np.random.Generator,
) -> GeneralCode:
    enc1: List[Optional[Table]] = []
    enc2: List[Optional[Table]] = []
    for i in range(schedule.N):
        for user, flags, out, dst in ((1, schedule.c1, alphabets.in1, enc1), (2, schedule.c2, alphabets.in2, enc2)):
            if not flags[i]:
                dst.append(None)
                continue
            radices = _history_radices(alphabets, user, n, schedule.received_before(user, i))
            dst.append(random_lookup(radices, out, 1, rng))

    dec1 = random_lookup(_history_radices(alphabets, 1, n, schedule.total(2)), alphabets.recon2, n, rng)
    dec2 = random_lookup(_history_radices(alphabets, 2, n, schedule.total(1)), alphabets.recon1, n, rng)
    return GeneralCode(n, schedule, alphabets, tuple(enc1), tuple(enc2), dec1, dec2)


def random_staggered_code(
    n: int,
    round_lengths: Sequence[int],
    alphabets: Alphabets,
    rng: np.random.Generator,
) -> StaggeredCode:
    lengths = tuple(int(x) for x in round_lengths)
    if not lengths or len(lengths) % 2:
        raise ValidationError(f"number of rounds must be even and positive, got {len(lengths)}")

    encoders: List[Table] = []
    for k, nk in enumerate(lengths, start=1):
        user = 1 if k % 2 else 2
        start = 1 if k % 2 else 0
        received = sum(lengths[start:k - 1:2])
        out = alphabets.in1 if user == 1 else alphabets.in2
        encoders.append(random_lookup(_history_radices(alphabets, user, n, received), out, nk, rng))

    dec1 = random_lookup(_history_radices(alphabets, 1, n, sum(lengths[1::2])), alphabets.recon2, n, rng)
    dec2 = random_lookup(_history_radices(alphabets, 2, n, sum(lengths[0::2])), alphabets.recon1, n, rng)
    return StaggeredCode(n, lengths, alphabets, tuple(encoders), dec1, dec2)


def random_round_lengths(q: int, choices: Sequence[int], rng: np.random.Generator) -> Tuple[int, ...]:
    if q < 2 or q % 2:
        raise ValidationError(f"q must be even and >= 2, got {q}")
    return tuple(int(x) for x in rng.choice(np.asarray(choices), size=q))
