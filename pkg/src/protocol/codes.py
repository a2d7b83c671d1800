from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Tuple, Union

from src.protocol.tables import Table
from src.utils.errors import ValidationError

IDLE = "e"


@dataclass(frozen=True)
class Alphabets:
    """
    Sizes of every finite set a code touches.
    source1/source2: X1, X2; in1/out1: C1 input/output; in2/out2: C2;
    recon1: alphabet of the estimate of X1 (made at User 2); recon2 likewise for X2.
    """

    source1: int
    source2: int
    in1: int
    out1: int
    in2: int
    out2: int
    recon1: int
    recon2: int

    @classmethod
    def binary(cls) -> "Alphabets":
        return cls(2, 2, 2, 2, 2, 2, 2, 2)

    @classmethod
    def matching(cls, source, ch1, ch2, recon1: Optional[int] = None, recon2: Optional[int] = None) -> "Alphabets":
        return cls(
            source.alphabet1, source.alphabet2,
            ch1.input_size, ch1.output_size,
            ch2.input_size, ch2.output_size,
            source.alphabet1 if recon1 is None else recon1,
            source.alphabet2 if recon2 is None else recon2,
        )


@dataclass(frozen=True)
class Schedule:
    c1: Tuple[int, ...]
    c2: Tuple[int, ...]

    def __post_init__(self):
        c1 = tuple(int(c) for c in self.c1)
        c2 = tuple(int(c) for c in self.c2)
        if len(c1) != len(c2) or not c1:
            raise ValidationError(f"schedule vectors must be nonempty and equally long ({len(c1)} vs {len(c2)})")
        for i, (a, b) in enumerate(zip(c1, c2)):
            if a not in (0, 1) or b not in (0, 1):
                raise ValidationError(f"slot {i + 1}: flags must be 0 or 1")
            if a + b < 1:
                raise ValidationError(f"slot {i + 1}: at least one direction must be active")
        object.__setattr__(self, "c1", c1)
        object.__setattr__(self, "c2", c2)

    @property
    def N(self) -> int:
        return len(self.c1)

    def received_before(self, user: int, slot: int) -> int:
        """
        Channel outputs User `user` has received before 0-based `slot`.
        """
        other = self.c2 if user == 1 else self.c1
        return int(sum(other[:slot]))

    def total(self, user: int) -> int:
        return int(sum(self.c1 if user == 1 else self.c2))

    @property
    def is_staggered(self) -> bool:
        one_direction = all(a + b == 1 for a, b in zip(self.c1, self.c2))
        return one_direction and self.c1[0] == 1 and self.c2[-1] == 1


@dataclass(frozen=True)
class GeneralCode:
    """
    Scheduled interactive code. encoders1[i] is present iff c1[i] == 1; it maps
    User 1's history (n source symbols, then every C2 output received so far) to
    one C1 input symbol. decoder1 is User 1's reproduction of X2 (g1),
    decoder2 is User 2's reproduction of X1 (g2).
    """

    n: int
    schedule: Schedule
    alphabets: Alphabets
    encoders1: Tuple[Optional[Table], ...] = field(repr=False)
    encoders2: Tuple[Optional[Table], ...] = field(repr=False)
    decoder1: Table = field(repr=False)
    decoder2: Table = field(repr=False)

    def __post_init__(self):
        if self.n < 1:
            raise ValidationError(f"block length must be >= 1, got {self.n}")
        object.__setattr__(self, "encoders1", tuple(self.encoders1))
        object.__setattr__(self, "encoders2", tuple(self.encoders2))
        s, a = self.schedule, self.alphabets
        if len(self.encoders1) != s.N or len(self.encoders2) != s.N:
            raise ValidationError(f"need {s.N} encoder slots per user")
        for user, encoders, flags, alphabet in (
            (1, self.encoders1, s.c1, a.in1),
            (2, self.encoders2, s.c2, a.in2),
        ):
            for i, (enc, flag) in enumerate(zip(encoders, flags)):
                if (enc is not None) != bool(flag):
                    raise ValidationError(f"user {user} slot {i + 1}: encoder presence must match flag {flag}")
                if enc is None:
                    continue
                width = self.n + s.received_before(user, i)
                if enc.in_width != width or enc.out_width != 1 or enc.out_alphabet != alphabet:
                    raise ValidationError(
                        f"user {user} slot {i + 1}: encoder shape ({enc.in_width}->{enc.out_width}) "
                        f"does not match history width {width}"
                    )
        for user, dec, recon in ((1, self.decoder1, a.recon2), (2, self.decoder2, a.recon1)):
            width = self.n + s.total(2 if user == 1 else 1)
            if dec.in_width != width or dec.out_width != self.n or dec.out_alphabet != recon:
                raise ValidationError(f"user {user} decoder must map {width} symbols to {self.n} reconstructions")

    @property
    def N(self) -> int:
        return self.schedule.N


@dataclass(frozen=True)
class StaggeredCode:
    """
    Rounds n_1..n_q (q even), odd rounds sent by User 1 over C1, even rounds by
    User 2 over C2. round_encoders[k] maps the sender's history (own source
    block, then every block received in earlier rounds) to n_{k+1} inputs.
    """

    n: int
    round_lengths: Tuple[int, ...]
    alphabets: Alphabets
    round_encoders: Tuple[Table, ...] = field(repr=False)
    decoder1: Table = field(repr=False)
    decoder2: Table = field(repr=False)

    def __post_init__(self):
        lengths = tuple(int(x) for x in self.round_lengths)
        if self.n < 1:
            raise ValidationError(f"block length must be >= 1, got {self.n}")
        if not lengths or len(lengths) % 2:
            raise ValidationError(f"number of rounds must be even and positive, got {len(lengths)}")
        if min(lengths) < 1:
            raise ValidationError("every round needs at least one slot")
        object.__setattr__(self, "round_lengths", lengths)
        object.__setattr__(self, "round_encoders", tuple(self.round_encoders))
        if len(self.round_encoders) != len(lengths):
            raise ValidationError("one encoder per round is required")
        a = self.alphabets
        for k, (enc, nk) in enumerate(zip(self.round_encoders, lengths), start=1):
            alphabet = a.in1 if k % 2 else a.in2
            width = self.n + self.received_before(k)
            if enc.in_width != width or enc.out_width != nk or enc.out_alphabet != alphabet:
                raise ValidationError(
                    f"round {k}: encoder must map {width} symbols to {nk} channel inputs"
                )
        w1 = self.n + sum(lengths[1::2])
        w2 = self.n + sum(lengths[0::2])
        if self.decoder1.in_width != w1 or self.decoder1.out_width != self.n:
            raise ValidationError(f"decoder1 must map {w1} symbols to {self.n} reconstructions")
        if self.decoder2.in_width != w2 or self.decoder2.out_width != self.n:
            raise ValidationError(f"decoder2 must map {w2} symbols to {self.n} reconstructions")

    @property
    def q(self) -> int:
        return len(self.round_lengths)

    def received_before(self, k: int) -> int:
        """
        Symbols the sender of 1-based round k has received in earlier rounds.
        """
        start = 1 if k % 2 else 0
        return sum(self.round_lengths[start:k - 1:2])

    @property
    def schedule(self) -> Schedule:
        c1: List[int] = []
        c2: List[int] = []
        for k, nk in enumerate(self.round_lengths, start=1):
            c1 += [1 if k % 2 else 0] * nk
            c2 += [0 if k % 2 else 1] * nk
        return Schedule(tuple(c1), tuple(c2))


Code = Union[GeneralCode, StaggeredCode]


@dataclass(frozen=True)
class CodeSpec:
    R1: float
    R2: float
    D1: float
    D2: float

    def __post_init__(self):
        for name in ("R1", "R2", "D1", "D2"):
            if getattr(self, name) < 0:
                raise ValidationError(f"{name} must be >= 0")

    def admits(self, c1: float, c2: float, D1: float, D2: float, tol: float = 1e-12) -> bool:
        """
        The (C1, C2, X1, X2, R1, R2, D1, D2)-code criterion.
        """
        return c1 <= self.R1 + tol and c2 <= self.R2 + tol and D1 <= self.D1 + tol and D2 <= self.D2 + tol


@dataclass
class ExecutionTrace:
    """
    One realised run. Slot lists hold a channel symbol or IDLE.
    """

    x1: List[int]
    x2: List[int]
    u1: List[Union[int, str]]
    v1: List[Union[int, str]]
    u2: List[Union[int, str]]
    v2: List[Union[int, str]]
    xhat1: List[int]
    xhat2: List[int]

    def is_consistent(self, schedule: Schedule) -> bool:
        for i in range(schedule.N):
            for flag, u, v in ((schedule.c1[i], self.u1[i], self.v1[i]), (schedule.c2[i], self.u2[i], self.v2[i])):
                idle = flag == 0
                if (u == IDLE) != idle or (v == IDLE) != idle:
                    return False
        return True


def rates(code: Code) -> Tuple[float, float]:
    """
    Channel uses of C1 and C2 per source symbol.
    """
    if isinstance(code, StaggeredCode):
        return sum(code.round_lengths[0::2]) / code.n, sum(code.round_lengths[1::2]) / code.n
    return code.schedule.total(1) / code.n, code.schedule.total(2) / code.n

