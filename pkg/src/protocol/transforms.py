from __future__ import annotations

import logging
from typing import List, Optional, Tuple

from src.protocol.codes import GeneralCode, Schedule, StaggeredCode
from src.protocol.tables import ConcatTable, ConstantTable, ProjectedTable, SymbolTable, Table
from src.utils.errors import ValidationError

log = logging.getLogger(__name__)


def _drop(table: Table, width: int, position: int) -> ProjectedTable:
    """
    Reuse `table` on a history one symbol wider, ignoring `position`.
    """
    columns = tuple(c for c in range(width) if c != position)
    return ProjectedTable(table, columns, width)


def stagger_transform(code: GeneralCode) -> GeneralCode:
    """
    Splits every simultaneous slot into a User-1 slot followed by a User-2
    slot. The User-2 encoder of a split slot ignores the C1 output that the
    first half just delivered, so it consumes exactly what it did originally.
    """
    s = code.schedule
    if s.c1[0] != 1 or s.c2[-1] != 1:
        raise ValidationError(
            "stagger_transform needs c1 at slot 1 and c2 at the last slot; "
            "apply boundary_pad (after repetition_lift to keep the rate increase small) first"
        )
    if s.is_staggered:
        return code

    c1: List[int] = []
    c2: List[int] = []
    enc1: List[Optional[Table]] = []
    enc2: List[Optional[Table]] = []
    for i in range(s.N):
        if s.c1[i] and s.c2[i]:
            width2 = code.n + s.received_before(2, i) + 1
            c1 += [1, 0]
            c2 += [0, 1]
            enc1 += [code.encoders1[i], None]
            enc2 += [None, _drop(code.encoders2[i], width2, width2 - 1)]
        else:
            c1.append(s.c1[i])
            c2.append(s.c2[i])
            enc1.append(code.encoders1[i])
            enc2.append(code.encoders2[i])

    out = GeneralCode(code.n, Schedule(tuple(c1), tuple(c2)), code.alphabets,
                      tuple(enc1), tuple(enc2), code.decoder1, code.decoder2)
    log.debug("staggered horizon %d -> %d", s.N, out.N)
    return out


def boundary_pad(code: GeneralCode) -> GeneralCode:
    """
    Spurious User-1 slot in front when c1 is off at slot 1, spurious User-2
    slot at the end when c2 is off at slot N. Spurious inputs are constant and
    the other user ignores what it receives in them.
    """
    s, a, n = code.schedule, code.alphabets, code.n
    pad_front = s.c1[0] == 0
    pad_back = s.c2[-1] == 0
    if not pad_front and not pad_back:
        return code

    c1, c2 = list(s.c1), list(s.c2)
    enc1, enc2 = list(code.encoders1), list(code.encoders2)
    dec1, dec2 = code.decoder1, code.decoder2

    if pad_front:
        # every User-2 history gains the spurious C1 output at position n
        enc2 = [None if e is None else _drop(e, e.in_width + 1, n) for e in enc2]
        dec2 = _drop(dec2, dec2.in_width + 1, n)
        c1.insert(0, 1)
        c2.insert(0, 0)
        enc1.insert(0, ConstantTable(n, a.in1, 1, 0))
        enc2.insert(0, None)

    if pad_back:
        width2 = n + sum(c1)
        dec1 = _drop(dec1, dec1.in_width + 1, dec1.in_width)
        c1.append(0)
        c2.append(1)
        enc1.append(None)
        enc2.append(ConstantTable(width2, a.in2, 1, 0))

    return GeneralCode(n, Schedule(tuple(c1), tuple(c2)), a, tuple(enc1), tuple(enc2), dec1, dec2)


def repetition_lift(code: GeneralCode, H: int) -> GeneralCode:
    """
    Runs the code H times back to back on consecutive source sub-blocks.
    Copy h of a slot function sees only copy h's source symbols and the
    outputs received during copy h.
    """
    if H < 1:
        raise ValidationError(f"H must be >= 1, got {H}")
    if H == 1:
        return code

    s, a, n = code.schedule, code.alphabets, code.n
    N = s.N
    recv_per_copy = {1: s.total(2), 2: s.total(1)}
    lifted_n = n * H

    def columns(user: int, h: int, received: int) -> Tuple[int, ...]:
        own = tuple(range(h * n, (h + 1) * n))
        base = lifted_n + h * recv_per_copy[user]
        return own + tuple(range(base, base + received))

    enc1: List[Optional[Table]] = []
    enc2: List[Optional[Table]] = []
    for h in range(H):
        for i in range(N):
            for user, src, dst in ((1, code.encoders1, enc1), (2, code.encoders2, enc2)):
                e = src[i]
                if e is None:
                    dst.append(None)
                    continue
                got = s.received_before(user, i)
                width = lifted_n + h * recv_per_copy[user] + got
                dst.append(ProjectedTable(e, columns(user, h, got), width))

    def lift_decoder(dec: Table, user: int) -> Table:
        width = lifted_n + H * recv_per_copy[user]
        return ConcatTable(tuple(
            ProjectedTable(dec, columns(user, h, recv_per_copy[user]), width) for h in range(H)
        ))

    schedule = Schedule(s.c1 * H, s.c2 * H)
    return GeneralCode(lifted_n, schedule, a, tuple(enc1), tuple(enc2),
                       lift_decoder(code.decoder1, 1), lift_decoder(code.decoder2, 2))


def padding_slots(code: GeneralCode) -> int:
    s = code.schedule
    return int(s.c1[0] == 0) + int(s.c2[-1] == 0)


def rate_excess(code: GeneralCode, H: int) -> float:
    """
    delta(H): rate increase that padding the H-fold lift costs, (pad slots)/(nH).
    """
    return padding_slots(code) / (code.n * H)


def separate(code: GeneralCode, H: int = 1) -> GeneralCode:
    """
    repetition_lift -> boundary_pad -> stagger_transform.
    """
    return stagger_transform(boundary_pad(repetition_lift(code, H)))


def as_staggered(code: GeneralCode) -> StaggeredCode:
    """
    Group a staggered-shaped general code's slots into rounds. Within a round
    the sender receives nothing, so every slot table reads the same history.
    """
    s = code.schedule
    if not s.is_staggered:
        raise ValidationError("code is not staggered-shaped; run stagger_transform first")

    lengths: List[int] = []
    encoders: List[Table] = []
    i = 0
    while i < s.N:
        user = 1 if s.c1[i] else 2
        j = i
        parts: List[Table] = []
        while j < s.N and (s.c1[j] if user == 1 else s.c2[j]):
            parts.append(code.encoders1[j] if user == 1 else code.encoders2[j])
            j += 1
        lengths.append(j - i)
        encoders.append(parts[0] if len(parts) == 1 else ConcatTable(tuple(parts)))
        i = j

    return StaggeredCode(code.n, tuple(lengths), code.alphabets, tuple(encoders),
                         code.decoder1, code.decoder2)


def as_general(code: StaggeredCode) -> GeneralCode:
    """
    Slot-level view of a staggered code: slot j of round k emits symbol j of the round table.
    """
    enc1: List[Optional[Table]] = []
    enc2: List[Optional[Table]] = []
    for k, (table, nk) in enumerate(zip(code.round_encoders, code.round_lengths), start=1):
        for j in range(nk):
            slot_table = SymbolTable(table, j) if nk > 1 else table
            if k % 2:
                enc1.append(slot_table)
                enc2.append(None)
            else:
                enc1.append(None)
                enc2.append(slot_table)
    return GeneralCode(code.n, code.schedule, code.alphabets, tuple(enc1), tuple(enc2),
                       code.decoder1, code.decoder2)

