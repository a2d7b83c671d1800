from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, FrozenSet, List, Optional, Sequence, Tuple

import numpy as np

from src.channel.dmc import Dmc, extend, sample
from src.infotheory.pmf import CELL_CEILING, Pmf, Variable
from src.protocol.codes import IDLE, Code, ExecutionTrace, GeneralCode, Schedule, StaggeredCode
from src.protocol.tables import ConcatTable, ConstantTable, ExpandedTable, SymbolTable, Table, dependencies
from src.source.source import DistortionMeasure, JointSource, hamming, sample_blocks
from src.utils import mixed_radix
from src.utils.errors import StateSpaceError, ValidationError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Transmission:
    user: int           # sender; 1 uses C1, 2 uses C2
    table: Table
    width: int          # channel symbols sent
    first_slot: int     # 0-based slot of the first symbol


def compile_steps(code: Code) -> List[List[Transmission]]:
    """
    A step is a set of transmissions whose inputs are computed from the same
    strictly-prior information: one slot of a general code, one round of a
    staggered code.
    """
    steps: List[List[Transmission]] = []
    if isinstance(code, StaggeredCode):
        slot = 0
        for k, (enc, nk) in enumerate(zip(code.round_encoders, code.round_lengths), start=1):
            steps.append([Transmission(1 if k % 2 else 2, enc, nk, slot)])
            slot += nk
        return steps

    s = code.schedule
    for i in range(s.N):
        step = []
        if s.c1[i]:
            step.append(Transmission(1, code.encoders1[i], 1, i))
        if s.c2[i]:
            step.append(Transmission(2, code.encoders2[i], 1, i))
        steps.append(step)
    return steps


def check_compatible(code: Code, source: JointSource, ch1: Dmc, ch2: Dmc) -> None:
    a = code.alphabets
    pairs = [
        ("source X1", a.source1, source.alphabet1),
        ("source X2", a.source2, source.alphabet2),
        ("C1 input", a.in1, ch1.input_size),
        ("C1 output", a.out1, ch1.output_size),
        ("C2 input", a.in2, ch2.input_size),
        ("C2 output", a.out2, ch2.output_size),
    ]
    for what, want, got in pairs:
        if want != got:
            raise ValidationError(f"{what} alphabet mismatch: code uses {want}, model has {got}")


@dataclass
class _States:
    x1: np.ndarray
    x2: np.ndarray
    recv1: np.ndarray   # C2 outputs seen by User 1
    recv2: np.ndarray   # C1 outputs seen by User 2
    prob: np.ndarray

    def take(self, idx: np.ndarray) -> None:
        self.x1, self.x2 = self.x1[idx], self.x2[idx]
        self.recv1, self.recv2 = self.recv1[idx], self.recv2[idx]
        self.prob = self.prob[idx]

    def history(self, user: int) -> np.ndarray:
        if user == 1:
            return np.concatenate([self.x1, self.recv1], axis=1)
        return np.concatenate([self.x2, self.recv2], axis=1)


# transmit(transmission, u) -> (kept state indices, output symbols (kept, width), weights)
Transmit = Callable[[Transmission, np.ndarray], Tuple[np.ndarray, np.ndarray, np.ndarray]]
Record = Callable[[Transmission, np.ndarray, np.ndarray, np.ndarray], None]


def _propagate(code: Code, states: _States, transmit: Transmit, record: Optional[Record] = None):
    """
    Runs every step; returns column ranges of received symbols per transmission.
    """
    columns: List[Tuple[Transmission, int, int]] = []
    for step in compile_steps(code):
        inputs = [t.table(states.history(t.user)) for t in step]
        for j, t in enumerate(step):
            keep, v, weight = transmit(t, inputs[j])
            u = inputs[j][keep]
            states.take(keep)
            states.prob = states.prob * weight
            inputs = [inp[keep] for inp in inputs]
            if record is not None:
                record(t, keep, u, v)
            if t.user == 1:
                start = states.recv2.shape[1]
                states.recv2 = np.concatenate([states.recv2, v], axis=1)
            else:
                start = states.recv1.shape[1]
                states.recv1 = np.concatenate([states.recv1, v], axis=1)
            columns.append((t, start, start + t.width))
    return columns


# -------------------------------
# Exact enumeration
# -------------------------------
@dataclass
class Outcomes:
    """
    Every positive-probability realisation of a code run, one row per outcome.
    """

    x1: np.ndarray
    x2: np.ndarray
    recv1: np.ndarray
    recv2: np.ndarray
    xhat1: np.ndarray
    xhat2: np.ndarray
    prob: np.ndarray
    columns: List[Tuple[Transmission, int, int]] = field(repr=False)

    def received_block(self, t_index: int) -> np.ndarray:
        t, start, stop = self.columns[t_index]
        recv = self.recv2 if t.user == 1 else self.recv1
        return recv[:, start:stop]


def _initial_states(code: Code, source: JointSource, ceiling: int) -> _States:
    n = code.n
    a1, a2 = source.alphabet1, source.alphabet2
    cells = (a1 ** n) * (a2 ** n)
    if cells > ceiling:
        raise StateSpaceError(f"source block space for n={n}", cells, ceiling)

    idx1, idx2 = np.divmod(np.arange(cells, dtype=np.int64), a2 ** n)
    x1 = mixed_radix.decode(idx1, mixed_radix.block_radices(a1, n))
    x2 = mixed_radix.decode(idx2, mixed_radix.block_radices(a2, n))
    prob = np.prod(source.joint[x1, x2], axis=1)
    keep = prob > 0
    empty = np.zeros((int(keep.sum()), 0), dtype=np.int64)
    return _States(x1[keep], x2[keep], empty, empty.copy(), prob[keep])


def enumerate_outcomes(
    code: Code, source: JointSource, ch1: Dmc, ch2: Dmc, ceiling: int = CELL_CEILING
) -> Outcomes:
    check_compatible(code, source, ch1, ch2)
    states = _initial_states(code, source, ceiling)
    extended: Dict[Tuple[int, int], np.ndarray] = {}

    def transmit(t: Transmission, u: np.ndarray):
        ch = ch1 if t.user == 1 else ch2
        key = (t.user, t.width)
        if key not in extended:
            extended[key] = extend(ch, t.width).transition
        rows = extended[key][mixed_radix.encode(u, mixed_radix.block_radices(ch.input_size, t.width))]
        s_idx, y_idx = np.nonzero(rows > 0)
        if s_idx.size > ceiling:
            raise StateSpaceError("outcome enumeration", int(s_idx.size), ceiling)
        v = mixed_radix.decode(y_idx, mixed_radix.block_radices(ch.output_size, t.width))
        return s_idx, v, rows[s_idx, y_idx]

    columns = _propagate(code, states, transmit)
    xhat2 = code.decoder1(states.history(1))
    xhat1 = code.decoder2(states.history(2))
    log.debug("enumerated %d outcomes", states.prob.size)
    return Outcomes(states.x1, states.x2, states.recv1, states.recv2, xhat1, xhat2, states.prob, columns)


def _dense_pmf(variables: Sequence[Variable], indices: Sequence[np.ndarray], prob: np.ndarray) -> Pmf:
    shape = tuple(v.alphabet_size for v in variables)
    cells = int(np.prod(shape, dtype=object))
    if cells > CELL_CEILING:
        raise StateSpaceError("joint pmf", cells, CELL_CEILING)
    mass = np.zeros(shape)
    np.add.at(mass, tuple(indices), prob)
    return Pmf(tuple(variables), mass / mass.sum())


def round_names(q: int) -> List[str]:
    return [f"V{k}" for k in range(1, q + 1)]


def exact_joint(
    code: StaggeredCode,
    source: JointSource,
    ch1: Dmc,
    ch2: Dmc,
    include_reconstructions: bool = True,
) -> Pmf:
    """
    Pmf over X1, X2, V1..Vq (and Xhat1, Xhat2). Blocks are single variables
    indexed big-endian; the U's are omitted since each is a function of the
    sender's source block and received blocks.
    """
    if not isinstance(code, StaggeredCode):
        raise ValidationError("exact_joint needs a StaggeredCode; convert with as_staggered first")
    out = enumerate_outcomes(code, source, ch1, ch2)
    n, a = code.n, code.alphabets

    variables = [Variable("X1", a.source1 ** n), Variable("X2", a.source2 ** n)]
    indices = [
        mixed_radix.encode(out.x1, mixed_radix.block_radices(a.source1, n)),
        mixed_radix.encode(out.x2, mixed_radix.block_radices(a.source2, n)),
    ]
    for k, nk in enumerate(code.round_lengths, start=1):
        size = (a.out1 if k % 2 else a.out2)
        variables.append(Variable(f"V{k}", size ** nk))
        indices.append(mixed_radix.encode(out.received_block(k - 1), mixed_radix.block_radices(size, nk)))
    if include_reconstructions:
        variables += [Variable("Xhat1", a.recon1 ** n), Variable("Xhat2", a.recon2 ** n)]
        indices += [
            mixed_radix.encode(out.xhat1, mixed_radix.block_radices(a.recon1, n)),
            mixed_radix.encode(out.xhat2, mixed_radix.block_radices(a.recon2, n)),
        ]
    return _dense_pmf(variables, indices, out.prob)


def outcome_pmf(code: Code, source: JointSource, ch1: Dmc, ch2: Dmc) -> Pmf:
    """
    Joint law of (X1, X2, Xhat1, Xhat2) for any code.
    """
    out = enumerate_outcomes(code, source, ch1, ch2)
    n, a = code.n, code.alphabets
    variables = [
        Variable("X1", a.source1 ** n), Variable("X2", a.source2 ** n),
        Variable("Xhat1", a.recon1 ** n), Variable("Xhat2", a.recon2 ** n),
    ]
    indices = [
        mixed_radix.encode(out.x1, mixed_radix.block_radices(a.source1, n)),
        mixed_radix.encode(out.x2, mixed_radix.block_radices(a.source2, n)),
        mixed_radix.encode(out.xhat1, mixed_radix.block_radices(a.recon1, n)),
        mixed_radix.encode(out.xhat2, mixed_radix.block_radices(a.recon2, n)),
    ]
    return _dense_pmf(variables, indices, out.prob)


def _default_measures(code: Code, d1, d2):
    a = code.alphabets
    d1 = d1 if d1 is not None else hamming(a.source1, a.recon1)
    d2 = d2 if d2 is not None else hamming(a.source2, a.recon2)
    return d1, d2


def exact_distortions(
    code: Code,
    source: JointSource,
    ch1: Dmc,
    ch2: Dmc,
    d1: Optional[DistortionMeasure] = None,
    d2: Optional[DistortionMeasure] = None,
) -> Tuple[float, float]:
    d1, d2 = _default_measures(code, d1, d2)
    out = enumerate_outcomes(code, source, ch1, ch2)
    D1 = float(out.prob @ d1.d[out.x1, out.xhat1].mean(axis=1))
    D2 = float(out.prob @ d2.d[out.x2, out.xhat2].mean(axis=1))
    return D1, D2


def _closure(code: GeneralCode, user: int, position: int, memo) -> Tuple[FrozenSet[int], FrozenSet[int]]:
    """
    Source positions and slots that User `user`'s estimate at `position` can
    depend on, following encoder dependencies back through the received
    symbols. At least one slot is always kept.
    """
    s, n = code.schedule, code.n
    received = {
        1: [i for i in range(s.N) if s.c2[i]],
        2: [i for i in range(s.N) if s.c1[i]],
    }
    positions = {position}
    slots = set()
    pending = []

    def keep(slot: int) -> None:
        slots.add(slot)
        for v, enc in ((1, code.encoders1[slot]), (2, code.encoders2[slot])):
            if enc is not None:
                pending.append((v, dependencies(enc, memo)[0]))

    decoder = code.decoder1 if user == 1 else code.decoder2
    pending.append((user, dependencies(decoder, memo)[position]))
    while pending or not slots:
        if not pending:
            keep(0)
            continue
        u, cols = pending.pop()
        for c in cols:
            if c < n:
                positions.add(c)
            elif received[u][c - n] not in slots:
                keep(received[u][c - n])
    return frozenset(positions), frozenset(slots)


def _sub_code(code: GeneralCode, positions: Sequence[int], slots: Sequence[int],
              estimates: Dict[int, Sequence[int]]) -> GeneralCode:
    """
    The code restricted to `positions` and `slots`; decoder of user u outputs
    the original estimates[u] at their new positions and a constant elsewhere.
    """
    s, a, n = code.schedule, code.alphabets, code.n
    m = len(positions)
    sub = Schedule(tuple(s.c1[i] for i in slots), tuple(s.c2[i] for i in slots))
    old_received = {
        1: {slot: j for j, slot in enumerate(i for i in range(s.N) if s.c2[i])},
        2: {slot: j for j, slot in enumerate(i for i in range(s.N) if s.c1[i])},
    }

    def history_columns(user: int, upto: int) -> Tuple[int, ...]:
        flags = sub.c2 if user == 1 else sub.c1
        got = [old_received[user][slots[i]] for i in range(upto) if flags[i]]
        return tuple(positions) + tuple(n + j for j in got)

    enc1, enc2 = [], []
    for i, slot in enumerate(slots):
        for user, src, dst in ((1, code.encoders1, enc1), (2, code.encoders2, enc2)):
            e = src[slot]
            dst.append(None if e is None else ExpandedTable(e, history_columns(user, i)))

    decoders = []
    for user, dec, recon in ((1, code.decoder1, a.recon2), (2, code.decoder2, a.recon1)):
        cols = history_columns(user, sub.N)
        wanted = set(estimates.get(user, ()))
        parts = [
            SymbolTable(ExpandedTable(dec, cols), p) if p in wanted else ConstantTable(len(cols), recon, 1)
            for p in positions
        ]
        decoders.append(ConcatTable(tuple(parts)))
    return GeneralCode(m, sub, a, tuple(enc1), tuple(enc2), decoders[0], decoders[1])


def exact_distortions_by_position(
    code: GeneralCode,
    source: JointSource,
    ch1: Dmc,
    ch2: Dmc,
    d1: Optional[DistortionMeasure] = None,
    d2: Optional[DistortionMeasure] = None,
    ceiling: int = CELL_CEILING,
) -> Tuple[float, float]:
    """
    Exact expected distortions, one estimate at a time: each estimate only
    needs the source positions and slots its decoder can depend on, so codes
    built from independent copies enumerate one copy at a time. Equal to
    exact_distortions wherever both run.
    """
    if not isinstance(code, GeneralCode):
        raise ValidationError("exact_distortions_by_position needs a GeneralCode")
    check_compatible(code, source, ch1, ch2)
    d1, d2 = _default_measures(code, d1, d2)
    memo: Dict[int, Tuple[FrozenSet[int], ...]] = {}

    groups: Dict[Tuple[FrozenSet[int], FrozenSet[int]], Dict[int, List[int]]] = {}
    for user in (1, 2):
        for p in range(code.n):
            key = _closure(code, user, p, memo)
            groups.setdefault(key, {}).setdefault(user, []).append(p)

    totals = {1: 0.0, 2: 0.0}
    for (positions, slots), estimates in groups.items():
        ordered = sorted(positions)
        sub = _sub_code(code, ordered, sorted(slots), estimates)
        out = enumerate_outcomes(sub, source, ch1, ch2, ceiling)
        for user, wanted in estimates.items():
            cols = [ordered.index(p) for p in wanted]
            if user == 1:
                totals[2] += float(out.prob @ d2.d[out.x2[:, cols], out.xhat2[:, cols]].sum(axis=1))
            else:
                totals[1] += float(out.prob @ d1.d[out.x1[:, cols], out.xhat1[:, cols]].sum(axis=1))
    log.debug("per-position enumeration: %d sub-codes for n=%d", len(groups), code.n)
    return totals[1] / code.n, totals[2] / code.n


# -------------------------------
# Monte Carlo
# -------------------------------
@dataclass
class MonteCarloResult:
    D1: float
    D2: float
    stderr1: float
    stderr2: float
    trials: int
    per_trial1: np.ndarray = field(repr=False)
    per_trial2: np.ndarray = field(repr=False)
    traces: List[ExecutionTrace] = field(default_factory=list, repr=False)


def _slot_count(code: Code) -> int:
    return sum(code.round_lengths) if isinstance(code, StaggeredCode) else code.N


def execute_monte_carlo(
    code: Code,
    source: JointSource,
    ch1: Dmc,
    ch2: Dmc,
    trials: int,
    rng: np.random.Generator,
    d1: Optional[DistortionMeasure] = None,
    d2: Optional[DistortionMeasure] = None,
    keep_traces: int = 0,
) -> MonteCarloResult:
    """
    Vectorised over trials; within a step every input is computed before any
    channel output of that step exists.
    """
    if trials < 1:
        raise ValidationError(f"trials must be >= 1, got {trials}")
    check_compatible(code, source, ch1, ch2)
    d1, d2 = _default_measures(code, d1, d2)

    x1, x2 = sample_blocks(source, code.n, trials, rng)
    empty = np.zeros((trials, 0), dtype=np.int64)
    states = _States(x1, x2, empty, empty.copy(), np.ones(trials))
    all_rows = np.arange(trials)

    def transmit(t: Transmission, u: np.ndarray):
        ch = ch1 if t.user == 1 else ch2
        return all_rows, sample(ch, u, rng), np.ones(trials)

    keep = min(int(keep_traces), trials)
    slots = _slot_count(code)
    slot_u = {1: np.full((keep, slots), -1), 2: np.full((keep, slots), -1)}
    slot_v = {1: np.full((keep, slots), -1), 2: np.full((keep, slots), -1)}

    def record(t: Transmission, idx, u, v):
        if keep:
            stop = t.first_slot + t.width
            slot_u[t.user][:, t.first_slot:stop] = u[:keep]
            slot_v[t.user][:, t.first_slot:stop] = v[:keep]

    _propagate(code, states, transmit, record)
    xhat2 = code.decoder1(states.history(1))
    xhat1 = code.decoder2(states.history(2))

    per1 = d1.d[states.x1, xhat1].mean(axis=1)
    per2 = d2.d[states.x2, xhat2].mean(axis=1)

    def idle(row):
        return [IDLE if s < 0 else int(s) for s in row]

    traces = [
        ExecutionTrace(
            x1=states.x1[i].tolist(), x2=states.x2[i].tolist(),
            u1=idle(slot_u[1][i]), v1=idle(slot_v[1][i]),
            u2=idle(slot_u[2][i]), v2=idle(slot_v[2][i]),
            xhat1=xhat1[i].tolist(), xhat2=xhat2[i].tolist(),
        )
        for i in range(keep)
    ]
    se = lambda a: float(a.std(ddof=1) / np.sqrt(a.size)) if a.size > 1 else 0.0
    return MonteCarloResult(
        D1=float(per1.mean()), D2=float(per2.mean()),
        stderr1=se(per1), stderr2=se(per2), trials=trials,
        per_trial1=per1, per_trial2=per2, traces=traces,
    )


def replay(
    code: Code,
    x1: Sequence[int],
    x2: Sequence[int],
    outputs1: Sequence[int],
    outputs2: Sequence[int],
) -> Tuple[List, List]:
    """
    Channel inputs per slot when the channel outputs are forced to the given
    per-slot values (entries at idle slots are ignored).
    """
    slots = _slot_count(code)
    if len(outputs1) != slots or len(outputs2) != slots:
        raise ValidationError(f"need {slots} forced outputs per channel")
    states = _States(
        np.asarray([x1], dtype=np.int64), np.asarray([x2], dtype=np.int64),
        np.zeros((1, 0), dtype=np.int64), np.zeros((1, 0), dtype=np.int64), np.ones(1),
    )
    u1: List = [IDLE] * slots
    u2: List = [IDLE] * slots
    row = np.zeros(1, dtype=np.int64)

    def transmit(t: Transmission, u: np.ndarray):
        forced = outputs1 if t.user == 1 else outputs2
        v = np.asarray([forced[t.first_slot:t.first_slot + t.width]], dtype=np.int64)
        return row, v, np.ones(1)

    def record(t: Transmission, idx, u, v):
        target = u1 if t.user == 1 else u2
        for j in range(t.width):
            target[t.first_slot + j] = int(u[0, j])

    _propagate(code, states, transmit, record)
    return u1, u2
