from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from src.channel.dmc import Dmc
from src.kaspi.chain import bayes_recon, common_conditional, owner, receiver_conditional
from src.sepsim.plan import SeparationPlan
from src.sepsim.quantizer import (
    CODEBOOK,
    codebook_decode,
    codebook_encode,
    draw_codewords,
    gather,
    sample_rows,
)
from src.sepsim.transport import PhaseStats, TransportStats, transmit_phase
from src.source.source import DistortionMeasure, JointSource, hamming, sample_blocks
from src.utils import mixed_radix
from src.utils.errors import ValidationError
from src.utils.rng import make_rng, split

log = logging.getLogger(__name__)

TRIAL_BATCH = 100


@dataclass
class SeparationResult:
    D1: float
    D2: float
    stderr1: float
    stderr2: float
    trials: int
    uses_per_symbol: Tuple[float, float]
    stats: TransportStats
    per_trial1: np.ndarray = field(repr=False)
    per_trial2: np.ndarray = field(repr=False)
    phase_failures: np.ndarray = field(repr=False)  # (trials, phases) any chunk lost
    fallback_fraction: Tuple[float, float] = (0.0, 0.0)


class _Tables:
    def __init__(self, plan: SeparationPlan, source: JointSource, d1: DistortionMeasure, d2: DistortionMeasure):
        chain = plan.source_code
        self.conditionals = chain.conditionals
        self.posteriors = [receiver_conditional(chain, source, k) for k in range(1, chain.q + 1)]
        self.common = [common_conditional(chain, source, k) for k in range(1, chain.q + 1)]
        # estimates from the own source alone, used where a lost chunk was flagged
        self.fallback1 = bayes_recon(source.joint, d1, 1)
        self.fallback2 = bayes_recon(source.joint, d2, 2)


def _check(plan: SeparationPlan, source: JointSource, ch1: Dmc, ch2: Dmc) -> None:
    chain = plan.source_code
    if (chain.alphabet1, chain.alphabet2) != (source.alphabet1, source.alphabet2):
        raise ValidationError("plan's source code does not match the source alphabets")
    for k, phase in enumerate(plan.phases, start=1):
        if phase.channel != owner(k):
            raise ValidationError(f"phase {k} must use C{owner(k)}")
        if sum(c.uses for c in phase.chunks) != plan.z[k - 1]:
            raise ValidationError(f"phase {k} chunk uses do not add up to z_{k} = {plan.z[k - 1]}")
        emitted = plan.design.phase_bits(plan.n)[k - 1] if plan.quantizer == CODEBOOK else phase.payload_bits
        if emitted > phase.payload_bits:
            raise ValidationError(f"budget overflow in phase {k}: {emitted} bits for a {phase.payload_bits}-bit payload")
    for user, ch, law in ((1, ch1, plan.input_laws[0]), (2, ch2, plan.input_laws[1])):
        if ch.input_size != len(law):
            raise ValidationError(f"C{user} input alphabet does not match the plan")


def _symbol_chunks(n: int, bits: int, chunks) -> np.ndarray:
    """
    Chunk responsible for each source position: position p follows bit floor(p * bits / n).
    """
    bit_of = (np.arange(n) * bits) // n
    stops = np.asarray([c.bit_stop for c in chunks])
    return np.searchsorted(stops, bit_of, side="right")


def _lost_spans(ok: np.ndarray, chunks, starts: np.ndarray, stops: np.ndarray) -> np.ndarray:
    """
    For bit spans [start, stop) per column, whether any chunk they touch was lost: (trials, spans).
    """
    ends = np.asarray([c.bit_stop for c in chunks])
    first = np.searchsorted(ends, starts, side="right")
    last = np.searchsorted(ends, stops - 1, side="right")
    lost = np.concatenate([np.zeros((ok.shape[0], 1), dtype=np.int64), np.cumsum(~ok, axis=1)], axis=1)
    return (lost[:, last + 1] - lost[:, first]) > 0


def _ideal_round(plan, tables, k, x_s, x_r, past_s, past_r, ch, law, rng):
    """
    Genie-aided reference: the sender draws U_k per symbol from its test
    channel and the receiver sees it unless a chunk covering the position was
    lost, where it draws from its own posterior instead. The payload carries
    no source data; only its losses matter.
    """
    phase = plan.phases[k - 1]
    trials, n = x_s.shape
    shared = rng.random((trials, n))
    sent = sample_rows(gather(tables.conditionals[k - 1], x_s, past_s), uniforms=shared)
    if not phase.chunks:
        # zero rate: both sides draw with the same uniforms from laws that agree
        guess = sample_rows(gather(tables.posteriors[k - 1], x_r, past_r), uniforms=shared)
        return sent, guess, np.ones((trials, 0), dtype=bool), np.zeros((trials, n), dtype=bool)

    guess = sample_rows(gather(tables.posteriors[k - 1], x_r, past_r), rng)
    payload = rng.integers(0, 2, size=(trials, phase.payload_bits))
    _, ok = transmit_phase(payload, phase.chunks, ch, law, rng)
    lost = ~ok[:, _symbol_chunks(n, phase.payload_bits, phase.chunks)]
    return sent, np.where(lost, guess, sent), ok, lost


def _codebook_round(plan, tables, k, x_s, x_r, past_s, past_r, ch, law, rng):
    """
    Sub-block by sub-block: cover with the shared codebook, send the bin,
    decode within the bin at the receiver. The receiver sees only the bins
    that came out of the channel decoder.
    """
    phase = plan.phases[k - 1]
    design = plan.design
    trials, n = x_s.shape
    L, cover, bin_bits = design.sub_block, design.cover_bits[k - 1], design.bin_bits[k - 1]
    blocks = design.blocks(n)
    # one seed per sub-block; both sides rebuild the same codebook from it
    seeds = rng.integers(0, 2 ** 63, size=blocks)

    def codebook(b: int, past: np.ndarray) -> np.ndarray:
        shared = make_rng(int(seeds[b])).random((trials, 2 ** cover, L))
        return draw_codewords(tables.common[k - 1], past[:, b * L:(b + 1) * L], shared)

    sent = np.zeros((trials, n), dtype=np.int64)
    bins = np.zeros((trials, blocks), dtype=np.int64)
    for b in range(blocks):
        cols = slice(b * L, (b + 1) * L)
        sent[:, cols], bins[:, b] = codebook_encode(
            tables.conditionals[k - 1], tables.common[k - 1], x_s[:, cols], past_s[:, cols],
            codebook(b, past_s), bin_bits,
        )

    used = blocks * bin_bits
    ok = np.ones((trials, len(phase.chunks)), dtype=bool)
    got = np.zeros_like(bins)
    lost = np.zeros((trials, n), dtype=bool)
    if used:
        radices = mixed_radix.block_radices(2, bin_bits)
        payload = np.zeros((trials, phase.payload_bits), dtype=np.int64)
        payload[:, :used] = mixed_radix.decode(bins, radices).reshape(trials, used)
        decoded, ok = transmit_phase(payload, phase.chunks, ch, law, rng)
        got = mixed_radix.encode(decoded[:, :used].reshape(trials, blocks, bin_bits), radices)
        starts = np.arange(blocks) * bin_bits
        lost_blocks = _lost_spans(ok, phase.chunks, starts, starts + bin_bits)
        lost[:, :blocks * L] = np.repeat(lost_blocks, L, axis=1)

    received = np.zeros_like(sent)
    for b in range(blocks):
        cols = slice(b * L, (b + 1) * L)
        received[:, cols] = codebook_decode(
            tables.posteriors[k - 1], tables.common[k - 1], x_r[:, cols], past_r[:, cols],
            codebook(b, past_r), got[:, b], bin_bits,
        )
    return sent, received, ok, lost


def _phase_stats(k: int, channel: int, phase, ok: np.ndarray) -> PhaseStats:
    trials = ok.shape[0]
    return PhaseStats(
        phase=k,
        channel=channel,
        bits=phase.payload_bits,
        uses=phase.uses,
        chunks=len(phase.chunks),
        trials=trials,
        chunk_errors=int((~ok).sum()),
        failed_trials=int((~ok).any(axis=1).sum()) if ok.shape[1] else 0,
    )


def _run_batch(plan, tables, source, ch1, ch2, d1, d2, trials, rng):
    chain = plan.source_code
    n, q = plan.n, chain.q
    x = dict(zip((1, 2), sample_blocks(source, n, trials, rng)))
    views = {u: np.zeros((trials, n, q), dtype=np.int64) for u in (1, 2)}
    lost = {u: np.zeros((trials, n), dtype=bool) for u in (1, 2)}
    channels = {1: ch1, 2: ch2}
    round_fn = _codebook_round if plan.quantizer == CODEBOOK else _ideal_round
    stats = TransportStats()
    failures = np.zeros((trials, q), dtype=bool)

    for k in range(1, q + 1):
        s, r = owner(k), 3 - owner(k)
        sent, received, ok, lost_k = round_fn(
            plan, tables, k, x[s], x[r], views[s][..., :k - 1], views[r][..., :k - 1],
            channels[s], plan.input_laws[s - 1], rng,
        )
        views[s][..., k - 1] = sent
        views[r][..., k - 1] = received
        lost[r] |= lost_k
        failures[:, k - 1] = ~ok.all(axis=1)
        stats.phases.append(_phase_stats(k, s, plan.phases[k - 1], ok))

    # User 2 estimates X1, User 1 estimates X2
    xhat1 = chain.recon1[(x[2],) + tuple(views[2][..., j] for j in range(q))]
    xhat2 = chain.recon2[(x[1],) + tuple(views[1][..., j] for j in range(q))]
    xhat1 = np.where(lost[2], tables.fallback1[x[2]], xhat1)
    xhat2 = np.where(lost[1], tables.fallback2[x[1]], xhat2)
    per1 = d1.d[x[1], xhat1].mean(axis=1)
    per2 = d2.d[x[2], xhat2].mean(axis=1)
    return per1, per2, stats, failures, (lost[2].mean(axis=1), lost[1].mean(axis=1))


def _stderr(a: np.ndarray) -> float:
    return float(a.std(ddof=1) / np.sqrt(a.size)) if a.size > 1 else 0.0


def run(
    plan: SeparationPlan,
    source: JointSource,
    ch1: Dmc,
    ch2: Dmc,
    trials: int,
    rng: np.random.Generator,
    d1: Optional[DistortionMeasure] = None,
    d2: Optional[DistortionMeasure] = None,
    workers: int = 1,
) -> SeparationResult:
    """
    Monte-Carlo run of the separation pipeline. Trials are processed in fixed
    batches, each with its own child generator, so results do not depend on
    the worker count.

    Lost chunks are flagged to the receiver; on the positions they cover the
    receiver estimates from its own source alone.
    """
    if trials < 1:
        raise ValidationError(f"trials must be >= 1, got {trials}")
    _check(plan, source, ch1, ch2)
    d1 = d1 if d1 is not None else hamming(source.alphabet1)
    d2 = d2 if d2 is not None else hamming(source.alphabet2)
    tables = _Tables(plan, source, d1, d2)

    sizes = [min(TRIAL_BATCH, trials - i) for i in range(0, trials, TRIAL_BATCH)]
    children = split(rng, len(sizes))

    def work(item):
        size, child = item
        return _run_batch(plan, tables, source, ch1, ch2, d1, d2, size, child)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(work, zip(sizes, children)))
    else:
        parts = [work(item) for item in zip(sizes, children)]

    per1 = np.concatenate([p[0] for p in parts])
    per2 = np.concatenate([p[1] for p in parts])
    stats = TransportStats()
    for p in parts:
        stats = stats.merge(p[2])
    failures = np.concatenate([p[3] for p in parts])
    fallback = tuple(float(np.concatenate([p[4][i] for p in parts]).mean()) for i in (0, 1))

    result = SeparationResult(
        D1=float(per1.mean()), D2=float(per2.mean()),
        stderr1=_stderr(per1), stderr2=_stderr(per2), trials=trials,
        uses_per_symbol=plan.uses_per_symbol, stats=stats,
        per_trial1=per1, per_trial2=per2, phase_failures=failures,
        fallback_fraction=fallback,
    )
    log.info("separation run: D=(%.5f, %.5f) over %d trials, fallback on (%.4f, %.4f) of positions",
             result.D1, result.D2, trials, *fallback)
    return result
