from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np

from src.channel.dmc import Dmc, sample
from src.utils import mixed_radix
from src.utils.errors import ValidationError

log = logging.getLogger(__name__)

MAX_CHUNK_BITS = 16
LOG_FLOOR = 1e-300


@dataclass(frozen=True)
class Chunk:
    bit_start: int
    bit_stop: int
    uses: int

    @property
    def bits(self) -> int:
        return self.bit_stop - self.bit_start


def chunk_layout(bits: int, uses: int, chunk_bits: int) -> Tuple[Chunk, ...]:
    """
    Near-equal bit chunks of at most chunk_bits; channel uses shared out in
    proportion to chunk size (largest remainder), so they sum to `uses` exactly.
    """
    if bits < 0 or uses < 0:
        raise ValidationError(f"bits and uses must be nonnegative, got {bits}, {uses}")
    if not 1 <= chunk_bits <= MAX_CHUNK_BITS:
        raise ValidationError(f"chunk_bits must lie in [1, {MAX_CHUNK_BITS}], got {chunk_bits}")
    if bits == 0:
        return ()

    count = -(-bits // chunk_bits)
    base, extra = divmod(bits, count)
    sizes = [base + (1 if i < extra else 0) for i in range(count)]

    quotas = np.asarray(sizes, dtype=np.float64) * uses / bits
    shares = np.floor(quotas).astype(np.int64)
    leftover = uses - int(shares.sum())
    order = np.argsort(-(quotas - shares), kind="stable")
    shares[order[:leftover]] += 1

    chunks = []
    start = 0
    for size, share in zip(sizes, shares):
        chunks.append(Chunk(start, start + size, int(share)))
        start += size
    return tuple(chunks)


def draw_codebook(bits: int, uses: int, input_law: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """
    2^bits codewords of length `uses`, symbols i.i.d. from input_law.
    """
    return rng.choice(len(input_law), size=(2 ** bits, uses), p=input_law)


def ml_decode(codebook: np.ndarray, received: np.ndarray, ch: Dmc) -> np.ndarray:
    """
    Maximum-likelihood message per row of `received` (trials, uses); ties go to the lowest index.
    """
    log_w = np.log(np.maximum(ch.transition, LOG_FLOOR))
    scores = np.zeros((codebook.shape[0], received.shape[0]))
    for t in range(codebook.shape[1]):
        scores += log_w[codebook[:, t]][:, received[:, t]]
    return np.argmax(scores, axis=0)


@dataclass
class PhaseStats:
    phase: int
    channel: int
    bits: int
    uses: int
    chunks: int
    trials: int = 0
    chunk_errors: int = 0
    failed_trials: int = 0

    @property
    def block_error_rate(self) -> float:
        total = self.chunks * self.trials
        return self.chunk_errors / total if total else 0.0

    @property
    def phase_error_rate(self) -> float:
        return self.failed_trials / self.trials if self.trials else 0.0


@dataclass
class TransportStats:
    phases: List[PhaseStats] = field(default_factory=list)

    def merge(self, other: "TransportStats") -> "TransportStats":
        if not self.phases:
            return TransportStats([PhaseStats(**vars(p)) for p in other.phases])
        merged = []
        for a, b in zip(self.phases, other.phases):
            merged.append(PhaseStats(
                a.phase, a.channel, a.bits, a.uses, a.chunks,
                a.trials + b.trials, a.chunk_errors + b.chunk_errors, a.failed_trials + b.failed_trials,
            ))
        return TransportStats(merged)


def transmit_phase(
    payload: np.ndarray,
    chunks: Tuple[Chunk, ...],
    ch: Dmc,
    input_law: np.ndarray,
    rng: np.random.Generator,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    payload: (trials, bits) array of 0/1. Every chunk gets its own random code;
    returns the decoded payload and a (trials, chunks) success mask.
    """
    trials = payload.shape[0]
    decoded = np.zeros_like(payload)
    ok = np.ones((trials, len(chunks)), dtype=bool)
    for j, c in enumerate(chunks):
        radices = mixed_radix.block_radices(2, c.bits)
        message = mixed_radix.encode(payload[:, c.bit_start:c.bit_stop], radices)
        codebook = draw_codebook(c.bits, c.uses, input_law, rng)
        if c.uses:
            received = sample(ch, codebook[message], rng)
            guess = ml_decode(codebook, received, ch)
        else:
            guess = np.zeros(trials, dtype=np.int64)
        decoded[:, c.bit_start:c.bit_stop] = mixed_radix.decode(guess, radices)
        ok[:, j] = guess == message
    return decoded, ok
