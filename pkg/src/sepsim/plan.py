from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from src.channel.dmc import Dmc, capacity
from src.kaspi.chain import AuxChain, RegionPoint, owner
from src.sepsim.quantizer import CODEBOOK, IDEAL, MODES, CodebookDesign, design_codebooks
from src.sepsim.transport import Chunk, chunk_layout
from src.source.source import JointSource
from src.utils.errors import InfeasibleError, ValidationError

log = logging.getLogger(__name__)

ZERO_BITS = 1e-6


@dataclass(frozen=True)
class PhaseTransport:
    channel: int
    payload_bits: int
    uses: int
    chunks: Tuple[Chunk, ...]


@dataclass(frozen=True)
class SeparationPlan:
    """
    Phase k carries round k's quantiser output: odd phases over C1, even over C2.
    message_bits are the nominal bits of each round; z are the channel uses
    reserved for them.
    """

    n: int
    z: Tuple[int, ...]
    message_bits: Tuple[float, ...]
    capacities: Tuple[float, float]
    margin: float
    source_code: AuxChain = field(repr=False)
    phases: Tuple[PhaseTransport, ...] = field(repr=False)
    input_laws: Tuple[np.ndarray, np.ndarray] = field(repr=False)
    quantizer: str = IDEAL
    design: Optional[CodebookDesign] = None

    @property
    def r(self) -> int:
        return len(self.z)

    @property
    def bit_budgets(self) -> Tuple[float, ...]:
        return tuple(zk * self.capacities[0 if k % 2 == 0 else 1] for k, zk in enumerate(self.z))

    @property
    def uses_per_symbol(self) -> Tuple[float, float]:
        return sum(self.z[0::2]) / self.n, sum(self.z[1::2]) / self.n


def build_plan(
    point: RegionPoint,
    ch1: Dmc,
    ch2: Dmc,
    n: int,
    margin: float,
    quantizer: str = IDEAL,
    chunk_bits: int = 12,
    source: Optional[JointSource] = None,
    sub_block: int = 8,
    binning_slack: float = 0.1,
    cover_slack: Optional[float] = None,
    tol: float = 1e-9,
) -> SeparationPlan:
    """
    z_k = ceil(bits_k (1 + margin) / C) channel uses for round k, where bits_k
    is n times the round's rate (ideal quantiser) or the binned codebook
    output (codebook quantiser).
    """
    if n < 1:
        raise ValidationError(f"block length must be >= 1, got {n}")
    if margin < 0:
        raise ValidationError(f"margin must be >= 0, got {margin}")
    if quantizer not in MODES:
        raise ValidationError(f"quantizer must be one of {MODES}, got {quantizer!r}")
    chain = point.witness
    if len(point.round_rates) != chain.q:
        raise ValidationError("region point carries no per-round rates; build it with kaspi.chain.evaluate")

    design = None
    if quantizer == CODEBOOK:
        if source is None:
            raise ValidationError("the codebook quantiser needs the source to size its codebooks")
        if n % sub_block:
            raise ValidationError(f"block length {n} is not a multiple of sub_block {sub_block}")
        design = design_codebooks(chain, source, sub_block, binning_slack, cover_slack)
        message_bits = tuple(float(b) for b in design.phase_bits(n))
    else:
        message_bits = tuple(n * r for r in point.round_rates)

    caps = (capacity(ch1, tol=tol), capacity(ch2, tol=tol))
    z, phases = [], []
    for k, bits in enumerate(message_bits, start=1):
        user = owner(k)
        C = caps[user - 1].capacity
        payload = max(0, math.ceil(bits - ZERO_BITS)) if bits > ZERO_BITS else 0
        if payload == 0:
            zk = 0
        elif C <= tol:
            raise InfeasibleError(f"round {k} needs {bits:.3f} bits but C{user} has zero capacity", {"round": k})
        else:
            zk = math.ceil(bits * (1.0 + margin) / C - 1e-9)
        z.append(int(zk))
        phases.append(PhaseTransport(user, payload, int(zk), chunk_layout(payload, int(zk), chunk_bits)))

    plan = SeparationPlan(
        n=n,
        z=tuple(z),
        message_bits=message_bits,
        capacities=(caps[0].capacity, caps[1].capacity),
        margin=float(margin),
        source_code=chain,
        phases=tuple(phases),
        input_laws=(caps[0].optimal_input, caps[1].optimal_input),
        quantizer=quantizer,
        design=design,
    )
    log.info("separation plan: z=%s, uses/symbol=(%.4f, %.4f)", plan.z, *plan.uses_per_symbol)
    return plan
