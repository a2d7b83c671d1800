from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from src.infotheory.pmf import Pmf, Variable, mi
from src.kaspi.chain import AuxChain, owner
from src.source.source import JointSource
from src.utils.errors import StateSpaceError, ValidationError

MAX_COVER_BITS = 12
LOG_FLOOR = 1e-300

IDEAL = "ideal"
CODEBOOK = "codebook"
MODES = (IDEAL, CODEBOOK)


def sample_rows(
    probs: np.ndarray, rng: Optional[np.random.Generator] = None, uniforms: Optional[np.ndarray] = None
) -> np.ndarray:
    """
    One inverse-CDF draw per row of a (..., m) stack of pmfs. Two callers
    passing the same `uniforms` draw the same symbol wherever their rows agree.
    """
    if uniforms is None:
        if rng is None:
            raise ValidationError("sample_rows needs a generator or uniforms")
        uniforms = rng.random(probs.shape[:-1])
    cdf = np.cumsum(probs, axis=-1)
    return np.minimum((uniforms[..., None] >= cdf).sum(axis=-1), probs.shape[-1] - 1)


def gather(table: np.ndarray, own: np.ndarray, past: np.ndarray) -> np.ndarray:
    """
    table[own, u1, ..., u_{k-1}, :] for arrays own (...) and past (..., k-1).
    """
    index = (own,) + tuple(past[..., j] for j in range(past.shape[-1]))
    return table[index]


def _common_rows(common: np.ndarray, past: np.ndarray) -> np.ndarray:
    rows = common[tuple(past[..., j] for j in range(past.shape[-1]))]
    return np.broadcast_to(rows, past.shape[:-1] + rows.shape[-1:])


@dataclass(frozen=True)
class CodebookDesign:
    """
    Per round: each sub-block of `sub_block` symbols is covered by one of
    2^cover_bits codewords drawn from p(u_k | u^{k-1}); only the codeword's
    bin (its index mod 2^bin_bits) is sent.
    """

    sub_block: int
    cover_bits: Tuple[int, ...]
    bin_bits: Tuple[int, ...]

    def blocks(self, n: int) -> int:
        return n // self.sub_block

    def phase_bits(self, n: int) -> Tuple[int, ...]:
        return tuple(self.blocks(n) * b for b in self.bin_bits)

    def rates(self) -> Tuple[float, ...]:
        return tuple(b / self.sub_block for b in self.bin_bits)


def design_codebooks(
    chain: AuxChain, source: JointSource, sub_block: int, slack: float, cover_slack: Optional[float] = None
) -> CodebookDesign:
    """
    cover = ceil(L (I(own; U_k | past) + cover_slack)),
    bin = min(cover, ceil(L (I(own; U_k | other, past) + slack))).
    cover_slack defaults to slack; a large slack turns binning off.
    """
    cover_slack = slack if cover_slack is None else cover_slack
    if sub_block < 1:
        raise ValidationError(f"sub_block must be >= 1, got {sub_block}")
    if slack < 0 or cover_slack < 0:
        raise ValidationError(f"binning and cover slack must be >= 0, got ({slack}, {cover_slack})")

    tensor = chain.joint_tensor(source)
    variables = [Variable("X1", chain.alphabet1), Variable("X2", chain.alphabet2)]
    variables += [Variable(f"U{k}", s) for k, s in enumerate(chain.aux_sizes, start=1)]
    pmf = Pmf(tuple(variables), tensor / tensor.sum())

    cover, binned = [], []
    for k in range(1, chain.q + 1):
        own, other = ("X1", "X2") if owner(k) == 1 else ("X2", "X1")
        past = [f"U{j}" for j in range(1, k)]
        covering = mi(pmf, [own], [f"U{k}"], past)
        side = mi(pmf, [own], [f"U{k}"], [other] + past)
        c = max(0, math.ceil(sub_block * (covering + cover_slack) - 1e-9)) if covering > 1e-9 else 0
        b = min(c, max(0, math.ceil(sub_block * (side + slack) - 1e-9))) if side > 1e-9 else 0
        if c > MAX_COVER_BITS:
            raise StateSpaceError(f"round {k} codebook at sub-block {sub_block}", 2 ** c, 2 ** MAX_COVER_BITS)
        cover.append(c)
        binned.append(b)
    return CodebookDesign(sub_block, tuple(cover), tuple(binned))


def draw_codewords(common: np.ndarray, past: np.ndarray, uniforms: np.ndarray) -> np.ndarray:
    """
    common: p(u_k | u^{k-1}) over (u^k); past: (trials, L, k-1); uniforms:
    (trials, M, L). Both users call this with their own view of the past and
    the same uniforms, so equal views give equal codebooks.
    """
    rows = _common_rows(common, past)  # (trials, L, |U_k|)
    cdf = np.cumsum(rows, axis=-1)
    symbols = (uniforms[..., None] >= cdf[:, None, :, :]).sum(axis=-1)
    return np.minimum(symbols, rows.shape[-1] - 1)


def _scores(
    table: np.ndarray, common: np.ndarray, own: np.ndarray, past: np.ndarray, codewords: np.ndarray
) -> np.ndarray:
    """
    Information density of every codeword against `own`: sum over the sub-block
    of log table(u | own, past) - log p(u | past), shape (trials, M).
    """
    logs = np.log(np.maximum(gather(table, own, past), LOG_FLOOR))  # (trials, L, |U|)
    logs = logs - np.log(np.maximum(_common_rows(common, past), LOG_FLOOR))
    trials, length = logs.shape[0], logs.shape[1]
    picked = logs[np.arange(trials)[:, None, None], np.arange(length)[None, None, :], codewords]
    return picked.sum(axis=-1)


def codebook_encode(
    conditional: np.ndarray,
    common: np.ndarray,
    own: np.ndarray,
    past: np.ndarray,
    codewords: np.ndarray,
    bin_bits: int,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Codeword with the largest information density against the sender's source;
    returns (symbols (trials, L), bin index).
    """
    best = np.argmax(_scores(conditional, common, own, past, codewords), axis=1)
    chosen = codewords[np.arange(len(best)), best]
    return chosen, best % (2 ** bin_bits)


def codebook_decode(
    posterior: np.ndarray,
    common: np.ndarray,
    own: np.ndarray,
    past: np.ndarray,
    codewords: np.ndarray,
    bins: np.ndarray,
    bin_bits: int,
) -> np.ndarray:
    """
    Most likely codeword in the received bin given the receiver's source.
    Codewords are drawn from p(u | past), so this is the largest information density.
    """
    scores = _scores(posterior, common, own, past, codewords)
    members = (np.arange(codewords.shape[1])[None, :] % (2 ** bin_bits)) == bins[:, None]
    scores = np.where(members, scores, -np.inf)
    best = np.argmax(scores, axis=1)
    return codewords[np.arange(len(best)), best]
