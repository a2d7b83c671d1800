from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.infotheory.pmf import Pmf, Variable, mi
from src.source.source import DistortionMeasure, JointSource
from src.utils.errors import ValidationError

MAX_ROUNDS = 6
STOCHASTIC_TOL = 1e-12

# Tensors are laid out over (x1, x2, u1, ..., uk). Round k is chosen by User 1
# when k is odd (conditioned on x1) and by User 2 when k is even (on x2).


def owner(k: int) -> int:
    return 1 if k % 2 else 2


def expand_conditional(cond: np.ndarray, k: int) -> np.ndarray:
    """
    (x_own, u1..uk) -> broadcastable against (x1, x2, u1..uk).
    """
    return cond[:, None] if owner(k) == 1 else cond[None, :]


@dataclass(frozen=True)
class AuxChain:
    """
    conditionals[k-1][x_own, u1, ..., u_{k-1}, u_k] = p(u_k | x_own, u^{k-1}).
    recon1[x2, u1..uq] estimates X1 at User 2; recon2[x1, u1..uq] estimates X2 at User 1.
    """

    aux_sizes: Tuple[int, ...]
    conditionals: Tuple[np.ndarray, ...] = field(repr=False)
    recon1: np.ndarray = field(repr=False)
    recon2: np.ndarray = field(repr=False)

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.aux_sizes)
        q = len(sizes)
        if q < 2 or q % 2 or q > MAX_ROUNDS:
            raise ValidationError(f"round count must be even and in [2, {MAX_ROUNDS}], got {q}")
        if min(sizes) < 1:
            raise ValidationError(f"auxiliary alphabets must be nonempty, got {sizes}")
        conds = tuple(np.array(c, dtype=np.float64) for c in self.conditionals)
        if len(conds) != q:
            raise ValidationError(f"need {q} conditionals, got {len(conds)}")

        a1, a2 = conds[0].shape[0], conds[1].shape[0]
        for k, c in enumerate(conds, start=1):
            own = a1 if owner(k) == 1 else a2
            want = (own,) + sizes[:k]
            if c.shape != want:
                raise ValidationError(f"round {k} conditional has shape {c.shape}, expected {want}")
            if np.any(c < 0) or np.max(np.abs(c.sum(axis=-1) - 1.0)) > STOCHASTIC_TOL:
                raise ValidationError(f"round {k} conditional is not row-stochastic")
            c.setflags(write=False)

        r1 = np.array(self.recon1, dtype=np.int64)
        r2 = np.array(self.recon2, dtype=np.int64)
        if r1.shape != (a2,) + sizes or r2.shape != (a1,) + sizes:
            raise ValidationError("reconstruction maps must cover (own source, every auxiliary)")
        if r1.min() < 0 or r2.min() < 0:
            raise ValidationError("reconstruction symbols must be nonnegative")
        r1.setflags(write=False)
        r2.setflags(write=False)

        object.__setattr__(self, "aux_sizes", sizes)
        object.__setattr__(self, "conditionals", conds)
        object.__setattr__(self, "recon1", r1)
        object.__setattr__(self, "recon2", r2)

    @property
    def q(self) -> int:
        return len(self.aux_sizes)

    @property
    def alphabet1(self) -> int:
        return int(self.conditionals[0].shape[0])

    @property
    def alphabet2(self) -> int:
        return int(self.conditionals[1].shape[0])

    def joint_tensor(self, source: JointSource, upto: Optional[int] = None) -> np.ndarray:
        """
        p(x1, x2, u1..u_upto).
        """
        upto = self.q if upto is None else upto
        p = np.asarray(source.joint, dtype=np.float64)
        for k in range(1, upto + 1):
            p = p[..., None] * expand_conditional(self.conditionals[k - 1], k)
        return p

    @classmethod
    def constant(
        cls,
        alphabet1: int,
        alphabet2: int,
        aux_sizes: Sequence[int],
        recon1: int = 0,
        recon2: int = 0,
    ) -> "AuxChain":
        """
        Every auxiliary is 0 with probability one; estimates are fixed symbols.
        """
        sizes = tuple(int(s) for s in aux_sizes)
        conds = []
        for k in range(1, len(sizes) + 1):
            own = alphabet1 if owner(k) == 1 else alphabet2
            c = np.zeros((own,) + sizes[:k])
            c[..., 0] = 1.0
            conds.append(c)
        return cls(
            sizes, tuple(conds),
            np.full((alphabet2,) + sizes, recon1, dtype=np.int64),
            np.full((alphabet1,) + sizes, recon2, dtype=np.int64),
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "aux_sizes": list(self.aux_sizes),
            "conditionals": [c.tolist() for c in self.conditionals],
            "recon1": self.recon1.tolist(),
            "recon2": self.recon2.tolist(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "AuxChain":
        return cls(
            tuple(data["aux_sizes"]),
            tuple(np.asarray(c, dtype=np.float64) for c in data["conditionals"]),
            np.asarray(data["recon1"], dtype=np.int64),
            np.asarray(data["recon2"], dtype=np.int64),
        )


@dataclass(frozen=True)
class RegionPoint:
    rho1: float
    rho2: float
    D1: float
    D2: float
    witness: AuxChain = field(repr=False)
    method: str = "evaluated"
    round_rates: Tuple[float, ...] = ()

    @property
    def q(self) -> int:
        return self.witness.q

    @property
    def sum_rate(self) -> float:
        return self.rho1 + self.rho2

    def meets(self, D1: float, D2: float, tol: float = 1e-6) -> bool:
        return self.D1 <= D1 + tol and self.D2 <= D2 + tol


def induced_conditional(prefix: np.ndarray, k: int) -> np.ndarray:
    """
    p(u_k | x_other, u^{k-1}) from p(x1, x2, u^k), laid out over (x_other, u^k).
    Unreachable conditioning cells get the uniform law.
    """
    marginal = prefix.sum(axis=0 if owner(k) == 1 else 1)
    total = marginal.sum(axis=-1, keepdims=True)
    uniform = np.full_like(marginal, 1.0 / marginal.shape[-1])
    return np.divide(marginal, total, out=uniform, where=total > 0)


def receiver_conditional(chain: AuxChain, source: JointSource, k: int) -> np.ndarray:
    """
    The receiving user's posterior of U_k over (x_receiver, u^k).
    """
    return induced_conditional(chain.joint_tensor(source, k), k)


def common_conditional(chain: AuxChain, source: JointSource, k: int) -> np.ndarray:
    """
    p(u_k | u^{k-1}) over (u^k): the law both users can draw from.
    """
    marginal = chain.joint_tensor(source, k).sum(axis=(0, 1))
    total = marginal.sum(axis=-1, keepdims=True)
    uniform = np.full_like(marginal, 1.0 / marginal.shape[-1])
    return np.divide(marginal, total, out=uniform, where=total > 0)


def bayes_recon(joint: np.ndarray, d: DistortionMeasure, target: int) -> np.ndarray:
    """
    Estimate of X_target minimising expected distortion given the other
    source and every auxiliary. joint is p(x1, x2, u1..uq).
    """
    # (x_target, x_other, u...) -> cost[x_other, u..., xhat]
    moved = joint if target == 1 else np.swapaxes(joint, 0, 1)
    cost = np.tensordot(moved, d.d, axes=([0], [0]))
    return np.argmin(cost, axis=-1).astype(np.int64)


def expected_distortions(
    joint: np.ndarray, chain: AuxChain, d1: DistortionMeasure, d2: DistortionMeasure
) -> Tuple[float, float]:
    a1, a2 = joint.shape[0], joint.shape[1]
    x1 = np.arange(a1).reshape((a1, 1) + (1,) * chain.q)
    x2 = np.arange(a2).reshape((1, a2) + (1,) * chain.q)
    xhat1 = chain.recon1[None, ...]
    xhat2 = chain.recon2[:, None, ...]
    D1 = float(np.sum(joint * d1.d[x1, xhat1]))
    D2 = float(np.sum(joint * d2.d[x2, xhat2]))
    return D1, D2


def _check_alphabets(chain: AuxChain, source: JointSource, d1: DistortionMeasure, d2: DistortionMeasure) -> None:
    if (chain.alphabet1, chain.alphabet2) != (source.alphabet1, source.alphabet2):
        raise ValidationError(
            f"chain alphabets ({chain.alphabet1}, {chain.alphabet2}) do not match source "
            f"({source.alphabet1}, {source.alphabet2})"
        )
    if d1.source_size != source.alphabet1 or d2.source_size != source.alphabet2:
        raise ValidationError("distortion measures do not match the source alphabets")
    if chain.recon1.max() >= d1.recon_size or chain.recon2.max() >= d2.recon_size:
        raise ValidationError("reconstruction symbol outside the distortion measure's alphabet")


def evaluate(
    chain: AuxChain,
    source: JointSource,
    d1: DistortionMeasure,
    d2: DistortionMeasure,
    method: str = "evaluated",
) -> RegionPoint:
    """
    Exact rates and distortions of a witness.
    rho1 sums I(X1; U_k | X2, U^{k-1}) over odd k, rho2 sums I(X2; U_k | X1, U^{k-1}) over even k.
    """
    _check_alphabets(chain, source, d1, d2)
    tensor = chain.joint_tensor(source)
    variables = [Variable("X1", chain.alphabet1), Variable("X2", chain.alphabet2)]
    variables += [Variable(f"U{k}", s) for k, s in enumerate(chain.aux_sizes, start=1)]
    pmf = Pmf(tuple(variables), tensor / tensor.sum())

    per_round = []
    for k in range(1, chain.q + 1):
        own, other = ("X1", "X2") if owner(k) == 1 else ("X2", "X1")
        past = [f"U{j}" for j in range(1, k)]
        per_round.append(max(mi(pmf, [own], [f"U{k}"], [other] + past), 0.0))

    D1, D2 = expected_distortions(tensor, chain, d1, d2)
    rho1, rho2 = sum(per_round[0::2]), sum(per_round[1::2])
    return RegionPoint(rho1, rho2, D1, D2, chain, method, tuple(per_round))


def _pad_conditional(c: np.ndarray, old: Sequence[int], new: Sequence[int]) -> np.ndarray:
    """
    Round conditional over larger auxiliary alphabets: added symbols get zero
    probability, rows for unreachable pasts put their mass on symbol 0.
    """
    out = np.zeros(c.shape[:1] + tuple(new))
    out[..., 0] = 1.0
    past = tuple(slice(0, s) for s in old[:-1])
    out[(slice(None),) + past] = 0.0
    out[(slice(None),) + past + (slice(0, old[-1]),)] = c
    return out


def embed(chain: AuxChain, q: int, aux_sizes: Optional[Sequence[int]] = None) -> AuxChain:
    """
    Same witness with q - chain.q extra rounds whose auxiliaries are constant;
    rates and distortions are unchanged. With `aux_sizes` (one per round of the
    result) the existing rounds are zero-padded up to those alphabets.
    """
    extra = q - chain.q
    if extra < 0 or extra % 2:
        raise ValidationError(f"cannot embed a {chain.q}-round chain into {q} rounds")
    if aux_sizes is None:
        sizes = chain.aux_sizes + (1,) * extra
    else:
        sizes = tuple(int(s) for s in aux_sizes)
        if len(sizes) != q:
            raise ValidationError(f"need {q} auxiliary sizes, got {len(sizes)}")
        small = [k for k in range(1, chain.q + 1) if sizes[k - 1] < chain.aux_sizes[k - 1]]
        if small:
            raise ValidationError(
                f"auxiliary sizes {sizes[:chain.q]} are smaller than the chain's {chain.aux_sizes} "
                f"in round(s) {small}"
            )

    conds: List[np.ndarray] = [
        _pad_conditional(c, chain.aux_sizes[:k], sizes[:k]) for k, c in enumerate(chain.conditionals, start=1)
    ]
    for k in range(chain.q + 1, q + 1):
        own = chain.alphabet1 if owner(k) == 1 else chain.alphabet2
        c = np.zeros((own,) + sizes[:k])
        c[..., 0] = 1.0
        conds.append(c)

    old = tuple(slice(0, s) for s in chain.aux_sizes)
    pad = (None,) * extra
    recon1 = np.zeros((chain.alphabet2,) + sizes, dtype=np.int64)
    recon2 = np.zeros((chain.alphabet1,) + sizes, dtype=np.int64)
    # constant added rounds only ever take symbol 0
    first = (slice(None),) + old + tuple(slice(0, 1) for _ in range(extra))
    recon1[first] = chain.recon1[(Ellipsis,) + pad]
    recon2[first] = chain.recon2[(Ellipsis,) + pad]
    return AuxChain(sizes, tuple(conds), recon1, recon2)
