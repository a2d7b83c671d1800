from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from src.channel.dmc import Dmc, capacity
from src.infotheory.pmf import Pmf, mi
from src.protocol.codes import Code, GeneralCode, StaggeredCode, rates
from src.protocol.engine import exact_joint
from src.protocol.transforms import as_staggered
from src.source.source import JointSource
from src.utils.errors import ValidationError

log = logging.getLogger(__name__)

INEQUALITY_TOL = 1e-9
IDENTITY_TOL = 1e-9
MARKOV_TOL = 1e-10

INEQUALITY = "inequality"
EQUALITY = "equality"
VANISHING = "vanishing"

# family -> what the check asserts. A and B are the information sets each user
# holds entering the round pair (k-1, k): A = X1 and every C2 block received
# so far, B = X2 and every C1 block received before round k-1.
CHECK_FAMILIES: Dict[str, str] = {
    "fwd-dp": "n_{k-1} C1 >= I(A; V_{k-1}): round k-1 is n_{k-1} uses of C1 fed by a function of A",
    "fwd-chain": "I(A;V_{k-1}) + I(B;V_{k-1}|A) + I(A;V_k|B,V_{k-1}) >= I(A; V_{k-1},V_k | B)",
    "fwd-round": "n_{k-1} C1 >= I(A; V_{k-1},V_k | B)",
    "fwd-cumulative": "(n_1 + n_3 + ... + n_{k-1}) C1 >= I(X1; V_1..V_k | X2) for a prefix of the rounds",
    "fwd-total": "(n_1 + n_3 + ... + n_{q-1}) C1 >= I(X1; V_1..V_q | X2)",
    "bwd-dp": "n_k C2 >= I(B,V_{k-1}; V_k): round k is n_k uses of C2 fed by a function of (B, V_{k-1})",
    "bwd-chain": "I(B,V_{k-1};V_k) + I(A;V_k|B,V_{k-1}) + I(B;V_{k-1}|A) >= I(B; V_{k-1},V_k | A)",
    "bwd-round": "n_k C2 >= I(B; V_{k-1},V_k | A)",
    "bwd-cumulative": "(n_2 + n_4 + ... + n_k) C2 >= I(X2; V_1..V_k | X1) for a prefix of the rounds",
    "bwd-total": "(n_2 + n_4 + ... + n_q) C2 >= I(X2; V_1..V_q | X1)",
    "identity-fwd": "fwd-chain slack equals I(B; V_{k-1}) exactly",
    "identity-bwd": "bwd-chain slack equals I(V_k; A, V_{k-1}) exactly",
    "markov-fwd": "I(B; V_{k-1} | A) vanishes: given A, the C1 block is independent of B",
    "markov-bwd": "I(A; V_k | B, V_{k-1}) vanishes: given (B, V_{k-1}), the C2 block is independent of A",
}


@dataclass(frozen=True)
class InequalityCheck:
    label: str
    lhs: float
    rhs: float
    kind: str = INEQUALITY
    tol: float = INEQUALITY_TOL

    @property
    def slack(self) -> float:
        return self.lhs - self.rhs

    @property
    def holds(self) -> bool:
        if self.kind == EQUALITY:
            return abs(self.slack) < self.tol
        if self.kind == VANISHING:
            return abs(self.lhs) <= self.tol
        return self.slack >= -self.tol

    @property
    def family(self) -> str:
        return family_of(self.label)

    def as_row(self) -> Dict[str, object]:
        return {
            "label": self.label,
            "kind": self.kind,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "slack": self.slack,
            "holds": self.holds,
        }


@dataclass
class ConverseReport:
    round_lengths: Tuple[int, ...]
    C1: float
    C2: float
    checks: List[InequalityCheck] = field(default_factory=list)
    rates: Optional[Tuple[float, float]] = None

    @property
    def holds(self) -> bool:
        return all(c.holds for c in self.checks)

    @property
    def violations(self) -> List[InequalityCheck]:
        return [c for c in self.checks if not c.holds]

    @property
    def final_bounds(self) -> List[InequalityCheck]:
        return [c for c in self.checks if c.label in ("fwd-total", "bwd-total")]

    def get(self, label: str) -> InequalityCheck:
        for c in self.checks:
            if c.label == label:
                return c
        raise KeyError(label)

    def extend(self, checks: Iterable[InequalityCheck]) -> "ConverseReport":
        self.checks.extend(checks)
        return self


def family_of(label: str) -> str:
    return re.sub(r"-r\d+$", "", label)


def _round_count(joint: Pmf) -> int:
    q = 0
    while f"V{q + 1}" in joint.names:
        q += 1
    return q


def _require(joint: Pmf, q: int) -> None:
    if q < 2 or q % 2:
        raise ValidationError(f"round count must be even and >= 2, got {q}")
    wanted = ["X1", "X2"] + [f"V{k}" for k in range(1, q + 1)]
    missing = [name for name in wanted if name not in joint.names]
    if missing:
        raise ValidationError(f"joint pmf is missing variables {missing}")


def _sides(k: int) -> Tuple[List[str], List[str]]:
    """
    (A, B) entering the round pair that ends with even round k.
    """
    a = ["X1"] + [f"V{j}" for j in range(2, k - 1, 2)]
    b = ["X2"] + [f"V{j}" for j in range(1, k - 2, 2)]
    return a, b


def _blocks(upto: int) -> List[str]:
    return [f"V{j}" for j in range(1, upto + 1)]


def check_round_bounds(
    joint: Pmf,
    round_lengths: Sequence[int],
    C1: float,
    C2: float,
    tol: float = INEQUALITY_TOL,
) -> ConverseReport:
    """
    Generates and evaluates the forward (C1) and backward (C2) bounds for
    every round pair, then the cumulative bounds. Capacities are bits per use.
    """
    lengths = tuple(int(x) for x in round_lengths)
    q = len(lengths)
    _require(joint, q)
    report = ConverseReport(lengths, float(C1), float(C2))

    for k in range(2, q + 1, 2):
        a, b = _sides(k)
        prev, cur = f"V{k - 1}", f"V{k}"
        n_fwd, n_bwd = lengths[k - 2], lengths[k - 1]

        fwd_dp = mi(joint, a, [prev])
        fwd_terms = fwd_dp + mi(joint, b, [prev], a) + mi(joint, a, [cur], b + [prev])
        fwd_pair = mi(joint, a, [prev, cur], b)

        bwd_dp = mi(joint, b + [prev], [cur])
        bwd_terms = bwd_dp + mi(joint, a, [cur], b + [prev]) + mi(joint, b, [prev], a)
        bwd_pair = mi(joint, b, [prev, cur], a)

        report.checks += [
            InequalityCheck(f"fwd-dp-r{k}", n_fwd * C1, fwd_dp, tol=tol),
            InequalityCheck(f"fwd-chain-r{k}", fwd_terms, fwd_pair, tol=tol),
            InequalityCheck(f"fwd-round-r{k}", n_fwd * C1, fwd_pair, tol=tol),
            InequalityCheck(f"bwd-dp-r{k}", n_bwd * C2, bwd_dp, tol=tol),
            InequalityCheck(f"bwd-chain-r{k}", bwd_terms, bwd_pair, tol=tol),
            InequalityCheck(f"bwd-round-r{k}", n_bwd * C2, bwd_pair, tol=tol),
        ]

        uses1 = sum(lengths[0:k:2])
        uses2 = sum(lengths[1:k:2])
        fwd_cum = mi(joint, ["X1"], _blocks(k), ["X2"])
        bwd_cum = mi(joint, ["X2"], _blocks(k), ["X1"])
        if k < q:
            report.checks += [
                InequalityCheck(f"fwd-cumulative-r{k}", uses1 * C1, fwd_cum, tol=tol),
                InequalityCheck(f"bwd-cumulative-r{k}", uses2 * C2, bwd_cum, tol=tol),
            ]
        else:
            report.checks += [
                InequalityCheck("fwd-total", uses1 * C1, fwd_cum, tol=tol),
                InequalityCheck("bwd-total", uses2 * C2, bwd_cum, tol=tol),
            ]

    log.debug("round bounds for q=%d: %d checks, %d violations", q, len(report.checks), len(report.violations))
    return report


def check_identity_lemmas(joint: Pmf, tol: float = IDENTITY_TOL) -> List[InequalityCheck]:
    """
    The chain expansions are identities: their slack is a specific mutual
    information, not merely nonnegative.
    """
    q = _round_count(joint)
    _require(joint, q)
    checks: List[InequalityCheck] = []
    for k in range(2, q + 1, 2):
        a, b = _sides(k)
        prev, cur = f"V{k - 1}", f"V{k}"

        fwd_residual = (
            mi(joint, a, [prev]) + mi(joint, b, [prev], a) + mi(joint, a, [cur], b + [prev])
            - mi(joint, a, [prev, cur], b)
        )
        bwd_residual = (
            mi(joint, b + [prev], [cur]) + mi(joint, a, [cur], b + [prev]) + mi(joint, b, [prev], a)
            - mi(joint, b, [prev, cur], a)
        )
        checks.append(InequalityCheck(f"identity-fwd-r{k}", fwd_residual, mi(joint, b, [prev]), EQUALITY, tol))
        checks.append(InequalityCheck(f"identity-bwd-r{k}", bwd_residual, mi(joint, [cur], a + [prev]), EQUALITY, tol))
    return checks


def check_markov_structure(joint: Pmf, q: int, tol: float = MARKOV_TOL) -> List[InequalityCheck]:
    _require(joint, q)
    checks: List[InequalityCheck] = []
    for k in range(2, q + 1, 2):
        a, b = _sides(k)
        prev, cur = f"V{k - 1}", f"V{k}"
        checks.append(InequalityCheck(f"markov-fwd-r{k}", mi(joint, b, [prev], a), 0.0, VANISHING, tol))
        checks.append(InequalityCheck(f"markov-bwd-r{k}", mi(joint, a, [cur], b + [prev]), 0.0, VANISHING, tol))
    return checks


def verify_code(
    code: Code,
    source: JointSource,
    ch1: Dmc,
    ch2: Dmc,
    tol: float = 1e-9,
) -> ConverseReport:
    """
    Exact joint -> capacities -> every check family. Capacities are the upper
    end of the certified Blahut-Arimoto bracket, so each bound compares
    against a value at or above the true capacity.
    """
    if isinstance(code, GeneralCode):
        code = as_staggered(code)
    if not isinstance(code, StaggeredCode):
        raise ValidationError(f"cannot verify {type(code).__name__}")

    joint = exact_joint(code, source, ch1, ch2, include_reconstructions=False)
    C1 = capacity(ch1, tol=tol).upper
    C2 = capacity(ch2, tol=tol).upper

    report = check_round_bounds(joint, code.round_lengths, C1, C2)
    report.extend(check_identity_lemmas(joint))
    report.extend(check_markov_structure(joint, code.q))
    report.rates = rates(code)
    if not report.holds:
        log.warning("converse violated: %s", [c.label for c in report.violations])
    return report
