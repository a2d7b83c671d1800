from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import logsumexp

from src.kaspi.chain import (
    MAX_ROUNDS,
    AuxChain,
    RegionPoint,
    bayes_recon,
    embed,
    evaluate,
    expand_conditional,
    induced_conditional,
    owner,
)
from src.source.source import DistortionMeasure, JointSource, min_distortion
from src.utils.errors import ConvergenceError, InfeasibleError, ValidationError
from src.utils.rng import make_rng, split

log = logging.getLogger(__name__)

METHOD = "alternating-minimization (heuristic)"
LOG_FLOOR = 1e-300
SLOPE_CEILING = 200.0
BISECTION_STEPS = 14
ALTERNATIONS = 3
DAMPING_STEPS = 5
WARM_MIX = 0.01
FEASIBILITY_TOL = 1e-6


@dataclass(frozen=True)
class _Problem:
    source: JointSource
    d1: DistortionMeasure
    d2: DistortionMeasure
    max_sweeps: int
    sweep_tol: float


# -------------------------------
# Lagrangian pieces (nats)
# -------------------------------
def _prefixes(p: np.ndarray, conds: Sequence[np.ndarray]) -> List[np.ndarray]:
    out = [p]
    for k, c in enumerate(conds, start=1):
        out.append(out[-1][..., None] * expand_conditional(c, k))
    return out


def _expand_other(r: np.ndarray, k: int) -> np.ndarray:
    return r[None, :] if owner(k) == 1 else r[:, None]


def _rate_cost(cond: np.ndarray, r: np.ndarray, k: int) -> np.ndarray:
    return (
        np.log(np.maximum(expand_conditional(cond, k), LOG_FLOOR))
        - np.log(np.maximum(_expand_other(r, k), LOG_FLOOR))
    )


def _terminal_cost(prob: _Problem, recon1: np.ndarray, recon2: np.ndarray, s1: float, s2: float, q: int) -> np.ndarray:
    a1, a2 = prob.source.alphabet1, prob.source.alphabet2
    x1 = np.arange(a1).reshape((a1, 1) + (1,) * q)
    x2 = np.arange(a2).reshape((1, a2) + (1,) * q)
    return s1 * prob.d1.d[x1, recon1[None, ...]] + s2 * prob.d2.d[x2, recon2[:, None, ...]]


def _objective(prob: _Problem, conds, recon1, recon2, s1: float, s2: float) -> float:
    q = len(conds)
    pre = _prefixes(prob.source.joint, conds)
    total = float(np.sum(pre[-1] * _terminal_cost(prob, recon1, recon2, s1, s2, q)))
    for k in range(1, q + 1):
        c = _rate_cost(conds[k - 1], induced_conditional(pre[k], k), k)
        total += float(np.sum(pre[k] * c))
    return total


def _proposal(prob: _Problem, conds, recon1, recon2, s1: float, s2: float, k: int) -> np.ndarray:
    """
    Minimiser of the variational bound over round k's conditional with every
    induced law held at its current value:
        Q_k(u_k | x_own, u^{k-1}) ∝ exp E[log r_k(u_k | x_other, u^{k-1}) - G_k | x_own, u^{k-1}]
    where G_k is the expected cost of the later rounds plus the weighted distortions.
    """
    q = len(conds)
    pre = _prefixes(prob.source.joint, conds)
    future = _terminal_cost(prob, recon1, recon2, s1, s2, q)
    for j in range(q, k, -1):
        c = _rate_cost(conds[j - 1], induced_conditional(pre[j], j), j)
        future = np.sum(expand_conditional(conds[j - 1], j) * (c + future), axis=-1)

    r = induced_conditional(pre[k], k)
    term = np.log(np.maximum(_expand_other(r, k), LOG_FLOOR)) - future

    other_axis = 1 if owner(k) == 1 else 0
    weights = pre[k - 1]
    norm = weights.sum(axis=other_axis, keepdims=True)
    uniform = np.full_like(weights, 1.0 / weights.shape[other_axis])
    weights = np.divide(weights, norm, out=uniform, where=norm > 0)

    expected = np.sum(weights[..., None] * term, axis=other_axis)
    return np.exp(expected - logsumexp(expected, axis=-1, keepdims=True))


def _bayes(prob: _Problem, conds) -> Tuple[np.ndarray, np.ndarray]:
    joint = _prefixes(prob.source.joint, conds)[-1]
    return bayes_recon(joint, prob.d1, 1), bayes_recon(joint, prob.d2, 2)


def minimize_lagrangian(
    chain: AuxChain,
    source: JointSource,
    d1: DistortionMeasure,
    d2: DistortionMeasure,
    s1: float,
    s2: float,
    max_sweeps: int = 300,
    tol: float = 1e-10,
) -> Tuple[AuxChain, List[float]]:
    """
    Alternating minimisation of rho1 + rho2 + s1 D1 + s2 D2 (rates in nats).
    One sweep updates every round's conditional in order, then both
    reconstruction maps. Returns the chain and the objective after each sweep,
    which never increases.
    """
    prob = _Problem(source, d1, d2, max_sweeps, tol)
    return _minimize(prob, chain, s1, s2)


def _minimize(prob: _Problem, chain: AuxChain, s1: float, s2: float) -> Tuple[AuxChain, List[float]]:
    conds = [np.array(c) for c in chain.conditionals]
    recon1, recon2 = _bayes(prob, conds)
    current = _objective(prob, conds, recon1, recon2, s1, s2)
    trace = [current]

    for sweep in range(prob.max_sweeps):
        for k in range(1, len(conds) + 1):
            old = conds[k - 1]
            proposal = _proposal(prob, conds, recon1, recon2, s1, s2, k)
            for _ in range(DAMPING_STEPS):
                conds[k - 1] = proposal
                value = _objective(prob, conds, recon1, recon2, s1, s2)
                if value <= current + 1e-13 * max(1.0, abs(current)):
                    current = value
                    break
                proposal = 0.5 * (old + proposal)
            else:
                conds[k - 1] = old

        recon1, recon2 = _bayes(prob, conds)
        current = _objective(prob, conds, recon1, recon2, s1, s2)
        trace.append(current)
        if trace[-2] - trace[-1] < prob.sweep_tol:
            break
    log.debug("slopes (%.4g, %.4g): %d sweeps, objective %.10f", s1, s2, len(trace) - 1, current)

    conds = [c / c.sum(axis=-1, keepdims=True) for c in conds]
    return AuxChain(chain.aux_sizes, tuple(conds), recon1, recon2), trace


# -------------------------------
# Starting points
# -------------------------------
def default_aux_sizes(source: JointSource, q: int) -> Tuple[int, ...]:
    return tuple((source.alphabet1 if owner(k) == 1 else source.alphabet2) + 2 for k in range(1, q + 1))


def random_chain(source: JointSource, aux_sizes: Sequence[int], rng: np.random.Generator) -> AuxChain:
    sizes = tuple(int(s) for s in aux_sizes)
    conds = []
    for k in range(1, len(sizes) + 1):
        own = source.alphabet1 if owner(k) == 1 else source.alphabet2
        conds.append(rng.dirichlet(np.ones(sizes[k - 1]), size=(own,) + sizes[:k - 1]))
    recon1 = np.zeros((source.alphabet2,) + sizes, dtype=np.int64)
    recon2 = np.zeros((source.alphabet1,) + sizes, dtype=np.int64)
    return AuxChain(sizes, tuple(conds), recon1, recon2)


def _mix(chain: AuxChain, other: AuxChain, weight: float) -> AuxChain:
    conds = tuple((1 - weight) * a + weight * b for a, b in zip(chain.conditionals, other.conditionals))
    conds = tuple(c / c.sum(axis=-1, keepdims=True) for c in conds)
    return AuxChain(chain.aux_sizes, conds, chain.recon1, chain.recon2)


def zero_rate_point(source: JointSource, d1: DistortionMeasure, d2: DistortionMeasure, aux_sizes: Sequence[int]) -> RegionPoint:
    chain = AuxChain.constant(source.alphabet1, source.alphabet2, aux_sizes)
    joint = chain.joint_tensor(source)
    chain = AuxChain(chain.aux_sizes, chain.conditionals, bayes_recon(joint, d1, 1), bayes_recon(joint, d2, 2))
    return evaluate(chain, source, d1, d2, method="zero-rate")


# -------------------------------
# Distortion-targeted search
# -------------------------------
class _Search:
    def __init__(self, prob: _Problem, D: Tuple[float, float], seed_chain: AuxChain):
        self.prob = prob
        self.D = D
        self.seed_chain = seed_chain
        self.feasible: List[RegionPoint] = []

    def solve(self, slopes: Tuple[float, float], start: AuxChain) -> Tuple[AuxChain, RegionPoint]:
        chain, _ = _minimize(self.prob, start, slopes[0], slopes[1])
        point = evaluate(chain, self.prob.source, self.prob.d1, self.prob.d2, method=METHOD)
        if point.meets(*self.D, tol=FEASIBILITY_TOL):
            self.feasible.append(point)
        return chain, point

    def bisect(self, i: int, slopes: List[float], start: AuxChain) -> AuxChain:
        """
        Smallest slope on coordinate i whose solution meets D_i; the returned
        chain is the solution at that slope.
        """
        target = self.D[i]

        def at(s: float, warm: AuxChain) -> Tuple[AuxChain, float]:
            trial = list(slopes)
            trial[i] = s
            chain, point = self.solve((trial[0], trial[1]), warm)
            return chain, (point.D1, point.D2)[i]

        lo, hi = 0.0, max(slopes[i], 1.0)
        hi_chain, dist = at(hi, start)
        while dist > target + FEASIBILITY_TOL and hi < SLOPE_CEILING:
            lo, hi = hi, min(2.0 * hi, SLOPE_CEILING)
            hi_chain, dist = at(hi, _mix(start, self.seed_chain, WARM_MIX))
        if dist > target + FEASIBILITY_TOL:
            slopes[i] = hi
            return hi_chain

        for _ in range(BISECTION_STEPS):
            mid = np.sqrt(lo * hi) if lo > 0 else 0.5 * hi
            chain, dist = at(mid, _mix(hi_chain, self.seed_chain, WARM_MIX))
            if dist > target + FEASIBILITY_TOL:
                lo = mid
            else:
                hi, hi_chain = mid, chain
                if target - dist < 1e-5:
                    break
        slopes[i] = hi
        return hi_chain


def _run_restart(prob: _Problem, D: Tuple[float, float], active: Tuple[bool, bool], start: AuxChain) -> List[RegionPoint]:
    search = _Search(prob, D, start)
    slopes = [1.0 if active[0] else 0.0, 1.0 if active[1] else 0.0]
    chain = start
    rounds = ALTERNATIONS if all(active) else 1
    for _ in range(rounds):
        for i in (0, 1):
            if active[i]:
                chain = search.bisect(i, slopes, chain)
    return search.feasible


def optimize_point(
    source: JointSource,
    d1: DistortionMeasure,
    d2: DistortionMeasure,
    D1: float,
    D2: float,
    q: int = 2,
    aux_sizes: Optional[Sequence[int]] = None,
    restarts: int = 4,
    rng: Optional[np.random.Generator] = None,
    init: Optional[AuxChain] = None,
    workers: int = 1,
    max_sweeps: int = 300,
    sweep_tol: float = 1e-10,
) -> RegionPoint:
    """
    Smallest sum-rate witness found whose distortions meet (D1, D2) within 1e-6.
    Each restart bisects the distortion slopes around an alternating
    minimisation; `init` (a witness with at most q rounds) is embedded both as
    a warm start and as a candidate.
    """
    if q < 2 or q % 2 or q > MAX_ROUNDS:
        raise ValidationError(f"q must be even and in [2, {MAX_ROUNDS}], got {q}")
    if restarts < 1:
        raise ValidationError(f"restarts must be >= 1, got {restarts}")
    sizes = tuple(int(s) for s in aux_sizes) if aux_sizes is not None else default_aux_sizes(source, q)
    if len(sizes) != q or min(sizes) < 1:
        raise ValidationError(f"need {q} auxiliary sizes >= 1, got {sizes}")

    minimal = {"D1_min": min_distortion(source.marginal1, d1), "D2_min": min_distortion(source.marginal2, d2)}
    if D1 < minimal["D1_min"] - 1e-12 or D2 < minimal["D2_min"] - 1e-12:
        raise InfeasibleError(
            f"distortions ({D1}, {D2}) below the minimal achievable "
            f"({minimal['D1_min']}, {minimal['D2_min']})",
            minimal,
        )

    zero = zero_rate_point(source, d1, d2, sizes)
    if zero.meets(D1, D2, tol=FEASIBILITY_TOL):
        log.info("targets (%.4f, %.4f) met at zero rate", D1, D2)
        return zero

    active = (D1 < zero.D1 - FEASIBILITY_TOL, D2 < zero.D2 - FEASIBILITY_TOL)
    prob = _Problem(source, d1, d2, max_sweeps, sweep_tol)
    rng = rng if rng is not None else make_rng(0)
    children = split(rng, restarts)
    starts = [random_chain(source, sizes, child) for child in children]

    candidates: List[RegionPoint] = []
    if init is not None:
        embedded = embed(init, q, sizes)
        point = evaluate(embedded, source, d1, d2, method=METHOD)
        if point.meets(D1, D2, tol=FEASIBILITY_TOL):
            candidates.append(point)
        starts[0] = _mix(embedded, starts[0], 0.05)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda s: _run_restart(prob, (D1, D2), active, s), starts))
    else:
        results = [_run_restart(prob, (D1, D2), active, s) for s in starts]
    for found in results:
        candidates.extend(found)

    if not candidates:
        raise ConvergenceError(f"no witness meeting ({D1}, {D2}) found in {restarts} restarts")
    best = min(candidates, key=lambda p: (p.sum_rate, p.D1 + p.D2))
    log.info("q=%d targets (%.4f, %.4f): rho=(%.6f, %.6f) D=(%.6f, %.6f)",
             q, D1, D2, best.rho1, best.rho2, best.D1, best.D2)
    return best
