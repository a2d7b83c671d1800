from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence, Tuple

import numpy as np
from scipy.special import logsumexp, xlogy

from src.infotheory.pmf import Pmf, Variable
from src.utils.errors import ConvergenceError, InfeasibleError, ValidationError

log = logging.getLogger(__name__)

LN2 = np.log(2.0)
MAX_BA_ITERATIONS = 100_000
SLOPE_CEILING = 200.0  # nats per unit distortion; beyond this D(s) is below 1e-80 off D_min
BISECTION_STEPS = 200


@dataclass(frozen=True)
class JointSource:
    joint: np.ndarray = field(repr=False)
    name: str = ""

    def __post_init__(self):
        j = np.array(self.joint, dtype=np.float64)
        if j.ndim != 2:
            raise ValidationError(f"joint source table must be 2-D, got shape {j.shape}")
        if np.any(j < 0) or abs(j.sum() - 1.0) > 1e-12:
            raise ValidationError(f"joint source {self.name} is not a pmf (sum {j.sum()!r})")
        j.setflags(write=False)
        object.__setattr__(self, "joint", j)

    @property
    def alphabet1(self) -> int:
        return int(self.joint.shape[0])

    @property
    def alphabet2(self) -> int:
        return int(self.joint.shape[1])

    @property
    def marginal1(self) -> np.ndarray:
        return self.joint.sum(axis=1)

    @property
    def marginal2(self) -> np.ndarray:
        return self.joint.sum(axis=0)

    def as_pmf(self, names: Tuple[str, str] = ("X1", "X2")) -> Pmf:
        return Pmf((Variable(names[0], self.alphabet1), Variable(names[1], self.alphabet2)), self.joint)

    def swapped(self) -> "JointSource":
        return JointSource(self.joint.T, name=f"{self.name}~swap")


@dataclass(frozen=True)
class DistortionMeasure:
    d: np.ndarray = field(repr=False)
    name: str = ""

    def __post_init__(self):
        d = np.array(self.d, dtype=np.float64)
        if d.ndim != 2 or d.size == 0:
            raise ValidationError(f"distortion matrix must be 2-D and nonempty, got shape {d.shape}")
        if np.any(d < 0) or not np.all(np.isfinite(d)):
            raise ValidationError(f"distortion {self.name} must be finite and nonnegative")
        d.setflags(write=False)
        object.__setattr__(self, "d", d)

    @property
    def source_size(self) -> int:
        return int(self.d.shape[0])

    @property
    def recon_size(self) -> int:
        return int(self.d.shape[1])


# -------------------------------
# Presets
# -------------------------------
def dsbs(p: float) -> JointSource:
    """
    Doubly symmetric binary source: uniform X1, X2 = X1 xor Bern(p).
    """
    return JointSource(np.array([[(1 - p) / 2, p / 2], [p / 2, (1 - p) / 2]]), name=f"dsbs({p})")


def independent(p1: Sequence[float], p2: Sequence[float]) -> JointSource:
    return JointSource(np.outer(np.asarray(p1, float), np.asarray(p2, float)), name="independent")


def hamming(k: int, recon: int | None = None) -> DistortionMeasure:
    recon = k if recon is None else recon
    d = np.ones((k, recon))
    for i in range(min(k, recon)):
        d[i, i] = 0.0
    return DistortionMeasure(d, name=f"hamming({k})")


# -------------------------------
# Sampling and empirical distortion
# -------------------------------
def sample_blocks(s: JointSource, n: int, trials: int, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """
    (trials, n) arrays of i.i.d. pairs drawn from the joint.
    """
    if n < 1:
        raise ValidationError(f"block length must be >= 1, got {n}")
    if trials < 0:
        raise ValidationError(f"trials must be >= 0, got {trials}")
    flat = rng.choice(s.joint.size, size=(trials, n), p=s.joint.ravel())
    return flat // s.alphabet2, flat % s.alphabet2


def sample_block(s: JointSource, n: int, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    x1, x2 = sample_blocks(s, n, 1, rng)
    return x1[0], x2[0]


def avg_distortion(x: Sequence[int], xhat: Sequence[int], d: DistortionMeasure) -> float:
    x = np.asarray(x, dtype=np.int64)
    xhat = np.asarray(xhat, dtype=np.int64)
    if x.shape != xhat.shape:
        raise ValidationError(f"length mismatch: {x.shape} vs {xhat.shape}")
    if x.size == 0:
        raise ValidationError("cannot average distortion over an empty block")
    if x.min() < 0 or x.max() >= d.source_size or xhat.min() < 0 or xhat.max() >= d.recon_size:
        raise ValidationError("symbol out of range for distortion measure")
    return float(d.d[x, xhat].mean())


def block_distortions(x: np.ndarray, xhat: np.ndarray, d: DistortionMeasure) -> np.ndarray:
    """
    Per-row average distortion for (trials, n) arrays.
    """
    return d.d[np.asarray(x), np.asarray(xhat)].mean(axis=-1)


# -------------------------------
# Rate-distortion
# -------------------------------
def min_distortion(marginal: np.ndarray, d: DistortionMeasure) -> float:
    return float(np.asarray(marginal) @ d.d.min(axis=1))


def max_distortion(marginal: np.ndarray, d: DistortionMeasure) -> float:
    """
    Best constant-guess distortion, where R(D) reaches 0.
    """
    return float((np.asarray(marginal) @ d.d).min())


def _ba_at_slope(
    p: np.ndarray, d: np.ndarray, s: float, tol: float, max_iterations: int = MAX_BA_ITERATIONS
) -> Tuple[float, float, np.ndarray]:
    """
    Blahut-Arimoto for min I(X;Y) + s E d at slope s (nats per unit distortion).
    Returns (rate_bits, distortion, Q[x, y]); stops on the certified gap between the
    Lagrangian upper bound and the dual lower bound.
    """
    support = p > 0
    p = p[support]
    d = d[support]
    log_p = np.log(p)
    m = d.shape[1]
    log_q = np.full(m, -np.log(m))
    scaled = -s * d

    for it in range(max_iterations):
        log_Q = scaled + log_q[None, :]
        log_Q -= logsumexp(log_Q, axis=1, keepdims=True)
        Q = np.exp(log_Q)
        rate = float(np.sum(p[:, None] * Q * (log_Q - log_q[None, :])))
        dist = float(np.sum(p[:, None] * Q * d))
        upper = rate + s * dist

        # dual bound: sum_x p log lambda(x) - max_y log c(y)
        log_norm = logsumexp(scaled + log_q[None, :], axis=1)  # -log lambda(x)
        log_c = logsumexp(log_p[:, None] - log_norm[:, None] + scaled, axis=0)
        lower = float(-(p @ log_norm) - log_c.max())

        log_q = logsumexp(log_p[:, None] + log_Q, axis=0)
        if upper - lower < tol * LN2:
            break
    else:
        raise ConvergenceError(f"rate-distortion BA at slope {s} did not converge in {max_iterations} iterations")

    full_Q = np.zeros((support.size, m))
    full_Q[support] = Q
    return rate / LN2, dist, full_Q


def _solve_for_distortion(curve, D: float, d_min: float, d_max: float, tol: float) -> float:
    """
    Bisect the slope so that the curve's distortion meets D; curve(s) -> (rate, dist).
    """
    if D >= d_max - 1e-15:
        return 0.0

    lo, hi = 0.0, 1.0
    rate, dist = curve(hi)
    while dist > D and hi < SLOPE_CEILING:
        lo, hi = hi, min(hi * 2.0, SLOPE_CEILING)
        rate, dist = curve(hi)
    if dist > D:
        # D sits within numerical reach of D_min; the ceiling slope is the lossless end
        return rate

    best = rate
    for _ in range(BISECTION_STEPS):
        mid = 0.5 * (lo + hi)
        r_mid, d_mid = curve(mid)
        if d_mid > D:
            lo = mid
        else:
            hi, best = mid, r_mid
            if D - d_mid < tol * 1e-3:
                break
        if hi - lo < 1e-12 * max(1.0, hi):
            break
    return best


def rate_distortion(marginal: Sequence[float], d: DistortionMeasure, D: float, tol: float = 1e-9) -> float:
    """
    R(D) in bits/symbol for a memoryless source with the given marginal.
    """
    p = np.asarray(marginal, dtype=np.float64)
    if tol <= 0:
        raise ValidationError(f"tol must be positive, got {tol}")
    if p.shape[0] != d.source_size:
        raise ValidationError(f"marginal has {p.shape[0]} symbols, distortion expects {d.source_size}")
    d_min = min_distortion(p, d)
    d_max = max_distortion(p, d)
    if D < d_min - 1e-12:
        raise InfeasibleError(f"distortion {D} below D_min = {d_min}", {"D_min": d_min})

    def curve(s: float):
        r, dist, _ = _ba_at_slope(p, d.d, s, tol * 1e-2)
        return r, dist

    rate = _solve_for_distortion(curve, D, d_min, d_max, tol)
    log.debug("R(%.6f) = %.9f bits", D, rate)
    return max(rate, 0.0)


def conditional_rate_distortion(s: JointSource, d: DistortionMeasure, D: float, tol: float = 1e-9) -> float:
    """
    R_{X1|X2}(D): X2 known to both encoder and decoder. Each X2-slice is
    solved at a common slope so the distortion budget is split optimally.
    """
    p2 = s.marginal2
    slices = [(p2[j], s.joint[:, j] / p2[j]) for j in range(s.alphabet2) if p2[j] > 0]
    d_min = sum(w * min_distortion(c, d) for w, c in slices)
    d_max = sum(w * max_distortion(c, d) for w, c in slices)
    if D < d_min - 1e-12:
        raise InfeasibleError(f"distortion {D} below D_min = {d_min}", {"D_min": d_min})

    def curve(slope: float):
        rate = dist = 0.0
        for w, c in slices:
            r, dd, _ = _ba_at_slope(c, d.d, slope, tol * 1e-2)
            rate += w * r
            dist += w * dd
        return rate, dist

    return max(_solve_for_distortion(curve, D, d_min, d_max, tol), 0.0)


def rd_curve(marginal: Sequence[float], d: DistortionMeasure, grid: Sequence[float], tol: float = 1e-9):
    return [(float(D), rate_distortion(marginal, d, float(D), tol)) for D in grid]


def entropy_bits(p: Sequence[float]) -> float:
    p = np.asarray(p, dtype=np.float64)
    return float(-xlogy(p, p).sum() / LN2)
