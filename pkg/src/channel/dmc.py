from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Sequence

import numpy as np
from scipy.special import xlogy

from src.infotheory.pmf import CELL_CEILING
from src.utils.errors import ConvergenceError, StateSpaceError, ValidationError

log = logging.getLogger(__name__)

STOCHASTIC_TOL = 1e-12
MAX_BA_ITERATIONS = 100_000


@dataclass(frozen=True)
class Dmc:
    """
    Row-stochastic transition matrix W[x, y] = W(y|x).
    """

    transition: np.ndarray = field(repr=False)
    name: str = ""

    def __post_init__(self):
        w = np.array(self.transition, dtype=np.float64)
        if w.ndim != 2 or w.shape[0] < 1 or w.shape[1] < 1:
            raise ValidationError(f"channel matrix must be 2-D and nonempty, got shape {w.shape}")
        if np.any(w < 0):
            raise ValidationError(f"channel {self.name or ''} has negative entries")
        rows = w.sum(axis=1)
        bad = np.flatnonzero(np.abs(rows - 1.0) > STOCHASTIC_TOL)
        if bad.size:
            raise ValidationError(
                f"channel {self.name or ''} row {int(bad[0])} sums to {rows[bad[0]]!r}, not 1"
            )
        w.setflags(write=False)
        object.__setattr__(self, "transition", w)

    @property
    def input_size(self) -> int:
        return int(self.transition.shape[0])

    @property
    def output_size(self) -> int:
        return int(self.transition.shape[1])

    def permute_outputs(self, perm: Sequence[int]) -> "Dmc":
        return Dmc(self.transition[:, list(perm)], name=f"{self.name}~perm")


@dataclass(frozen=True)
class CapacityResult:
    capacity: float
    optimal_input: np.ndarray = field(repr=False)
    iterations: int
    gap: float
    upper: float
    lower_bounds: List[float] = field(default_factory=list, repr=False)


# -------------------------------
# Presets
# -------------------------------
def bsc(p: float) -> Dmc:
    if not 0.0 <= p <= 1.0:
        raise ValidationError(f"BSC crossover must be in [0, 1], got {p}")
    return Dmc(np.array([[1 - p, p], [p, 1 - p]]), name=f"bsc({p})")


def bec(eps: float) -> Dmc:
    if not 0.0 <= eps <= 1.0:
        raise ValidationError(f"BEC erasure must be in [0, 1], got {eps}")
    return Dmc(np.array([[1 - eps, eps, 0.0], [0.0, eps, 1 - eps]]), name=f"bec({eps})")


def z_channel(p: float) -> Dmc:
    return Dmc(np.array([[1.0, 0.0], [p, 1 - p]]), name=f"z({p})")


def identity(k: int) -> Dmc:
    return Dmc(np.eye(int(k)), name=f"identity({k})")


def mutual_information(input_pmf: np.ndarray, ch: Dmc) -> float:
    """
    I(X;Y) in bits for input law p and channel W.
    """
    p = np.asarray(input_pmf, dtype=np.float64)
    w = ch.transition
    q = p @ w
    joint = p[:, None] * w
    ratio = np.divide(w, q[None, :], out=np.ones_like(w), where=q[None, :] > 0)
    return float(xlogy(joint, ratio).sum() / np.log(2.0))


def _row_divergences(w: np.ndarray, q: np.ndarray) -> np.ndarray:
    # D(W(.|x) || q) in bits, per input x
    ratio = np.divide(w, q[None, :], out=np.ones_like(w), where=q[None, :] > 0)
    return xlogy(w, ratio).sum(axis=1) / np.log(2.0)


def capacity(ch: Dmc, tol: float = 1e-9, max_iterations: int = MAX_BA_ITERATIONS) -> CapacityResult:
    """
    Blahut-Arimoto with the certified stopping rule
        max_x D(W(.|x)||pW) - I(p;W) < tol.
    The reported capacity is the lower bound I(p;W); the true value lies in [capacity, upper].
    """
    if tol <= 0:
        raise ValidationError(f"tol must be positive, got {tol}")

    w = ch.transition
    p = np.full(ch.input_size, 1.0 / ch.input_size)
    lower_bounds: List[float] = []

    for it in range(max_iterations + 1):
        q = p @ w
        d = _row_divergences(w, q)
        lower = float(p @ d)
        upper = float(d.max())
        lower_bounds.append(lower)

        if upper - lower < tol:
            log.debug("capacity(%s) converged after %d iterations: [%.12f, %.12f]", ch.name, it, lower, upper)
            return CapacityResult(
                capacity=max(lower, 0.0),
                optimal_input=p.copy(),
                iterations=it,
                gap=upper - lower,
                upper=upper,
                lower_bounds=lower_bounds,
            )

        # multiplicative update, log domain for stability
        logits = np.log(np.maximum(p, 1e-300)) + d * np.log(2.0)
        logits -= logits.max()
        p = np.exp(logits)
        p /= p.sum()

    raise ConvergenceError(
        f"Blahut-Arimoto did not reach gap {tol} on {ch.name or 'channel'} within {max_iterations} iterations"
    )


def extend(ch: Dmc, n: int) -> Dmc:
    """
    Memoryless n-fold extension; block symbols are big-endian mixed-radix indices.
    """
    if n < 1:
        raise ValidationError(f"extension length must be >= 1, got {n}")
    cells = (ch.input_size ** n) * (ch.output_size ** n)
    if cells > CELL_CEILING:
        raise StateSpaceError(f"{n}-fold extension of {ch.name or 'channel'}", cells, CELL_CEILING)

    w = ch.transition
    out = np.ones((1, 1))
    for _ in range(n):
        out = np.kron(out, w)
    return Dmc(out, name=f"{ch.name}^{n}" if ch.name else "")


def sample(ch: Dmc, x, rng: np.random.Generator):
    """
    Draw outputs for input symbol(s) x; shape of the result matches x.
    """
    xs = np.asarray(x, dtype=np.int64)
    if xs.size and (xs.min() < 0 or xs.max() >= ch.input_size):
        raise ValidationError(f"input symbol out of range [0, {ch.input_size}): {xs.min()}..{xs.max()}")

    cdf = np.cumsum(ch.transition, axis=1)[xs]
    u = rng.random(xs.shape)[..., None]
    y = np.minimum((u >= cdf).sum(axis=-1), ch.output_size - 1)
    if np.ndim(x) == 0:
        return int(y)
    return y.astype(np.int64)
