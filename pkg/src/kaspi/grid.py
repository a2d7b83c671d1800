from __future__ import annotations

import logging
from dataclasses import dataclass, field
from itertools import combinations
from typing import List, Sequence, Tuple

import numpy as np
from scipy.optimize import linprog

from src.source.source import DistortionMeasure, JointSource
from src.utils import mixed_radix
from src.utils.errors import InfeasibleError, StateSpaceError, ValidationError

log = logging.getLogger(__name__)

GRID_RESOLUTION = 64
COMBO_CAP = 8_000_000
BATCH = 50_000
MAX_GRID_AUX = 3
KEY_DECIMALS = 9

# Exhaustive near-oracle for two rounds: every pair of conditionals whose rows
# sit on the 1/resolution simplex grid is evaluated exactly, then the best
# time-sharing of the evaluated points is found by a linear program.


@dataclass(frozen=True)
class GridResult:
    sum_rate: float
    rho1: float
    rho2: float
    D1: float
    D2: float
    single_point_rate: float
    evaluated: int
    support: List[Tuple[float, float, float, float, float]] = field(default_factory=list, repr=False)


def simplex_grid(size: int, resolution: int) -> np.ndarray:
    """
    Every probability vector of length `size` whose entries are multiples of 1/resolution.
    """
    if size == 1:
        return np.ones((1, 1))
    rows = []
    for bars in combinations(range(resolution + size - 1), size - 1):
        edges = (-1,) + bars + (resolution + size - 1,)
        rows.append([edges[j + 1] - edges[j] - 1 for j in range(size)])
    return np.asarray(rows, dtype=np.float64) / resolution


def _log2_ratio(mass: np.ndarray, num: np.ndarray, den: np.ndarray) -> np.ndarray:
    ratio = np.divide(num, den, out=np.ones_like(num), where=(mass > 0) & (den > 0))
    return np.where(mass > 0, mass * np.log2(np.where(mass > 0, ratio, 1.0)), 0.0)


def _evaluate_batch(p: np.ndarray, q1: np.ndarray, q2: np.ndarray, d1: np.ndarray, d2: np.ndarray):
    """
    q1: (B, x1, u1), q2: (B, x2, u1, u2) -> rho1, rho2 (bits), D1, D2 per row.
    """
    joint = p[None, :, :, None, None] * q1[:, :, None, :, None] * q2[:, None, :, :, :]

    # p(u1 | x2) = sum_x1 p(x1 | x2) q1(u1 | x1)
    p_x2 = p.sum(axis=0)
    cond = np.divide(p, p_x2[None, :], out=np.zeros_like(p), where=p_x2[None, :] > 0)
    u1_given_x2 = np.einsum("ij,bia->bja", cond, q1)
    j1 = joint.sum(axis=4)  # (B, x1, x2, u1)
    rho1 = _log2_ratio(j1, q1[:, :, None, :] + 0 * j1, u1_given_x2[:, None, :, :] + 0 * j1).sum(axis=(1, 2, 3))

    # p(u2 | x1, u1) from the full joint
    j_x1u1 = joint.sum(axis=(2, 4))  # (B, x1, u1)
    j_x1u1u2 = joint.sum(axis=2)  # (B, x1, u1, u2)
    u2_given_x1u1 = np.divide(
        j_x1u1u2, j_x1u1[..., None], out=np.zeros_like(j_x1u1u2), where=j_x1u1[..., None] > 0
    )
    rho2 = _log2_ratio(
        joint, q2[:, None, :, :, :] + 0 * joint, u2_given_x1u1[:, :, None, :, :] + 0 * joint
    ).sum(axis=(1, 2, 3, 4))

    # Bayes estimates: X1 at User 2 from (x2, u1, u2), X2 at User 1 from (x1, u1, u2)
    cost1 = np.einsum("bijkl,im->bjklm", joint, d1)
    cost2 = np.einsum("bijkl,jm->biklm", joint, d2)
    D1 = cost1.min(axis=-1).sum(axis=(1, 2, 3))
    D2 = cost2.min(axis=-1).sum(axis=(1, 2, 3))
    return rho1, rho2, D1, D2


def _reduce(points: np.ndarray) -> np.ndarray:
    """
    Keep the smallest sum-rate point per distinct (D1, D2) pair.
    """
    keys = np.round(points[:, 2:4], KEY_DECIMALS)
    order = np.lexsort((points[:, 0] + points[:, 1], keys[:, 1], keys[:, 0]))
    keys, points = keys[order], points[order]
    first = np.ones(len(points), dtype=bool)
    first[1:] = np.any(keys[1:] != keys[:-1], axis=1)
    return points[first]


def grid_search(
    source: JointSource,
    d1: DistortionMeasure,
    d2: DistortionMeasure,
    D1: float,
    D2: float,
    aux_sizes: Sequence[int] = (2, 1),
    resolution: int = GRID_RESOLUTION,
    cap: int = COMBO_CAP,
) -> GridResult:
    sizes = tuple(int(s) for s in aux_sizes)
    if len(sizes) != 2:
        raise ValidationError("grid search covers two-round chains only")
    if min(sizes) < 1 or max(sizes) > MAX_GRID_AUX:
        raise ValidationError(f"grid search needs auxiliary sizes in [1, {MAX_GRID_AUX}], got {sizes}")
    if resolution < 1:
        raise ValidationError(f"resolution must be >= 1, got {resolution}")

    a1, a2 = source.alphabet1, source.alphabet2
    grid1 = simplex_grid(sizes[0], resolution)
    grid2 = simplex_grid(sizes[1], resolution)
    rows2 = a2 * sizes[0]
    combos1 = len(grid1) ** a1
    combos2 = len(grid2) ** rows2
    total = combos1 * combos2
    if total > cap:
        raise StateSpaceError(f"grid search at resolution 1/{resolution}", total, cap)

    radices1 = (len(grid1),) * a1
    radices2 = (len(grid2),) * rows2
    p = np.asarray(source.joint)
    chunks = []
    for start in range(0, total, BATCH):
        idx = np.arange(start, min(start + BATCH, total), dtype=np.int64)
        i1, i2 = np.divmod(idx, combos2)
        q1 = grid1[mixed_radix.decode(i1, radices1)]
        q2 = grid2[mixed_radix.decode(i2, radices2)].reshape(len(idx), a2, sizes[0], sizes[1])
        chunks.append(np.column_stack(_evaluate_batch(p, q1, q2, d1.d, d2.d)))
    points = _reduce(np.vstack(chunks))
    log.debug("grid search: %d combinations, %d distinct distortion pairs", total, len(points))

    rates = points[:, 0] + points[:, 1]
    single = (points[:, 2] <= D1 + 1e-12) & (points[:, 3] <= D2 + 1e-12)
    single_rate = float(rates[single].min()) if single.any() else float("inf")

    res = linprog(
        c=rates,
        A_ub=points[:, 2:4].T,
        b_ub=[D1, D2],
        A_eq=np.ones((1, len(points))),
        b_eq=[1.0],
        bounds=(0, None),
        method="highs",
    )
    if res.status != 0:
        raise InfeasibleError(
            f"no time-sharing of grid points meets ({D1}, {D2})",
            {"D1_min": float(points[:, 2].min()), "D2_min": float(points[:, 3].min())},
        )
    weights = np.maximum(res.x, 0.0)
    weights /= weights.sum()
    used = np.flatnonzero(weights > 1e-12)
    mix = weights @ points
    return GridResult(
        sum_rate=float(mix[0] + mix[1]),
        rho1=float(mix[0]),
        rho2=float(mix[1]),
        D1=float(mix[2]),
        D2=float(mix[3]),
        single_point_rate=single_rate,
        evaluated=total,
        support=[(float(weights[i]),) + tuple(float(v) for v in points[i]) for i in used],
    )
