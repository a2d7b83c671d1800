from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, FrozenSet, Iterable, List, Sequence, Tuple

import numpy as np
from scipy.special import entr

from src.utils.errors import StateSpaceError, ValidationError

CELL_CEILING = 2 ** 24
NORMALIZATION_TOL = 1e-12
LN2 = np.log(2.0)


@dataclass(frozen=True)
class Variable:
    name: str
    alphabet_size: int

    def __post_init__(self):
        if not self.name:
            raise ValidationError("variable name must be nonempty")
        if int(self.alphabet_size) < 1:
            raise ValidationError(
                f"variable {self.name!r} needs alphabet_size >= 1, got {self.alphabet_size}"
            )


def _check_cells(variables: Sequence[Variable], what: str = "pmf") -> int:
    cells = 1
    for v in variables:
        cells *= int(v.alphabet_size)
    if cells > CELL_CEILING:
        raise StateSpaceError(what, cells, CELL_CEILING)
    return cells


@dataclass(frozen=True)
class Pmf:
    """
    Dense joint pmf over named finite variables; axis i of `mass` is variables[i].
    """

    variables: Tuple[Variable, ...]
    mass: np.ndarray = field(repr=False)

    def __post_init__(self):
        variables = tuple(self.variables)
        names = [v.name for v in variables]
        if len(set(names)) != len(names):
            raise ValidationError(f"duplicate variable names in pmf: {names}")
        _check_cells(variables)

        mass = np.asarray(self.mass, dtype=np.float64)
        shape = tuple(v.alphabet_size for v in variables)
        if mass.shape != shape:
            if mass.size != int(np.prod(shape, dtype=np.int64)):
                raise ValidationError(f"mass has {mass.size} cells, variables need shape {shape}")
            mass = mass.reshape(shape)
        if np.any(mass < 0):
            raise ValidationError(f"pmf has negative entries (min {mass.min():.3e})")
        total = float(mass.sum())
        if abs(total - 1.0) > NORMALIZATION_TOL:
            raise ValidationError(f"pmf sums to {total!r}, not 1")

        mass = mass.copy()
        mass.setflags(write=False)
        object.__setattr__(self, "variables", variables)
        object.__setattr__(self, "mass", mass)

    # ------------------------------------------------------------------
    # construction helpers
    # ------------------------------------------------------------------
    @classmethod
    def from_counts(cls, variables: Sequence[Variable], weights: np.ndarray) -> "Pmf":
        weights = np.asarray(weights, dtype=np.float64)
        total = weights.sum()
        if total <= 0:
            raise ValidationError("cannot normalise an all-zero table")
        return cls(tuple(variables), weights / total)

    @classmethod
    def uniform(cls, variables: Sequence[Variable]) -> "Pmf":
        shape = tuple(v.alphabet_size for v in variables)
        _check_cells(variables)
        return cls(tuple(variables), np.full(shape, 1.0 / int(np.prod(shape))))

    @classmethod
    def product(cls, *pmfs: "Pmf") -> "Pmf":
        """
        Independent joint of pmfs over disjoint variables.
        """
        variables: List[Variable] = []
        mass = np.ones(())
        for p in pmfs:
            variables.extend(p.variables)
            _check_cells(variables)
            mass = np.multiply.outer(mass, p.mass)
        return cls(tuple(variables), mass)

    @classmethod
    def from_function(
        cls,
        variables: Sequence[Variable],
        fn: Callable[..., float],
    ) -> "Pmf":
        shape = tuple(v.alphabet_size for v in variables)
        _check_cells(variables)
        mass = np.zeros(shape)
        for idx in np.ndindex(*shape):
            mass[idx] = fn(*idx)
        return cls(tuple(variables), mass)

    # ------------------------------------------------------------------
    # lookup
    # ------------------------------------------------------------------
    @property
    def names(self) -> Tuple[str, ...]:
        return tuple(v.name for v in self.variables)

    def variable(self, name: str) -> Variable:
        for v in self.variables:
            if v.name == name:
                return v
        raise ValidationError(f"unknown variable {name!r}; pmf has {list(self.names)}")

    def axes(self, names: Iterable[str]) -> Tuple[int, ...]:
        lookup = {v.name: i for i, v in enumerate(self.variables)}
        out = []
        for n in names:
            if n not in lookup:
                raise ValidationError(f"unknown variable {n!r}; pmf has {list(self.names)}")
            out.append(lookup[n])
        return tuple(out)

    def marginal_mass(self, keep: Iterable[str]) -> np.ndarray:
        """
        Marginal table over `keep`, axes kept in this pmf's variable order.
        """
        keep_axes = set(self.axes(keep))
        drop = tuple(i for i in range(len(self.variables)) if i not in keep_axes)
        return self.mass.sum(axis=drop) if drop else self.mass


@dataclass(frozen=True)
class MiQuery:
    left: FrozenSet[str]
    right: FrozenSet[str]
    given: FrozenSet[str] = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "left", frozenset(self.left))
        object.__setattr__(self, "right", frozenset(self.right))
        object.__setattr__(self, "given", frozenset(self.given))
        if not self.left or not self.right:
            raise ValidationError("mutual information needs nonempty left and right sets")
        overlap = (self.left & self.right) | (self.left & self.given) | (self.right & self.given)
        if overlap:
            raise ValidationError(f"query sets overlap on {sorted(overlap)}")

    @classmethod
    def parse(cls, text: str) -> "MiQuery":
        """
        "A,B;C|D,E" -> I(A,B; C | D,E).
        """
        body, _, given = text.partition("|")
        left, sep, right = body.partition(";")
        if not sep:
            raise ValidationError(f"query {text!r} is missing ';'")

        def names(part: str) -> FrozenSet[str]:
            return frozenset(s.strip() for s in part.split(",") if s.strip())

        return cls(names(left), names(right), names(given))

    def validate(self, p: Pmf) -> None:
        p.axes(sorted(self.left | self.right | self.given))

    def __str__(self) -> str:
        def fmt(s: FrozenSet[str]) -> str:
            return ",".join(sorted(s))

        tail = f" | {fmt(self.given)}" if self.given else ""
        return f"I({fmt(self.left)} ; {fmt(self.right)}{tail})"


def marginalize(p: Pmf, keep: Iterable[str]) -> Pmf:
    keep = list(keep)
    axes = p.axes(keep)
    ordered = [p.variables[i] for i in sorted(set(axes))]
    return Pmf(tuple(ordered), p.marginal_mass(keep))


def _entropy_bits(mass: np.ndarray) -> float:
    return float(entr(mass).sum() / LN2)


def entropy(p: Pmf, over: Iterable[str]) -> float:
    over = list(over)
    if not over:
        raise ValidationError("entropy needs a nonempty variable set")
    return _entropy_bits(p.marginal_mass(over))


def conditional_entropy(p: Pmf, over: Iterable[str], given: Iterable[str] = ()) -> float:
    over, given = set(over), set(given)
    if not given:
        return entropy(p, over)
    return entropy(p, over | given) - entropy(p, given)


def mutual_information(p: Pmf, q: MiQuery) -> float:
    """
    I(L;R|G) = H(L|G) + H(R|G) - H(L,R|G), in bits.
    """
    q.validate(p)
    g = set(q.given)
    h_g = entropy(p, g) if g else 0.0
    h_lg = entropy(p, q.left | g)
    h_rg = entropy(p, q.right | g)
    h_lrg = entropy(p, q.left | q.right | g)
    return h_lg + h_rg - h_lrg - h_g


def mi(p: Pmf, left: Iterable[str], right: Iterable[str], given: Iterable[str] = ()) -> float:
    return mutual_information(p, MiQuery(frozenset(left), frozenset(right), frozenset(given)))


def variable_dict(p: Pmf) -> Dict[str, int]:
    return {v.name: v.alphabet_size for v in p.variables}
