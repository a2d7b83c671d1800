from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Dict, FrozenSet, Optional, Sequence, Tuple, Union

import numpy as np

from src.utils import mixed_radix
from src.utils.errors import ConsistencyError, ValidationError

# Encoders and decoders share one interface: a history array of shape
# (states, in_width) holding symbols (own source digits, then received channel
# outputs in slot order) maps to an output array of shape (states, out_width).


@dataclass(frozen=True)
class LookupTable:
    in_radices: Tuple[int, ...]
    out_alphabet: int
    out_width: int
    table: np.ndarray = field(repr=False)

    def __post_init__(self):
        radices = tuple(int(r) for r in self.in_radices)
        table = np.asarray(self.table, dtype=np.int64).ravel()
        expected = mixed_radix.size(radices)
        if table.size != expected:
            raise ValidationError(f"lookup table has {table.size} entries, history space has {expected}")
        limit = int(self.out_alphabet) ** int(self.out_width)
        if table.size and (table.min() < 0 or table.max() >= limit):
            raise ValidationError(f"lookup table entries must lie in [0, {limit})")
        table.setflags(write=False)
        object.__setattr__(self, "in_radices", radices)
        object.__setattr__(self, "table", table)

    @property
    def in_width(self) -> int:
        return len(self.in_radices)

    def __call__(self, history: np.ndarray) -> np.ndarray:
        history = np.asarray(history, dtype=np.int64)
        if history.shape[-1] != self.in_width:
            raise ConsistencyError(f"history width {history.shape[-1]} != table width {self.in_width}")
        if history.size and np.any(history >= np.asarray(self.in_radices)):
            raise ConsistencyError("history symbol outside the table's radix (unreachable history)")
        index = mixed_radix.encode(history, self.in_radices)
        return mixed_radix.decode(self.table[index], (self.out_alphabet,) * self.out_width)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": "lookup",
            "in_radices": list(self.in_radices),
            "out_alphabet": int(self.out_alphabet),
            "out_width": int(self.out_width),
            "table": self.table.tolist(),
        }


@dataclass(frozen=True)
class ConstantTable:
    in_width: int
    out_alphabet: int
    out_width: int
    value: int = 0

    def __call__(self, history: np.ndarray) -> np.ndarray:
        history = np.asarray(history)
        if history.shape[-1] != self.in_width:
            raise ConsistencyError(f"history width {history.shape[-1]} != table width {self.in_width}")
        digits = mixed_radix.decode(np.int64(self.value), (self.out_alphabet,) * self.out_width)
        return np.broadcast_to(digits, history.shape[:-1] + (self.out_width,)).copy()

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": "constant",
            "in_width": int(self.in_width),
            "out_alphabet": int(self.out_alphabet),
            "out_width": int(self.out_width),
            "value": int(self.value),
        }


@dataclass(frozen=True)
class ProjectedTable:
    """
    Applies `base` to a subset of history positions. This is how a transformed
    code reuses an original function on exactly the information it consumed.
    """

    base: "Table"
    columns: Tuple[int, ...]
    in_width: int

    def __post_init__(self):
        cols = tuple(int(c) for c in self.columns)
        if len(cols) != self.base.in_width:
            raise ValidationError(f"projection picks {len(cols)} positions, base expects {self.base.in_width}")
        if cols and (min(cols) < 0 or max(cols) >= self.in_width):
            raise ValidationError(f"projection positions must lie in [0, {self.in_width})")
        object.__setattr__(self, "columns", cols)

    @property
    def out_alphabet(self) -> int:
        return self.base.out_alphabet

    @property
    def out_width(self) -> int:
        return self.base.out_width

    def __call__(self, history: np.ndarray) -> np.ndarray:
        history = np.asarray(history, dtype=np.int64)
        if history.shape[-1] != self.in_width:
            raise ConsistencyError(f"history width {history.shape[-1]} != table width {self.in_width}")
        return self.base(history[..., list(self.columns)])

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": "projected",
            "in_width": int(self.in_width),
            "columns": list(self.columns),
            "base": self.base.to_dict(),
        }


@dataclass(frozen=True)
class ConcatTable:
    parts: Tuple["Table", ...]

    def __post_init__(self):
        parts = tuple(self.parts)
        if not parts:
            raise ValidationError("concatenation needs at least one part")
        widths = {p.in_width for p in parts}
        alphabets = {p.out_alphabet for p in parts}
        if len(widths) != 1 or len(alphabets) != 1:
            raise ValidationError("concatenated tables must share input width and output alphabet")
        object.__setattr__(self, "parts", parts)

    @property
    def in_width(self) -> int:
        return self.parts[0].in_width

    @property
    def out_alphabet(self) -> int:
        return self.parts[0].out_alphabet

    @property
    def out_width(self) -> int:
        return sum(p.out_width for p in self.parts)

    def __call__(self, history: np.ndarray) -> np.ndarray:
        return np.concatenate([p(history) for p in self.parts], axis=-1)

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": "concat", "parts": [p.to_dict() for p in self.parts]}


@dataclass(frozen=True)
class SymbolTable:
    """
    One output position of a multi-symbol table.
    """

    base: "Table"
    position: int

    def __post_init__(self):
        if not 0 <= self.position < self.base.out_width:
            raise ValidationError(f"position {self.position} outside base output width {self.base.out_width}")

    @property
    def in_width(self) -> int:
        return self.base.in_width

    @property
    def out_alphabet(self) -> int:
        return self.base.out_alphabet

    @property
    def out_width(self) -> int:
        return 1

    def __call__(self, history: np.ndarray) -> np.ndarray:
        return self.base(history)[..., self.position:self.position + 1]

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": "symbol", "position": int(self.position), "base": self.base.to_dict()}


@dataclass(frozen=True)
class ExpandedTable:
    """
    Applies `base` to a wider history rebuilt from a narrower one: history
    position j lands on base position columns[j], the rest are 0. Only valid
    when `base` does not read the positions left out.
    """

    base: "Table"
    columns: Tuple[int, ...]

    def __post_init__(self):
        cols = tuple(int(c) for c in self.columns)
        if len(set(cols)) != len(cols):
            raise ValidationError("expanded positions must be distinct")
        if cols and (min(cols) < 0 or max(cols) >= self.base.in_width):
            raise ValidationError(f"expanded positions must lie in [0, {self.base.in_width})")
        object.__setattr__(self, "columns", cols)

    @property
    def in_width(self) -> int:
        return len(self.columns)

    @property
    def out_alphabet(self) -> int:
        return self.base.out_alphabet

    @property
    def out_width(self) -> int:
        return self.base.out_width

    def __call__(self, history: np.ndarray) -> np.ndarray:
        history = np.asarray(history, dtype=np.int64)
        if history.shape[-1] != self.in_width:
            raise ConsistencyError(f"history width {history.shape[-1]} != table width {self.in_width}")
        full = np.zeros(history.shape[:-1] + (self.base.in_width,), dtype=np.int64)
        full[..., list(self.columns)] = history
        return self.base(full)

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": "expanded", "columns": list(self.columns), "base": self.base.to_dict()}


Table = Union[LookupTable, ConstantTable, ProjectedTable, ConcatTable, SymbolTable, ExpandedTable]


def dependencies(table: Table, memo: Optional[Dict[int, Tuple[FrozenSet[int], ...]]] = None) -> Tuple[FrozenSet[int], ...]:
    """
    History positions each output symbol can depend on, read off the table's structure.
    """
    memo = {} if memo is None else memo
    key = id(table)
    if key in memo:
        return memo[key]
    if isinstance(table, LookupTable):
        out = (frozenset(range(table.in_width)),) * table.out_width
    elif isinstance(table, ConstantTable):
        out = (frozenset(),) * table.out_width
    elif isinstance(table, ProjectedTable):
        out = tuple(frozenset(table.columns[c] for c in d) for d in dependencies(table.base, memo))
    elif isinstance(table, ConcatTable):
        out = tuple(d for p in table.parts for d in dependencies(p, memo))
    elif isinstance(table, SymbolTable):
        out = (dependencies(table.base, memo)[table.position],)
    elif isinstance(table, ExpandedTable):
        where = {c: j for j, c in enumerate(table.columns)}
        out = tuple(frozenset(where[c] for c in d if c in where) for d in dependencies(table.base, memo))
    else:
        raise ValidationError(f"unknown table type {type(table).__name__}")
    memo[key] = out
    return out


def table_from_dict(data: Dict[str, Any]) -> Table:
    kind = data.get("kind")
    if kind == "lookup":
        return LookupTable(tuple(data["in_radices"]), int(data["out_alphabet"]), int(data["out_width"]),
                           np.asarray(data["table"], dtype=np.int64))
    if kind == "constant":
        return ConstantTable(int(data["in_width"]), int(data["out_alphabet"]), int(data["out_width"]),
                             int(data.get("value", 0)))
    if kind == "projected":
        return ProjectedTable(table_from_dict(data["base"]), tuple(data["columns"]), int(data["in_width"]))
    if kind == "concat":
        return ConcatTable(tuple(table_from_dict(p) for p in data["parts"]))
    if kind == "symbol":
        return SymbolTable(table_from_dict(data["base"]), int(data["position"]))
    if kind == "expanded":
        return ExpandedTable(table_from_dict(data["base"]), tuple(data["columns"]))
    raise ValidationError(f"unknown table kind {kind!r}")


def random_lookup(
    in_radices: Sequence[int], out_alphabet: int, out_width: int, rng: np.random.Generator
) -> LookupTable:
    """
    Uniform i.i.d. entries; the converse must hold for every code, so any law will do.
    """
    entries = mixed_radix.size(in_radices)
    table = rng.integers(0, int(out_alphabet) ** int(out_width), size=entries, dtype=np.int64)
    return LookupTable(tuple(in_radices), out_alphabet, out_width, table)
