"""Star-schema-lite metadata layer: dimension hierarchies over a fact table,
aggregation at a chosen level per dimension, roll-up and drill-down."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

from .errors import (
    EmptyGroup,
    HierarchyError,
    NonNumericMeasure,
    UnknownDimension,
    UnknownLevel,
    UsageError,
)

ALL = "all"
AGGREGATES = ("count", "sum", "mean", "min", "max")


@dataclass
class DimensionHierarchy:
    """Levels ordered root (coarsest) to leaf (finest).

    ``level_map`` maps each leaf value to its tuple of values per level,
    in the same root-to-leaf order.
    """

    dimension_name: str
    levels: list[str]
    level_map: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.levels:
            raise HierarchyError(f"dimension {self.dimension_name!r} has no levels")
        if len(set(self.levels)) != len(self.levels):
            raise HierarchyError(f"dimension {self.dimension_name!r} repeats a level name")
        self._check_tree()

    def _check_tree(self):
        # a value at level i must always have the same ancestor chain
        parent_of: dict = {}
        for leaf, path in self.level_map.items():
            if len(path) != len(self.levels):
                raise HierarchyError(f"{self.dimension_name}: leaf {leaf!r} has {len(path)} values, "
                                     f"expected {len(self.levels)}")
            if path[-1] != leaf:
                raise HierarchyError(f"{self.dimension_name}: leaf {leaf!r} path ends in {path[-1]!r}")
            for i in range(1, len(path)):
                key = (i, path[i])
                up = tuple(path[:i])
                if parent_of.setdefault(key, up) != up:
                    raise HierarchyError(
                        f"{self.dimension_name}: value {path[i]!r} at level {self.levels[i]!r} "
                        f"has two parents")

    @property
    def root(self) -> str:
        return self.levels[0]

    @property
    def leaf(self) -> str:
        return self.levels[-1]

    def value_at(self, leaf_value, level: str):
        if level == ALL:
            return ALL
        try:
            path = self.level_map[leaf_value]
        except KeyError:
            raise HierarchyError(f"{self.dimension_name}: unknown leaf value {leaf_value!r}") from None
        return path[self.levels.index(level)]

    @classmethod
    def from_csv(cls, path, name: Optional[str] = None) -> "DimensionHierarchy":
        """Load ``leaf,level1,...,root`` rows; the header names the levels."""
        path = Path(path)
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
        if not rows:
            raise HierarchyError(f"{path}: empty dimension file")
        header = [h.strip() for h in rows[0]]
        levels = list(reversed(header))
        level_map = {}
        for lineno, row in enumerate(rows[1:], start=1):
            if len(row) != len(header):
                raise HierarchyError(f"{path}: line {lineno}: expected {len(header)} fields")
            vals = [v.strip() for v in row]
            leaf = vals[0]
            if leaf in level_map and level_map[leaf] != tuple(reversed(vals)):
                raise HierarchyError(f"{path}: line {lineno}: leaf {leaf!r} mapped twice")
            level_map[leaf] = tuple(reversed(vals))
        return cls(name or path.stem, levels, level_map)


@dataclass
class StarSchema:
    """Fact rows are mappings; each dimension's leaf value is stored under
    ``fact_keys[dimension]`` (defaults to the dimension name)."""

    fact_name: str
    measures: list[str]
    dimensions: list[DimensionHierarchy]
    fact_keys: dict = field(default_factory=dict)

    def __post_init__(self):
        names = [d.dimension_name for d in self.dimensions]
        if len(set(names)) != len(names):
            raise HierarchyError("duplicate dimension names")
        for n in self.fact_keys:
            if n not in names:
                raise UnknownDimension(n)

    def dimension(self, name: str) -> DimensionHierarchy:
        for d in self.dimensions:
            if d.dimension_name == name:
                return d
        raise UnknownDimension(f"no dimension {name!r}")

    def key_column(self, name: str) -> str:
        return self.fact_keys.get(name, name)

    def describe(self) -> dict:
        """Schema listing per object type: dimension name -> levels."""
        return {d.dimension_name: list(d.levels) for d in self.dimensions}


@dataclass(frozen=True)
class OlapQuery:
    group_levels: tuple  # ((dimension, level), ...) in schema order
    measure: str
    aggregate: str = "count"

    @classmethod
    def make(cls, schema: StarSchema, levels: Mapping[str, str], measure: str,
             aggregate: str = "count") -> "OlapQuery":
        if aggregate not in AGGREGATES:
            raise UsageError(f"unknown aggregate {aggregate!r}")
        for name in levels:
            schema.dimension(name)
        gl = []
        for d in schema.dimensions:
            lvl = levels.get(d.dimension_name, ALL)
            if lvl != ALL and lvl not in d.levels:
                raise UnknownLevel(f"dimension {d.dimension_name!r} has no level {lvl!r}")
            gl.append((d.dimension_name, lvl))
        return cls(tuple(gl), measure, aggregate)

    def level(self, dimension: str) -> str:
        for d, lvl in self.group_levels:
            if d == dimension:
                return lvl
        raise UnknownDimension(f"no dimension {dimension!r}")


def _validate(schema: StarSchema, query: OlapQuery):
    for dim, lvl in query.group_levels:
        h = schema.dimension(dim)
        if lvl != ALL and lvl not in h.levels:
            raise UnknownLevel(f"dimension {dim!r} has no level {lvl!r}")


def aggregate(fact_rows: Iterable[Mapping], query: OlapQuery, schema: StarSchema) -> list[tuple]:
    """Group fact rows by the query's levels and aggregate the measure.

    Returns ``[(group_key, value), ...]`` sorted by group key, one entry
    per non-empty group.
    """
    _validate(schema, query)
    dims = [(schema.dimension(d), schema.key_column(d), lvl) for d, lvl in query.group_levels]
    groups: dict = {}
    for row in fact_rows:
        key = tuple(h.value_at(row[col], lvl) for h, col, lvl in dims)
        if query.aggregate == "count":
            groups[key] = groups.get(key, 0) + 1
            continue
        raw = row[query.measure]
        try:
            v = float(raw)
        except (TypeError, ValueError):
            raise NonNumericMeasure(f"measure {query.measure!r} value {raw!r} is not numeric") from None
        groups.setdefault(key, []).append(v)

    out = []
    for key in sorted(groups, key=lambda k: tuple(map(str, k))):
        vals = groups[key]
        if query.aggregate == "count":
            out.append((key, vals))
        elif query.aggregate == "sum":
            out.append((key, math.fsum(vals)))
        elif query.aggregate == "mean":
            if not vals:
                raise EmptyGroup(f"mean of empty group {key}")
            out.append((key, math.fsum(vals) / len(vals)))
        elif query.aggregate == "min":
            out.append((key, min(vals)))
        else:
            out.append((key, max(vals)))
    return out


def roll_up(query: OlapQuery, dimension: str, schema: StarSchema) -> OlapQuery:
    """Move one level toward the root; the root (and ``all``) are fixed points."""
    h = schema.dimension(dimension)
    lvl = query.level(dimension)
    if lvl == ALL or lvl == h.root:
        return query
    new = h.levels[h.levels.index(lvl) - 1]
    return _with_level(query, dimension, new)


def drill_down(query: OlapQuery, dimension: str, schema: StarSchema) -> OlapQuery:
    """Move one level toward the leaf; from ``all`` the next level is the root."""
    h = schema.dimension(dimension)
    lvl = query.level(dimension)
    if lvl == ALL:
        return _with_level(query, dimension, h.root)
    if lvl == h.leaf:
        return query
    return _with_level(query, dimension, h.levels[h.levels.index(lvl) + 1])


def _with_level(query: OlapQuery, dimension: str, level: str) -> OlapQuery:
    gl = tuple((d, level if d == dimension else lv) for d, lv in query.group_levels)
    return replace(query, group_levels=gl)


def load_fact_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return [dict(r) for r in csv.DictReader(line for line in fh if not line.startswith("#"))]


def parse_group_spec(text: str) -> dict:
    """``"time=month,band=band"`` -> ``{"time": "month", "band": "band"}``."""
    out = {}
    for part in filter(None, (p.strip() for p in text.split(","))):
        if "=" not in part:
            raise UsageError(f"--group entry {part!r} is not dimension=level")
        k, v = part.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def format_rows(rows: Sequence[tuple], query: OlapQuery) -> list[str]:
    head = [d for d, _ in query.group_levels] + [f"{query.aggregate}({query.measure})"]
    lines = [",".join(head)]
    for key, val in rows:
        lines.append(",".join([str(k) for k in key] + [repr(val) if isinstance(val, float) else str(val)]))
    return lines
