"""Catalog schema with unit metadata, CSV ingestion and the paged ``.skyf`` store.

Store layout (little-endian, every page exactly ``page_size`` bytes)::

    every page   : magic b"SKYF" | version u16 | record_count u32
    page 0       : header (record_count = total) | page_size u32 | n_pages u32
                   | schema_len u32 | schema JSON (utf-8)
    data pages   : header | fixed-width rows | string heap | zero padding

Row fields are f64 / i64 (8 bytes) or, for strings, a (heap offset u16,
length u16) pair into the page-local heap that follows the rows.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import (
    CorruptHeader,
    MissingColumn,
    PageOverflow,
    PositionOutOfRange,
    SchemaError,
    TypeMismatch,
    UnitMismatch,
)

MAGIC = b"SKYF"
VERSION = 1
DEFAULT_PAGE_SIZE = 4096

PAGE_HEADER = struct.Struct("<4sHI")
FILE_META = struct.Struct("<III")

KINDS = ("angle", "time", "energy", "magnitude", "flux", "error", "quality", "generic")
DTYPES = ("f64", "i64", "string")

# None means any unit string is acceptable for that kind.
KIND_UNITS: dict[str, Optional[frozenset]] = {
    "angle": frozenset({"deg", "rad"}),
    "time": frozenset({"s", "d", "yr", "mjd", "jd"}),
    "energy": frozenset({"eV", "keV", "MeV", "GeV", "erg", "J"}),
    "magnitude": frozenset({"mag"}),
    "flux": frozenset({"Jy", "mJy", "erg/s/cm2", "ph/s/cm2", "counts/s", "W/m2"}),
    "error": None,
    "quality": None,
    "generic": None,
}


@dataclass(frozen=True)
class ColumnMeta:
    name: str
    semantic_kind: str = "generic"
    unit: str = ""
    dtype: str = "f64"
    error_of: Optional[str] = None

    def to_dict(self) -> dict:
        d = {"name": self.name, "kind": self.semantic_kind, "unit": self.unit, "dtype": self.dtype}
        if self.error_of is not None:
            d["error_of"] = self.error_of
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ColumnMeta":
        return cls(d["name"], d.get("kind", "generic"), d.get("unit", ""),
                   d.get("dtype", "f64"), d.get("error_of"))


@dataclass(frozen=True)
class CatalogSchema:
    columns: tuple[ColumnMeta, ...]
    position_columns: tuple[str, str] = ("ra", "dec")

    def __post_init__(self):
        object.__setattr__(self, "columns", tuple(self.columns))
        object.__setattr__(self, "position_columns", tuple(self.position_columns))
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise SchemaError(f"duplicate column names in {names}")
        by_name = {c.name: c for c in self.columns}
        for c in self.columns:
            if c.semantic_kind not in KINDS:
                raise SchemaError(f"column {c.name!r}: unknown kind {c.semantic_kind!r}")
            if c.dtype not in DTYPES:
                raise SchemaError(f"column {c.name!r}: unknown dtype {c.dtype!r}")
            allowed = KIND_UNITS[c.semantic_kind]
            if allowed is not None and c.unit not in allowed:
                raise UnitMismatch(c.name, f"unit {c.unit!r} invalid for kind {c.semantic_kind}")
            if c.semantic_kind == "error":
                if c.error_of is None or c.error_of not in by_name:
                    raise SchemaError(f"error column {c.name!r} must reference an existing column")
        if len(self.position_columns) != 2:
            raise SchemaError("position_columns must be a (ra, dec) pair")
        for p in self.position_columns:
            if p not in by_name:
                raise SchemaError(f"position column {p!r} not in schema")
            col = by_name[p]
            if col.semantic_kind != "angle" or col.dtype != "f64":
                raise SchemaError(f"position column {p!r} must be an f64 angle column")

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.columns]

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise MissingColumn(f"no column {name!r} in schema") from None

    def column(self, name: str) -> ColumnMeta:
        return self.columns[self.index(name)]

    def canonical(self) -> "CatalogSchema":
        """The schema as stored after ingestion: every angle column in degrees."""
        cols = tuple(
            ColumnMeta(c.name, c.semantic_kind, "deg", c.dtype, c.error_of)
            if c.semantic_kind == "angle" else c
            for c in self.columns
        )
        return CatalogSchema(cols, self.position_columns)

    def to_dict(self) -> dict:
        return {"columns": [c.to_dict() for c in self.columns],
                "position": list(self.position_columns)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))

    @classmethod
    def from_dict(cls, d: dict) -> "CatalogSchema":
        try:
            cols = tuple(ColumnMeta.from_dict(c) for c in d["columns"])
            pos = tuple(d.get("position", ("ra", "dec")))
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"malformed schema: {exc}") from None
        return cls(cols, pos)

    @classmethod
    def load(cls, path) -> "CatalogSchema":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: {exc}") from None


@dataclass(frozen=True)
class SourceRecord:
    values: tuple

    def __getitem__(self, i):
        return self.values[i]

    def __len__(self):
        return len(self.values)


def _split_header_field(field_text: str) -> tuple[str, Optional[str]]:
    # "ra[deg]" -> ("ra", "deg")
    field_text = field_text.strip()
    if field_text.endswith("]") and "[" in field_text:
        name, unit = field_text[:-1].split("[", 1)
        return name.strip(), unit.strip()
    return field_text, None


def parse_catalog(text: str, schema: CatalogSchema) -> list[SourceRecord]:
    """Parse comma-separated text with a header line into typed records.

    Header fields may carry a unit tag (``ra[deg]``); a tag that disagrees
    with the schema raises :class:`UnitMismatch`. Angles are converted to
    degrees, RA wrapped into [0, 360), and Dec checked against [-90, 90].
    Line numbers in errors count data rows from 1.
    """
    lines = (ln for ln in text.splitlines())
    header = None
    for ln in lines:
        s = ln.strip()
        if not s or s.startswith("#"):
            continue
        header = s
        break
    if header is None:
        raise MissingColumn("no header line")

    fields = [_split_header_field(f) for f in header.split(",")]
    names = [f[0] for f in fields]
    missing = [n for n in schema.names if n not in names]
    if missing:
        raise MissingColumn(f"missing columns {missing}")
    extra = [n for n in names if n not in schema.names]
    if extra:
        raise MissingColumn(f"columns not in schema: {extra}")
    for name, tag in fields:
        if tag is not None and tag != schema.column(name).unit:
            raise UnitMismatch(name, f"data tagged {tag!r}, schema declares {schema.column(name).unit!r}")

    order = [names.index(n) for n in schema.names]
    ra_i = schema.index(schema.position_columns[0])
    dec_i = schema.index(schema.position_columns[1])
    converters = []
    for c in schema.columns:
        if c.dtype == "f64":
            conv = float
        elif c.dtype == "i64":
            conv = int
        else:
            conv = str
        scale = math.degrees(1.0) if (c.semantic_kind == "angle" and c.unit == "rad") else None
        converters.append((c.name, conv, scale))

    records = []
    lineno = 0
    for ln in lines:
        s = ln.strip()
        if not s or s.startswith("#"):
            continue
        lineno += 1
        parts = s.split(",")
        if len(parts) != len(names):
            raise TypeMismatch(lineno, "<row>", s)
        vals = []
        for col_pos, (name, conv, scale) in zip(order, converters):
            raw = parts[col_pos].strip()
            try:
                v = conv(raw)
            except ValueError:
                raise TypeMismatch(lineno, name, raw) from None
            if scale is not None:
                v = math.degrees(v)
            vals.append(v)
        ra, dec = vals[ra_i], vals[dec_i]
        if not (math.isfinite(ra) and math.isfinite(dec)):
            raise PositionOutOfRange(lineno, "non-finite position")
        if not -90.0 <= dec <= 90.0:
            raise PositionOutOfRange(lineno, f"dec {dec} outside [-90, 90]")
        vals[ra_i] = ra % 360.0
        records.append(SourceRecord(tuple(vals)))
    return records


# ---------------------------------------------------------------- binary store


def _field_codes(schema: CatalogSchema) -> str:
    return "".join({"f64": "d", "i64": "q", "string": "HH"}[c.dtype] for c in schema.columns)


@dataclass
class RecordStore:
    schema: CatalogSchema
    page_size: int = DEFAULT_PAGE_SIZE
    records: list = field(default_factory=list)
    page_counts: list = field(default_factory=list)

    @property
    def record_count(self) -> int:
        return len(self.records)

    def __len__(self):
        return len(self.records)

    def column(self, name: str) -> np.ndarray:
        i = self.schema.index(name)
        col = self.schema.columns[i]
        dtype = {"f64": np.float64, "i64": np.int64, "string": object}[col.dtype]
        return np.array([r.values[i] for r in self.records], dtype=dtype)

    def positions(self) -> tuple[np.ndarray, np.ndarray]:
        ra, dec = self.schema.position_columns
        return self.column(ra), self.column(dec)

    def matrix(self, names: Sequence[str]) -> np.ndarray:
        """Numeric columns stacked as an (n, len(names)) float array."""
        if not names:
            return np.empty((len(self.records), 0))
        return np.column_stack([self.column(n).astype(np.float64) for n in names]) \
            if self.records else np.empty((0, len(names)))


def _encode_row(rec: SourceRecord, schema: CatalogSchema, row_struct: struct.Struct, heap: bytearray):
    args = []
    for v, c in zip(rec.values, schema.columns):
        if c.dtype == "string":
            b = str(v).encode("utf-8")
            args.extend((len(heap), len(b)))
            heap.extend(b)
        else:
            args.append(v)
    return row_struct.pack(*args)


def paginate(records: Sequence[SourceRecord], schema: CatalogSchema, page_size: int) -> list[bytes]:
    """Encode records into data pages of exactly ``page_size`` bytes."""
    row_struct = struct.Struct("<" + _field_codes(schema))
    payload = page_size - PAGE_HEADER.size
    if payload < row_struct.size:
        raise PageOverflow(f"page_size {page_size} cannot hold one {row_struct.size}-byte row")
    pages = []
    rows: list[bytes] = []
    heap = bytearray()

    def flush():
        body = b"".join(rows) + bytes(heap)
        page = PAGE_HEADER.pack(MAGIC, VERSION, len(rows)) + body
        pages.append(page + bytes(page_size - len(page)))

    for rec in records:
        if len(rec.values) != len(schema.columns):
            raise PageOverflow(f"record arity {len(rec.values)} != schema arity {len(schema.columns)}")
        trial_heap = bytearray(heap)
        row = _encode_row(rec, schema, row_struct, trial_heap)
        if (len(rows) + 1) * row_struct.size + len(trial_heap) > payload or len(trial_heap) > 0xFFFF:
            if not rows:
                raise PageOverflow("record larger than page payload")
            flush()
            rows, heap = [], bytearray()
            trial_heap = bytearray()
            row = _encode_row(rec, schema, row_struct, trial_heap)
            if row_struct.size + len(trial_heap) > payload:
                raise PageOverflow("record larger than page payload")
        rows.append(row)
        heap = trial_heap
    if rows:
        flush()
    return pages


def write_store(records: Sequence[SourceRecord], schema: CatalogSchema, path,
                page_size: int = DEFAULT_PAGE_SIZE) -> RecordStore:
    schema_json = schema.to_json().encode("utf-8")
    data_pages = paginate(records, schema, page_size)
    head = PAGE_HEADER.pack(MAGIC, VERSION, len(records)) + \
        FILE_META.pack(page_size, len(data_pages), len(schema_json)) + schema_json
    if len(head) > page_size:
        raise PageOverflow("schema does not fit in the header page")
    with open(path, "wb") as fh:
        fh.write(head + bytes(page_size - len(head)))
        for p in data_pages:
            fh.write(p)
    counts = [PAGE_HEADER.unpack_from(p)[2] for p in data_pages]
    return RecordStore(schema, page_size, list(records), counts)


def read_store(path) -> RecordStore:
    data = Path(path).read_bytes()
    min_len = PAGE_HEADER.size + FILE_META.size
    if len(data) < min_len:
        raise CorruptHeader(f"{path}: file too short")
    magic, version, total = PAGE_HEADER.unpack_from(data)
    if magic != MAGIC or version != VERSION:
        raise CorruptHeader(f"{path}: bad magic or version")
    page_size, n_pages, slen = FILE_META.unpack_from(data, PAGE_HEADER.size)
    if page_size < min_len or len(data) != page_size * (n_pages + 1):
        raise CorruptHeader(f"{path}: size {len(data)} inconsistent with {n_pages} pages of {page_size}")
    try:
        schema = CatalogSchema.from_dict(json.loads(data[min_len:min_len + slen].decode("utf-8")))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptHeader(f"{path}: unreadable schema ({exc})") from None

    row_struct = struct.Struct("<" + _field_codes(schema))
    kinds = [c.dtype for c in schema.columns]
    records = []
    counts = []
    for p in range(1, n_pages + 1):
        base = p * page_size
        magic, version, count = PAGE_HEADER.unpack_from(data, base)
        if magic != MAGIC or version != VERSION:
            raise CorruptHeader(f"{path}: page {p} has a bad header")
        rows_at = base + PAGE_HEADER.size
        heap_at = rows_at + count * row_struct.size
        for r in range(count):
            raw = row_struct.unpack_from(data, rows_at + r * row_struct.size)
            vals = []
            j = 0
            for k in kinds:
                if k == "string":
                    off, ln = raw[j], raw[j + 1]
                    vals.append(data[heap_at + off:heap_at + off + ln].decode("utf-8"))
                    j += 2
                else:
                    vals.append(raw[j])
                    j += 1
            records.append(SourceRecord(tuple(vals)))
        counts.append(count)
    if sum(counts) != total:
        raise CorruptHeader(f"{path}: page counts sum to {sum(counts)}, header says {total}")
    return RecordStore(schema, page_size, records, counts)


def ingest(csv_path, schema: CatalogSchema, store_path, page_size: int = DEFAULT_PAGE_SIZE) -> RecordStore:
    records = parse_catalog(Path(csv_path).read_text(), schema)
    return write_store(records, schema.canonical(), store_path, page_size)


def records_from_arrays(columns: Iterable[Sequence]) -> list[SourceRecord]:
    return [SourceRecord(tuple(v)) for v in zip(*columns)]


def key_matrix(store: RecordStore, keys: Sequence[str]) -> np.ndarray:
    """Index coordinates for ``keys``; the key ``xyz`` expands to the 3-d
    unit vectors of the store's positions."""
    keys = list(keys)
    if keys == ["xyz"]:
        from .htm import radec_to_vector

        ra, dec = store.positions()
        return radec_to_vector(ra, dec).reshape(-1, 3)
    for k in keys:
        if store.schema.column(k).dtype == "string":
            raise TypeMismatch(0, k, "string column cannot be indexed")
    return store.matrix(keys)
