"""Versioned tab-separated dataset files.

Layout::

    # magtransmon-dataset v1
    # kind: spectroscopy
    # meta.<key>: <value>
    device<TAB>sweep_id<TAB>...
    <row>
    ...

Floats are written with ``repr`` so that parse(serialize(x)) is bit-exact;
missing values are ``NA``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Tuple

import numpy as np

MAGIC = "# magtransmon-dataset v1"
LABELS = ("f01", "f02_half", "f01_even", "f01_odd", "cavity")


class DatasetError(ValueError):
    """Malformed dataset; the message names the offending line."""


# column name -> kind ("str", "int", "float", "optfloat")
_SCHEMAS: Dict[str, Tuple[Tuple[str, str], ...]] = {
    "spectroscopy": (
        ("device", "str"), ("sweep_id", "int"), ("b_par_t", "float"), ("b_perp_t", "float"),
        ("label", "str"), ("frequency_ghz", "float"), ("uncertainty_ghz", "optfloat"),
        ("timestamp_s", "optfloat"),
    ),
    "coherence": (
        ("device", "str"), ("sweep_id", "int"), ("b_par_t", "float"), ("b_perp_t", "float"),
        ("f01_ghz", "optfloat"), ("t1_us", "optfloat"), ("t1_err_us", "optfloat"),
        ("t2_star_us", "optfloat"), ("t2_star_err_us", "optfloat"),
        ("t2_echo_us", "optfloat"), ("t2_echo_err_us", "optfloat"),
    ),
    "alignment": (
        ("b_x_t", "float"), ("b_y_t", "float"), ("arch_offset_t", "float"),
    ),
}


def _fmt(v, kind):
    if kind == "str":
        return str(v)
    if kind == "int":
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return "NA"
    return repr(v)


def _parse(tok, kind, lineno, col):
    try:
        if kind == "str":
            if not tok or any(c in tok for c in "\t\n"):
                raise ValueError("empty string")
            return tok
        if kind == "int":
            return int(tok)
        if tok == "NA":
            if kind == "optfloat":
                return math.nan
            raise ValueError("missing value")
        return float(tok)
    except ValueError as exc:
        raise DatasetError(f"line {lineno}: column {col!r}: cannot parse {tok!r} ({exc})") from None


@dataclass
class Table:
    """Columnar dataset of one kind plus a metadata header."""

    kind: str
    columns: Dict[str, np.ndarray]
    meta: Dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in _SCHEMAS:
            raise DatasetError(f"unknown dataset kind {self.kind!r}")
        schema = _SCHEMAS[self.kind]
        n = None
        cols = {}
        for name, kind in schema:
            if name not in self.columns:
                if kind == "optfloat":
                    continue
                raise DatasetError(f"missing column {name!r}")
            arr = np.asarray(self.columns[name], dtype=object if kind == "str" else
                             (np.int64 if kind == "int" else float))
            if n is None:
                n = arr.size
            elif arr.size != n:
                raise DatasetError(f"column {name!r} has {arr.size} rows, expected {n}")
            cols[name] = arr
        n = n or 0
        for name, kind in schema:
            if name not in cols:
                cols[name] = np.full(n, math.nan)
        self.columns = cols
        self.validate()

    def __len__(self):
        return len(next(iter(self.columns.values())))

    def __getitem__(self, name):
        return self.columns[name]

    def __eq__(self, other):
        if not isinstance(other, Table) or other.kind != self.kind or other.meta != self.meta:
            return False
        for name, kind in _SCHEMAS[self.kind]:
            a, b = self.columns[name], other.columns[name]
            if a.shape != b.shape:
                return False
            if kind in ("float", "optfloat"):
                if not np.array_equal(a.view(np.int64), b.view(np.int64)):
                    return False
            elif not np.array_equal(a, b):
                return False
        return True

    def validate(self):
        if self.kind == "spectroscopy":
            bad = [str(x) for x in set(self.columns["label"].tolist()) - set(LABELS)]
            if bad:
                raise DatasetError(f"unknown transition label(s): {', '.join(sorted(bad))}")
            if np.any(~(self.columns["frequency_ghz"] > 0)):
                raise DatasetError("frequencies must be positive")
        elif self.kind == "coherence":
            for name in ("t1_us", "t2_star_us", "t2_echo_us"):
                v = self.columns[name]
                if np.any(v[~np.isnan(v)] <= 0):
                    raise DatasetError(f"{name} must be positive where present")

    def select(self, mask) -> "Table":
        mask = np.asarray(mask)
        return Table(self.kind, {k: v[mask] for k, v in self.columns.items()}, dict(self.meta))

    def sorted(self) -> "Table":
        if "sweep_id" not in self.columns:
            return self
        order = np.lexsort((self.columns["b_perp_t"], self.columns["b_par_t"], self.columns["sweep_id"]))
        return self.select(order)

    def rows(self) -> Iterable[tuple]:
        names = [n for n, _ in _SCHEMAS[self.kind]]
        for i in range(len(self)):
            yield tuple(self.columns[n][i] for n in names)


def concat(tables: List[Table]) -> Table:
    if not tables:
        raise DatasetError("nothing to concatenate")
    kind = tables[0].kind
    meta = dict(tables[0].meta)
    cols = {n: np.concatenate([t.columns[n] for t in tables]) for n, _ in _SCHEMAS[kind]}
    return Table(kind, cols, meta)


def serialize(table: Table) -> str:
    schema = _SCHEMAS[table.kind]
    lines = [MAGIC, f"# kind: {table.kind}"]
    for k in sorted(table.meta):
        v = str(table.meta[k])
        if "\n" in v or "\n" in k or ":" in k:
            raise DatasetError(f"metadata key/value not representable: {k!r}")
        lines.append(f"# meta.{k}: {v}")
    lines.append("\t".join(n for n, _ in schema))
    cols = [(table.columns[n], kind) for n, kind in schema]
    for i in range(len(table)):
        lines.append("\t".join(_fmt(c[i], kind) for c, kind in cols))
    return "\n".join(lines) + "\n"


def parse(text: str) -> Table:
    lines = text.splitlines()
    if not lines or lines[0].strip() != MAGIC:
        raise DatasetError(f"line 1: expected header {MAGIC!r}")
    kind = None
    meta = {}
    i = 1
    while i < len(lines) and lines[i].startswith("#"):
        body = lines[i][1:].strip()
        if body.startswith("kind:"):
            kind = body.split(":", 1)[1].strip()
        elif body.startswith("meta."):
            key, _, val = body[5:].partition(":")
            meta[key.strip()] = val.strip()
        i += 1
    if kind not in _SCHEMAS:
        raise DatasetError(f"line 2: unknown or missing dataset kind {kind!r}")
    schema = _SCHEMAS[kind]
    if i >= len(lines):
        raise DatasetError(f"line {i + 1}: missing column header")
    header = lines[i].split("\t")
    expected = [n for n, _ in schema]
    if header != expected:
        raise DatasetError(f"line {i + 1}: column header {header} does not match {expected}")
    values = {n: [] for n in expected}
    for lineno, line in enumerate(lines[i + 1:], start=i + 2):
        if not line.strip():
            continue
        toks = line.split("\t")
        if len(toks) != len(schema):
            raise DatasetError(f"line {lineno}: expected {len(schema)} fields, got {len(toks)}")
        for (name, ck), tok in zip(schema, toks):
            values[name].append(_parse(tok, ck, lineno, name))
    try:
        return Table(kind, {n: np.array(v, dtype=object) if dict(schema)[n] == "str" else np.array(v)
                            for n, v in values.items()}, meta)
    except DatasetError as exc:
        raise DatasetError(f"{exc} (data starting at line {i + 2})") from None


def write(table: Table, path) -> Path:
    path = Path(path)
    path.write_text(serialize(table))
    return path


def read(path) -> Table:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise DatasetError(f"cannot read {path}: {exc}") from None
    try:
        return parse(text)
    except DatasetError as exc:
        raise DatasetError(f"{path}: {exc}") from None


def empty(kind: str, meta=None) -> Table:
    cols = {n: np.array([], dtype=object if k == "str" else (np.int64 if k == "int" else float))
            for n, k in _SCHEMAS[kind]}
    return Table(kind, cols, dict(meta or {}))


def spectroscopy(device, sweep_id, b_par, b_perp, label, frequency, uncertainty=None, timestamp=None,
                 meta=None) -> Table:
    n = len(frequency)
    cols = {
        "device": np.broadcast_to(np.asarray(device, dtype=object), (n,)).copy(),
        "sweep_id": np.broadcast_to(np.asarray(sweep_id), (n,)).copy(),
        "b_par_t": np.broadcast_to(np.asarray(b_par, dtype=float), (n,)).copy(),
        "b_perp_t": np.asarray(b_perp, dtype=float),
        "label": np.broadcast_to(np.asarray(label, dtype=object), (n,)).copy(),
        "frequency_ghz": np.asarray(frequency, dtype=float),
    }
    if uncertainty is not None:
        cols["uncertainty_ghz"] = np.broadcast_to(np.asarray(uncertainty, dtype=float), (n,)).copy()
    if timestamp is not None:
        cols["timestamp_s"] = np.asarray(timestamp, dtype=float)
    return Table("spectroscopy", cols, dict(meta or {}))


# Aliases naming the two measurement kinds
SpectroscopyDataset = Table
CoherenceDataset = Table
