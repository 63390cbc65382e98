"""Dataset ETL: CSV parsing, categorical numeralization, min-max scaling,
and layout of feature vectors as near-square 2D maps.

Fitting (category codes, per-feature min/max) happens on training data
only; applying the fitted artifacts to any split is pure and repeatable.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError

NORMAL = "normal"
ATTACK = "attack"

_KINDS = {"numeric", "categorical", "label", "ignore"}
UNSEEN_CODE = 0


@dataclass(frozen=True)
class DatasetSchema:
    """Column roster for one CSV layout.

    label_mapping translates raw label text to normal/attack; the key "*"
    acts as a fallback for any text not listed (NSL-KDD names dozens of
    attack families, all of which map to attack).
    """

    name: str
    column_names: tuple[str, ...]
    column_kinds: tuple[str, ...]
    label_mapping: dict[str, str]
    has_header: bool = True

    def __post_init__(self):
        if len(self.column_names) != len(self.column_kinds):
            raise ConfigError("schema column_names and column_kinds differ in length")
        if len(set(self.column_names)) != len(self.column_names):
            raise ConfigError("schema column names must be unique")
        bad = [k for k in self.column_kinds if k not in _KINDS]
        if bad:
            raise ConfigError(f"unknown column kind(s): {sorted(set(bad))}")
        labels = self.column_kinds.count("label")
        if labels > 1:
            raise ConfigError(f"schema declares {labels} label columns, at most one allowed")
        if not self.feature_columns:
            raise ConfigError("schema has no feature columns")
        for raw, mapped in self.label_mapping.items():
            if mapped not in (NORMAL, ATTACK):
                raise ConfigError(f"label_mapping[{raw!r}] must be normal or attack, got {mapped!r}")

    @property
    def width(self) -> int:
        return len(self.column_names)

    @property
    def feature_columns(self) -> tuple[int, ...]:
        return tuple(
            i for i, kind in enumerate(self.column_kinds) if kind in ("numeric", "categorical")
        )

    @property
    def categorical_columns(self) -> tuple[int, ...]:
        return tuple(i for i, kind in enumerate(self.column_kinds) if kind == "categorical")

    @property
    def label_column(self) -> int | None:
        try:
            return self.column_kinds.index("label")
        except ValueError:
            return None

    @property
    def feature_count(self) -> int:
        return len(self.feature_columns)

    def map_label(self, text: str) -> str:
        if text in self.label_mapping:
            return self.label_mapping[text]
        if "*" in self.label_mapping:
            return self.label_mapping["*"]
        raise DataError(f"label {text!r} not covered by schema {self.name!r} label_mapping")

    @classmethod
    def from_dict(cls, doc: dict) -> "DatasetSchema":
        try:
            columns = doc["columns"]
            names = tuple(c["name"] for c in columns)
            kinds = tuple(c["kind"] for c in columns)
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"malformed schema document: {exc}") from exc
        return cls(
            name=doc.get("name", "unnamed"),
            column_names=names,
            column_kinds=kinds,
            label_mapping=dict(doc.get("label_mapping", {})),
            has_header=bool(doc.get("has_header", True)),
        )

    @classmethod
    def load(cls, source: str | Path) -> "DatasetSchema":
        """Load a schema by built-in name (e.g. "nsl-kdd") or JSON file path."""
        builtin = resources.files("anomaly_pipeline.schemas").joinpath(f"{source}.json")
        if isinstance(source, str) and "/" not in source and builtin.is_file():
            return cls.from_dict(json.loads(builtin.read_text(encoding="utf-8")))
        path = Path(source)
        if not path.is_file():
            raise ConfigError(f"schema {source!r} is neither a built-in name nor a readable file")
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class FeatureRecord:
    raw: list[str]
    encoded: np.ndarray | None = None
    label: str | None = None


@dataclass
class CategoricalEncoder:
    """Per-column category -> positive integer code; 0 is reserved for unseen."""

    schema: DatasetSchema
    codes: dict[int, dict[str, int]] = field(default_factory=dict)

    def code_for(self, column: int, text: str) -> int:
        return self.codes.get(column, {}).get(text, UNSEEN_CODE)


@dataclass
class MinMaxScaler:
    """Per-feature training min/max driving (x - min) / (max - min)."""

    mins: np.ndarray
    maxs: np.ndarray

    def __post_init__(self):
        self.mins = np.asarray(self.mins, dtype=np.float64)
        self.maxs = np.asarray(self.maxs, dtype=np.float64)
        if self.mins.shape != self.maxs.shape:
            raise ConfigError("scaler min/max length mismatch")
        if np.any(self.mins > self.maxs):
            raise ConfigError("scaler has min > max for some feature")

    def apply(self, vectors: np.ndarray) -> np.ndarray:
        span = self.maxs - self.mins
        safe = np.where(span == 0, 1.0, span)
        scaled = (vectors - self.mins) / safe
        scaled = np.where(span == 0, 0.0, scaled)
        return np.clip(scaled, 0.0, 1.0)


@dataclass(frozen=True)
class FeatureMap:
    grid: np.ndarray
    pad_count: int


def load_csv(path: str | Path, schema: DatasetSchema) -> list[FeatureRecord]:
    """Read one CSV into raw records, mapping labels via the schema.

    Raises DataError for a missing file, a row of the wrong width (named by
    its 1-based data row index), or label text the mapping cannot place.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"dataset file not found: {path}")
    records: list[FeatureRecord] = []
    label_col = schema.label_column
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        if schema.has_header:
            header = next(reader, None)
            if header is None:
                return []
            got = [h.strip() for h in header]
            if got != list(schema.column_names):
                raise DataError(
                    f"header does not match schema {schema.name!r}: "
                    f"expected {len(schema.column_names)} known columns, got {got[:4]}..."
                )
        for row_index, row in enumerate(reader, start=1):
            if not row:
                continue
            if len(row) != schema.width:
                raise DataError(
                    f"row {row_index}: expected {schema.width} cells, got {len(row)}"
                )
            cells = [cell.strip() for cell in row]
            label = schema.map_label(cells[label_col]) if label_col is not None else None
            records.append(FeatureRecord(raw=cells, label=label))
    return records


def fit_categorical(records: list[FeatureRecord], schema: DatasetSchema) -> CategoricalEncoder:
    """Assign 1..k codes per categorical column, lexicographic over training values."""
    if not records:
        raise DataError("cannot fit categorical encoder on zero records")
    codes: dict[int, dict[str, int]] = {}
    for col in schema.categorical_columns:
        values = sorted({rec.raw[col] for rec in records})
        codes[col] = {text: rank for rank, text in enumerate(values, start=1)}
    return CategoricalEncoder(schema=schema, codes=codes)


def numeralize(records: list[FeatureRecord], encoder: CategoricalEncoder) -> np.ndarray:
    """Raw cells -> unscaled numeric matrix [n, d] (categoricals via codes)."""
    schema = encoder.schema
    cat = set(schema.categorical_columns)
    out = np.empty((len(records), schema.feature_count), dtype=np.float64)
    for r, rec in enumerate(records):
        for j, col in enumerate(schema.feature_columns):
            cell = rec.raw[col]
            if col in cat:
                out[r, j] = encoder.code_for(col, cell)
            else:
                try:
                    out[r, j] = float(cell)
                except ValueError as exc:
                    raise DataError(
                        f"row {r + 1}, column {schema.column_names[col]!r}: "
                        f"non-numeric value {cell!r}"
                    ) from exc
    return out


def fit_scaler(records: list[FeatureRecord], encoder: CategoricalEncoder) -> MinMaxScaler:
    if not records:
        raise DataError("cannot fit scaler on zero records")
    matrix = numeralize(records, encoder)
    return MinMaxScaler(mins=matrix.min(axis=0), maxs=matrix.max(axis=0))


def encode_and_scale(records: list[FeatureRecord], encoder: CategoricalEncoder,
                     scaler: MinMaxScaler) -> list[FeatureRecord]:
    """Fill each record's encoded vector; every entry lands in [0, 1]."""
    matrix = scaler.apply(numeralize(records, encoder))
    for rec, row in zip(records, matrix):
        rec.encoded = row
    return records


def to_feature_map(encoded: np.ndarray) -> FeatureMap:
    """Lay a length-d vector on the nearest-square grid, row-major, zero padded.

    Nx = ceil(sqrt(d)) rows, Ny = ceil(d / Nx) columns.
    """
    encoded = np.asarray(encoded, dtype=np.float64)
    if encoded.ndim != 1 or encoded.size < 1:
        raise ValueError(f"expected a non-empty 1D vector, got shape {encoded.shape}")
    d = encoded.size
    nx = math.isqrt(d)
    if nx * nx < d:
        nx += 1
    ny = -(-d // nx)
    grid = np.zeros(nx * ny, dtype=np.float64)
    grid[:d] = encoded
    return FeatureMap(grid=grid.reshape(nx, ny), pad_count=nx * ny - d)


def feature_map_stack(records: list[FeatureRecord]) -> np.ndarray:
    """Encoded records -> model input [n, 1, Nx, Ny]."""
    if not records:
        raise DataError("no records to stack")
    if any(rec.encoded is None for rec in records):
        raise DataError("records must be encoded before stacking")
    maps = [to_feature_map(rec.encoded).grid for rec in records]
    return np.stack(maps)[:, None, :, :]


def filter_normal(records: list[FeatureRecord]) -> list[FeatureRecord]:
    """Keep normal-labeled records in their original order."""
    for i, rec in enumerate(records):
        if rec.label is None:
            raise DataError(f"record {i + 1} has no label; cannot filter")
    return [rec for rec in records if rec.label == NORMAL]
