"""Columnar datasets and the resampling primitives built on them.

A :class:`Dataset` is an ordered, immutable collection of typed columns. The
outcome (if any) is one column with ``role="outcome"``; everything else is a
predictor. Categorical predictors are stored as integer codes (binary in
{0, 1}, multinomial in 1..levels); models do their own one-hot expansion.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .rng import RngStream

CONTINUOUS = "continuous"
BINARY = "binary"
MULTINOMIAL = "multinomial"
KINDS = (CONTINUOUS, BINARY, MULTINOMIAL)
OUTCOME = "outcome"
PREDICTOR = "predictor"


class SchemaError(ValueError):
    """Column metadata and values disagree, or a column is missing."""


@dataclass(frozen=True)
class ColumnMeta:
    name: str
    kind: str = CONTINUOUS
    role: str = PREDICTOR
    levels: int | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SchemaError(f"unknown column kind {self.kind!r} for {self.name}")
        if self.role not in (OUTCOME, PREDICTOR):
            raise SchemaError(f"unknown column role {self.role!r} for {self.name}")
        if self.kind == MULTINOMIAL:
            if self.levels is None or self.levels < 2:
                raise SchemaError(f"multinomial column {self.name} needs levels >= 2")
        elif self.kind == BINARY:
            object.__setattr__(self, "levels", 2)
        elif self.levels is not None:
            raise SchemaError(f"continuous column {self.name} cannot have levels")

    @property
    def categorical(self) -> bool:
        return self.kind != CONTINUOUS

    def codes(self) -> np.ndarray:
        """Legal category codes (binary: 0, 1; multinomial: 1..levels)."""
        if self.kind == BINARY:
            return np.array([0, 1])
        if self.kind == MULTINOMIAL:
            return np.arange(1, self.levels + 1)
        raise SchemaError(f"{self.name} is continuous")

    def with_role(self, role: str) -> "ColumnMeta":
        return ColumnMeta(self.name, self.kind, role, self.levels if self.kind == MULTINOMIAL else None)


def _check_values(meta: ColumnMeta, values: np.ndarray) -> np.ndarray:
    values = np.asarray(values)
    if values.ndim != 1:
        raise SchemaError(f"column {meta.name} must be one-dimensional")
    if meta.kind == CONTINUOUS:
        values = values.astype(np.float64, copy=True)
        if not np.all(np.isfinite(values)):
            raise SchemaError(f"column {meta.name} has non-finite values")
    else:
        if values.dtype.kind == "f":
            if not np.all(np.isfinite(values)) or np.any(values != np.round(values)):
                raise SchemaError(f"column {meta.name} has non-integer codes")
        values = values.astype(np.int64, copy=True)
        if not np.all(np.isin(values, meta.codes())):
            raise SchemaError(f"column {meta.name} has codes outside {meta.codes().tolist()}")
    values.setflags(write=False)
    return values


class Dataset:
    """Immutable ordered table of typed columns."""

    __slots__ = ("_metas", "_values", "_index", "n_rows")

    def __init__(self, columns: Iterable[tuple[ColumnMeta, np.ndarray]]):
        metas, values = [], []
        for meta, vals in columns:
            metas.append(meta)
            values.append(_check_values(meta, vals))
        names = [m.name for m in metas]
        if len(set(names)) != len(names):
            raise SchemaError("duplicate column names")
        if sum(m.role == OUTCOME for m in metas) > 1:
            raise SchemaError("at most one outcome column is allowed")
        lengths = {len(v) for v in values}
        if len(lengths) > 1:
            raise SchemaError(f"columns have different lengths: {sorted(lengths)}")
        self._metas = tuple(metas)
        self._values = tuple(values)
        self._index = {name: i for i, name in enumerate(names)}
        self.n_rows = lengths.pop() if lengths else 0

    @classmethod
    def from_arrays(
        cls,
        arrays: Mapping[str, np.ndarray],
        kinds: Mapping[str, str | tuple[str, int]] | None = None,
        outcome: str | None = None,
    ) -> "Dataset":
        """Build from a name -> values mapping. ``kinds`` entries are a kind
        name, or ``("multinomial", levels)``; unlisted columns are continuous."""
        kinds = kinds or {}
        cols = []
        for name, vals in arrays.items():
            spec = kinds.get(name, CONTINUOUS)
            kind, levels = (spec, None) if isinstance(spec, str) else spec
            role = OUTCOME if name == outcome else PREDICTOR
            cols.append((ColumnMeta(name, kind, role, levels), vals))
        return cls(cols)

    # -- introspection -------------------------------------------------
    @property
    def names(self) -> list[str]:
        return [m.name for m in self._metas]

    @property
    def metas(self) -> tuple[ColumnMeta, ...]:
        return self._metas

    @property
    def predictors(self) -> list[str]:
        return [m.name for m in self._metas if m.role == PREDICTOR]

    @property
    def outcome_name(self) -> str | None:
        for m in self._metas:
            if m.role == OUTCOME:
                return m.name
        return None

    def __contains__(self, name: str) -> bool:
        return name in self._index

    def __len__(self) -> int:
        return self.n_rows

    def __repr__(self) -> str:
        return f"Dataset(n_rows={self.n_rows}, columns={self.names})"

    def meta(self, name: str) -> ColumnMeta:
        try:
            return self._metas[self._index[name]]
        except KeyError:
            raise SchemaError(f"unknown column {name!r}") from None

    def column(self, name: str) -> np.ndarray:
        try:
            return self._values[self._index[name]]
        except KeyError:
            raise SchemaError(f"unknown column {name!r}") from None

    __getitem__ = column

    @property
    def outcome(self) -> np.ndarray:
        name = self.outcome_name
        if name is None:
            raise SchemaError("dataset has no outcome column")
        return self.column(name)

    def matrix(self, names: Sequence[str] | None = None) -> np.ndarray:
        """Float64 (n_rows, len(names)) matrix; defaults to all predictors."""
        names = self.predictors if names is None else list(names)
        out = np.empty((self.n_rows, len(names)), dtype=np.float64)
        for j, name in enumerate(names):
            out[:, j] = self.column(name)
        return out

    # -- derivation (always returns a new Dataset) ----------------------
    def take(self, indices: np.ndarray) -> "Dataset":
        idx = np.asarray(indices, dtype=np.intp)
        return Dataset((m, v[idx]) for m, v in zip(self._metas, self._values))

    def with_column(self, name: str, values: np.ndarray) -> "Dataset":
        """Replace the values of an existing column."""
        pos = self._index.get(name)
        if pos is None:
            raise SchemaError(f"unknown column {name!r}")
        cols = list(zip(self._metas, self._values))
        cols[pos] = (self._metas[pos], values)
        return Dataset(cols)

    def drop(self, *names: str) -> "Dataset":
        for name in names:
            self.meta(name)
        return Dataset((m, v) for m, v in zip(self._metas, self._values) if m.name not in names)

    def retarget(self, name: str) -> "Dataset":
        """Make predictor ``name`` the outcome and drop the current outcome."""
        self.meta(name)
        cols = []
        for m, v in zip(self._metas, self._values):
            if m.role == OUTCOME:
                continue
            cols.append((m.with_role(OUTCOME) if m.name == name else m, v))
        return Dataset(cols)

    def with_outcome(self, name: str, values: np.ndarray) -> "Dataset":
        """Replace the outcome (if any) by a new continuous outcome column."""
        if name in self._index and self.meta(name).role != OUTCOME:
            raise SchemaError(f"column {name!r} already exists")
        cols = [(m, v) for m, v in zip(self._metas, self._values) if m.role != OUTCOME]
        cols.append((ColumnMeta(name, CONTINUOUS, OUTCOME), values))
        return Dataset(cols)

    def equals(self, other: "Dataset") -> bool:
        return (
            self._metas == other._metas
            and all(np.array_equal(a, b) for a, b in zip(self._values, other._values))
        )


@dataclass(frozen=True)
class SplitIndices:
    train: np.ndarray
    validation: np.ndarray


def split_train_validation(data: Dataset, fraction: float, rng: RngStream) -> SplitIndices:
    """Random train/validation partition without replacement.

    ``|train| = round(fraction * n_rows)`` (Python rounding); both index arrays
    are returned sorted.
    """
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"fraction must lie in (0, 1), got {fraction}")
    n = data.n_rows
    if n < 3:
        raise ValueError(f"need at least 3 rows to split, got {n}")
    n_train = int(round(fraction * n))
    if n_train < 1 or n_train >= n:
        raise ValueError(f"fraction {fraction} leaves an empty side for n_rows={n}")
    perm = rng.generator().permutation(n)
    return SplitIndices(np.sort(perm[:n_train]), np.sort(perm[n_train:]))


def sample_indices(n: int, size: int, rng: RngStream) -> np.ndarray:
    """Sorted uniformly random ``size``-subset of ``range(n)``."""
    if size > n:
        raise ValueError(f"cannot draw {size} rows without replacement from {n}")
    if size < 0:
        raise ValueError("size must be non-negative")
    return np.sort(rng.generator().permutation(n)[:size])


def subsample_without_replacement(data: Dataset, size: int, rng: RngStream) -> Dataset:
    return data.take(sample_indices(data.n_rows, size, rng))


def bootstrap_resample(data: Dataset, rng: RngStream) -> Dataset:
    """n_rows draws with replacement."""
    idx = rng.generator().integers(0, data.n_rows, size=data.n_rows)
    return data.take(np.sort(idx))


def permute_column(data: Dataset, col: str, rng: RngStream) -> Dataset:
    meta = data.meta(col)
    if meta.role != PREDICTOR:
        raise SchemaError(f"{col!r} is not a predictor column")
    values = data.column(col)
    return data.with_column(col, values[rng.generator().permutation(data.n_rows)])


# -- CSV + sidecar schema ----------------------------------------------------

def schema_text(data: Dataset) -> str:
    lines = []
    for m in data.metas:
        kind = f"{m.kind}:{m.levels}" if m.kind == MULTINOMIAL else m.kind
        lines.append(f"{m.name} = {kind},{m.role}")
    return "\n".join(lines) + "\n"


def parse_schema(text: str) -> list[ColumnMeta]:
    metas = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise SchemaError(f"schema line {lineno}: expected 'name = kind,role'")
        name, rhs = (s.strip() for s in line.split("=", 1))
        try:
            kind, role = (s.strip() for s in rhs.split(","))
        except ValueError:
            raise SchemaError(f"schema line {lineno}: expected 'kind,role'") from None
        levels = None
        if kind.startswith(MULTINOMIAL + ":"):
            kind, lv = kind.split(":")
            levels = int(lv)
        metas.append(ColumnMeta(name, kind, role, levels))
    return metas


def to_csv_text(data: Dataset) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(data.names)
    cols = []
    for m in data.metas:
        v = data.column(m.name)
        cols.append([str(int(x)) for x in v] if m.categorical else [repr(float(x)) for x in v])
    writer.writerows(zip(*cols))
    return buf.getvalue()


def write_csv(data: Dataset, path: str | Path) -> tuple[Path, Path]:
    """Write ``path`` plus a ``path.schema`` sidecar; returns both paths."""
    path = Path(path)
    schema_path = path.with_name(path.name + ".schema")
    path.write_text(to_csv_text(data))
    schema_path.write_text(schema_text(data))
    return path, schema_path


def read_csv(path: str | Path, schema_path: str | Path | None = None) -> Dataset:
    path = Path(path)
    schema_path = Path(schema_path) if schema_path else path.with_name(path.name + ".schema")
    metas = {m.name: m for m in parse_schema(schema_path.read_text())}
    with path.open(newline="") as fh:
        rows = list(csv.reader(line for line in fh if not line.startswith("#")))
    header, body = rows[0], rows[1:]
    missing = set(header) ^ set(metas)
    if missing:
        raise SchemaError(f"CSV header and schema disagree on {sorted(missing)}")
    cols = []
    for j, name in enumerate(header):
        raw = [r[j] for r in body]
        meta = metas[name]
        vals = np.array(raw, dtype=np.int64 if meta.categorical else np.float64)
        cols.append((meta, vals))
    return Dataset(cols)
