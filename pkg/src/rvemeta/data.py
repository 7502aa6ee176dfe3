"""Effect-size dataset ingestion and grouping transforms.

The CSV reader is deliberately strict: no missing-data handling, no type
coercion surprises. Silently dropping rows would change the number of
studies and effect sizes per study, which corrupts every downstream
variance computation, so anything unparseable is an error.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    LengthMismatch,
    MalformedCsv,
    MissingColumn,
    MissingUserWeights,
    NonPositiveVariance,
)

NUMERIC = "numeric"
CATEGORICAL = "categorical"


@dataclass(frozen=True)
class SchemaHints:
    """Column roles (and optional kind overrides) for CSV ingestion.

    Parameters
    ----------
    study_col : str
        Column holding the study (cluster) identifier.
    effect_col : str
        Column holding the effect-size estimates.
    var_col : str
        Column holding the sampling variances of the effect sizes.
    weight_col : str, optional
        Column holding user-specified weights.
    numeric, categorical : tuple of str
        Covariate columns whose kind should not be inferred. A declared
        numeric column with an unparseable cell is an error.
    """

    study_col: str
    effect_col: str
    var_col: str
    weight_col: str | None = None
    numeric: tuple[str, ...] = ()
    categorical: tuple[str, ...] = ()


@dataclass(frozen=True)
class EffectSizeRow:
    """One observed effect size with its covariate values."""

    study_id: str
    effect_size: float
    var_eff_size: float
    covariates: Mapping[str, float | str] = field(default_factory=dict)
    user_weight: float | None = None


@dataclass(frozen=True)
class Dataset:
    """Ordered effect-size rows plus the column bookkeeping needed to
    rebuild the original CSV layout."""

    rows: tuple[EffectSizeRow, ...]
    column_schema: Mapping[str, str]  # column name -> NUMERIC | CATEGORICAL
    columns: tuple[str, ...]          # original header order
    hints: SchemaHints

    @property
    def n(self) -> int:
        return len(self.rows)

    def study_ids(self) -> list[str]:
        """Distinct study ids in order of first appearance."""
        seen: dict[str, None] = {}
        for row in self.rows:
            seen.setdefault(row.study_id)
        return list(seen)

    def column(self, name: str) -> list:
        """Raw values of one column across rows (core or covariate)."""
        h = self.hints
        if name == h.study_col:
            return [r.study_id for r in self.rows]
        if name == h.effect_col:
            return [r.effect_size for r in self.rows]
        if name == h.var_col:
            return [r.var_eff_size for r in self.rows]
        if h.weight_col is not None and name == h.weight_col:
            return [r.user_weight for r in self.rows]
        if name not in self.column_schema:
            raise MissingColumn(f"column {name!r} not in dataset")
        return [r.covariates[name] for r in self.rows]

    def with_covariate(self, name: str, values: Sequence[float]) -> "Dataset":
        """Return a copy with a numeric covariate column added or replaced."""
        if len(values) != self.n:
            raise LengthMismatch(
                f"column {name!r} has {len(values)} values for {self.n} rows"
            )
        rows = tuple(
            replace(r, covariates={**r.covariates, name: float(v)})
            for r, v in zip(self.rows, values)
        )
        schema = dict(self.column_schema)
        schema[name] = NUMERIC
        cols = self.columns if name in self.columns else self.columns + (name,)
        return Dataset(rows=rows, column_schema=schema, columns=cols, hints=self.hints)


def _parse_float(cell: str, column: str, line: int) -> float:
    try:
        return float(cell)
    except ValueError:
        raise MalformedCsv(
            f"line {line}: cannot parse {cell!r} in numeric column {column!r}"
        ) from None


def parse_csv(source: io.TextIOBase | str | bytes, hints: SchemaHints) -> Dataset:
    """Parse comma-separated effect-size data into a :class:`Dataset`.

    The first row must be a header. Cells must be non-empty; numeric
    columns use ``.`` as the decimal point. Covariate kinds are inferred
    (numeric if every cell parses as a float) unless forced via *hints*.

    Raises
    ------
    MalformedCsv, MissingColumn, NonPositiveVariance, MissingUserWeights
    """
    if isinstance(source, bytes):
        source = source.decode("utf-8")
    if isinstance(source, str):
        source = io.StringIO(source)

    reader = csv.reader(source)
    try:
        header = next(reader)
    except StopIteration:
        raise MalformedCsv("empty input: no header row") from None
    header = [h.strip() for h in header]
    if len(set(header)) != len(header):
        raise MalformedCsv("duplicate column names in header")

    for role, name in (
        ("study", hints.study_col),
        ("effect size", hints.effect_col),
        ("variance", hints.var_col),
    ):
        if name not in header:
            raise MissingColumn(f"{role} column {name!r} absent from header")
    if hints.weight_col is not None and hints.weight_col not in header:
        raise MissingColumn(f"user weight column {hints.weight_col!r} absent from header")

    raw_rows: list[list[str]] = []
    for lineno, row in enumerate(reader, start=2):
        if len(row) != len(header):
            raise MalformedCsv(
                f"line {lineno}: expected {len(header)} fields, got {len(row)}"
            )
        cells = [c.strip() for c in row]
        if any(c == "" for c in cells):
            bad = header[cells.index("")]
            raise MalformedCsv(f"line {lineno}: empty cell in column {bad!r}")
        raw_rows.append(cells)

    core = {hints.study_col, hints.effect_col, hints.var_col}
    if hints.weight_col is not None:
        core.add(hints.weight_col)
    covariate_cols = [c for c in header if c not in core]

    # kind inference for covariates, with hint overrides
    schema: dict[str, str] = {}
    for col in covariate_cols:
        idx = header.index(col)
        if col in hints.categorical:
            schema[col] = CATEGORICAL
            continue
        declared = col in hints.numeric
        kind = NUMERIC
        for lineno, cells in enumerate(raw_rows, start=2):
            try:
                float(cells[idx])
            except ValueError:
                if declared:
                    raise MalformedCsv(
                        f"line {lineno}: cannot parse {cells[idx]!r} "
                        f"in numeric column {col!r}"
                    ) from None
                kind = CATEGORICAL
                break
        schema[col] = kind

    schema[hints.effect_col] = NUMERIC
    schema[hints.var_col] = NUMERIC
    schema[hints.study_col] = CATEGORICAL
    if hints.weight_col is not None:
        schema[hints.weight_col] = NUMERIC

    rows = []
    for lineno, cells in enumerate(raw_rows, start=2):
        rec = dict(zip(header, cells))
        var = _parse_float(rec[hints.var_col], hints.var_col, lineno)
        if var <= 0.0:
            raise NonPositiveVariance(
                f"line {lineno}: var_eff_size must be > 0, got {var}"
            )
        weight = None
        if hints.weight_col is not None:
            weight = _parse_float(rec[hints.weight_col], hints.weight_col, lineno)
        covs: dict[str, float | str] = {}
        for col in covariate_cols:
            if schema[col] == NUMERIC:
                covs[col] = _parse_float(rec[col], col, lineno)
            else:
                covs[col] = rec[col]
        rows.append(
            EffectSizeRow(
                study_id=rec[hints.study_col],
                effect_size=_parse_float(rec[hints.effect_col], hints.effect_col, lineno),
                var_eff_size=var,
                covariates=covs,
                user_weight=weight,
            )
        )

    return Dataset(rows=tuple(rows), column_schema=schema, columns=tuple(header), hints=hints)


def _format_cell(value) -> str:
    if isinstance(value, float):
        return repr(value)  # round-trips exactly
    return str(value)


def to_csv(dataset: Dataset) -> str:
    """Serialize back to CSV text. Re-parsing yields identical rows."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(dataset.columns)
    for row in dataset.rows:
        writer.writerow([_format_cell(v) for v in (
            [row.study_id if c == dataset.hints.study_col
             else row.effect_size if c == dataset.hints.effect_col
             else row.var_eff_size if c == dataset.hints.var_col
             else row.user_weight if c == dataset.hints.weight_col
             else row.covariates[c]
             for c in dataset.columns]
        )])
    return out.getvalue()


def require_user_weights(dataset: Dataset) -> None:
    """Check the user-weight invariant: present on all rows or none."""
    present = [r.user_weight is not None for r in dataset.rows]
    if any(present) and not all(present):
        raise MissingUserWeights("user weights present on some rows but not all")


def group_mean(values: Sequence[float], groups: Sequence) -> np.ndarray:
    """Replace each entry by the arithmetic mean of its group.

    >>> group_mean([1.0, 3.0, 10.0], ["a", "a", "b"])
    array([ 2.,  2., 10.])
    """
    values = np.asarray(values, dtype=float)
    if len(values) != len(groups):
        raise LengthMismatch(
            f"{len(values)} values but {len(groups)} group labels"
        )
    out = np.empty_like(values)
    sums: dict = {}
    counts: dict = {}
    for v, g in zip(values, groups):
        sums[g] = sums.get(g, 0.0) + v
        counts[g] = counts.get(g, 0) + 1
    for i, g in enumerate(groups):
        out[i] = sums[g] / counts[g]
    return out


def group_center(values: Sequence[float], groups: Sequence) -> np.ndarray:
    """Subtract the group mean from each entry (within-group centering)."""
    values = np.asarray(values, dtype=float)
    return values - group_mean(values, groups)
