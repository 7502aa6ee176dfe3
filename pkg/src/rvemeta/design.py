"""Design-matrix construction: formula terms expanded against a dataset,
split into per-study blocks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import CATEGORICAL, NUMERIC, Dataset
from .errors import UnknownColumn
from .formula import Formula, Intercept, Interaction, Main


@dataclass(frozen=True)
class StudyBlock:
    """All effect sizes of one study, aligned with the global coefficient
    order. ``row_indices`` maps block rows back to dataset row positions."""

    study_id: str
    X: np.ndarray            # k x p
    T: np.ndarray            # k
    v: np.ndarray            # k, sampling variances
    row_indices: np.ndarray  # k, positions in the source dataset

    @property
    def k(self) -> int:
        return len(self.T)

    @property
    def mean_v(self) -> float:
        return float(np.mean(self.v))


@dataclass(frozen=True)
class DesignInfo:
    """Coefficient layout frozen at build time, reusable on new data."""

    coef_names: tuple[str, ...]
    # categorical column -> ordered non-reference levels (reference omitted)
    levels: dict[str, tuple[str, ...]]
    formula: Formula

    @property
    def p(self) -> int:
        return len(self.coef_names)


def _column_levels(dataset: Dataset, col: str) -> tuple[str, ...]:
    values = sorted({str(v) for v in dataset.column(col)})
    return tuple(values[1:])  # lexicographically first level is the reference


def _expand_column(dataset: Dataset, col: str, levels: dict) -> list[tuple[str, np.ndarray]]:
    """Expand one column into named numeric columns (identity for numeric,
    reference-omitted indicators for categorical)."""
    if col not in dataset.column_schema:
        raise UnknownColumn(f"formula references unknown column {col!r}")
    kind = dataset.column_schema[col]
    raw = dataset.column(col)
    if kind == NUMERIC:
        return [(col, np.asarray(raw, dtype=float))]
    if kind == CATEGORICAL:
        if col not in levels:
            levels[col] = _column_levels(dataset, col)
        cols = []
        labels = [str(v) for v in raw]
        for level in levels[col]:
            ind = np.asarray([1.0 if s == level else 0.0 for s in labels])
            cols.append((f"{col}[{level}]", ind))
        return cols
    raise UnknownColumn(f"column {col!r} has unknown kind {kind!r}")


def _term_columns(dataset: Dataset, term, levels: dict) -> list[tuple[str, np.ndarray]]:
    if isinstance(term, Intercept):
        return [("intercept", np.ones(dataset.n))]
    if isinstance(term, Main):
        return _expand_column(dataset, term.column, levels)
    if isinstance(term, Interaction):
        left = _expand_column(dataset, term.left, levels)
        right = _expand_column(dataset, term.right, levels)
        return [
            (f"{ln}:{rn}", lv * rv) for ln, lv in left for rn, rv in right
        ]
    raise UnknownColumn(f"unsupported term {term!r}")


def build_design(dataset: Dataset, formula: Formula) -> tuple[list[StudyBlock], DesignInfo]:
    """Expand *formula* against *dataset* into per-study design blocks.

    Blocks are ordered by first appearance of the study id; row order
    within a study is preserved from the input. Categorical columns
    expand to indicators omitting the lexicographically first level.
    """
    if formula.response != dataset.hints.effect_col:
        raise UnknownColumn(
            f"formula response {formula.response!r} does not name the "
            f"effect-size column {dataset.hints.effect_col!r}"
        )

    levels: dict[str, tuple[str, ...]] = {}
    names: list[str] = []
    columns: list[np.ndarray] = []
    for term in formula.terms:
        for name, values in _term_columns(dataset, term, levels):
            names.append(name)
            columns.append(values)

    X = np.column_stack(columns) if columns else np.empty((dataset.n, 0))
    T = np.asarray([r.effect_size for r in dataset.rows], dtype=float)
    v = np.asarray([r.var_eff_size for r in dataset.rows], dtype=float)

    by_study: dict[str, list[int]] = {}
    for i, row in enumerate(dataset.rows):
        by_study.setdefault(row.study_id, []).append(i)

    blocks = []
    for study_id, idx in by_study.items():
        sel = np.asarray(idx, dtype=int)
        blocks.append(
            StudyBlock(
                study_id=study_id,
                X=X[sel],
                T=T[sel],
                v=v[sel],
                row_indices=sel,
            )
        )
    info = DesignInfo(coef_names=tuple(names), levels=levels, formula=formula)
    return blocks, info


def design_matrix(dataset: Dataset, info: DesignInfo) -> np.ndarray:
    """Expand new data against a frozen :class:`DesignInfo` (for
    prediction). Unknown categorical levels map to all-zero indicators."""
    names: list[str] = []
    columns: list[np.ndarray] = []
    levels = dict(info.levels)
    for term in info.formula.terms:
        for name, values in _term_columns(dataset, term, levels):
            names.append(name)
            columns.append(values)
    X = np.column_stack(columns)
    if tuple(names) != info.coef_names:
        raise UnknownColumn(
            "new data expands to a different coefficient layout: "
            f"{names} vs {list(info.coef_names)}"
        )
    return X
