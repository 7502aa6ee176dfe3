"""Forest plot layout and deterministic SVG rendering.

Each effect size gets one row under its study header: a square box whose
area is proportional to the final RVE weight (so under correlated-effects
weighting the boxes within a study are equal), and a horizontal segment
for the normal-based 95% interval ``estimate +/- 1.96 sqrt(v_ij)``. The
pooled estimate appears last as a diamond whose width is the fitted
intercept's confidence interval from the model, which uses the t
distribution; the per-effect intervals intentionally do not.

The SVG output is a pure function of the layout: fixed viewport width,
generic sans-serif text, coordinates rounded to 2 decimals, no
timestamps, so output bytes are stable across runs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .errors import MissingLabelColumn
from .inference import FitResult

Z95 = 1.96  # normal-based interval half-width multiplier


@dataclass(frozen=True)
class ForestRow:
    study_id: str
    effect_label: str
    estimate: float
    ci_lower: float
    ci_upper: float
    weight: float
    extras: tuple[str, ...]


@dataclass(frozen=True)
class ForestGroup:
    study_label: str
    rows: tuple[ForestRow, ...]


@dataclass(frozen=True)
class ForestLayout:
    groups: tuple[ForestGroup, ...]
    extra_titles: tuple[str, ...]
    summary_label: str
    summary_estimate: float
    summary_ci_lower: float
    summary_ci_upper: float


def _format_extra(value) -> str:
    if isinstance(value, float):
        return f"{value:.3g}"
    return str(value)


def build_forest_layout(
    dataset: Dataset,
    result: FitResult,
    study_lab: str,
    es_lab: str,
    extra_cols: tuple[tuple[str, str], ...] = (),
) -> ForestLayout:
    """Assemble rows grouped by study in order of first appearance.

    *extra_cols* pairs a display title with a dataset column name. The
    summary diamond uses the fitted intercept (first coefficient if the
    model has no intercept term).
    """
    all_cols = set(dataset.columns)
    for col in (study_lab, es_lab, *(c for _, c in extra_cols)):
        if col not in all_cols:
            raise MissingLabelColumn(f"label column {col!r} not in dataset")

    study_vals = dataset.column(study_lab)
    es_vals = dataset.column(es_lab)
    extra_vals = [dataset.column(c) for _, c in extra_cols]

    order: dict[str, list[int]] = {}
    for i, row in enumerate(dataset.rows):
        order.setdefault(row.study_id, []).append(i)

    groups = []
    for study_id, idx in order.items():
        rows = []
        for i in idx:
            r = dataset.rows[i]
            half = Z95 * float(np.sqrt(r.var_eff_size))
            rows.append(
                ForestRow(
                    study_id=study_id,
                    effect_label=str(es_vals[i]),
                    estimate=r.effect_size,
                    ci_lower=r.effect_size - half,
                    ci_upper=r.effect_size + half,
                    weight=float(result.weights[i]),
                    extras=tuple(_format_extra(col[i]) for col in extra_vals),
                )
            )
        groups.append(
            ForestGroup(study_label=str(study_vals[idx[0]]), rows=tuple(rows))
        )

    pooled = result.coef.get("intercept", result.coefficients[0])
    return ForestLayout(
        groups=tuple(groups),
        extra_titles=tuple(t for t, _ in extra_cols),
        summary_label="Overall",
        summary_estimate=pooled.estimate,
        summary_ci_lower=pooled.ci_lower,
        summary_ci_upper=pooled.ci_upper,
    )


# fixed geometry (pixels)
_WIDTH = 840
_ROW_H = 18
_TOP = 42
_LABEL_X = 12
_EFFECT_X = 26
_PLOT_X0 = 280
_PLOT_X1 = 600
_EXTRA_X0 = 615
_EXTRA_W = 75
_MAX_BOX = 11.0


def render_forest_svg(layout: ForestLayout) -> str:
    """Render the layout as standalone SVG 1.1 text."""
    rows_n = sum(len(g.rows) for g in layout.groups)
    groups_n = len(layout.groups)
    height = _TOP + (rows_n + groups_n) * _ROW_H + 3 * _ROW_H + 20

    lo = min(
        min(r.ci_lower for g in layout.groups for r in g.rows),
        layout.summary_ci_lower,
    )
    hi = max(
        max(r.ci_upper for g in layout.groups for r in g.rows),
        layout.summary_ci_upper,
    )
    span = hi - lo if hi > lo else 1.0
    lo -= 0.05 * span
    hi += 0.05 * span

    def sx(value: float) -> float:
        return _PLOT_X0 + (value - lo) / (hi - lo) * (_PLOT_X1 - _PLOT_X0)

    max_weight = max(r.weight for g in layout.groups for r in g.rows)

    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        (
            f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
            f'width="{_WIDTH}" height="{height}" '
            f'viewBox="0 0 {_WIDTH} {height}" font-family="sans-serif" '
            f'font-size="11">'
        ),
        f'<rect x="0" y="0" width="{_WIDTH}" height="{height}" fill="white"/>',
    ]

    # column headers
    parts.append(
        f'<text x="{_LABEL_X}" y="{_TOP - 14}" font-weight="bold">Study</text>'
    )
    parts.append(
        f'<text x="{_PLOT_X0}" y="{_TOP - 14}" font-weight="bold">'
        "Effect Size [95% CI]</text>"
    )
    for i, title in enumerate(layout.extra_titles):
        x = _EXTRA_X0 + i * _EXTRA_W
        parts.append(f'<text x="{x}" y="{_TOP - 14}" font-weight="bold">{title}</text>')

    # zero reference line
    if lo < 0.0 < hi:
        zx = sx(0.0)
        y1 = _TOP - 6
        y2 = _TOP + (rows_n + groups_n) * _ROW_H + _ROW_H
        parts.append(
            f'<line x1="{zx:.2f}" y1="{y1}" x2="{zx:.2f}" y2="{y2}" '
            'stroke="#999999" stroke-dasharray="3,3"/>'
        )

    y = _TOP
    for group in layout.groups:
        parts.append(
            f'<text class="study-label" x="{_LABEL_X}" y="{y + 12}" '
            f'font-weight="bold">{group.study_label}</text>'
        )
        y += _ROW_H
        for row in group.rows:
            cy = y + _ROW_H / 2.0
            parts.append(
                f'<text x="{_EFFECT_X}" y="{y + 12}">{row.effect_label}</text>'
            )
            parts.append(
                f'<line x1="{sx(row.ci_lower):.2f}" y1="{cy:.2f}" '
                f'x2="{sx(row.ci_upper):.2f}" y2="{cy:.2f}" stroke="black"/>'
            )
            side = _MAX_BOX * float(np.sqrt(row.weight / max_weight))
            bx = sx(row.estimate) - side / 2.0
            parts.append(
                f'<rect class="es-box" x="{bx:.2f}" y="{cy - side / 2.0:.2f}" '
                f'width="{side:.2f}" height="{side:.2f}" fill="black"/>'
            )
            for i, extra in enumerate(row.extras):
                x = _EXTRA_X0 + i * _EXTRA_W
                parts.append(f'<text x="{x}" y="{y + 12}">{extra}</text>')
            y += _ROW_H

    # summary diamond
    y += _ROW_H
    cy = y + _ROW_H / 2.0
    parts.append(
        f'<text x="{_LABEL_X}" y="{y + 12}" font-weight="bold">'
        f"{layout.summary_label}</text>"
    )
    xl, xc, xr = (
        sx(layout.summary_ci_lower),
        sx(layout.summary_estimate),
        sx(layout.summary_ci_upper),
    )
    half_h = 6.0
    parts.append(
        '<polygon class="summary-diamond" points="'
        f'{xl:.2f},{cy:.2f} {xc:.2f},{cy - half_h:.2f} '
        f'{xr:.2f},{cy:.2f} {xc:.2f},{cy + half_h:.2f}" fill="black"/>'
    )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
