"""Plain-text rendering of fit results and sensitivity tables."""

from __future__ import annotations

from .inference import FitResult, SensitivityTable
from .weights import CORR, HIER, USER

_MODEL_TITLES = {
    CORR: "Correlated",
    HIER: "Hierarchical",
    USER: "User-Weighted",
}

_COLUMNS = ("Estimate", "StdErr", "t-value", "df", "P(|t|>)", "CI.L", "CI.U", "Sig")


def _g6(x: float) -> str:
    return f"{x:.6g}"


def _g7(x: float) -> str:
    return f"{x:.7g}"


def format_fit_report(result: FitResult) -> str:
    """Render the fitted-model report.

    Header lines give the model family, formula and study/outcome counts;
    the coefficient table carries estimate, robust standard error,
    t-value, degrees of freedom, two-sided p, confidence bounds and a
    significance code. Reals print with up to 6 significant digits and
    degrees of freedom with 2 decimals.
    """
    small = "with" if result.small else "without"
    title = _MODEL_TITLES[result.model]
    unit = "clusters" if result.model == HIER else "studies"
    lines = [
        f"RVE: {title} Effects Model {small} Small-Sample Corrections",
        "",
        f"Model: {result.formula}",
        "",
        f"Number of {unit} = {result.m}",
        (
            f"Number of outcomes = {result.n} "
            f"(min = {result.k_min:g} , mean = {round(result.k_mean, 2):g} , "
            f"median = {result.k_median:g} , max = {result.k_max:g} )"
        ),
    ]
    if result.model == CORR:
        lines.append(f"Rho = {result.rho:g}")
        if result.i_sq is not None:
            lines.append(f"I.sq = {_g7(result.i_sq)}")
        lines.append(f"Tau.Sq = {_g7(result.components.tau_sq)}")
    elif result.model == HIER:
        lines.append(f"Omega.sq = {_g7(result.components.omega_sq)}")
        lines.append(f"Tau.Sq = {_g7(result.components.tau_sq)}")
    lines.append("")

    labels = [f"{i + 1} {c.name}" for i, c in enumerate(result.coefficients)]
    cells = [
        (
            _g6(c.estimate),
            _g6(c.std_err),
            _g6(c.t_value),
            f"{c.df:.2f}",
            _g6(c.p_value),
            _g6(c.ci_lower),
            _g6(c.ci_upper),
            c.sig_code,
        )
        for c in result.coefficients
    ]
    label_w = max(len(s) for s in labels)
    widths = [
        max(len(h), *(len(row[i]) for row in cells))
        for i, h in enumerate(_COLUMNS)
    ]
    header = " " * label_w + "  " + "  ".join(
        h.rjust(w) for h, w in zip(_COLUMNS, widths)
    )
    lines.append(header.rstrip())
    for label, row in zip(labels, cells):
        line = label.ljust(label_w) + "  " + "  ".join(
            v.rjust(w) for v, w in zip(row, widths)
        )
        lines.append(line.rstrip())
    lines += [
        "---",
        "Signif. codes: < .01 *** < .05 ** < .10 *",
        "---",
        "Note: If df < 4, do not trust the results",
    ]
    return "\n".join(lines) + "\n"


def format_sensitivity(table: SensitivityTable) -> str:
    """Render the rho-sensitivity table (3-decimal values)."""
    col_heads = [f"rho={r:g}" for r in table.rhos]
    rows = []
    for i, name in enumerate(table.coef_names):
        rows.append(("Estimate", name, [f"{v:.3f}" for v in table.estimates[i]]))
        rows.append(("Std. Err.", name, [f"{v:.3f}" for v in table.std_errs[i]]))
    rows.append(("Tau.Sq", "", [f"{v:.3f}" for v in table.tau_sqs]))

    idx_w = len(str(len(rows)))
    type_w = max(len(r[0]) for r in rows)
    var_w = max(max(len(r[1]) for r in rows), len("Variable"))
    widths = [
        max(len(h), *(len(r[2][i]) for r in rows)) for i, h in enumerate(col_heads)
    ]
    lines = [
        " " * idx_w
        + " "
        + "Type".rjust(type_w)
        + "  "
        + "Variable".rjust(var_w)
        + " "
        + " ".join(h.rjust(w) for h, w in zip(col_heads, widths))
    ]
    for i, (kind, var, vals) in enumerate(rows, start=1):
        lines.append(
            str(i).rjust(idx_w)
            + " "
            + kind.rjust(type_w)
            + "  "
            + var.rjust(var_w)
            + " "
            + " ".join(v.rjust(w) for v, w in zip(vals, widths))
        )
    return "\n".join(line.rstrip() for line in lines) + "\n"
