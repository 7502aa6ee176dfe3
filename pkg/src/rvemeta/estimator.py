"""scikit-learn style front end for the meta-regression pipeline.

``RobustMetaRegression`` wraps the formula/CSV machinery behind the
familiar ``fit`` / ``predict`` / ``get_params`` surface so the model
composes with pandas and the wider ecosystem. Input can be a pandas
DataFrame or an already-parsed :class:`~rvemeta.data.Dataset`.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .data import CATEGORICAL, NUMERIC, Dataset, EffectSizeRow, SchemaHints
from .design import build_design, design_matrix
from .errors import MissingColumn, NonPositiveVariance
from .formula import parse_formula
from .inference import ModelSpec, fit_model, sensitivity
from .report import format_fit_report, format_sensitivity


def dataset_from_dataframe(df, hints: SchemaHints) -> Dataset:
    """Convert a pandas DataFrame into a :class:`Dataset`.

    Numeric dtypes map to numeric columns; everything else is treated as
    categorical. NaN anywhere is an error, mirroring the CSV reader's
    no-missing-data policy.
    """
    import pandas as pd

    for role, name in (
        ("study", hints.study_col),
        ("effect size", hints.effect_col),
        ("variance", hints.var_col),
    ):
        if name not in df.columns:
            raise MissingColumn(f"{role} column {name!r} absent from data frame")
    if hints.weight_col is not None and hints.weight_col not in df.columns:
        raise MissingColumn(f"user weight column {hints.weight_col!r} absent")

    core = {hints.study_col, hints.effect_col, hints.var_col, hints.weight_col}
    schema: dict[str, str] = {
        hints.effect_col: NUMERIC,
        hints.var_col: NUMERIC,
        hints.study_col: CATEGORICAL,
    }
    covariates = [c for c in df.columns if c not in core]
    for col in covariates:
        numeric = pd.api.types.is_numeric_dtype(df[col])
        if col in hints.categorical:
            numeric = False
        schema[col] = NUMERIC if numeric else CATEGORICAL
    if hints.weight_col is not None:
        schema[hints.weight_col] = NUMERIC

    rows = []
    for i, (_, rec) in enumerate(df.iterrows()):
        var = float(rec[hints.var_col])
        if not np.isfinite(var) or var <= 0.0:
            raise NonPositiveVariance(f"row {i}: var_eff_size must be > 0, got {var}")
        effect = float(rec[hints.effect_col])
        if not np.isfinite(effect):
            raise ValueError(f"row {i}: effect size is not finite")
        covs = {}
        for col in covariates:
            value = rec[col]
            if schema[col] == NUMERIC:
                value = float(value)
                if not np.isfinite(value):
                    raise ValueError(f"row {i}: missing value in column {col!r}")
            else:
                value = str(value)
            covs[col] = value
        weight = None
        if hints.weight_col is not None:
            weight = float(rec[hints.weight_col])
        rows.append(
            EffectSizeRow(
                study_id=str(rec[hints.study_col]),
                effect_size=effect,
                var_eff_size=var,
                covariates=covs,
                user_weight=weight,
            )
        )
    return Dataset(
        rows=tuple(rows),
        column_schema=schema,
        columns=tuple(str(c) for c in df.columns),
        hints=hints,
    )


class RobustMetaRegression(BaseEstimator):
    """Meta-regression with cluster-robust (sandwich) standard errors.

    Parameters
    ----------
    formula : str
        Model formula, e.g. ``"effect.size ~ 1"`` or ``"es ~ a + b"``.
        The response names the effect-size column.
    study_col : str
        Column identifying the study (cluster) of each effect size.
    var_col : str
        Column of sampling variances for the effect sizes.
    model : {"corr", "hier", "user"}
        Weighting model: correlated effects, hierarchical effects, or
        user-supplied weights.
    rho : float
        Assumed within-study correlation (correlated model only).
    small : bool
        Apply small-sample adjustments and Satterthwaite degrees of
        freedom (recommended; the large-sample estimator uses df = m - p).
    alpha : float
        Confidence level is ``1 - alpha``.
    userweights_col : str, optional
        Weight column, required when ``model="user"``.

    Attributes
    ----------
    result_ : FitResult
        Full fit summary (components, per-row weights, residuals).
    coef_ : ndarray of shape (p,)
        Coefficient estimates.
    std_err_, df_, p_values_ : ndarray of shape (p,)
        Robust standard errors, per-coefficient degrees of freedom and
        two-sided p-values.

    Examples
    --------
    >>> model = RobustMetaRegression("es ~ 1", study_col="study", var_col="v")
    >>> model.fit(df).coef_  # doctest: +SKIP
    """

    def __init__(
        self,
        formula: str,
        study_col: str = "study",
        var_col: str = "var",
        model: str = "corr",
        rho: float = 0.8,
        small: bool = True,
        alpha: float = 0.05,
        userweights_col: str | None = None,
    ):
        self.formula = formula
        self.study_col = study_col
        self.var_col = var_col
        self.model = model
        self.rho = rho
        self.small = small
        self.alpha = alpha
        self.userweights_col = userweights_col

    def _spec(self) -> ModelSpec:
        return ModelSpec(
            formula=parse_formula(self.formula),
            model=self.model.upper(),
            rho=self.rho,
            small=self.small,
            alpha=self.alpha,
        )

    def _coerce(self, data) -> Dataset:
        if isinstance(data, Dataset):
            return data
        spec_formula = parse_formula(self.formula)
        hints = SchemaHints(
            study_col=self.study_col,
            effect_col=spec_formula.response,
            var_col=self.var_col,
            weight_col=self.userweights_col,
        )
        return dataset_from_dataframe(data, hints)

    def fit(self, data, y=None):
        """Fit the meta-regression. *y* is ignored (formula interface)."""
        dataset = self._coerce(data)
        spec = self._spec()
        self.result_ = fit_model(dataset, spec)
        _, self.design_info_ = build_design(dataset, spec.formula)
        self.coef_names_ = list(self.result_.coef_names)
        self.coef_ = self.result_.b.copy()
        self.cov_ = self.result_.v_star.copy()
        self.std_err_ = np.array([c.std_err for c in self.result_.coefficients])
        self.df_ = np.array([c.df for c in self.result_.coefficients])
        self.p_values_ = np.array([c.p_value for c in self.result_.coefficients])
        self.ci_ = np.array(
            [(c.ci_lower, c.ci_upper) for c in self.result_.coefficients]
        )
        self.tau_sq_ = (
            self.result_.components.tau_sq if self.result_.components else None
        )
        self.omega_sq_ = (
            self.result_.components.omega_sq if self.result_.components else None
        )
        self.i_sq_ = self.result_.i_sq
        return self

    def predict(self, data) -> np.ndarray:
        """Predicted mean effect size for each row of *data*."""
        check_is_fitted(self, "result_")
        dataset = self._coerce(data)
        X = design_matrix(dataset, self.design_info_)
        return X @ self.coef_

    def sensitivity(self, data):
        """Sensitivity of the fit to rho (correlated model only)."""
        return sensitivity(self._coerce(data), self._spec())

    def summary(self) -> str:
        """Formatted report, same layout as the command-line output."""
        check_is_fitted(self, "result_")
        return format_fit_report(self.result_)

    def sensitivity_summary(self, data) -> str:
        return format_sensitivity(self.sensitivity(data))
