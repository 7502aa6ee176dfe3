"""Meta-regression with robust variance estimation for dependent effect
sizes: correlated- and hierarchical-effects working models, small-sample
adjusted sandwich covariance with Satterthwaite degrees of freedom,
rho-sensitivity analysis, forest plots and a Monte Carlo harness."""

from .data import (
    Dataset,
    EffectSizeRow,
    SchemaHints,
    group_center,
    group_mean,
    parse_csv,
    to_csv,
)
from .design import StudyBlock, build_design
from .estimator import RobustMetaRegression, dataset_from_dataframe
from .forest import ForestLayout, build_forest_layout, render_forest_svg
from .formula import Formula, parse_formula
from .inference import (
    CoefficientReport,
    FitResult,
    ModelSpec,
    SensitivityTable,
    fit_model,
    i_squared,
    satterthwaite_df,
    sensitivity,
    t_cdf,
    t_quantile,
)
from .report import format_fit_report, format_sensitivity
from .sandwich import (
    RobustCovariance,
    adjustment_corr,
    adjustment_hier,
    adjustment_htj,
    adjustment_userw,
    robust_covariance,
    sym_inv_sqrt,
)
from .simlab import SimConfig, SimReport, generate_dataset, parse_sim_config, run_experiment
from .weights import (
    VarianceComponents,
    WeightAssignment,
    corr_prelim_weights,
    corr_weights,
    estimate_hier_components,
    estimate_tau2_corr,
    hier_prelim_weights,
    hier_weights,
    user_weights,
)
from .wls import WlsFit, hat_block, wls_fit

__version__ = "0.1.0"

__all__ = [
    "CoefficientReport",
    "Dataset",
    "EffectSizeRow",
    "FitResult",
    "ForestLayout",
    "Formula",
    "ModelSpec",
    "RobustCovariance",
    "RobustMetaRegression",
    "SchemaHints",
    "SensitivityTable",
    "SimConfig",
    "SimReport",
    "StudyBlock",
    "VarianceComponents",
    "WeightAssignment",
    "WlsFit",
    "adjustment_corr",
    "adjustment_hier",
    "adjustment_htj",
    "adjustment_userw",
    "build_design",
    "build_forest_layout",
    "corr_prelim_weights",
    "corr_weights",
    "dataset_from_dataframe",
    "estimate_hier_components",
    "estimate_tau2_corr",
    "fit_model",
    "format_fit_report",
    "format_sensitivity",
    "generate_dataset",
    "group_center",
    "group_mean",
    "hat_block",
    "hier_prelim_weights",
    "hier_weights",
    "i_squared",
    "parse_csv",
    "parse_formula",
    "parse_sim_config",
    "render_forest_svg",
    "robust_covariance",
    "run_experiment",
    "satterthwaite_df",
    "sensitivity",
    "sym_inv_sqrt",
    "t_cdf",
    "t_quantile",
    "to_csv",
    "user_weights",
    "wls_fit",
]
