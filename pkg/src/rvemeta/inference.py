"""Per-coefficient inference and the full model pipeline.

The small-sample path estimates per-coefficient degrees of freedom by
Satterthwaite moment matching. For coefficient k the relevant eigenvalues
are those of ``W^{-1/2} (sum_j g_jk g_jk') W^{-1/2}`` with

    g_jk = (I-H)_j' A_j W_j X_j Q l_k .

Since the sum has rank at most m, the nonzero eigenvalues equal those of
the m x m Gram matrix G with entries ``g_jk' W^{-1} g_lk``, which reduce
in closed form (writing t_j = A_j W_j X_j Q l_k and r_j = X_j' t_j) to

    G[j, l] = delta_jl t_j' W_j^{-1} t_j - r_j' Q r_l ,

and the df only needs tr(G) and the Frobenius norm, so nothing larger
than p x p is ever materialized.
"""

from __future__ import annotations

import contextlib
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
import scipy.stats

from .data import Dataset
from .design import DesignInfo, StudyBlock, build_design
from .errors import InvalidDf, RveError, TooFewStudies, WrongModel
from .formula import Formula
from .sandwich import (
    RobustCovariance,
    adjustment_corr,
    adjustment_hier,
    adjustment_htj,
    adjustment_userw,
    robust_covariance,
)
from .weights import (
    CORR,
    HIER,
    USER,
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
from .wls import WlsFit, hat_block, weight_vectors, wls_fit

SENSITIVITY_GRID = (0.0, 0.2, 0.4, 0.6, 0.8, 1.0)
DF_WARN_THRESHOLD = 4.0


@dataclass(frozen=True)
class ModelSpec:
    """Everything needed to fit a model: formula, weighting model,
    within-study correlation, small-sample flag and CI level."""

    formula: Formula
    model: str = CORR
    rho: float = 0.8
    small: bool = True
    alpha: float = 0.05

    def __post_init__(self):
        if self.model not in (CORR, HIER, USER):
            raise ValueError(f"unknown weighting model {self.model!r}")
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError(f"rho must be in [0, 1], got {self.rho}")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must be in (0, 1), got {self.alpha}")


@dataclass(frozen=True)
class CoefficientReport:
    name: str
    estimate: float
    std_err: float
    t_value: float
    df: float
    p_value: float
    ci_lower: float
    ci_upper: float
    sig_code: str
    df_warning: bool


@dataclass(frozen=True)
class FitResult:
    """Fitted model summary: coefficient table, variance components and
    per-row weights/residuals in original dataset row order."""

    coefficients: tuple[CoefficientReport, ...]
    components: VarianceComponents | None
    i_sq: float | None
    model: str
    small: bool
    rho: float | None
    alpha: float
    m: int
    n: int
    k_min: int
    k_mean: float
    k_median: float
    k_max: int
    b: np.ndarray
    v_star: np.ndarray
    weights: np.ndarray
    residuals: np.ndarray
    coef_names: tuple[str, ...]
    formula: Formula

    @property
    def coef(self) -> dict[str, CoefficientReport]:
        return {c.name: c for c in self.coefficients}


@dataclass(frozen=True)
class SensitivityTable:
    """Estimates, standard errors and tau^2 across the rho grid."""

    rhos: tuple[float, ...]
    coef_names: tuple[str, ...]
    estimates: np.ndarray  # p x len(rhos)
    std_errs: np.ndarray   # p x len(rhos)
    tau_sqs: np.ndarray    # len(rhos)


def t_cdf(x: float, df: float) -> float:
    """Student-t CDF with fractional degrees of freedom."""
    if not df > 0:
        raise InvalidDf(f"df must be > 0, got {df}")
    return float(scipy.stats.t.cdf(x, df))


def t_quantile(p: float, df: float) -> float:
    """Inverse of :func:`t_cdf` in its first argument."""
    if not df > 0:
        raise InvalidDf(f"df must be > 0, got {df}")
    if not 0.0 < p < 1.0:
        raise ValueError(f"p must be in (0, 1), got {p}")
    return float(scipy.stats.t.ppf(p, df))


def i_squared(q_e: float, df: float) -> float:
    """Heterogeneity percentage 100 (Q_E - df) / Q_E, floored at zero."""
    if not q_e > 0:
        raise ValueError(f"Q_E must be positive, got {q_e}")
    return max(0.0, (q_e - df) / q_e * 100.0)


def satterthwaite_df(
    fit: WlsFit, weights, adjustments: Sequence[np.ndarray], k: int
) -> float:
    """Satterthwaite degrees of freedom for coefficient *k* via the
    m x m Gram reduction (see module docstring)."""
    wvecs = weight_vectors(fit.blocks, weights)
    Q = fit.bread_inv
    qk = Q[:, k]
    d = np.empty(len(fit.blocks))
    rows = np.empty((len(fit.blocks), fit.p))
    for j, (block, w, A) in enumerate(zip(fit.blocks, wvecs, adjustments)):
        t_j = A @ (w * (block.X @ qk))
        d[j] = np.sum(t_j * t_j / w)
        rows[j] = block.X.T @ t_j
    # G = diag(d) - R Q R'; contract without forming the m x m matrix
    b_diag = np.einsum("ip,pq,iq->i", rows, Q, rows)
    QC = Q @ (rows.T @ rows)
    fro_b = float(np.trace(QC @ QC))
    tr_g = float(np.sum(d) - np.sum(b_diag))
    fro_g = fro_b - 2.0 * float(np.sum(d * b_diag)) + float(np.sum(d * d))
    if fro_g <= 0.0:
        raise InvalidDf("degenerate Satterthwaite variance (zero Frobenius norm)")
    return tr_g * tr_g / fro_g


def _sig_code(p: float) -> str:
    if p < 0.01:
        return "***"
    if p < 0.05:
        return "**"
    if p < 0.10:
        return "*"
    return ""


@contextlib.contextmanager
def _stage(name: str):
    try:
        yield
    except RveError as err:
        if err.stage is None:
            err.stage = name
        raise


def _adjustments(
    final: WlsFit, W: WeightAssignment, spec: ModelSpec, m: int
) -> tuple[list[np.ndarray], str]:
    p = final.p
    if not spec.small:
        return [adjustment_htj(m, p, b.k) for b in final.blocks], "HTJ"
    if spec.model == CORR:
        return [adjustment_corr(H) for H in final.hat_blocks], "CORR"
    if spec.model == HIER:
        wvecs = weight_vectors(final.blocks, W)
        return [
            adjustment_hier(w, H) for w, H in zip(wvecs, final.hat_blocks)
        ], "HIER"
    mean_v_all = np.concatenate(
        [np.full(b.k, b.mean_v) for b in final.blocks]
    )
    adjustments = []
    for j, block in enumerate(final.blocks):
        _, imh_j = hat_block(final, W, j)
        adjustments.append(adjustment_userw(imh_j, mean_v_all, block.mean_v))
    return adjustments, "USERW"


def fit_model(
    dataset: Dataset,
    spec: ModelSpec,
    *,
    components: VarianceComponents | None = None,
) -> FitResult:
    """Run the full pipeline: design, preliminary fit, variance
    components, final weighted fit, adjusted covariance and inference.

    *components* overrides the method-of-moments step with known values
    (used by the simulation harness to fit under oracle weights).
    """
    with _stage("design"):
        blocks, info = build_design(dataset, spec.formula)
        m = len(blocks)
        if m < 2:
            raise TooFewStudies(
                f"m={m}: between-study variance components need at least 2 studies"
            )

    comp = components
    with _stage("preliminary fit"):
        if spec.model == CORR and comp is None:
            prelim = wls_fit(blocks, corr_prelim_weights(blocks), info.coef_names)
        elif spec.model == HIER and comp is None:
            prelim = wls_fit(blocks, hier_prelim_weights(blocks), info.coef_names)
        else:
            prelim = None

    with _stage("variance components"):
        if spec.model == CORR:
            if comp is None:
                comp = estimate_tau2_corr(blocks, prelim, spec.rho)
            W = corr_weights(blocks, comp.tau_sq)
        elif spec.model == HIER:
            if comp is None:
                comp = estimate_hier_components(blocks, prelim)
            W = hier_weights(blocks, comp.tau_sq, comp.omega_sq or 0.0)
        else:
            W = user_weights(dataset, blocks)

    with _stage("final fit"):
        final = wls_fit(blocks, W, info.coef_names)
        p = final.p

    with _stage("adjustment"):
        adjustments, kind = _adjustments(final, W, spec, m)

    with _stage("robust covariance"):
        cov: RobustCovariance = robust_covariance(final, W, adjustments, kind)

    with _stage("degrees of freedom"):
        if spec.small:
            dfs = np.array(
                [satterthwaite_df(final, W, adjustments, k) for k in range(p)]
            )
        else:
            if m <= p:
                raise TooFewStudies(
                    f"m={m} studies cannot support p={p} coefficients with df=m-p"
                )
            dfs = np.full(p, float(m - p))

    with _stage("inference"):
        reports = []
        for k, name in enumerate(info.coef_names):
            est = float(final.b[k])
            se = float(np.sqrt(cov.v_star[k, k]))
            t_val = est / se
            df_k = float(dfs[k])
            p_val = 2.0 * (1.0 - t_cdf(abs(t_val), df_k))
            t_crit = t_quantile(1.0 - spec.alpha / 2.0, df_k)
            reports.append(
                CoefficientReport(
                    name=name,
                    estimate=est,
                    std_err=se,
                    t_value=t_val,
                    df=df_k,
                    p_value=p_val,
                    ci_lower=est - t_crit * se,
                    ci_upper=est + t_crit * se,
                    sig_code=_sig_code(p_val),
                    df_warning=df_k < DF_WARN_THRESHOLD,
                )
            )

        i_sq = None
        if comp is not None and comp.q_e is not None:
            i_sq = i_squared(comp.q_e, m - p) if comp.q_e > 0 else 0.0

        k_sizes = np.array([b.k for b in blocks])
        n = int(k_sizes.sum())
        flat_w = np.empty(n)
        flat_e = np.empty(n)
        for block, w, e in zip(blocks, weight_vectors(blocks, W), final.residuals):
            flat_w[block.row_indices] = w
            flat_e[block.row_indices] = e

    return FitResult(
        coefficients=tuple(reports),
        components=comp,
        i_sq=i_sq,
        model=spec.model,
        small=spec.small,
        rho=spec.rho if spec.model == CORR else None,
        alpha=spec.alpha,
        m=m,
        n=n,
        k_min=int(k_sizes.min()),
        k_mean=float(k_sizes.mean()),
        k_median=float(np.median(k_sizes)),
        k_max=int(k_sizes.max()),
        b=final.b.copy(),
        v_star=cov.v_star,
        weights=flat_w,
        residuals=flat_e,
        coef_names=info.coef_names,
        formula=spec.formula,
    )


def sensitivity(dataset: Dataset, spec: ModelSpec) -> SensitivityTable:
    """Refit across rho in {0, 0.2, ..., 1} and tabulate the estimates,
    standard errors and tau^2. Correlated-effects models only."""
    if spec.model != CORR:
        raise WrongModel(
            f"sensitivity analysis applies to the correlated-effects model, "
            f"not {spec.model}"
        )
    fits = [fit_model(dataset, replace(spec, rho=r)) for r in SENSITIVITY_GRID]
    p = len(fits[0].coef_names)
    estimates = np.empty((p, len(SENSITIVITY_GRID)))
    std_errs = np.empty((p, len(SENSITIVITY_GRID)))
    tau_sqs = np.empty(len(SENSITIVITY_GRID))
    for col, fit in enumerate(fits):
        for row, rep in enumerate(fit.coefficients):
            estimates[row, col] = rep.estimate
            std_errs[row, col] = rep.std_err
        tau_sqs[col] = fit.components.tau_sq
    return SensitivityTable(
        rhos=SENSITIVITY_GRID,
        coef_names=fits[0].coef_names,
        estimates=estimates,
        std_errs=std_errs,
        tau_sqs=tau_sqs,
    )
