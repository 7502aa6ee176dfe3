"""Working-model weights and method-of-moments variance components.

Two working models are supported. The correlated-effects model assigns
every effect size in study j the weight ``1/(k_j (v_bar_j + tau^2))`` and
estimates tau^2 by matching the weighted residual sum of squares Q_E of a
preliminary equal-weight fit to its expectation. The hierarchical model
uses per-effect-size weights ``1/(v_ij + tau^2 + omega^2)`` and matches
two quadratic forms, Q_E and the within-study residual-sum form Q_1.

For the hierarchical model the two expectations are linear in the
components,

    E[Q_E] = C2 + A2 tau^2 + B2 omega^2
    E[Q_1] = C1 + A1 tau^2 + B1 omega^2,

and the six constants are exact traces of known matrices under the
working covariance. With preliminary weights W, bread inverse
Q = (X'WX)^{-1}, per-study weighted column sums s_j = X_j'W_j 1 and raw
column sums c_j = X_j' 1:

    A2 = sum_j [ sum(w_j) - s_j' Q s_j ]
    B2 = sum_j [ sum(w_j) - tr(Q X_j'W_j^2 X_j) ]
    C2 = sum_j [ sum(w_j v_j) - tr(Q X_j'W_j V_j W_j X_j) ]

and with u_j = (I-H)_j' 1 = delta_j - W X Q c_j (an N-vector),

    A1 = sum_{j,l} (delta_jl k_j - s_l' Q c_j)^2
    B1 = sum_j u_j'u_j = sum_j [ k_j - 2 s_j'Q c_j + c_j'Q (X'W^2X) Q c_j ]
    C1 = sum_j u_j'V u_j
       = sum_j [ sum(v_j) - 2 (X_j'(v_j w_j))'Q c_j + c_j'Q (X'WVWX) Q c_j ].

Solving the 2x2 system gives the estimators; both components are
truncated at zero (omega^2 first, tau^2 recomputed afterwards).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .data import Dataset
from .design import StudyBlock
from .errors import (
    DegenerateMoments,
    MissingUserWeights,
    NonPositiveWeight,
    SingularCrossProduct,
)
from .wls import WlsFit

CORR = "CORR"
HIER = "HIER"
USER = "USER"


@dataclass(frozen=True)
class VarianceComponents:
    """Method-of-moments variance components and the sums behind them."""

    tau_sq: float
    omega_sq: float | None = None
    rho: float | None = None
    q_e: float | None = None
    q_1: float | None = None

    def __post_init__(self):
        if self.tau_sq < 0:
            raise ValueError("tau_sq must be nonnegative after truncation")
        if self.omega_sq is not None and self.omega_sq < 0:
            raise ValueError("omega_sq must be nonnegative after truncation")
        if self.rho is not None and not 0.0 <= self.rho <= 1.0:
            raise ValueError(f"rho must be in [0, 1], got {self.rho}")


@dataclass(frozen=True)
class WeightAssignment:
    """Per-study diagonal weight vectors plus the model tag."""

    per_study: tuple[np.ndarray, ...]
    model: str

    def __post_init__(self):
        for w in self.per_study:
            if np.any(w <= 0.0) or not np.all(np.isfinite(w)):
                raise NonPositiveWeight("all diagonal weights must be > 0 and finite")

    def flat(self) -> np.ndarray:
        return np.concatenate(self.per_study) if self.per_study else np.empty(0)


def _check_prelim(prelim_fit: WlsFit) -> None:
    if not np.all(np.isfinite(prelim_fit.bread_inv)):
        raise SingularCrossProduct("preliminary X'WX inverse is not finite")


def _q_e(blocks, wvecs, residuals) -> float:
    return float(sum((w * e) @ e for w, e in zip(wvecs, residuals)))


def corr_prelim_weights(blocks: Sequence[StudyBlock]) -> WeightAssignment:
    """Equal within-study preliminary weights 1/(k_j * v_bar_j)."""
    per = tuple(
        np.full(b.k, 1.0 / (b.k * b.mean_v)) for b in blocks
    )
    return WeightAssignment(per_study=per, model=CORR)


def corr_weights(blocks: Sequence[StudyBlock], tau_sq: float) -> WeightAssignment:
    """Correlated-effects weights 1/(k_j (v_bar_j + tau^2))."""
    if tau_sq < 0:
        raise ValueError("tau_sq must be nonnegative")
    per = tuple(
        np.full(b.k, 1.0 / (b.k * (b.mean_v + tau_sq))) for b in blocks
    )
    return WeightAssignment(per_study=per, model=CORR)


def estimate_tau2_corr(
    blocks: Sequence[StudyBlock], prelim_fit: WlsFit, rho: float
) -> VarianceComponents:
    """Method-of-moments tau^2 for the correlated-effects model.

    Matches Q_E from the preliminary equal-weight fit to its expectation
    under the correlated working covariance with common within-study
    correlation *rho*; truncated at zero.
    """
    if not 0.0 <= rho <= 1.0:
        raise ValueError(f"rho must be in [0, 1], got {rho}")
    _check_prelim(prelim_fit)
    blocks = list(blocks)
    m = len(blocks)
    wa = corr_prelim_weights(blocks)
    q_e = _q_e(blocks, wa.per_study, prelim_fit.residuals)
    V = prelim_fit.bread_inv
    p = V.shape[0]

    ident_term = np.zeros((p, p))
    rho_term = np.zeros((p, p))
    den_term = np.zeros((p, p))
    sum_kw = 0.0
    for block, w in zip(blocks, wa.per_study):
        wj = float(w[0])
        XtX = block.X.T @ block.X
        c = block.X.sum(axis=0)
        XtJX = np.outer(c, c)
        ident_term += (wj / block.k) * XtX
        rho_term += (wj / block.k) * (XtJX - XtX)
        den_term += wj * wj * XtJX
        sum_kw += block.k * wj

    num = q_e - m + np.trace(V @ ident_term) + rho * np.trace(V @ rho_term)
    den = sum_kw - np.trace(V @ den_term)
    if abs(den) < 1e-12 * max(abs(sum_kw), 1.0):
        raise DegenerateMoments("tau^2 moment denominator is numerically zero")
    tau_sq = max(num / den, 0.0)
    return VarianceComponents(tau_sq=tau_sq, rho=rho, q_e=q_e)


def hier_prelim_weights(blocks: Sequence[StudyBlock]) -> WeightAssignment:
    """Plain inverse-sampling-variance preliminary weights 1/v_ij."""
    per = tuple(1.0 / b.v for b in blocks)
    return WeightAssignment(per_study=per, model=HIER)


def hier_weights(
    blocks: Sequence[StudyBlock], tau_sq: float, omega_sq: float
) -> WeightAssignment:
    """Hierarchical-effects weights 1/(v_ij + tau^2 + omega^2)."""
    if tau_sq < 0 or omega_sq < 0:
        raise ValueError("variance components must be nonnegative")
    per = tuple(1.0 / (b.v + tau_sq + omega_sq) for b in blocks)
    return WeightAssignment(per_study=per, model=HIER)


def estimate_hier_components(
    blocks: Sequence[StudyBlock], prelim_fit: WlsFit
) -> VarianceComponents:
    """Method-of-moments (tau^2, omega^2) for the hierarchical model.

    Solves the exact 2x2 moment system described in the module docstring.
    When every study contributes a single effect size the system is
    unidentified in omega^2; omega^2 is pinned at zero and tau^2 falls
    back to the single-component estimator.
    """
    _check_prelim(prelim_fit)
    blocks = list(blocks)
    wa = hier_prelim_weights(blocks)
    wvecs = wa.per_study
    q_e = _q_e(blocks, wvecs, prelim_fit.residuals)
    q_1 = float(sum(np.sum(e) ** 2 for e in prelim_fit.residuals))
    Q = prelim_fit.bread_inv
    p = Q.shape[0]
    m = len(blocks)

    S2_tot = np.zeros((p, p))
    SWV_tot = np.zeros((p, p))
    s_list = []
    c_list = []
    for block, w in zip(blocks, wvecs):
        S2_tot += block.X.T @ ((w * w)[:, None] * block.X)
        SWV_tot += block.X.T @ ((w * w * block.v)[:, None] * block.X)
        s_list.append(block.X.T @ w)
        c_list.append(block.X.sum(axis=0))
    S_mat = np.vstack(s_list)  # m x p, rows s_l
    C_mat = np.vstack(c_list)  # m x p, rows c_j

    a2 = b2 = c2 = 0.0
    b1 = c1 = 0.0
    QS2Q = Q @ S2_tot @ Q
    QSWVQ = Q @ SWV_tot @ Q
    for block, w, s, c in zip(blocks, wvecs, s_list, c_list):
        sums_w = float(np.sum(w))
        a2 += sums_w - s @ Q @ s
        b2 += sums_w - float(np.trace(Q @ (block.X.T @ ((w * w)[:, None] * block.X))))
        c2 += float(np.sum(w * block.v)) - float(
            np.trace(Q @ (block.X.T @ ((w * w * block.v)[:, None] * block.X)))
        )
        b1 += block.k - 2.0 * (s @ Q @ c) + c @ QS2Q @ c
        vw = block.X.T @ (block.v * w)
        c1 += float(np.sum(block.v)) - 2.0 * (vw @ Q @ c) + c @ QSWVQ @ c

    M = S_mat @ Q @ C_mat.T  # M[l, j] = s_l' Q c_j
    D = np.diag([float(b.k) for b in blocks])
    a1 = float(np.sum((D - M) ** 2))

    if all(b.k == 1 for b in blocks):
        if abs(a2) < 1e-12 * max(m, 1.0):
            raise DegenerateMoments("tau^2 moment denominator is numerically zero")
        tau_sq = max((q_e - c2) / a2, 0.0)
        return VarianceComponents(tau_sq=tau_sq, omega_sq=0.0, q_e=q_e, q_1=q_1)

    den = b1 * a2 - b2 * a1
    scale = max(abs(b1 * a2), abs(b2 * a1), 1e-300)
    if abs(den) < 1e-12 * scale:
        raise DegenerateMoments(
            f"moment system denominator {den:.3e} below 1e-12 of scale {scale:.3e}"
        )
    omega_sq = (a2 * (q_1 - c1) - a1 * (q_e - c2)) / den
    omega_sq = max(omega_sq, 0.0)
    tau_sq = (q_e - c2 - b2 * omega_sq) / a2
    tau_sq = max(tau_sq, 0.0)
    return VarianceComponents(tau_sq=tau_sq, omega_sq=omega_sq, q_e=q_e, q_1=q_1)


def user_weights(dataset: Dataset, blocks: Sequence[StudyBlock]) -> WeightAssignment:
    """Diagonal weights taken verbatim from the dataset's weight column."""
    raw = [r.user_weight for r in dataset.rows]
    if any(w is None for w in raw):
        raise MissingUserWeights("user weights are required on every row")
    flat = np.asarray(raw, dtype=float)
    if np.any(flat <= 0.0):
        raise NonPositiveWeight("user weights must be strictly positive")
    per = tuple(flat[b.row_indices] for b in blocks)
    return WeightAssignment(per_study=per, model=USER)
