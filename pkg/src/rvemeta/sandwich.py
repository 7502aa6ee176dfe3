"""Robust (sandwich) covariance and small-sample adjustment matrices.

The covariance of the WLS coefficients is estimated as

    V* = Q ( sum_j X_j' W_j A_j e_j e_j' A_j W_j X_j ) Q

with Q the bread inverse. A_j = I gives the large-sample estimator; the
adjusted variants de-bias the residual cross products in small samples:

* ``adjustment_htj``   - sqrt(m/(m-p)) I, the original global inflation
* ``adjustment_corr``  - (I - H_jj)^{-1/2} for correlated-effects weights
* ``adjustment_hier``  - W^{-1/2} [W^{-1/2} (I - H_jj) W^{-3/2}]^{-1/2} W^{-1/2}
* ``adjustment_userw`` - v_bar_j^{1/2} [(I-H)_j V (I-H)_j']^{-1/2} for
  arbitrary user weights, with V diagonal holding each study's average
  sampling variance.

Matrix powers use the symmetric eigendecomposition with a scale-free
eigenvalue floor and pseudo-inverse semantics.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DegenerateAdjustment, NotSymmetric, TooFewStudies
from .wls import WlsFit, weight_vectors

# eigenvalues below this fraction of the largest magnitude are treated as
# zero (pseudo-inverse convention)
EIG_FLOOR = 1e-10


@dataclass(frozen=True)
class RobustCovariance:
    """Adjusted sandwich covariance plus the per-study adjustments."""

    v_star: np.ndarray
    adjustment_kind: str  # NONE | HTJ | CORR | HIER | USERW
    adjustments: tuple[np.ndarray, ...]


def sym_inv_sqrt(M: np.ndarray, power: float = -0.5) -> np.ndarray:
    """Symmetric matrix power via eigendecomposition, P Lambda^power P'.

    *power* must be +1/2 or -1/2. Eigenvalues below
    ``EIG_FLOOR * max|lambda|`` map to zero (pseudo-inverse semantics).

    Raises
    ------
    NotSymmetric
        If the asymmetry of *M* exceeds 1e-8 relative to its largest
        entry before defensive symmetrization.
    """
    if power not in (-0.5, 0.5):
        raise ValueError(f"power must be +/-1/2, got {power}")
    M = np.asarray(M, dtype=float)
    scale = np.max(np.abs(M)) if M.size else 0.0
    if scale > 0 and np.max(np.abs(M - M.T)) > 1e-8 * scale:
        raise NotSymmetric("matrix asymmetry exceeds 1e-8 relative tolerance")
    Ms = (M + M.T) / 2.0
    lam, P = np.linalg.eigh(Ms)
    floor = EIG_FLOOR * np.max(np.abs(lam)) if lam.size else 0.0
    powered = np.where(lam > floor, np.abs(lam) ** power, 0.0)
    out = (P * powered[None, :]) @ P.T
    return (out + out.T) / 2.0


def adjustment_htj(m: int, p: int, k_j: int) -> np.ndarray:
    """Scaled-identity adjustment sqrt(m/(m-p)) I_{k_j}."""
    if m <= p:
        raise TooFewStudies(f"m={m} studies cannot support p={p} coefficients")
    return np.sqrt(m / (m - p)) * np.eye(k_j)


def adjustment_corr(H_jj: np.ndarray) -> np.ndarray:
    """(I - H_jj)^{-1/2} for the correlated-effects weighting model."""
    k = H_jj.shape[0]
    return sym_inv_sqrt(np.eye(k) - H_jj, -0.5)


def adjustment_hier(w_j: np.ndarray, H_jj: np.ndarray) -> np.ndarray:
    """W^{-1/2} [W^{-1/2} (I - H_jj) W^{-3/2}]^{-1/2} W^{-1/2} for the
    hierarchical weighting model (diagonal W_j)."""
    w_j = np.asarray(w_j, dtype=float)
    k = H_jj.shape[0]
    d_half = w_j ** -0.5
    d_3half = w_j ** -1.5
    inner = d_half[:, None] * (np.eye(k) - H_jj) * d_3half[None, :]
    mid = sym_inv_sqrt(inner, -0.5)
    return d_half[:, None] * mid * d_half[None, :]


def adjustment_userw(imh_j: np.ndarray, mean_v_all: np.ndarray, mean_v_j: float) -> np.ndarray:
    """v_bar_j^{1/2} [(I-H)_j V (I-H)_j']^{-1/2} for user-specified weights.

    *imh_j* holds the k_j cross-study rows of (I - H); *mean_v_all* is the
    length-N vector assigning each effect size its study's average
    sampling variance (the diagonal of V).
    """
    inner = (imh_j * mean_v_all[None, :]) @ imh_j.T
    if np.max(np.abs(inner)) == 0.0 or np.all(
        np.linalg.eigvalsh((inner + inner.T) / 2.0)
        <= EIG_FLOOR * max(np.max(np.abs(inner)), 1.0)
    ):
        warnings.warn(
            "adjustment matrix is degenerate (zero residual leverage)",
            DegenerateAdjustment,
        )
    return np.sqrt(mean_v_j) * sym_inv_sqrt(inner, -0.5)


def robust_covariance(
    fit: WlsFit, weights, adjustments: Sequence[np.ndarray], kind: str = "NONE"
) -> RobustCovariance:
    """Assemble V* from a fit, its weights and per-study adjustments.

    With identity adjustments this is exactly the large-sample sandwich;
    accumulation runs in study order for reproducibility.
    """
    wvecs = weight_vectors(fit.blocks, weights)
    p = fit.p
    meat = np.zeros((p, p))
    for block, w, e, A in zip(fit.blocks, wvecs, fit.residuals, adjustments):
        q = block.X.T @ (w * (A @ e))
        meat += np.outer(q, q)
    v_star = fit.bread_inv @ meat @ fit.bread_inv
    v_star = (v_star + v_star.T) / 2.0
    return RobustCovariance(
        v_star=v_star, adjustment_kind=kind, adjustments=tuple(adjustments)
    )
