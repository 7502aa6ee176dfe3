"""Weighted least squares over per-study blocks.

All weighting models in this package use diagonal weight matrices, so
weights are carried as one vector per study. The bread inverse
``Q = (X'WX)^{-1}`` is materialized explicitly: it appears as a matrix in
the sandwich, adjustment and degrees-of-freedom formulas, and p is small.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg

from .design import StudyBlock
from .errors import RankDeficientDesign

# reciprocal condition number below which X'WX is treated as singular;
# shared by every module that inverts a cross product
COND_GUARD = 1e-12


def weight_vectors(blocks: Sequence[StudyBlock], weights) -> list[np.ndarray]:
    """Normalize a WeightAssignment or plain sequence into per-study
    weight vectors aligned with *blocks*."""
    per_study = getattr(weights, "per_study", weights)
    out = []
    for block, w in zip(blocks, per_study, strict=True):
        w = np.asarray(w, dtype=float)
        if w.shape != (block.k,):
            raise ValueError(
                f"study {block.study_id!r}: weight vector shape {w.shape} "
                f"does not match k={block.k}"
            )
        out.append(w)
    return out


@dataclass(frozen=True)
class WlsFit:
    """Fitted WLS quantities shared by all downstream estimators."""

    b: np.ndarray                     # p
    bread_inv: np.ndarray             # p x p, (X'WX)^{-1}
    residuals: tuple[np.ndarray, ...]  # per study, block order
    hat_blocks: tuple[np.ndarray, ...]  # H_jj = X_j Q X_j' W_j per study
    blocks: tuple[StudyBlock, ...]

    @property
    def p(self) -> int:
        return len(self.b)

    @property
    def n(self) -> int:
        return sum(b.k for b in self.blocks)

    def fitted(self, j: int) -> np.ndarray:
        return self.blocks[j].T - self.residuals[j]


def _offending_columns(blocks, wvecs, p) -> list[int]:
    """Identify dependent design columns via pivoted QR of sqrt(W) X."""
    rows = [np.sqrt(w)[:, None] * b.X for b, w in zip(blocks, wvecs)]
    A = np.vstack(rows)
    _, R, piv = scipy.linalg.qr(A, mode="economic", pivoting=True)
    d = np.abs(np.diag(R))
    if d.size == 0 or d[0] == 0.0:
        return list(range(p))
    rank = int(np.sum(d > COND_GUARD * d[0]))
    return sorted(int(i) for i in piv[rank:])


def cross_product(blocks: Sequence[StudyBlock], wvecs: Sequence[np.ndarray]) -> np.ndarray:
    """Sum over studies of X_j' W_j X_j."""
    p = blocks[0].X.shape[1]
    S = np.zeros((p, p))
    for block, w in zip(blocks, wvecs):
        S += block.X.T @ (w[:, None] * block.X)
    return S


def wls_fit(blocks: Sequence[StudyBlock], weights, coef_names=None) -> WlsFit:
    """Weighted least squares coefficients, residuals and hat blocks.

    Raises
    ------
    RankDeficientDesign
        If the stacked design has more columns than rows or the
        cross product X'WX is numerically singular (reciprocal condition
        number below ``COND_GUARD``). Offending columns are reported
        where pivoting can identify them.
    """
    blocks = list(blocks)
    wvecs = weight_vectors(blocks, weights)
    n = sum(b.k for b in blocks)
    p = blocks[0].X.shape[1]
    if n <= p:
        raise RankDeficientDesign(
            f"{n} effect sizes cannot identify {p} coefficients"
        )

    S = cross_product(blocks, wvecs)
    S = (S + S.T) / 2.0
    eigvals = np.linalg.eigvalsh(S)
    if eigvals[0] <= COND_GUARD * max(eigvals[-1], 0.0):
        offending = _offending_columns(blocks, wvecs, p)
        if coef_names is not None:
            names = [coef_names[i] for i in offending]
            msg = f"design is rank deficient; dependent columns: {names}"
        else:
            msg = f"design is rank deficient; dependent column indices: {offending}"
        raise RankDeficientDesign(msg, offending=offending)

    cho = scipy.linalg.cho_factor(S)
    bread_inv = scipy.linalg.cho_solve(cho, np.eye(p))
    bread_inv = (bread_inv + bread_inv.T) / 2.0

    t = np.zeros(p)
    for block, w in zip(blocks, wvecs):
        t += block.X.T @ (w * block.T)
    b = bread_inv @ t

    residuals = []
    hat_blocks = []
    for block, w in zip(blocks, wvecs):
        e = block.T - block.X @ b
        residuals.append(e)
        hat_blocks.append((block.X @ bread_inv @ block.X.T) * w[None, :])

    return WlsFit(
        b=b,
        bread_inv=bread_inv,
        residuals=tuple(residuals),
        hat_blocks=tuple(hat_blocks),
        blocks=tuple(blocks),
    )


def hat_block(fit: WlsFit, weights, j: int) -> tuple[np.ndarray, np.ndarray]:
    """H_jj and the cross-study rows (I-H)_j for study *j*.

    (I-H)_j is assembled block by block from Q without materializing the
    full hat matrix: block l of row-block j is
    ``delta_jl I - X_j Q X_l' W_l``.
    """
    blocks = fit.blocks
    wvecs = weight_vectors(blocks, weights)
    Q = fit.bread_inv
    Xj = blocks[j].X
    parts = []
    for l, (block, w) in enumerate(zip(blocks, wvecs)):
        piece = -(Xj @ Q @ block.X.T) * w[None, :]
        if l == j:
            piece = piece + np.eye(block.k)
        parts.append(piece)
    imh_j = np.hstack(parts)
    return fit.hat_blocks[j], imh_j
