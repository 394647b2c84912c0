"""Learn a block partition from answer covariance structure.

Questions are clustered agglomeratively on the dissimilarity
1 - |correlation|, so strong negative dependence also lands in one block.
The clustering is written out longhand rather than wrapped around a
library call because the tie-breaking rule (lowest question index wins)
is part of the contract; s is small, so the O(s^3) loop is irrelevant.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .core import (
    NA_CODE,
    YES_CODE,
    AnswerMatrix,
    BlockPartition,
    ValidationError,
)
from .simulate import CovarianceModel

LINKAGES = ("average", "complete")


def pairwise_association(answers: AnswerMatrix) -> np.ndarray:
    """Pairwise-complete correlation of the yes/no indicators.

    Missing cells are dropped per pair.  Pairs with no overlap, or with a
    constant column on the overlap, get association 0 with a warning.
    """
    codes = answers.values
    yes = (codes == YES_CODE).astype(np.float64)
    obs = (codes != NA_CODE).astype(np.float64)
    per_question = obs.sum(axis=0)
    short = np.nonzero(per_question < 2)[0]
    if short.size:
        raise ValidationError(
            f"question {answers.question_labels[short[0]]!r} has fewer than 2 "
            "observed values"
        )
    m = obs.T @ obs  # co-observed counts
    sx = yes.T @ obs  # sum of first-question yeses over the overlap
    sxy = yes.T @ yes
    with np.errstate(divide="ignore", invalid="ignore"):
        cov = sxy - sx * sx.T / m
        var_x = sx - sx * sx / m
        var_y = var_x.T
        corr = cov / np.sqrt(var_x * var_y)
    degenerate = ~np.isfinite(corr)
    np.fill_diagonal(degenerate, False)
    if degenerate.any():
        warnings.warn(
            f"{int(degenerate.sum() // 2)} question pairs had no overlap or "
            "zero variance; their association was set to 0",
            stacklevel=2,
        )
        corr[degenerate] = 0.0
    np.fill_diagonal(corr, 1.0)
    return np.clip(corr, -1.0, 1.0)


@dataclass(frozen=True)
class DendrogramCut:
    """Where to cut the dendrogram: a block count or a height, not both."""

    linkage: str = "average"
    count: int | None = None
    height: float | None = None

    def __post_init__(self):
        if self.linkage not in LINKAGES:
            raise ValidationError(
                f"linkage must be one of {LINKAGES}, got {self.linkage!r}"
            )
        if (self.count is None) == (self.height is None):
            raise ValidationError("set exactly one of count and height")
        if self.count is not None and self.count < 1:
            raise ValidationError(f"block count must be >= 1, got {self.count}")
        if self.height is not None and self.height < 0:
            raise ValidationError(f"cut height must be >= 0, got {self.height!r}")


def learn_partition(assoc: np.ndarray, cut: DendrogramCut) -> BlockPartition:
    """Agglomerate questions on 1 - |assoc| and cut at the requested level."""
    assoc = np.asarray(assoc, dtype=np.float64)
    s = assoc.shape[0]
    if assoc.ndim != 2 or assoc.shape != (s, s):
        raise ValidationError(f"association matrix must be square, got {assoc.shape}")
    if not np.allclose(assoc, assoc.T, atol=1e-10, rtol=0.0):
        raise ValidationError("association matrix is not symmetric")
    if cut.count is not None and cut.count > s:
        raise ValidationError(f"block count {cut.count} exceeds question count {s}")

    dist = 1.0 - np.abs(0.5 * (assoc + assoc.T))
    np.clip(dist, 0.0, None, out=dist)

    clusters = [[k] for k in range(s)]
    dm = [list(row) for row in dist]
    while len(clusters) > 1:
        best = None
        for a in range(len(clusters)):
            for b in range(a + 1, len(clusters)):
                if best is None or dm[a][b] < best[0]:
                    best = (dm[a][b], a, b)
        d, a, b = best
        if cut.count is not None:
            if len(clusters) <= cut.count:
                break
        elif d > cut.height:
            break
        na, nb = len(clusters[a]), len(clusters[b])
        merged_row = []
        for c in range(len(clusters)):
            if c in (a, b):
                continue
            if cut.linkage == "average":
                merged_row.append((na * dm[a][c] + nb * dm[b][c]) / (na + nb))
            else:
                merged_row.append(max(dm[a][c], dm[b][c]))
        clusters[a] = sorted(clusters[a] + clusters[b])
        del clusters[b]
        dm = [
            [row[c] for c in range(len(row)) if c != b]
            for rix, row in enumerate(dm)
            if rix != b
        ]
        ai = a  # position of the merged cluster after deleting b (b > a)
        for c, val in zip(
            (c for c in range(len(clusters)) if c != ai), merged_row
        ):
            dm[ai][c] = val
            dm[c][ai] = val
        dm[ai][ai] = 0.0
    if cut.count is not None and len(clusters) != cut.count:
        raise ValidationError(
            f"could not reach {cut.count} blocks (stopped at {len(clusters)})"
        )
    return BlockPartition(clusters)


def _pairwise_complete_corr(codes: np.ndarray) -> tuple[np.ndarray, bool]:
    """Correlation of a small answer submatrix; flags degeneracy."""
    yes = (codes == YES_CODE).astype(np.float64)
    obs = (codes != NA_CODE).astype(np.float64)
    m = obs.T @ obs
    sx = yes.T @ obs
    sxy = yes.T @ yes
    with np.errstate(divide="ignore", invalid="ignore"):
        corr = (sxy - sx * sx.T / m) / np.sqrt(
            (sx - sx * sx / m) * (sx - sx * sx / m).T
        )
    bad = ~np.isfinite(corr)
    np.fill_diagonal(bad, False)
    corr[bad] = 0.0
    np.fill_diagonal(corr, 1.0)
    return np.clip(corr, -1.0, 1.0), bool(bad.any())


def repair_correlation(m: np.ndarray, floor: float = 1e-8) -> tuple[np.ndarray, bool]:
    """Clip eigenvalues up to ``floor`` and rescale to unit diagonal."""
    m = 0.5 * (m + m.T)
    vals, vecs = np.linalg.eigh(m)
    if vals.min() >= floor:
        out = m.copy()
        np.fill_diagonal(out, 1.0)
        return out, False
    rebuilt = (vecs * np.maximum(vals, floor)) @ vecs.T
    scale = 1.0 / np.sqrt(np.diag(rebuilt))
    rebuilt = rebuilt * np.outer(scale, scale)
    rebuilt = 0.5 * (rebuilt + rebuilt.T)
    np.fill_diagonal(rebuilt, 1.0)
    return rebuilt, True


@dataclass(frozen=True)
class CovarianceEstimate:
    model: CovarianceModel
    pooled_fallbacks: tuple  # (cause_label, block_index) pairs
    repaired: tuple  # (cause_label, block_index) pairs


def estimate_block_covariances(
    answers: AnswerMatrix,
    labels,
    part: BlockPartition,
    cause_labels=None,
) -> CovarianceEstimate:
    """Per-(cause, block) answer correlation matrices, PSD-repaired.

    Causes with fewer than block-size + 1 rows (or a degenerate overlap)
    fall back to the pooled matrix computed over all rows; the fallbacks
    are recorded.  Note these are answer-scale correlations: thresholding
    attenuates latent correlation, so feeding them back into the simulator
    reproduces the data only approximately.
    """
    labels = np.asarray([str(x) for x in labels])
    if labels.size != answers.n_interviews:
        raise ValidationError(
            f"{labels.size} labels for {answers.n_interviews} interviews"
        )
    if cause_labels is None:
        cause_labels = tuple(sorted(set(labels.tolist())))
    else:
        cause_labels = tuple(str(x) for x in cause_labels)
        unknown = set(labels.tolist()) - set(cause_labels)
        if unknown:
            raise ValidationError(f"label {sorted(unknown)[0]!r} not in cause_labels")
    if part.n_questions != answers.n_questions:
        raise ValidationError("partition does not match the answer matrix width")

    codes = answers.values
    pooled = []
    for blk in part.blocks:
        corr, _ = _pairwise_complete_corr(codes[:, list(blk)])
        pooled.append(repair_correlation(corr)[0])

    matrices = []
    fallbacks = []
    repaired = []
    for label in cause_labels:
        rows = np.nonzero(labels == label)[0]
        per_block = []
        for l, blk in enumerate(part.blocks):
            if rows.size < len(blk) + 1:
                per_block.append(pooled[l])
                fallbacks.append((label, l))
                continue
            corr, degenerate = _pairwise_complete_corr(codes[np.ix_(rows, list(blk))])
            if degenerate:
                per_block.append(pooled[l])
                fallbacks.append((label, l))
                continue
            fixed, did_repair = repair_correlation(corr)
            if did_repair:
                repaired.append((label, l))
            per_block.append(fixed)
        matrices.append(per_block)
    model = CovarianceModel(matrices, part, len(cause_labels))
    return CovarianceEstimate(model, tuple(fallbacks), tuple(repaired))
