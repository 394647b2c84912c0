"""Latent-Gaussian probit simulator and the exact tiny-instance oracle.

Answers are generated by thresholding correlated standard-normal latents:
given cause j, block latents z ~ N(0, Sigma_jl) with unit diagonal, and
A_k = 1 iff z_k <= Phi^{-1}(q_jk).  Correlation therefore never moves the
marginal yes-probabilities away from the probbase.

Randomness is organised as one counter-based Philox stream per interview,
keyed by (seed, row index), so row-level parallelism or resumption cannot
reorder draws.  Within a row the draw order is fixed: one uniform for the
cause, s standard normals for the latents, s uniforms for missingness
(always consumed, even at rate 0), then two uniforms if demographics are
requested.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np
from scipy.special import ndtr, ndtri

from .core import (
    NA_CODE,
    AnswerMatrix,
    BlockPartition,
    Prior,
    Probbase,
    ValidationError,
)

_TAIL = 8.5
_GL_X, _GL_W = np.polynomial.legendre.leggauss(128)


def normal_quantile(p):
    """Inverse standard-normal CDF, accurate to well below 1e-9.

    Thin wrapper with explicit domain validation; p must lie strictly
    inside (0, 1).
    """
    arr = np.asarray(p, dtype=np.float64)
    if np.any(arr <= 0.0) or np.any(arr >= 1.0):
        raise ValidationError("normal_quantile requires 0 < p < 1")
    out = ndtri(arr)
    return float(out) if np.isscalar(p) or arr.ndim == 0 else out


def cholesky_psd(sigma: np.ndarray) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor with ridge repair for non-PD input.

    Returns (L, ridge): ridge is 0.0 when the matrix factors cleanly,
    otherwise the smallest lambda in {1e-10 * 2**i} for which
    sigma + lambda*I succeeds.
    """
    sigma = np.asarray(sigma, dtype=np.float64)
    if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
        raise ValidationError(f"covariance must be square, got shape {sigma.shape}")
    if not np.allclose(sigma, sigma.T, atol=1e-10, rtol=0.0):
        raise ValidationError("covariance matrix is not symmetric")
    sigma = 0.5 * (sigma + sigma.T)
    try:
        return np.linalg.cholesky(sigma), 0.0
    except np.linalg.LinAlgError:
        pass
    lam = 1e-10
    eye = np.eye(sigma.shape[0])
    for _ in range(200):
        try:
            return np.linalg.cholesky(sigma + lam * eye), lam
        except np.linalg.LinAlgError:
            lam *= 2.0
    raise ValidationError("covariance could not be repaired to positive definite")


class CovarianceModel:
    """Per-(cause, block) latent correlation matrices.

    Input matrices are normalised to correlation form (unit diagonal) on
    construction, since the probit thresholds assume standard-normal
    marginals.
    """

    def __init__(self, matrices, part: BlockPartition, n_causes: int):
        sizes = [len(blk) for blk in part.blocks]
        if len(matrices) != n_causes:
            raise ValidationError(
                f"expected matrices for {n_causes} causes, got {len(matrices)}"
            )
        rows = []
        for j, per_block in enumerate(matrices):
            if len(per_block) != len(sizes):
                raise ValidationError(
                    f"cause {j}: expected {len(sizes)} block matrices, got "
                    f"{len(per_block)}"
                )
            row = []
            for l, m in enumerate(per_block):
                m = np.asarray(m, dtype=np.float64)
                if m.shape != (sizes[l], sizes[l]):
                    raise ValidationError(
                        f"cause {j} block {l}: expected shape "
                        f"{(sizes[l], sizes[l])}, got {m.shape}"
                    )
                if not np.allclose(m, m.T, atol=1e-12, rtol=0.0):
                    raise ValidationError(
                        f"cause {j} block {l}: matrix is not symmetric"
                    )
                d = np.diag(m)
                if np.any(d <= 0):
                    raise ValidationError(
                        f"cause {j} block {l}: non-positive diagonal"
                    )
                scale = 1.0 / np.sqrt(d)
                m = 0.5 * (m + m.T) * np.outer(scale, scale)
                np.fill_diagonal(m, 1.0)
                m.flags.writeable = False
                row.append(m)
            rows.append(tuple(row))
        self.matrices = tuple(rows)
        self.n_causes = n_causes
        self.block_sizes = tuple(sizes)

    def matrix(self, j: int, l: int) -> np.ndarray:
        return self.matrices[j][l]

    def is_diagonal(self) -> bool:
        return all(
            np.max(np.abs(m - np.eye(m.shape[0]))) < 1e-14
            for row in self.matrices
            for m in row
        )

    @classmethod
    def diagonal(cls, part: BlockPartition, n_causes: int) -> "CovarianceModel":
        mats = [[np.eye(len(blk)) for blk in part.blocks] for _ in range(n_causes)]
        return cls(mats, part, n_causes)

    @classmethod
    def exchangeable(cls, part: BlockPartition, n_causes: int, rho: float) -> "CovarianceModel":
        """Constant within-block correlation rho for every cause."""
        max_size = max(len(blk) for blk in part.blocks)
        if max_size > 1 and not -1.0 / (max_size - 1) < rho < 1.0:
            raise ValidationError(
                f"exchangeable correlation {rho!r} not positive definite for "
                f"block size {max_size}"
            )
        mats = [
            [
                (1.0 - rho) * np.eye(len(blk)) + rho * np.ones((len(blk), len(blk)))
                for blk in part.blocks
            ]
            for _ in range(n_causes)
        ]
        return cls(mats, part, n_causes)


@dataclass(frozen=True)
class SimulationConfig:
    n: int
    probbase: Probbase
    prior: Prior
    partition: BlockPartition
    covariance: CovarianceModel
    missing_rate: float = 0.0
    seed: int = 0
    demographics: bool = False

    def __post_init__(self):
        if self.n < 1:
            raise ValidationError(f"interview count must be >= 1, got {self.n}")
        if not 0.0 <= self.missing_rate < 1.0:
            raise ValidationError(
                f"missing rate must be in [0, 1), got {self.missing_rate!r}"
            )
        if self.probbase.n_causes != self.prior.n_causes:
            raise ValidationError(
                f"probbase has {self.probbase.n_causes} causes, prior has "
                f"{self.prior.n_causes}"
            )
        if self.probbase.n_questions != self.partition.n_questions:
            raise ValidationError(
                f"probbase has {self.probbase.n_questions} questions, partition "
                f"covers {self.partition.n_questions}"
            )
        if self.covariance.n_causes != self.probbase.n_causes:
            raise ValidationError("covariance model has wrong cause count")
        if self.covariance.block_sizes != tuple(
            len(blk) for blk in self.partition.blocks
        ):
            raise ValidationError("covariance model has wrong block sizes")
        v = self.probbase.values
        if v.min() <= 0.0 or v.max() >= 1.0:
            raise ValidationError(
                "probbase must be clamped strictly inside (0, 1) before simulation"
            )


@dataclass(frozen=True)
class SimulationResult:
    answers: AnswerMatrix
    causes: np.ndarray  # cause index per interview, never written with answers
    demographics: dict | None
    ridge_repairs: dict


def _row_rng(seed: int, row: int) -> np.random.Generator:
    key = ((seed & 0xFFFFFFFFFFFFFFFF) << 64) | (row & 0xFFFFFFFFFFFFFFFF)
    return np.random.Generator(np.random.Philox(key=key))


def simulate_dataset(cfg: SimulationConfig) -> SimulationResult:
    """Draw a dataset of ternary answers plus hidden cause labels."""
    pb, part = cfg.probbase, cfg.partition
    r, s, n = pb.n_causes, pb.n_questions, cfg.n
    thresholds = ndtri(pb.values)
    cum_pi = np.cumsum(cfg.prior.probabilities)

    chol = []
    repairs = {}
    for j in range(r):
        row = []
        for l in range(part.n_blocks):
            f, lam = cholesky_psd(cfg.covariance.matrix(j, l))
            if lam:
                repairs[(j, l)] = lam
            row.append(f)
        chol.append(row)

    u_cause = np.empty(n)
    latent_std = np.empty((n, s))
    u_miss = np.empty((n, s))
    demo = np.empty((n, 2)) if cfg.demographics else None
    for i in range(n):
        rng = _row_rng(cfg.seed, i)
        u_cause[i] = rng.random()
        latent_std[i] = rng.standard_normal(s)
        u_miss[i] = rng.random(s)
        if demo is not None:
            demo[i] = rng.random(2)

    causes = np.minimum(
        np.searchsorted(cum_pi, u_cause, side="right"), r - 1
    ).astype(np.int64)

    codes = np.empty((n, s), dtype=np.int8)
    for j in range(r):
        rows = np.nonzero(causes == j)[0]
        if rows.size == 0:
            continue
        for l, blk in enumerate(part.blocks):
            cols = list(blk)
            z = latent_std[np.ix_(rows, cols)] @ chol[j][l].T
            codes[np.ix_(rows, cols)] = (z <= thresholds[j, cols]).astype(np.int8)
    if cfg.missing_rate > 0.0:
        codes[u_miss < cfg.missing_rate] = NA_CODE

    demographics = None
    if demo is not None:
        demographics = {
            "age": (demo[:, 0] * 100).astype(np.int64),
            "sex": np.where(demo[:, 1] < 0.5, "F", "M"),
        }
    return SimulationResult(
        answers=AnswerMatrix(codes, pb.question_labels),
        causes=causes,
        demographics=demographics,
        ridge_repairs=repairs,
    )


# -- multivariate normal rectangle probabilities (quadrature) --------------


def _phi(x):
    return np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)


def _gl_nodes(lo: float, hi: float):
    half = 0.5 * (hi - lo)
    return half * _GL_X + 0.5 * (hi + lo), half * _GL_W


def bvn_cdf(t1: float, t2: float, rho: float) -> float:
    """P(Z1 <= t1, Z2 <= t2) for standard bivariate normals.

    Computed as a 1-d Gauss-Legendre integral of phi(x) * Phi(.|x); the
    128-node rule is accurate to ~1e-13 on this analytic integrand.
    """
    if rho >= 1.0 - 1e-12:
        return float(ndtr(min(t1, t2)))
    if rho <= -1.0 + 1e-12:
        return max(0.0, float(ndtr(t1) + ndtr(t2) - 1.0))
    if t1 <= -_TAIL or t2 <= -_TAIL:
        return 0.0
    if t1 >= _TAIL:
        return float(ndtr(t2))
    if t2 >= _TAIL:
        return float(ndtr(t1))
    x, w = _gl_nodes(-_TAIL, t1)
    scale = math.sqrt(1.0 - rho * rho)
    return float(np.sum(w * _phi(x) * ndtr((t2 - rho * x) / scale)))


def tvn_cdf(t: np.ndarray, corr: np.ndarray) -> float:
    """P(Z <= t) for a trivariate standard normal, by nested quadrature."""
    t1, t2, t3 = (float(v) for v in t)
    r12, r13, r23 = float(corr[0, 1]), float(corr[0, 2]), float(corr[1, 2])
    if min(t1, t2, t3) <= -_TAIL:
        return 0.0
    if t1 >= _TAIL:
        return bvn_cdf(t2, t3, r23)
    s2 = math.sqrt(max(1.0 - r12 * r12, 1e-14))
    s3 = math.sqrt(max(1.0 - r13 * r13, 1e-14))
    rc = (r23 - r12 * r13) / (s2 * s3)
    rc = min(max(rc, -1.0), 1.0)
    x, w = _gl_nodes(-_TAIL, t1)
    total = 0.0
    for xi, wi in zip(x, w):
        total += wi * _phi(xi) * bvn_cdf((t2 - r12 * xi) / s2, (t3 - r13 * xi) / s3, rc)
    return float(total)


def _mvn_cdf(t: np.ndarray, corr: np.ndarray) -> float:
    d = len(t)
    if d == 0:
        return 1.0
    if d == 1:
        return float(ndtr(t[0]))
    if d == 2:
        return bvn_cdf(t[0], t[1], corr[0, 1])
    if d == 3:
        return tvn_cdf(t, corr)
    raise ValidationError(
        f"orthant integration supports correlated blocks up to size 3, got {d}"
    )


def orthant_probability(thresholds: np.ndarray, corr: np.ndarray, ones: np.ndarray) -> float:
    """P(z_i <= t_i exactly for i in ``ones``, z_i > t_i otherwise).

    Inclusion-exclusion over the zero coordinates; the 2^d pattern
    probabilities therefore sum to 1 to machine precision by construction.
    """
    idx_one = [i for i, flag in enumerate(ones) if flag]
    idx_zero = [i for i, flag in enumerate(ones) if not flag]
    total = 0.0
    for size in range(len(idx_zero) + 1):
        for extra in combinations(idx_zero, size):
            sel = sorted(idx_one + list(extra))
            cdf = _mvn_cdf(thresholds[sel], corr[np.ix_(sel, sel)])
            total += cdf if size % 2 == 0 else -cdf
    return max(total, 0.0)


def exact_tiny_distribution(
    pb: Probbase,
    prior: Prior,
    part: BlockPartition,
    cov: CovarianceModel | None = None,
    missing_rate: float = 0.0,
    max_cells: int = 1_000_000,
) -> tuple[np.ndarray, np.ndarray]:
    """Full joint table P(A = pattern, D = cause) for tiny instances.

    Returns (patterns, joint): patterns is (m, s) int8 over {1, 0, NA} and
    joint is (m, r).  Missingness is MCAR at ``missing_rate``; with rate 0
    the ternary alphabet collapses to binary.  Correlated blocks use the
    quadrature rectangle probabilities, so sizes are limited to 3; diagonal
    covariance is evaluated in closed form for any block size.
    """
    r, s = pb.n_causes, pb.n_questions
    if part.n_questions != s or prior.n_causes != r:
        raise ValidationError("probbase, prior and partition dimensions disagree")
    v = pb.values
    if v.min() <= 0.0 or v.max() >= 1.0:
        raise ValidationError("probbase must be clamped strictly inside (0, 1)")
    if cov is None:
        cov = CovarianceModel.diagonal(part, r)
    alphabet = (1, 0, int(NA_CODE)) if missing_rate > 0.0 else (1, 0)
    m_total = len(alphabet) ** s
    if r * m_total > max_cells:
        raise ValidationError(
            f"table would hold {r * m_total} cells, above the {max_cells} limit"
        )

    block_patterns = []
    block_probs = []
    for l, blk in enumerate(part.blocks):
        cols = list(blk)
        d = len(cols)
        pats = np.array(
            np.meshgrid(*([list(alphabet)] * d), indexing="ij"), dtype=np.int8
        ).reshape(d, -1).T
        probs = np.empty((r, pats.shape[0]))
        for j in range(r):
            corr = cov.matrix(j, l)
            diag = np.max(np.abs(corr - np.eye(d))) < 1e-14
            t = ndtri(v[j, cols])
            for a, pattern in enumerate(pats):
                obs = pattern != NA_CODE
                miss_factor = missing_rate ** int(d - obs.sum()) * (
                    (1.0 - missing_rate) ** int(obs.sum())
                )
                if not obs.any():
                    probs[j, a] = miss_factor
                elif diag:
                    p1 = v[j, np.asarray(cols)[obs]]
                    bits = pattern[obs] == 1
                    probs[j, a] = miss_factor * np.prod(np.where(bits, p1, 1.0 - p1))
                else:
                    sel = np.nonzero(obs)[0]
                    probs[j, a] = miss_factor * orthant_probability(
                        t[sel], corr[np.ix_(sel, sel)], pattern[sel] == 1
                    )
        block_patterns.append(pats)
        block_probs.append(probs)

    sizes = [p.shape[0] for p in block_patterns]
    m = int(np.prod(sizes))
    grid = np.indices(sizes).reshape(len(sizes), m)
    patterns = np.empty((m, s), dtype=np.int8)
    joint = np.tile(prior.probabilities[:, None], (1, m))
    for l, blk in enumerate(part.blocks):
        patterns[:, list(blk)] = block_patterns[l][grid[l]]
        joint *= block_probs[l][:, grid[l]]
    return patterns, np.ascontiguousarray(joint.T)
