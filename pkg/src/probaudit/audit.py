"""Probbase audit: perturbation generators and finite-difference flags.

gamma_jk estimates the sensitivity of the imputation objective to entry
(j, k) by a central difference with step eps (default 1/100).  A clearly
positive gamma says the entry is set too high (lowering it improves
imputation), a clearly negative gamma says too low.  ROC/AUC and rank-sum
utilities quantify how well gamma separates known perturbation classes in
experiment mode.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import log_ndtr, ndtr
from scipy.stats import rankdata

from .core import (
    DEFAULT_EPS_CLAMP,
    AnswerMatrix,
    BlockPartition,
    Prior,
    Probbase,
    ValidationError,
)
from .imputation import ScoringContext

PERTURBATION_KINDS = (
    "chaotic",
    "shuffled",
    "global_gaussian",
    "sparse_gaussian",
    "signed_offset",
)


@dataclass(frozen=True)
class PerturbationSpec:
    """Recipe for building a deliberately-wrong probbase.

    Parameters mirror the benchmark designs: ``count`` entries touched by
    the sparse kind, gaussian sd ``sigma``, signed offset ``delta`` applied
    to entries above ``threshold``.
    """

    kind: str
    count: int = 20
    sigma: float = 0.05
    delta: float = 0.2
    threshold: float = 0.2
    seed: int = 0
    stratify_by_cause: bool = False

    def __post_init__(self):
        if self.kind not in PERTURBATION_KINDS:
            raise ValidationError(
                f"unknown perturbation kind {self.kind!r}; choose from "
                f"{PERTURBATION_KINDS}"
            )
        if self.sigma <= 0.0:
            raise ValidationError(f"sigma must be > 0, got {self.sigma!r}")
        if self.delta <= 0.0:
            raise ValidationError(f"delta must be > 0, got {self.delta!r}")
        if self.count < 1:
            raise ValidationError(f"count must be >= 1, got {self.count}")
        if not 0.0 < self.threshold < 1.0:
            raise ValidationError(
                f"threshold must be in (0, 1), got {self.threshold!r}"
            )


def perturb_probbase(
    pb: Probbase,
    spec: PerturbationSpec,
    eps_clamp: float = DEFAULT_EPS_CLAMP,
) -> tuple[Probbase, np.ndarray]:
    """Perturbed copy of ``pb`` plus the truth table y = sign(new - old).

    All outputs are clamped to [eps_clamp, 1 - eps_clamp].
    """
    rng = np.random.default_rng(spec.seed)
    old = pb.values
    r, s = old.shape
    if spec.kind == "chaotic":
        new = rng.uniform(0.0, 1.0, size=(r, s))
    elif spec.kind == "shuffled":
        new = old.ravel()[rng.permutation(r * s)].reshape(r, s)
    elif spec.kind == "global_gaussian":
        new = old + rng.normal(0.0, spec.sigma, size=(r, s))
    elif spec.kind == "sparse_gaussian":
        if spec.count > r * s:
            raise ValidationError(
                f"requested {spec.count} perturbed entries, probbase has {r * s}"
            )
        new = old.copy().ravel()
        idx = rng.choice(r * s, size=spec.count, replace=False)
        new[idx] += rng.normal(0.0, spec.sigma, size=spec.count)
        new = new.reshape(r, s)
    else:  # signed_offset
        eligible = np.nonzero(old.ravel() > spec.threshold)[0]
        if eligible.size < 3:
            raise ValidationError(
                f"signed_offset needs >= 3 entries above {spec.threshold}, "
                f"found {eligible.size}"
            )
        new = old.copy().ravel()
        if spec.stratify_by_cause:
            # Split each cause row separately.  At benchmark dimensions the
            # eligible set is sparse per row, so global and stratified
            # splits coincide; at small scale stratifying avoids loading
            # one cause with a coherent net drift.
            groups = [
                np.nonzero(old[j] > spec.threshold)[0] + j * s for j in range(r)
            ]
        else:
            groups = [eligible]
        for members in groups:
            up, down, _same = np.array_split(rng.permutation(members), 3)
            new[up] += spec.delta
            new[down] -= spec.delta
        new = new.reshape(r, s)
    new = np.clip(new, eps_clamp, 1.0 - eps_clamp)
    truth = np.sign(new - old).astype(np.int8)
    return Probbase(new, pb.cause_labels, pb.question_labels), truth


@dataclass(frozen=True)
class GradientEstimate:
    gamma: float
    one_sided: bool


def gradient_entry(
    pb: Probbase,
    j: int,
    k: int,
    eps: float,
    ctx,
    incremental: bool = False,
    base_value: float | None = None,
) -> GradientEstimate:
    """Finite-difference gradient of the objective at entry (j, k).

    Central difference [I(q+eps) - I(q-eps)] / (2 eps) when both displaced
    values stay inside (0, 1); otherwise falls back to the corresponding
    one-sided difference and flags it.  ``ctx`` is any scoring context with
    ``evaluate``; pass ``incremental=True`` for a ScoringContext that has
    been prepared with ``prepare_base(pb)``.
    """
    if eps <= 0.0:
        raise ValidationError(f"eps must be > 0, got {eps!r}")
    v = float(pb.values[j, k])
    hi, lo = v + eps, v - eps
    hi_ok, lo_ok = hi < 1.0, lo > 0.0
    if not hi_ok and not lo_ok:
        raise ValidationError(
            f"entry ({j}, {k}) = {v!r}: both displacements escape (0, 1)"
        )

    if incremental:
        evaluate = lambda val: ctx.evaluate_entry(j, k, val)  # noqa: E731
        base = ctx.base_objective() if base_value is None else base_value
    else:
        evaluate = lambda val: ctx.evaluate(pb.with_entry(j, k, val))  # noqa: E731
        base = base_value

    if hi_ok and lo_ok:
        return GradientEstimate((evaluate(hi) - evaluate(lo)) / (2.0 * eps), False)
    if base is None:
        base = ctx.evaluate(pb)
    if hi_ok:
        return GradientEstimate((evaluate(hi) - base) / eps, True)
    return GradientEstimate((base - evaluate(lo)) / eps, True)


@dataclass(frozen=True)
class AuditReport:
    """Per-entry finite-difference estimates plus summary metrics."""

    j: np.ndarray
    k: np.ndarray
    gamma: np.ndarray
    transformed: np.ndarray  # atan(100 * gamma), the plotting transform
    one_sided: np.ndarray
    classification: np.ndarray  # +1 / 0 / -1 by the tau rule
    eps: float
    tau: float
    truth: np.ndarray | None = None
    metrics: dict | None = None

    @property
    def n_entries(self) -> int:
        return self.gamma.size


def classify_gamma(gamma: np.ndarray, tau: float) -> np.ndarray:
    """Sign classification: + above tau, - below -tau, else 0."""
    out = np.zeros(gamma.shape, dtype=np.int8)
    out[gamma > tau] = 1
    out[gamma < -tau] = -1
    return out


def audit_probbase(
    pb: Probbase,
    answers: AnswerMatrix,
    prior: Prior,
    part: BlockPartition,
    algorithm="interva4",
    eps: float = 0.01,
    entries=None,
    truth: np.ndarray | None = None,
    tau: float = 0.2,
    denominator: str = "scored",
    incremental: bool = False,
    threads: int = 1,
) -> AuditReport:
    """Estimate gamma for the requested entries (default: all of them)."""
    ctx = ScoringContext(answers, prior, part, algorithm, denominator, threads)
    r, s = pb.n_causes, pb.n_questions
    if entries is None:
        jj, kk = np.divmod(np.arange(r * s, dtype=np.int64), s)
    else:
        entries = np.asarray(entries, dtype=np.int64).reshape(-1, 2)
        jj, kk = entries[:, 0].copy(), entries[:, 1].copy()
        if jj.size and (
            jj.min() < 0 or jj.max() >= r or kk.min() < 0 or kk.max() >= s
        ):
            raise ValidationError("entry subset contains out-of-range indices")

    base = None
    if incremental:
        ctx.prepare_base(pb)
        base = ctx.base_objective()
    else:
        base = ctx.evaluate(pb)

    gamma = np.empty(jj.size)
    one_sided = np.zeros(jj.size, dtype=bool)
    for i in range(jj.size):
        est = gradient_entry(
            pb, int(jj[i]), int(kk[i]), eps, ctx, incremental=incremental,
            base_value=base,
        )
        gamma[i] = est.gamma
        one_sided[i] = est.one_sided

    truth_vec = None
    if truth is not None:
        truth = np.asarray(truth, dtype=np.int8)
        if truth.shape != (r, s):
            raise ValidationError(
                f"truth table shape {truth.shape} does not match probbase {(r, s)}"
            )
        truth_vec = truth[jj, kk]

    report = AuditReport(
        j=jj,
        k=kk,
        gamma=gamma,
        transformed=np.arctan(100.0 * gamma),
        one_sided=one_sided,
        classification=classify_gamma(gamma, tau),
        eps=eps,
        tau=tau,
        truth=truth_vec,
    )
    if truth_vec is not None:
        report = replace(report, metrics=audit_metrics(report))
    return report


# -- rank statistics -------------------------------------------------------


def roc_auc(scores, labels) -> tuple[float, float]:
    """AUC by the rank statistic, SE by the Hanley-McNeil formula.

    ``labels`` are binary; ties in the scores get midranks.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    n_pos = int(labels.sum())
    n_neg = int(labels.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise ValidationError("roc_auc requires both classes present")
    ranks = rankdata(scores)
    auc = (ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)
    q1 = auc / (2.0 - auc)
    q2 = 2.0 * auc * auc / (1.0 + auc)
    var = (
        auc * (1.0 - auc)
        + (n_pos - 1) * (q1 - auc * auc)
        + (n_neg - 1) * (q2 - auc * auc)
    ) / (n_pos * n_neg)
    return float(auc), float(math.sqrt(max(var, 0.0)))


def roc_curve(scores, labels) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Points (threshold, fpr, tpr) of the ROC curve, thresholds descending."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    n_pos = int(labels.sum())
    n_neg = int(labels.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise ValidationError("roc_curve requires both classes present")
    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    tp = np.cumsum(labels[order])
    fp = np.cumsum(~labels[order])
    distinct = np.nonzero(np.diff(sorted_scores))[0]
    idx = np.concatenate([distinct, [scores.size - 1]])
    thresholds = np.concatenate([[np.inf], sorted_scores[idx]])
    tpr = np.concatenate([[0.0], tp[idx] / n_pos])
    fpr = np.concatenate([[0.0], fp[idx] / n_neg])
    return thresholds, fpr, tpr


@dataclass(frozen=True)
class WilcoxonResult:
    p_value: float
    log10_p: float
    u_statistic: float
    z: float


def wilcoxon_rank_sum(x, y) -> WilcoxonResult:
    """Two-sided Mann-Whitney U test via the normal approximation.

    Uses midranks with the tie-corrected variance and a 0.5 continuity
    correction.  ``log10_p`` stays meaningful when p underflows float64.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.size == 0 or y.size == 0:
        raise ValidationError("wilcoxon_rank_sum requires two nonempty samples")
    n1, n2 = x.size, y.size
    n = n1 + n2
    ranks = rankdata(np.concatenate([x, y]))
    u1 = ranks[:n1].sum() - n1 * (n1 + 1) / 2.0
    mu = n1 * n2 / 2.0
    _, counts = np.unique(np.concatenate([x, y]), return_counts=True)
    tie_term = (counts.astype(np.float64) ** 3 - counts).sum()
    var = n1 * n2 / 12.0 * ((n + 1) - tie_term / (n * (n - 1)))
    if var <= 0.0:
        return WilcoxonResult(1.0, 0.0, float(u1), 0.0)
    diff = u1 - mu
    z = (diff - 0.5 * np.sign(diff)) / math.sqrt(var)
    log_p = math.log(2.0) + float(log_ndtr(-abs(z)))
    log_p = min(log_p, 0.0)
    p = min(2.0 * float(ndtr(-abs(z))), 1.0)
    return WilcoxonResult(p, log_p / math.log(10.0), float(u1), float(z))


# -- report-level summaries ------------------------------------------------


@dataclass(frozen=True)
class FlaggedEntries:
    j: np.ndarray
    k: np.ndarray
    gamma: np.ndarray
    sign: np.ndarray
    threshold: float
    truth: np.ndarray | None = None
    agreement: float | None = field(default=None)


def high_confidence_flags(
    report: AuditReport,
    tau: float | None = None,
    fraction: float | None = None,
) -> FlaggedEntries:
    """Entries with |gamma| above a confidence threshold.

    Either an absolute ``tau`` (default: the report's tau) or a
    ``fraction`` of entries to flag, in which case the threshold is the
    matching |gamma| quantile.
    """
    if tau is not None and fraction is not None:
        raise ValidationError("pass either tau or fraction, not both")
    if fraction is not None:
        if not 0.0 < fraction <= 1.0:
            raise ValidationError(f"fraction must be in (0, 1], got {fraction!r}")
        threshold = float(np.quantile(np.abs(report.gamma), 1.0 - fraction))
    else:
        threshold = report.tau if tau is None else float(tau)
    mask = np.abs(report.gamma) > threshold
    sign = np.sign(report.gamma[mask]).astype(np.int8)
    truth = report.truth[mask] if report.truth is not None else None
    agreement = None
    if truth is not None and mask.any():
        agreement = float((sign == truth).mean())
    return FlaggedEntries(
        j=report.j[mask],
        k=report.k[mask],
        gamma=report.gamma[mask],
        sign=sign,
        threshold=threshold,
        truth=truth,
        agreement=agreement,
    )


def audit_metrics(report: AuditReport) -> dict:
    """AUCs, rank-sum p-values and flag stats against the known truth."""
    if report.truth is None:
        raise ValidationError("audit metrics need a truth table")
    g, y = report.gamma, report.truth
    pos, neg, zero = g[y == 1], g[y == -1], g[y == 0]
    out = {}
    if pos.size and neg.size:
        scores = np.concatenate([pos, neg])
        labels = np.concatenate([np.ones(pos.size), np.zeros(neg.size)])
        out["auc_pos_vs_neg"], out["se_pos_vs_neg"] = roc_auc(scores, labels)
        out["wilcoxon_log10p_pos_neg"] = wilcoxon_rank_sum(pos, neg).log10_p
    if pos.size and zero.size:
        scores = np.concatenate([pos, zero])
        labels = np.concatenate([np.ones(pos.size), np.zeros(zero.size)])
        out["auc_pos_vs_zero"], out["se_pos_vs_zero"] = roc_auc(scores, labels)
        out["wilcoxon_log10p_pos_zero"] = wilcoxon_rank_sum(pos, zero).log10_p
    if neg.size and zero.size:
        scores = np.concatenate([-neg, -zero])
        labels = np.concatenate([np.ones(neg.size), np.zeros(zero.size)])
        out["auc_neg_vs_zero"], out["se_neg_vs_zero"] = roc_auc(scores, labels)
        out["wilcoxon_log10p_neg_zero"] = wilcoxon_rank_sum(neg, zero).log10_p
    if (pos.size or neg.size) and zero.size:
        perturbed = np.abs(np.concatenate([pos, neg]))
        out["wilcoxon_log10p_perturbed_zero"] = wilcoxon_rank_sum(
            perturbed, np.abs(zero)
        ).log10_p
    flags = high_confidence_flags(report)
    out["n_flagged"] = int(flags.gamma.size)
    out["flag_fraction"] = float(flags.gamma.size / max(report.n_entries, 1))
    if flags.agreement is not None:
        out["flag_sign_agreement"] = flags.agreement
    return out
