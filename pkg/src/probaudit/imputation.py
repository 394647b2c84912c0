"""Held-out imputation scoring: the cross-entropy objective.

For every block in turn, the block's answers are hidden, each interview's
cause posterior is recomputed from the remaining answers, the hidden
answers are imputed as posterior-weighted probbase mixtures, and the
imputed probabilities are scored by cross-entropy against the recorded
answers.  Lower is better; 0 would mean perfect imputation.

Two denominator conventions are supported (see ``DENOMINATORS``):

* ``scored`` (default): averages over cells that were actually answered.
* ``ns``: averages over all n*s cells, scoring missing cells as "no".

With no missing cells the two coincide exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .core import (
    NA_CODE,
    NO_CODE,
    YES_CODE,
    AnswerMatrix,
    BlockPartition,
    Prior,
    Probbase,
    ValidationError,
    validate_inputs,
)
from .va import NAIVE_BAYES, VaAlgorithm, get_algorithm

DENOMINATORS = ("scored", "ns")


def cross_entropy(y_hat: float, y: int) -> float:
    """Cross-entropy loss -(y ln y_hat + (1-y) ln(1-y_hat)).

    y_hat must lie strictly inside (0, 1); probbase clamping guarantees
    this for every imputed probability.
    """
    y_hat = float(y_hat)
    if not 0.0 < y_hat < 1.0:
        raise ValidationError(f"predicted probability {y_hat!r} outside (0, 1)")
    y = int(y)
    if y not in (0, 1):
        raise ValidationError(f"indicator must be 0 or 1, got {y!r}")
    return -(y * np.log(y_hat) + (1 - y) * np.log1p(-y_hat))


@dataclass(frozen=True)
class PerCellTable:
    """COO table of per-cell imputations: one entry per (row, question)."""

    row: np.ndarray
    question: np.ndarray
    ahat: np.ndarray
    answer: np.ndarray  # original int8 code (1/0/-1)
    loss: np.ndarray


@dataclass(frozen=True)
class ImputationResult:
    overall: float
    per_block: np.ndarray
    scored_cells: int
    denominator: str
    algorithm: str
    per_cell: PerCellTable | None = None


def _check_clamped(pb: Probbase) -> None:
    v = pb.values
    if v.min() <= 0.0 or v.max() >= 1.0:
        jk = np.argwhere((v <= 0.0) | (v >= 1.0))[0]
        raise ValidationError(
            f"probbase entry ({jk[0]}, {jk[1]}) = {v[jk[0], jk[1]]!r} is not "
            "strictly inside (0, 1); apply clamp_probbase first"
        )


class ScoringContext:
    """A dataset packed for repeated scoring of candidate probbases.

    Construction packs the answers once; ``evaluate`` then costs one pass
    of the scoring kernel per probbase.  ``prepare_base`` additionally
    caches per-block posteriors so that single-entry displacements (the
    finite-difference audit) can be rescored incrementally.
    """

    def __init__(
        self,
        answers: AnswerMatrix,
        prior: Prior,
        partition: BlockPartition,
        algorithm="interva4",
        denominator: str = "scored",
        threads: int = 1,
    ):
        if denominator not in DENOMINATORS:
            raise ValidationError(
                f"denominator must be one of {DENOMINATORS}, got {denominator!r}"
            )
        self.answers = answers
        self.prior = prior
        self.partition = partition
        self.algorithm: VaAlgorithm = get_algorithm(algorithm)
        self.denominator = denominator
        self.threads = int(threads)

        codes = answers.values
        self.n, self.s = codes.shape
        self._yes = np.ascontiguousarray((codes == YES_CODE), dtype=np.float64)
        self._no = np.ascontiguousarray((codes == NO_CODE), dtype=np.float64)
        self._obs = self._yes + self._no
        self.scored_cells = int(round(self._obs.sum()))
        if self.scored_cells == 0:
            raise ValidationError("every cell is missing; nothing to score")
        self._logpi = np.log(prior.probabilities)
        self._block_cols = np.concatenate(
            [np.asarray(blk, dtype=np.int64) for blk in partition.blocks]
        )
        self._block_ptr = np.zeros(partition.n_blocks + 1, dtype=np.int64)
        np.cumsum([len(blk) for blk in partition.blocks], out=self._block_ptr[1:])
        self._base = None

    # -- full evaluations -------------------------------------------------

    def _run_kernel(self, pb: Probbase, ahat_out=None):
        validate_inputs(pb, self.prior, self.answers, self.partition)
        _check_clamped(pb)
        q = pb.values
        return kernels.score_blocks(
            self._yes,
            self._no,
            q,
            np.log(q),
            np.log1p(-q),
            self._logpi,
            self._block_cols,
            self._block_ptr,
            self.algorithm.code,
            self.threads,
            ahat_out,
        )

    def _combine(self, scored_sums, na_sums):
        if self.denominator == "scored":
            per_block = scored_sums
            overall = scored_sums.sum() / self.scored_cells
        else:
            per_block = scored_sums + na_sums
            overall = per_block.sum() / (self.n * self.s)
        return float(overall), per_block

    def score(self, pb: Probbase, keep_cells: bool = False) -> ImputationResult:
        ahat = np.empty((self.n, self.s)) if keep_cells else None
        scored_sums, na_sums, _ = self._run_kernel(pb, ahat)
        overall, per_block = self._combine(scored_sums, na_sums)
        per_cell = None
        if keep_cells:
            codes = self.answers.values
            loss = np.where(
                codes == YES_CODE,
                -np.log(ahat),
                -np.log1p(-ahat),  # both "no" and NA-as-no score the complement
            )
            rows, cols = np.indices(ahat.shape)
            per_cell = PerCellTable(
                row=rows.ravel(),
                question=cols.ravel(),
                ahat=ahat.ravel(),
                answer=codes.ravel().copy(),
                loss=loss.ravel(),
            )
        return ImputationResult(
            overall=overall,
            per_block=per_block,
            scored_cells=self.scored_cells,
            denominator=self.denominator,
            algorithm=self.algorithm.name,
            per_cell=per_cell,
        )

    def evaluate(self, pb: Probbase) -> float:
        scored_sums, na_sums, _ = self._run_kernel(pb)
        return self._combine(scored_sums, na_sums)[0]

    # -- incremental single-entry displacement ----------------------------

    def prepare_base(self, pb: Probbase) -> None:
        """Cache posteriors and per-cell losses at ``pb``.

        After this, ``evaluate_entry`` rescoring only touches the rows and
        blocks a single displaced entry can influence.
        """
        validate_inputs(pb, self.prior, self.answers, self.partition)
        _check_clamped(pb)
        q = pb.values
        logq = np.log(q)
        log1mq = np.log1p(-q)
        nb = self.algorithm.code == NAIVE_BAYES

        full = self._yes @ logq.T
        if nb:
            full += self._no @ log1mq.T
        full += self._logpi

        blocks = self.partition.blocks
        logits, posts = [], []
        ahat = np.empty((self.n, self.s))
        for cols in blocks:
            cols = list(cols)
            sub = self._yes[:, cols] @ logq[:, cols].T
            if nb:
                sub += self._no[:, cols] @ log1mq[:, cols].T
            lg = full - sub
            shifted = lg - lg.max(axis=1, keepdims=True)
            v = np.exp(shifted)
            v /= v.sum(axis=1, keepdims=True)
            logits.append(lg)
            posts.append(v)
            ahat[:, cols] = v @ q[:, cols]

        log_a = np.log(ahat)
        log_1ma = np.log1p(-ahat)
        loss_obs = -(self._yes * log_a + (self._obs - self._yes) * log_1ma)
        loss_na = -((1.0 - self._obs) * log_1ma)
        self._base = {
            "pb": pb,
            "q": q,
            "logq": logq,
            "log1mq": log1mq,
            "logits": logits,
            "posts": posts,
            "ahat": ahat,
            "loss_obs": loss_obs,
            "loss_na": loss_na,
            "scored_total": loss_obs.sum(),
            "na_total": loss_na.sum(),
            "yes_rows": [np.nonzero(self._yes[:, k])[0] for k in range(self.s)],
            "obs_rows": [np.nonzero(self._obs[:, k])[0] for k in range(self.s)],
        }

    def base_objective(self) -> float:
        base = self._require_base()
        return self._totals_to_overall(base["scored_total"], base["na_total"])

    def _require_base(self):
        if self._base is None:
            raise ValidationError("call prepare_base before incremental evaluation")
        return self._base

    def _totals_to_overall(self, scored_total: float, na_total: float) -> float:
        if self.denominator == "scored":
            return float(scored_total / self.scored_cells)
        return float((scored_total + na_total) / (self.n * self.s))

    def evaluate_entry(self, j: int, k: int, value: float) -> float:
        """Objective with base entry (j, k) replaced by ``value``.

        Equivalent to a full evaluation of the displaced probbase; only
        rows whose posterior can change are rescored.
        """
        base = self._require_base()
        if not 0.0 < value < 1.0:
            raise ValidationError(f"displaced entry {value!r} outside (0, 1)")
        q = base["q"]
        nb = self.algorithm.code == NAIVE_BAYES
        delta_ly = np.log(value) - base["logq"][j, k]
        delta_l1 = np.log1p(-value) - base["log1mq"][j, k]

        scored_total = base["scored_total"]
        na_total = base["na_total"]
        block_of_k = self.partition.block_of[k]
        blocks = self.partition.blocks

        for l, cols in enumerate(blocks):
            if l == block_of_k:
                continue
            rows = base["obs_rows"][k] if nb else base["yes_rows"][k]
            if rows.size == 0:
                continue
            lg = base["logits"][l][rows].copy()
            if nb:
                lg[:, j] += np.where(
                    self._yes[rows, k] != 0.0, delta_ly, delta_l1
                )
            else:
                lg[:, j] += delta_ly
            lg -= lg.max(axis=1, keepdims=True)
            v = np.exp(lg)
            v /= v.sum(axis=1, keepdims=True)
            cols = list(cols)
            ahat = v @ q[:, cols]
            yb = self._yes[np.ix_(rows, cols)]
            ob = self._obs[np.ix_(rows, cols)]
            log_a = np.log(ahat)
            log_1ma = np.log1p(-ahat)
            scored_total += (
                -(yb * log_a + (ob - yb) * log_1ma).sum()
                - base["loss_obs"][np.ix_(rows, cols)].sum()
            )
            na_total += (
                -((1.0 - ob) * log_1ma).sum()
                - base["loss_na"][np.ix_(rows, cols)].sum()
            )

        # Block containing k: posteriors are unchanged (the column is
        # masked there) but the imputed column shifts by a rank-one update.
        v = base["posts"][block_of_k]
        ahat_k = base["ahat"][:, k] + v[:, j] * (value - q[j, k])
        yk = self._yes[:, k]
        ok = self._obs[:, k]
        log_a = np.log(ahat_k)
        log_1ma = np.log1p(-ahat_k)
        scored_total += (
            -(yk * log_a + (ok - yk) * log_1ma).sum() - base["loss_obs"][:, k].sum()
        )
        na_total += (
            -((1.0 - ok) * log_1ma).sum() - base["loss_na"][:, k].sum()
        )
        return self._totals_to_overall(scored_total, na_total)


def imputation_accuracy(
    answers: AnswerMatrix,
    pb: Probbase,
    prior: Prior,
    part: BlockPartition,
    algorithm="interva4",
    denominator: str = "scored",
    keep_cells: bool = False,
    threads: int = 1,
) -> ImputationResult:
    """Estimate the imputation accuracy of ``pb`` on a dataset."""
    ctx = ScoringContext(answers, prior, part, algorithm, denominator, threads)
    return ctx.score(pb, keep_cells=keep_cells)


# -- exact objective on an enumerated answer distribution -----------------


def exact_imputation_accuracy(
    patterns: np.ndarray,
    probs: np.ndarray,
    pb: Probbase,
    prior: Prior,
    part: BlockPartition,
    algorithm="interva4",
    denominator: str = "scored",
) -> float:
    """Population value of the objective on an enumerated distribution.

    ``patterns`` is an (m, s) int8 matrix of answer patterns and ``probs``
    their probabilities (an (m, r) joint over causes is accepted and
    marginalised).  This is the brute-force oracle used to test the
    dataset estimator: it walks every pattern with the reference row-level
    posterior functions and never touches the batched kernels.
    """
    patterns = np.asarray(patterns, dtype=np.int8)
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim == 2:
        probs = probs.sum(axis=1)
    if patterns.shape[0] != probs.shape[0]:
        raise ValidationError("patterns and probabilities disagree on m")
    if abs(probs.sum() - 1.0) > 1e-9:
        raise ValidationError(f"pattern probabilities sum to {probs.sum()!r}")
    alg = get_algorithm(algorithm)
    _check_clamped(pb)
    s = patterns.shape[1]

    scored_sum = 0.0
    scored_weight = 0.0
    na_sum = 0.0
    for alpha, p in zip(patterns, probs):
        if p == 0.0:
            continue
        for cols in part.blocks:
            masked = alpha.copy()
            masked[list(cols)] = NA_CODE
            dist = alg.posterior(masked, pb, prior)
            for k in cols:
                ahat = float(dist.probabilities @ pb.values[:, k])
                if alpha[k] == NA_CODE:
                    na_sum += -p * np.log1p(-ahat)
                else:
                    y = 1 if alpha[k] == YES_CODE else 0
                    scored_sum += p * cross_entropy(ahat, y)
                    scored_weight += p
    if denominator == "scored":
        if scored_weight == 0.0:
            raise ValidationError("distribution assigns no mass to observed cells")
        return scored_sum / scored_weight
    return (scored_sum + na_sum) / s


class EnumerationContext:
    """Drop-in scoring context backed by an enumerated distribution.

    Provides the same ``evaluate`` surface as :class:`ScoringContext`, so
    the audit and optimizer can run against exact objectives in tests.
    """

    def __init__(self, patterns, probs, prior, part, algorithm="interva4",
                 denominator: str = "scored"):
        self.patterns = np.asarray(patterns, dtype=np.int8)
        probs = np.asarray(probs, dtype=np.float64)
        self.probs = probs.sum(axis=1) if probs.ndim == 2 else probs
        self.prior = prior
        self.partition = part
        self.algorithm = get_algorithm(algorithm)
        self.denominator = denominator

    def evaluate(self, pb: Probbase) -> float:
        return exact_imputation_accuracy(
            self.patterns,
            self.probs,
            pb,
            self.prior,
            self.partition,
            self.algorithm,
            self.denominator,
        )
