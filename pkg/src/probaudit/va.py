"""Pluggable verbal-autopsy posterior algorithms.

Two algorithms are provided: "interva4", which multiplies probbase entries
over yes answers only (no and missing are ignored), and "naive_bayes",
which uses both yes and no answers.  Both are computed in log space and
normalised with a max shift, so long questionnaires cannot underflow.

These row-level functions are the reference implementations; the batched
scoring kernels in :mod:`probaudit.kernels` are checked against them.
"""

from __future__ import annotations

import numpy as np

from .core import (
    NA_CODE,
    NO_CODE,
    YES_CODE,
    CauseDistribution,
    Prior,
    Probbase,
    ValidationError,
)

ALGORITHM_NAMES = ("interva4", "naive_bayes")

INTERVA4 = 0
NAIVE_BAYES = 1


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = np.exp(logits - logits.max())
    return z / z.sum()


def interva4_posterior(a, pb: Probbase, prior: Prior) -> CauseDistribution:
    """Posterior with only yes answers contributing.

    V_j is proportional to prior_j times the product of q_jk over questions
    answered yes.  A row with no yes answers returns the prior unchanged.
    """
    a = np.asarray(a, dtype=np.int8)
    yes = a == YES_CODE
    logits = np.log(prior.probabilities) + np.log(pb.values[:, yes]).sum(axis=1)
    return CauseDistribution(_softmax(logits))


def naive_bayes_posterior(a, pb: Probbase, prior: Prior) -> CauseDistribution:
    """Posterior using yes and no answers; missing cells are skipped."""
    a = np.asarray(a, dtype=np.int8)
    yes = a == YES_CODE
    no = a == NO_CODE
    logits = (
        np.log(prior.probabilities)
        + np.log(pb.values[:, yes]).sum(axis=1)
        + np.log1p(-pb.values[:, no]).sum(axis=1)
    )
    return CauseDistribution(_softmax(logits))


def impute_question_prob(dist: CauseDistribution, pb: Probbase, k: int) -> float:
    """Imputed probability of a yes answer to question k under ``dist``.

    This is the mixture sum_j dist_j * q_jk; with clamped probbase entries
    the result stays inside the clamp interval.
    """
    if not 0 <= k < pb.n_questions:
        raise ValidationError(f"question index {k} outside [0, {pb.n_questions})")
    return float(dist.probabilities @ pb.values[:, k])


class VaAlgorithm:
    """Named posterior evaluator usable by the scorer and the CLI."""

    def __init__(self, name: str, code: int, posterior):
        self.name = name
        self.code = code
        self._posterior = posterior

    def posterior(self, a, pb: Probbase, prior: Prior) -> CauseDistribution:
        return self._posterior(a, pb, prior)

    def __repr__(self):
        return f"VaAlgorithm({self.name!r})"


_ALGORITHMS = {
    "interva4": VaAlgorithm("interva4", INTERVA4, interva4_posterior),
    "naive_bayes": VaAlgorithm("naive_bayes", NAIVE_BAYES, naive_bayes_posterior),
}


def get_algorithm(name) -> VaAlgorithm:
    if isinstance(name, VaAlgorithm):
        return name
    try:
        return _ALGORITHMS[name]
    except KeyError:
        raise ValidationError(
            f"unknown algorithm {name!r}; choose from {ALGORITHM_NAMES}"
        ) from None
