"""probaudit: score, audit and partially learn VA probbase matrices.

The package evaluates a candidate probbase by how well it imputes
held-out answer blocks from unlabelled questionnaires, flags entries
whose adjustment would improve imputation, and ships a correlated-probit
simulator for end-to-end validation.
"""

__version__ = "0.1.0"

from .core import (
    AnswerMatrix,
    BlockPartition,
    CauseDistribution,
    LetterCodeTable,
    Prior,
    Probbase,
    ValidationError,
    clamp_probbase,
    decode_letter_probbase,
    mask_block,
    validate_inputs,
)
from .va import (
    get_algorithm,
    impute_question_prob,
    interva4_posterior,
    naive_bayes_posterior,
)
from .imputation import (
    ImputationResult,
    ScoringContext,
    cross_entropy,
    exact_imputation_accuracy,
    imputation_accuracy,
)
from .audit import (
    AuditReport,
    PerturbationSpec,
    audit_probbase,
    gradient_entry,
    high_confidence_flags,
    perturb_probbase,
    roc_auc,
    wilcoxon_rank_sum,
)
from .simulate import (
    CovarianceModel,
    SimulationConfig,
    cholesky_psd,
    exact_tiny_distribution,
    normal_quantile,
    simulate_dataset,
)
from .blocks import (
    DendrogramCut,
    estimate_block_covariances,
    learn_partition,
    pairwise_association,
)
from .optimize import OptimizeConfig, descend

__all__ = [name for name in dir() if not name.startswith("_")]
