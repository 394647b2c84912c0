"""Scripted benchmark scenarios with acceptance bands.

Each scenario builds a synthetic desk-scale instance (default 15 causes,
60 questions, 12 blocks, exchangeable within-block correlation 0.3),
simulates data, runs the relevant pipeline and checks its results against
fixed bands.  Every random choice is derived from the single config seed,
so a scenario is reproducible bit for bit.  Plot data is emitted as plain
CSV; nothing here renders figures.
"""

from __future__ import annotations

import math
import os
import time
from dataclasses import dataclass

import numpy as np

from .audit import PerturbationSpec, audit_probbase, high_confidence_flags, perturb_probbase, roc_curve
from .core import AnswerMatrix, BlockPartition, Prior, Probbase, ValidationError
from .imputation import ScoringContext, exact_imputation_accuracy
from .io import write_rows
from .simulate import CovarianceModel, SimulationConfig, exact_tiny_distribution, simulate_dataset

SCENARIOS = (
    "table1",
    "resample_q4",
    "signed_offset_audit",
    "lemma1_check",
    "theorem1_check",
)

_DEFAULT_REPEATS = {
    "table1": 1,
    "resample_q4": 50,
    "signed_offset_audit": 1,
    "lemma1_check": 1000,
    "theorem1_check": 100,
}


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: str
    n: int = 1500
    r: int = 15
    s: int = 60
    b: int = 12
    seed: int = 0
    repeats: int | None = None
    rho_within: float = 0.3
    missing_rate: float = 0.0
    algorithm: str = "interva4"
    denominator: str = "scored"
    eps: float = 0.01
    tau: float = 0.2
    threads: int = 1

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValidationError(
                f"unknown scenario {self.scenario!r}; choose from {SCENARIOS}"
            )
        if min(self.n, self.r, self.s, self.b) < 1:
            raise ValidationError("scale parameters must be positive")
        if self.b > self.s:
            raise ValidationError(f"b={self.b} exceeds s={self.s}")

    @property
    def effective_repeats(self) -> int:
        return self.repeats if self.repeats is not None else _DEFAULT_REPEATS[self.scenario]


def _child_seeds(seed: int, n: int) -> list:
    return [
        int(c.generate_state(1, dtype=np.uint64)[0])
        for c in np.random.SeedSequence(seed).spawn(n)
    ]


# Mixture bands for synthetic probbase entries: (weight, low, high).
# Skewed toward near-certain answers the way expert probbases are, with
# enough entries above 0.2 to populate the audit-eligible classes.
DESK_BANDS = (
    (0.50, 0.005, 0.05),
    (0.12, 0.05, 0.20),
    (0.18, 0.22, 0.65),
    (0.20, 0.75, 0.97),
)

# Geometric decay of cause frequencies; rare causes keep the audit honest
# (their entries see little data, so their gradients stay noisy).
DESK_PRIOR_DECAY = 0.8


def desk_instance(
    r: int,
    s: int,
    b: int,
    seed: int,
    rho_within: float = 0.3,
    bands=None,
    prior_decay: float | None = None,
) -> tuple[Probbase, Prior, BlockPartition, CovarianceModel]:
    """Synthetic instance shaped like a real probbase.

    Entries are drawn from a mixture skewed toward near-certain answers
    (mostly rare symptoms, some near-universal ones), which keeps the true
    probbase's imputation loss low while leaving a sizeable population of
    entries above the 0.2 audit-eligibility threshold.  Cause frequencies
    decay geometrically with mild jitter.
    """
    bands = DESK_BANDS if bands is None else bands
    prior_decay = DESK_PRIOR_DECAY if prior_decay is None else prior_decay
    rng = np.random.default_rng(seed)
    u = rng.random((r, s))
    values = np.empty((r, s))
    edges = np.concatenate([[0.0], np.cumsum([w for w, _, _ in bands])])
    edges[-1] = max(edges[-1], 1.0)
    for (_weight, lo_v, hi_v), lo_w, hi_w in zip(bands, edges[:-1], edges[1:]):
        mask = (u >= lo_w) & (u < hi_w)
        values[mask] = rng.uniform(lo_v, hi_v, int(mask.sum()))
    pb = Probbase(
        values,
        [f"C{j + 1:02d}" for j in range(r)],
        [f"Q{k + 1:02d}" for k in range(s)],
    )
    pi = prior_decay ** np.arange(r) * (0.8 + 0.4 * rng.random(r))
    prior = Prior(pi / pi.sum())
    part = BlockPartition.contiguous(s, b)
    cov = CovarianceModel.exchangeable(part, r, rho_within)
    return pb, prior, part, cov


def _simulate(cfg: ExperimentConfig, pb, prior, part, cov, data_seed: int):
    sim = simulate_dataset(
        SimulationConfig(
            n=cfg.n,
            probbase=pb,
            prior=prior,
            partition=part,
            covariance=cov,
            missing_rate=cfg.missing_rate,
            seed=data_seed,
        )
    )
    ctx = ScoringContext(
        sim.answers, prior, part, cfg.algorithm, cfg.denominator, cfg.threads
    )
    return sim, ctx


def wilson_interval(successes: int, trials: int, z: float = 1.96) -> tuple[float, float]:
    if trials == 0:
        return 0.0, 1.0
    p = successes / trials
    denom = 1.0 + z * z / trials
    centre = (p + z * z / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / denom
    return max(0.0, centre - half), min(1.0, centre + half)


# -- table 1 -----------------------------------------------------------------

TABLE1_ORDER = ("chaotic", "shuffled", "global_gaussian", "sparse_gaussian", "true")


@dataclass(frozen=True)
class Table1Result:
    config: ExperimentConfig
    objectives: dict
    ordering_ok: bool
    ratio_chaotic_true: float
    seconds: float

    @property
    def passed(self) -> bool:
        return self.ordering_ok and self.ratio_chaotic_true >= 3.0

    def files(self) -> dict:
        rows = [[name, self.objectives[name]] for name in TABLE1_ORDER]
        return {"table1.csv": (["probbase", "objective"], rows)}

    def summary_lines(self) -> list:
        lines = [f"scenario=table1 n={self.config.n} seed={self.config.seed}"]
        lines += [f"  I({name}) = {self.objectives[name]:.6f}" for name in TABLE1_ORDER]
        lines.append(
            "  strict ordering chaotic > shuffled > global > sparse >= true: "
            + ("PASS" if self.ordering_ok else "FAIL")
        )
        lines.append(
            f"  I(chaotic) / I(true) = {self.ratio_chaotic_true:.2f} (band >= 3): "
            + ("PASS" if self.ratio_chaotic_true >= 3.0 else "FAIL")
        )
        lines.append(f"  runtime: {self.seconds:.1f} s")
        lines.append("overall: " + ("PASS" if self.passed else "FAIL"))
        return lines


def run_table1(cfg: ExperimentConfig) -> Table1Result:
    t0 = time.perf_counter()
    inst_seed, data_seed, s1, s2, s3, s4 = _child_seeds(cfg.seed, 6)
    pb, prior, part, cov = desk_instance(cfg.r, cfg.s, cfg.b, inst_seed, cfg.rho_within)
    _, ctx = _simulate(cfg, pb, prior, part, cov, data_seed)

    specs = {
        "chaotic": PerturbationSpec("chaotic", seed=s1),
        "shuffled": PerturbationSpec("shuffled", seed=s2),
        "global_gaussian": PerturbationSpec("global_gaussian", sigma=0.05, seed=s3),
        "sparse_gaussian": PerturbationSpec(
            "sparse_gaussian", count=20, sigma=0.05, seed=s4
        ),
    }
    objectives = {}
    for name in TABLE1_ORDER[:-1]:
        perturbed, _ = perturb_probbase(pb, specs[name])
        objectives[name] = ctx.evaluate(perturbed)
    objectives["true"] = ctx.evaluate(pb)

    vals = [objectives[name] for name in TABLE1_ORDER]
    ordering_ok = all(a > b for a, b in zip(vals[:3], vals[1:4])) and vals[3] >= vals[4]
    return Table1Result(
        config=cfg,
        objectives=objectives,
        ordering_ok=ordering_ok,
        ratio_chaotic_true=objectives["chaotic"] / objectives["true"],
        seconds=time.perf_counter() - t0,
    )


# -- repeated sparse perturbation detection ----------------------------------


@dataclass(frozen=True)
class ResampleResult:
    config: ExperimentConfig
    objective_true: float
    objectives_perturbed: np.ndarray
    sanity_objectives: np.ndarray  # near-zero perturbations, coin-flip regime
    band: float

    @property
    def fraction(self) -> float:
        return float((self.objectives_perturbed > self.objective_true).mean())

    @property
    def sanity_fraction(self) -> float:
        return float((self.sanity_objectives > self.objective_true).mean())

    @property
    def interval(self) -> tuple:
        hits = int((self.objectives_perturbed > self.objective_true).sum())
        return wilson_interval(hits, self.objectives_perturbed.size)

    @property
    def passed(self) -> bool:
        return self.fraction >= self.band

    def files(self) -> dict:
        rows = [
            [i, v, self.objective_true, int(v > self.objective_true)]
            for i, v in enumerate(self.objectives_perturbed)
        ]
        lo, hi = self.interval
        frac_rows = [
            ["perturbed", self.fraction, lo, hi],
            ["near_zero_sanity", self.sanity_fraction, "", ""],
        ]
        return {
            "detections.csv": (
                ["repeat", "objective_perturbed", "objective_true", "detected"],
                rows,
            ),
            "fractions.csv": (["population", "fraction", "ci_lo", "ci_hi"], frac_rows),
        }

    def summary_lines(self) -> list:
        lo, hi = self.interval
        return [
            f"scenario=resample_q4 n={self.config.n} seed={self.config.seed} "
            f"repeats={self.objectives_perturbed.size}",
            f"  detection fraction = {self.fraction:.3f} (95% CI {lo:.3f}-{hi:.3f})",
            f"  near-zero sanity fraction = {self.sanity_fraction:.3f} (expect ~0.5)",
            f"  band: fraction >= {self.band:.2f}: "
            + ("PASS" if self.passed else "FAIL"),
            "overall: " + ("PASS" if self.passed else "FAIL"),
        ]


def run_resample_q4(cfg: ExperimentConfig) -> ResampleResult:
    repeats = cfg.effective_repeats
    inst_seed, data_seed, pert_root, sanity_root = _child_seeds(cfg.seed, 4)
    pb, prior, part, cov = desk_instance(cfg.r, cfg.s, cfg.b, inst_seed, cfg.rho_within)
    _, ctx = _simulate(cfg, pb, prior, part, cov, data_seed)
    objective_true = ctx.evaluate(pb)

    def draw(root: int, sigma: float) -> np.ndarray:
        out = np.empty(repeats)
        for i, seed in enumerate(_child_seeds(root, repeats)):
            spec = PerturbationSpec("sparse_gaussian", count=20, sigma=sigma, seed=seed)
            out[i] = ctx.evaluate(perturb_probbase(pb, spec)[0])
        return out

    return ResampleResult(
        config=cfg,
        objective_true=objective_true,
        objectives_perturbed=draw(pert_root, 0.05),
        sanity_objectives=draw(sanity_root, 1e-9),
        band=0.85 if cfg.n >= 10000 else 0.75,
    )


# -- signed-offset audit -------------------------------------------------------


@dataclass(frozen=True)
class SignedOffsetResult:
    config: ExperimentConfig
    cause_labels: tuple
    question_labels: tuple
    report: object  # AuditReport
    n_eligible: int
    flag_agreement: float | None
    flag_count: int
    flag_threshold: float
    bands: tuple  # (name, value, ok) triples

    @property
    def passed(self) -> bool:
        return all(ok for _, _, ok in self.bands)

    def files(self) -> dict:
        rep = self.report
        entry_rows = [
            [
                self.cause_labels[rep.j[i]],
                self.question_labels[rep.k[i]],
                rep.gamma[i],
                rep.transformed[i],
                int(rep.one_sided[i]),
                int(rep.classification[i]),
                int(rep.truth[i]),
            ]
            for i in range(rep.n_entries)
        ]
        files = {
            "audit_entries.csv": (
                ["cause", "question", "gamma", "atan100_gamma", "one_sided",
                 "classification", "truth"],
                entry_rows,
            ),
            "densities.csv": (
                ["truth", "gamma", "atan100_gamma"],
                [
                    [int(rep.truth[i]), rep.gamma[i], rep.transformed[i]]
                    for i in range(rep.n_entries)
                ],
            ),
            "metrics.csv": (
                ["metric", "value"],
                sorted((k, v) for k, v in rep.metrics.items()),
            ),
        }
        g, y = rep.gamma, rep.truth
        comparisons = {
            "roc_pos_vs_neg.csv": (g[y != 0], (y[y != 0] == 1)),
            "roc_pos_vs_zero.csv": (g[y >= 0], (y[y >= 0] == 1)),
            "roc_neg_vs_zero.csv": (-g[y <= 0], (y[y <= 0] == -1)),
        }
        for name, (scores, labels) in comparisons.items():
            if labels.any() and not labels.all():
                thresholds, fpr, tpr = roc_curve(scores, labels)
                files[name] = (
                    ["threshold", "fpr", "tpr"],
                    [list(row) for row in zip(thresholds, fpr, tpr)],
                )
        return files

    def summary_lines(self) -> list:
        lines = [
            f"scenario=signed_offset_audit n={self.config.n} seed={self.config.seed}",
            f"  eligible entries audited: {self.n_eligible}",
            f"  flags: {self.flag_count} entries with |gamma| > "
            f"{self.flag_threshold:.4g}, sign agreement "
            + (f"{self.flag_agreement:.3f}" if self.flag_agreement is not None else "n/a"),
        ]
        for name, value, ok in self.bands:
            lines.append(f"  {name}: {value:.4g} " + ("PASS" if ok else "FAIL"))
        lines.append("overall: " + ("PASS" if self.passed else "FAIL"))
        return lines


def run_signed_offset_audit(cfg: ExperimentConfig) -> SignedOffsetResult:
    inst_seed, data_seed, pert_seed = _child_seeds(cfg.seed, 3)
    pb, prior, part, cov = desk_instance(cfg.r, cfg.s, cfg.b, inst_seed, cfg.rho_within)
    sim, _ = _simulate(cfg, pb, prior, part, cov, data_seed)

    spec = PerturbationSpec(
        "signed_offset", delta=0.2, threshold=0.2, seed=pert_seed,
        stratify_by_cause=True,
    )
    perturbed, truth = perturb_probbase(pb, spec)
    eligible = np.argwhere(pb.values > spec.threshold)
    report = audit_probbase(
        perturbed,
        sim.answers,
        prior,
        part,
        algorithm=cfg.algorithm,
        eps=cfg.eps,
        entries=eligible,
        truth=truth,
        tau=cfg.tau,
        denominator=cfg.denominator,
        threads=cfg.threads,
    )
    metrics = report.metrics

    # Flag agreement is banded on the scale-matched quantile (~8.5% of
    # entries), since the absolute 0.2 cutoff tracks gamma's scale only at
    # the original benchmark's dimensions.  Both sets are reported.
    flags = high_confidence_flags(report, fraction=0.085)
    worst_pair_logp = max(
        metrics["wilcoxon_log10p_pos_zero"], metrics["wilcoxon_log10p_neg_zero"]
    )
    bands = (
        (
            "AUC(+ vs -) in [0.70, 0.95]",
            metrics["auc_pos_vs_neg"],
            0.70 <= metrics["auc_pos_vs_neg"] <= 0.95,
        ),
        (
            "AUC(+ vs 0) >= 0.65",
            metrics["auc_pos_vs_zero"],
            metrics["auc_pos_vs_zero"] >= 0.65,
        ),
        (
            "AUC(- vs 0) >= 0.65",
            metrics["auc_neg_vs_zero"],
            metrics["auc_neg_vs_zero"] >= 0.65,
        ),
        (
            "log10 p (perturbed vs unperturbed, both signs) < -10",
            worst_pair_logp,
            worst_pair_logp < -10.0,
        ),
        (
            "flag sign agreement (8.5% quantile) >= 0.95",
            flags.agreement if flags.agreement is not None else 0.0,
            flags.agreement is not None and flags.agreement >= 0.95,
        ),
    )
    return SignedOffsetResult(
        config=cfg,
        cause_labels=pb.cause_labels,
        question_labels=pb.question_labels,
        report=report,
        n_eligible=int(eligible.shape[0]),
        flag_agreement=flags.agreement,
        flag_count=int(flags.gamma.size),
        flag_threshold=flags.threshold,
        bands=bands,
    )


# -- estimator bias / rate check ----------------------------------------------


@dataclass(frozen=True)
class Lemma1Result:
    config: ExperimentConfig
    exact_value: float
    boot_values: dict  # sample size -> np.ndarray of estimates
    passed_bias: bool
    passed_rate: bool

    @property
    def mean(self) -> float:
        return float(self.boot_values[50].mean())

    @property
    def se(self) -> float:
        v = self.boot_values[50]
        return float(v.std(ddof=1) / math.sqrt(v.size))

    def rms(self, n: int) -> float:
        return float(np.sqrt(((self.boot_values[n] - self.exact_value) ** 2).mean()))

    @property
    def passed(self) -> bool:
        return self.passed_bias and self.passed_rate

    def files(self) -> dict:
        rows = [
            [n, i, v]
            for n in sorted(self.boot_values)
            for i, v in enumerate(self.boot_values[n])
        ]
        stats = [
            ["exact", self.exact_value],
            ["mean_n50", self.mean],
            ["se_n50", self.se],
            ["rms_n50", self.rms(50)],
            ["rms_n200", self.rms(200)],
            ["rms_ratio", self.rms(200) / self.rms(50)],
        ]
        return {
            "bootstrap.csv": (["n", "replicate", "estimate"], rows),
            "lemma1.csv": (["metric", "value"], stats),
        }

    def summary_lines(self) -> list:
        return [
            f"scenario=lemma1_check seed={self.config.seed} "
            f"replicates={self.boot_values[50].size}",
            f"  exact objective = {self.exact_value:.8f}",
            f"  bootstrap mean (n=50) = {self.mean:.8f} +- {self.se:.8f}",
            "  |mean - exact| <= 3 SE: " + ("PASS" if self.passed_bias else "FAIL"),
            f"  rms(n=200) / rms(n=50) = {self.rms(200) / self.rms(50):.3f} "
            "(band <= 0.6): " + ("PASS" if self.passed_rate else "FAIL"),
            "overall: " + ("PASS" if self.passed else "FAIL"),
        ]


def run_lemma1_check(cfg: ExperimentConfig) -> Lemma1Result:
    replicates = cfg.effective_repeats
    inst_seed, pert_seed, boot_seed = _child_seeds(cfg.seed, 3)
    rng = np.random.default_rng(inst_seed)
    pb = Probbase(
        rng.uniform(0.15, 0.85, (2, 4)),
        ("C1", "C2"),
        ("Q1", "Q2", "Q3", "Q4"),
    )
    prior = Prior([0.6, 0.4])
    part = BlockPartition.contiguous(4, 2)
    cov = CovarianceModel.exchangeable(part, 2, 0.5)
    scored_pb, _ = perturb_probbase(
        pb, PerturbationSpec("global_gaussian", sigma=0.1, seed=pert_seed)
    )

    patterns, joint = exact_tiny_distribution(pb, prior, part, cov)
    pvec = joint.sum(axis=1)
    exact_value = exact_imputation_accuracy(
        patterns, pvec, scored_pb, prior, part, cfg.algorithm, cfg.denominator
    )

    boot_rng = np.random.default_rng(boot_seed)
    boot_values = {}
    for n in (50, 200):
        vals = np.empty(replicates)
        for i in range(replicates):
            idx = boot_rng.choice(patterns.shape[0], size=n, p=pvec)
            answers = AnswerMatrix(patterns[idx], pb.question_labels)
            ctx = ScoringContext(
                answers, prior, part, cfg.algorithm, cfg.denominator
            )
            vals[i] = ctx.evaluate(scored_pb)
        boot_values[n] = vals

    mean = boot_values[50].mean()
    se = boot_values[50].std(ddof=1) / math.sqrt(replicates)
    rms50 = np.sqrt(((boot_values[50] - exact_value) ** 2).mean())
    rms200 = np.sqrt(((boot_values[200] - exact_value) ** 2).mean())
    return Lemma1Result(
        config=cfg,
        exact_value=exact_value,
        boot_values=boot_values,
        passed_bias=bool(abs(mean - exact_value) <= 3.0 * se),
        passed_rate=bool(rms200 <= 0.6 * rms50),
    )


# -- minimality at the truth ----------------------------------------------------


@dataclass(frozen=True)
class Theorem1Result:
    config: ExperimentConfig
    objective_true: float
    objectives_perturbed: np.ndarray
    tolerance: float = 1e-12

    @property
    def violations(self) -> int:
        return int(
            (self.objectives_perturbed < self.objective_true - self.tolerance).sum()
        )

    @property
    def worst_violation(self) -> float:
        return float(
            max(0.0, (self.objective_true - self.objectives_perturbed).max())
        )

    @property
    def passed(self) -> bool:
        return self.violations == 0

    def files(self) -> dict:
        rows = [
            [i, v, int(v < self.objective_true - self.tolerance)]
            for i, v in enumerate(self.objectives_perturbed)
        ]
        stats = [
            ["objective_true", self.objective_true],
            ["perturbations", self.objectives_perturbed.size],
            ["violations", self.violations],
            ["worst_violation", self.worst_violation],
        ]
        return {
            "perturbations.csv": (["index", "objective", "violation"], rows),
            "theorem1.csv": (["metric", "value"], stats),
        }

    def summary_lines(self) -> list:
        return [
            f"scenario=theorem1_check seed={self.config.seed} "
            f"perturbations={self.objectives_perturbed.size} (naive_bayes, exact)",
            f"  I(true) = {self.objective_true:.8f}",
            f"  violations beyond {self.tolerance:g}: {self.violations} "
            f"(worst {self.worst_violation:.3g})",
            "overall: " + ("PASS" if self.passed else "FAIL"),
        ]


def run_theorem1_check(cfg: ExperimentConfig) -> Theorem1Result:
    repeats = cfg.effective_repeats
    inst_seed, pert_seed = _child_seeds(cfg.seed, 2)
    rng = np.random.default_rng(inst_seed)
    pb = Probbase(
        rng.uniform(0.1, 0.9, (2, 4)),
        ("C1", "C2"),
        ("Q1", "Q2", "Q3", "Q4"),
    )
    prior = Prior([0.55, 0.45])
    part = BlockPartition.singletons(4)
    patterns, joint = exact_tiny_distribution(pb, prior, part)
    pvec = joint.sum(axis=1)

    # Theorem 1's hypothesis needs a calibrated algorithm, so this check is
    # pinned to naive_bayes regardless of the config.
    def exact(candidate: Probbase) -> float:
        return exact_imputation_accuracy(
            patterns, pvec, candidate, prior, part, "naive_bayes", cfg.denominator
        )

    objective_true = exact(pb)
    pert_rng = np.random.default_rng(pert_seed)
    values = np.empty(repeats)
    for i in range(repeats):
        noise = pert_rng.uniform(-0.3, 0.3, pb.values.shape)
        candidate = Probbase(
            np.clip(pb.values + noise, 1e-6, 1.0 - 1e-6),
            pb.cause_labels,
            pb.question_labels,
        )
        values[i] = exact(candidate)
    return Theorem1Result(
        config=cfg,
        objective_true=objective_true,
        objectives_perturbed=values,
    )


# -- dispatch and file output ---------------------------------------------------

_RUNNERS = {
    "table1": run_table1,
    "resample_q4": run_resample_q4,
    "signed_offset_audit": run_signed_offset_audit,
    "lemma1_check": run_lemma1_check,
    "theorem1_check": run_theorem1_check,
}


def run_scenario(cfg: ExperimentConfig):
    return _RUNNERS[cfg.scenario](cfg)


def write_outputs(result, outdir) -> None:
    os.makedirs(outdir, exist_ok=True)
    for name, (header, rows) in result.files().items():
        write_rows(os.path.join(outdir, name), header, rows)
    with open(os.path.join(outdir, "summary.txt"), "w") as fh:
        fh.write("\n".join(result.summary_lines()) + "\n")
