"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data or validation error,
3 acceptance-band failure in experiment mode.  All randomness flows from
the explicit seeds in flags and config files; outputs carry no timestamps,
so a command is byte-reproducible.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import __version__
from . import io as pio
from .audit import audit_probbase, high_confidence_flags, roc_curve, wilcoxon_rank_sum
from .blocks import DendrogramCut, estimate_block_covariances, learn_partition, pairwise_association
from .core import DEFAULT_EPS_CLAMP, ValidationError, validate_inputs
from .experiments import SCENARIOS, ExperimentConfig, run_scenario, write_outputs
from .imputation import ScoringContext
from .optimize import OptimizeConfig, descend
from .simulate import CovarianceModel, SimulationConfig, simulate_dataset
from .va import ALGORITHM_NAMES

log = logging.getLogger("probaudit")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_BAND = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0, help="master RNG seed")
    p.add_argument("--threads", type=int, default=1, help="worker thread cap")
    p.add_argument(
        "--eps-clamp", type=float, default=DEFAULT_EPS_CLAMP,
        help="probbase clamp applied on load",
    )
    p.add_argument("--output-dir", default=".", help="directory for output files")
    p.add_argument("-v", "--verbose", action="count", default=0)


def _data_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--probbase", required=True, help="probbase CSV")
    p.add_argument("--answers", required=True, help="answers CSV")
    p.add_argument("--prior", required=True, help="prior CSV")
    p.add_argument("--blocks", required=True, help="block partition CSV")
    p.add_argument("--letter-table", help="decode the probbase with this code table")
    p.add_argument(
        "--algorithm", choices=ALGORITHM_NAMES, default="interva4",
    )
    p.add_argument(
        "--denominator", choices=("scored", "ns"), default="scored",
        help="average over answered cells (scored) or all n*s cells (ns)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="probaudit", description=__doc__)
    parser.add_argument(
        "--version", action="version",
        version=f"probaudit {__version__} (file schemas v1)",
    )
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="draw a synthetic VA dataset")
    _common_flags(p)
    p.add_argument("--config", required=True, help="simulation config JSON")
    p.add_argument("--answers-out", help="answers CSV (default output-dir/answers.csv)")
    p.add_argument("--labels-out", help="hidden cause labels CSV")
    p.add_argument("--demographics-out", help="also emit opaque age/sex columns")

    p = sub.add_parser("score", help="imputation accuracy of a probbase")
    _common_flags(p)
    _data_flags(p)
    p.add_argument("--report-out", help="per-block report CSV")
    p.add_argument("--per-cell-out", help="per-cell imputations CSV")

    p = sub.add_parser("audit", help="finite-difference audit of probbase entries")
    _common_flags(p)
    _data_flags(p)
    p.add_argument("--eps", type=float, default=0.01, help="finite-difference step")
    p.add_argument("--tau", type=float, default=0.2, help="sign-classification threshold")
    p.add_argument("--entries", help="CSV of (cause,question) pairs to audit")
    p.add_argument("--truth", help="known perturbation-sign table (experiment mode)")
    p.add_argument("--incremental", action="store_true",
                   help="rescore only affected rows per entry")
    p.add_argument("--report-out", help="entry-level report CSV")
    p.add_argument("--metrics-out", help="metrics summary CSV (needs --truth)")

    p = sub.add_parser("optimize", help="coordinate descent on probbase entries")
    _common_flags(p)
    _data_flags(p)
    p.add_argument("--entries", help="CSV of (cause,question) pairs to optimise")
    p.add_argument("--step0", type=float, default=0.5)
    p.add_argument("--shrink", type=float, default=0.5)
    p.add_argument("--sweeps", type=int, default=10)
    p.add_argument("--tol", type=float, default=1e-7)
    p.add_argument("--fd-eps", type=float, default=0.01)
    p.add_argument("--random-init", action="store_true",
                   help="ignore the probbase values and start from 0.5 everywhere")
    p.add_argument("--allow-cold-start", action="store_true",
                   help="required to confirm --random-init")
    p.add_argument("--probbase-out", help="optimised probbase CSV")
    p.add_argument("--trace-out", help="accepted-step trace CSV")

    p = sub.add_parser("blocks", help="learn a block partition from answers")
    _common_flags(p)
    p.add_argument("--answers", required=True)
    p.add_argument("--linkage", choices=("average", "complete"), default="average")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--num-blocks", type=int, help="cut to this many blocks")
    g.add_argument("--height", type=float, help="cut at this dissimilarity")
    p.add_argument("--partition-out", help="partition CSV")
    p.add_argument("--labels", help="cause labels CSV: also estimate covariances")
    p.add_argument("--covariance-out", help="directory for per-(cause,block) matrices")

    p = sub.add_parser("roc", help="ROC curve points from an audit report")
    _common_flags(p)
    p.add_argument("--report", required=True, help="audit entries CSV with truth")
    p.add_argument("--out", help="curve points CSV")

    p = sub.add_parser("experiment", help="run a scripted benchmark scenario")
    _common_flags(p)
    p.add_argument("--scenario", choices=SCENARIOS, required=True)
    p.add_argument("--config", help="scenario config JSON (scale, repeats, ...)")

    return parser


def _load_inputs(args):
    letter = pio.read_letter_table(args.letter_table) if args.letter_table else None
    pb = pio.read_probbase(args.probbase, args.eps_clamp, letter)
    answers = pio.read_answers(args.answers)
    prior, _ = pio.read_prior(args.prior, pb.cause_labels)
    part = pio.read_partition(args.blocks, pb.question_labels)
    validate_inputs(pb, prior, answers, part)
    return pb, answers, prior, part


def _out_path(args, flag_value, default_name):
    return flag_value or os.path.join(args.output_dir, default_name)


def _cmd_simulate(args) -> int:
    with open(args.config) as fh:
        cfg = json.load(fh)
    pb = pio.read_probbase(cfg["probbase"], args.eps_clamp)
    prior, _ = pio.read_prior(cfg["prior"], pb.cause_labels)
    part = pio.read_partition(cfg["partition"], pb.question_labels)
    spec = str(cfg.get("covariance", "diagonal"))
    if spec == "diagonal":
        cov = CovarianceModel.diagonal(part, pb.n_causes)
    elif spec.startswith("exchangeable:"):
        cov = CovarianceModel.exchangeable(part, pb.n_causes, float(spec.split(":", 1)[1]))
    else:
        cov = pio.read_covariance_dir(spec, part, pb.n_causes, pb.question_labels)
    sim = simulate_dataset(
        SimulationConfig(
            n=int(cfg["n"]),
            probbase=pb,
            prior=prior,
            partition=part,
            covariance=cov,
            missing_rate=float(cfg.get("missing_rate", 0.0)),
            seed=int(cfg.get("seed", args.seed)),
            demographics=args.demographics_out is not None,
        )
    )
    os.makedirs(args.output_dir, exist_ok=True)
    pio.write_answers(_out_path(args, args.answers_out, "answers.csv"), sim.answers)
    pio.write_labels(
        _out_path(args, args.labels_out, "labels.csv"),
        [pb.cause_labels[j] for j in sim.causes],
    )
    if args.demographics_out:
        pio.write_rows(
            args.demographics_out,
            ["age", "sex"],
            list(zip(sim.demographics["age"], sim.demographics["sex"])),
        )
    for (j, l), lam in sim.ridge_repairs.items():
        log.warning("covariance (cause %d, block %d) repaired with ridge %g", j, l, lam)
    log.info("simulated %d interviews", sim.answers.n_interviews)
    return EXIT_OK


def _cmd_score(args) -> int:
    pb, answers, prior, part = _load_inputs(args)
    ctx = ScoringContext(answers, prior, part, args.algorithm, args.denominator, args.threads)
    result = ctx.score(pb, keep_cells=args.per_cell_out is not None)
    os.makedirs(args.output_dir, exist_ok=True)
    rows = [["overall", result.overall, result.scored_cells]]
    rows += [
        [f"block_{l}", result.per_block[l], ""]
        for l in range(result.per_block.size)
    ]
    pio.write_rows(
        _out_path(args, args.report_out, "score_report.csv"),
        ["quantity", "value", "scored_cells"],
        rows,
    )
    if args.per_cell_out:
        cells = result.per_cell
        pio.write_rows(
            args.per_cell_out,
            ["row", "question", "ahat", "answer", "loss"],
            zip(cells.row, cells.question, cells.ahat, cells.answer, cells.loss),
        )
    print(f"imputation accuracy ({args.denominator}): {result.overall:.6f}")
    return EXIT_OK


def _cmd_audit(args) -> int:
    pb, answers, prior, part = _load_inputs(args)
    entries = (
        pio.read_entries(args.entries, pb.cause_labels, pb.question_labels)
        if args.entries
        else None
    )
    truth = None
    if args.truth:
        _, _, truth = pio.read_sign_matrix(args.truth)
    report = audit_probbase(
        pb, answers, prior, part,
        algorithm=args.algorithm,
        eps=args.eps,
        entries=entries,
        truth=truth,
        tau=args.tau,
        denominator=args.denominator,
        incremental=args.incremental,
        threads=args.threads,
    )
    os.makedirs(args.output_dir, exist_ok=True)
    header = ["cause", "question", "gamma", "atan100_gamma", "one_sided", "classification"]
    rows = [
        [
            pb.cause_labels[report.j[i]],
            pb.question_labels[report.k[i]],
            report.gamma[i],
            report.transformed[i],
            int(report.one_sided[i]),
            int(report.classification[i]),
        ]
        for i in range(report.n_entries)
    ]
    if report.truth is not None:
        header.append("truth")
        for i, row in enumerate(rows):
            row.append(int(report.truth[i]))
    pio.write_rows(_out_path(args, args.report_out, "audit_report.csv"), header, rows)
    flags = high_confidence_flags(report)
    print(
        f"audited {report.n_entries} entries; {flags.gamma.size} flagged at "
        f"|gamma| > {flags.threshold:g}"
    )
    if args.metrics_out:
        if report.metrics is None:
            raise ValidationError("--metrics-out requires --truth")
        pio.write_rows(
            args.metrics_out, ["metric", "value"], sorted(report.metrics.items())
        )
    return EXIT_OK


def _cmd_optimize(args) -> int:
    if args.random_init and not args.allow_cold_start:
        raise ValidationError(
            "random initialisation discards the warm start; pass --allow-cold-start "
            "to confirm"
        )
    pb, answers, prior, part = _load_inputs(args)
    if args.random_init:
        pb = pb.with_entry(0, 0, pb.values[0, 0])  # copy
        values = np.full(pb.values.shape, 0.5)
        pb = type(pb)(values, pb.cause_labels, pb.question_labels)
    entries = (
        pio.read_entries(args.entries, pb.cause_labels, pb.question_labels)
        if args.entries
        else None
    )
    cfg = OptimizeConfig(
        entries=tuple(map(tuple, entries)) if entries is not None else None,
        step0=args.step0,
        shrink=args.shrink,
        max_sweeps=args.sweeps,
        tol=args.tol,
        fd_eps=args.fd_eps,
        eps_clamp=args.eps_clamp,
    )
    ctx = ScoringContext(answers, prior, part, args.algorithm, args.denominator, args.threads)
    optimised, trace = descend(pb, cfg, ctx)
    os.makedirs(args.output_dir, exist_ok=True)
    pio.write_probbase(_out_path(args, args.probbase_out, "probbase_optimised.csv"), optimised)
    pio.write_rows(
        _out_path(args, args.trace_out, "trace.csv"),
        ["sweep", "cause", "question", "value", "objective", "status"],
        [
            [s.sweep, pb.cause_labels[s.j], pb.question_labels[s.k], s.value,
             s.objective, trace.status]
            for s in trace.steps
        ],
    )
    print(
        f"objective {trace.initial_objective:.6f} -> {trace.final_objective:.6f} "
        f"({len(trace.steps)} accepted steps, {trace.status} minimum)"
    )
    return EXIT_OK


def _cmd_blocks(args) -> int:
    answers = pio.read_answers(args.answers)
    assoc = pairwise_association(answers)
    cut = DendrogramCut(
        linkage=args.linkage, count=args.num_blocks, height=args.height
    )
    part = learn_partition(assoc, cut)
    os.makedirs(args.output_dir, exist_ok=True)
    pio.write_partition(
        _out_path(args, args.partition_out, "partition.csv"),
        part,
        answers.question_labels,
    )
    print(f"learned {part.n_blocks} blocks over {part.n_questions} questions")
    if args.labels:
        labels = pio.read_labels(args.labels)
        estimate = estimate_block_covariances(answers, labels, part)
        outdir = args.covariance_out or os.path.join(args.output_dir, "covariance")
        pio.write_covariance_dir(outdir, estimate.model, part, answers.question_labels)
        if estimate.pooled_fallbacks:
            log.warning(
                "%d (cause, block) pairs fell back to the pooled matrix",
                len(estimate.pooled_fallbacks),
            )
    return EXIT_OK


def _cmd_roc(args) -> int:
    rows = pio._read_rows(args.report)
    header = rows[0]
    try:
        g_col = header.index("gamma")
        t_col = header.index("truth")
    except ValueError:
        raise ValidationError(
            f"{args.report}: need 'gamma' and 'truth' columns for ROC curves"
        ) from None
    gamma = np.array([float(r[g_col]) for r in rows[1:]])
    truth = np.array([int(r[t_col]) for r in rows[1:]])
    comparisons = (
        ("pos_vs_neg", gamma[truth != 0], truth[truth != 0] == 1),
        ("pos_vs_zero", gamma[truth >= 0], truth[truth >= 0] == 1),
        ("neg_vs_zero", -gamma[truth <= 0], truth[truth <= 0] == -1),
    )
    out_rows = []
    for name, scores, labels in comparisons:
        if not labels.any() or labels.all():
            continue
        thresholds, fpr, tpr = roc_curve(scores, labels)
        p = wilcoxon_rank_sum(scores[labels], scores[~labels])
        log.info("%s: wilcoxon log10 p = %.2f", name, p.log10_p)
        out_rows += [
            [name, th, f, t] for th, f, t in zip(thresholds, fpr, tpr)
        ]
    os.makedirs(args.output_dir, exist_ok=True)
    pio.write_rows(
        _out_path(args, args.out, "roc.csv"),
        ["comparison", "threshold", "fpr", "tpr"],
        out_rows,
    )
    return EXIT_OK


def _cmd_experiment(args) -> int:
    overrides = {}
    if args.config:
        with open(args.config) as fh:
            overrides = json.load(fh)
    overrides.setdefault("seed", args.seed)
    overrides.setdefault("threads", args.threads)
    cfg = ExperimentConfig(scenario=args.scenario, **overrides)
    result = run_scenario(cfg)
    outdir = os.path.join(args.output_dir, args.scenario)
    write_outputs(result, outdir)
    for line in result.summary_lines():
        print(line)
    return EXIT_OK if result.passed else EXIT_BAND


_COMMANDS = {
    "simulate": _cmd_simulate,
    "score": _cmd_score,
    "audit": _cmd_audit,
    "optimize": _cmd_optimize,
    "blocks": _cmd_blocks,
    "roc": _cmd_roc,
    "experiment": _cmd_experiment,
}


def dispatch(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        return _COMMANDS[args.command](args)
    except ValidationError as exc:
        print(f"probaudit {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FileNotFoundError as exc:
        print(f"probaudit {args.command}: file not found: {exc.filename}", file=sys.stderr)
        return EXIT_DATA
    except json.JSONDecodeError as exc:
        print(f"probaudit {args.command}: bad JSON config: {exc}", file=sys.stderr)
        return EXIT_DATA


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
