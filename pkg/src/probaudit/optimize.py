"""Coordinate descent on the imputation objective.

Entries are visited cyclically; each proposal moves an entry against its
finite-difference gradient with backtracking, projected to the clamp box,
and is accepted only on a strict objective decrease.  The trace of
accepted objective values is therefore strictly decreasing by
construction.  The objective is expected to be highly nonconvex, so the
result is labelled a local minimum; start from a probbase you believe is
almost right.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DEFAULT_EPS_CLAMP, Probbase, ValidationError
from .audit import gradient_entry


@dataclass(frozen=True)
class OptimizeConfig:
    entries: tuple | None = None  # (j, k) pairs; None = every entry
    step0: float = 0.5
    shrink: float = 0.5
    max_sweeps: int = 10
    tol: float = 1e-7
    fd_eps: float = 0.01
    eps_clamp: float = DEFAULT_EPS_CLAMP
    max_backtracks: int = 12

    def __post_init__(self):
        if self.step0 <= 0.0:
            raise ValidationError(f"step0 must be > 0, got {self.step0!r}")
        if not 0.0 < self.shrink < 1.0:
            raise ValidationError(f"shrink must be in (0, 1), got {self.shrink!r}")
        if self.max_sweeps < 1:
            raise ValidationError(f"max_sweeps must be >= 1, got {self.max_sweeps}")
        if self.tol <= 0.0:
            raise ValidationError(f"tol must be > 0, got {self.tol!r}")


@dataclass(frozen=True)
class AcceptedStep:
    sweep: int
    j: int
    k: int
    value: float
    objective: float


@dataclass(frozen=True)
class DescentTrace:
    initial_objective: float
    steps: tuple = ()
    sweeps_run: int = 0
    status: str = "local"  # never a claim of global optimality

    @property
    def objectives(self) -> np.ndarray:
        return np.array([s.objective for s in self.steps])

    @property
    def final_objective(self) -> float:
        return self.steps[-1].objective if self.steps else self.initial_objective


def descend(pb: Probbase, cfg: OptimizeConfig, ctx) -> tuple[Probbase, DescentTrace]:
    """Minimise the context objective over the selected probbase entries.

    ``ctx`` is any scoring context exposing ``evaluate(pb) -> float``.
    Returns the improved probbase and the trace of accepted steps; with no
    acceptable move the input comes back unchanged with an empty trace.
    """
    lo, hi = cfg.eps_clamp, 1.0 - cfg.eps_clamp
    if cfg.entries is None:
        entries = [
            (j, k)
            for j in range(pb.n_causes)
            for k in range(pb.n_questions)
        ]
    else:
        entries = [(int(j), int(k)) for j, k in cfg.entries]
        for j, k in entries:
            if not (0 <= j < pb.n_causes and 0 <= k < pb.n_questions):
                raise ValidationError(f"entry ({j}, {k}) outside the probbase")

    current = pb
    objective = ctx.evaluate(current)
    initial = objective
    steps = []
    sweeps = 0
    for sweep in range(cfg.max_sweeps):
        sweeps = sweep + 1
        sweep_start = objective
        for j, k in entries:
            grad = gradient_entry(
                current, j, k, cfg.fd_eps, ctx, base_value=objective
            ).gamma
            if grad == 0.0:
                continue
            value = float(current.values[j, k])
            eta = cfg.step0
            for _ in range(cfg.max_backtracks):
                proposal = min(max(value - eta * grad, lo), hi)
                if proposal == value:
                    eta *= cfg.shrink
                    continue
                candidate = current.with_entry(j, k, proposal)
                cand_objective = ctx.evaluate(candidate)
                if cand_objective < objective:
                    current = candidate
                    objective = cand_objective
                    steps.append(AcceptedStep(sweep, j, k, proposal, cand_objective))
                    break
                eta *= cfg.shrink
        if sweep_start - objective < cfg.tol:
            break
    return current, DescentTrace(
        initial_objective=initial, steps=tuple(steps), sweeps_run=sweeps
    )
