"""Domain types shared by every other module.

Conventions: answers are coded as int8 with 1 = yes, 0 = no and
``NA_CODE`` (-1) = missing.  Missing is a distinct third symbol and is
never conflated with "no".  All types freeze their arrays after
construction, so instances are safe to share across parallel workers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

NA_CODE = np.int8(-1)
YES_CODE = np.int8(1)
NO_CODE = np.int8(0)

DEFAULT_EPS_CLAMP = 1e-6


class ValidationError(ValueError):
    """Raised when inputs violate a documented invariant."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


def _check_labels(labels, expected: int, what: str) -> tuple:
    labels = tuple(str(x) for x in labels)
    if len(labels) != expected:
        raise ValidationError(
            f"{what}: expected {expected} labels, got {len(labels)}"
        )
    if len(set(labels)) != len(labels):
        seen = set()
        dup = next(x for x in labels if x in seen or seen.add(x))
        raise ValidationError(f"{what}: duplicate label {dup!r}")
    return labels


@dataclass(frozen=True)
class Probbase:
    """Matrix of P(answer k is yes | cause j) with row/column labels."""

    values: np.ndarray
    cause_labels: tuple
    question_labels: tuple

    def __init__(self, values, cause_labels, question_labels):
        values = np.asarray(values, dtype=np.float64)
        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            raise ValidationError(f"probbase must be a 2-d matrix, got shape {values.shape}")
        bad = np.argwhere((values < 0.0) | (values > 1.0) | ~np.isfinite(values))
        if bad.size:
            j, k = bad[0]
            raise ValidationError(
                f"probbase entry ({j}, {k}) = {values[j, k]!r} outside [0, 1]"
            )
        object.__setattr__(self, "values", _frozen(values))
        object.__setattr__(
            self, "cause_labels", _check_labels(cause_labels, values.shape[0], "cause_labels")
        )
        object.__setattr__(
            self,
            "question_labels",
            _check_labels(question_labels, values.shape[1], "question_labels"),
        )

    @property
    def n_causes(self) -> int:
        return self.values.shape[0]

    @property
    def n_questions(self) -> int:
        return self.values.shape[1]

    def with_entry(self, j: int, k: int, value: float) -> "Probbase":
        """Copy with a single entry replaced."""
        v = np.array(self.values)
        v[j, k] = value
        return Probbase(v, self.cause_labels, self.question_labels)


def _simplex(probabilities, what: str) -> np.ndarray:
    p = np.asarray(probabilities, dtype=np.float64)
    if p.ndim != 1 or p.size < 1:
        raise ValidationError(f"{what} must be a nonempty vector")
    if np.any(p < 0) or not np.all(np.isfinite(p)):
        i = int(np.argmin(p))
        raise ValidationError(f"{what}[{i}] = {p[i]!r} is negative or non-finite")
    if abs(p.sum() - 1.0) > 1e-9:
        raise ValidationError(f"{what} sums to {p.sum()!r}, expected 1 within 1e-9")
    return _frozen(p)


@dataclass(frozen=True)
class Prior:
    """Cause-of-death prior (cause-specific mortality fractions)."""

    probabilities: np.ndarray

    def __init__(self, probabilities):
        object.__setattr__(self, "probabilities", _simplex(probabilities, "prior"))

    @property
    def n_causes(self) -> int:
        return self.probabilities.size


@dataclass(frozen=True)
class CauseDistribution:
    """Posterior distribution over causes returned by a VA algorithm."""

    probabilities: np.ndarray

    def __init__(self, probabilities):
        object.__setattr__(self, "probabilities", _simplex(probabilities, "cause distribution"))

    @property
    def n_causes(self) -> int:
        return self.probabilities.size


@dataclass(frozen=True)
class AnswerMatrix:
    """Ternary interview answers, one row per completed interview."""

    values: np.ndarray
    question_labels: tuple

    def __init__(self, values, question_labels):
        values = np.asarray(values, dtype=np.int8)
        if values.ndim != 2 or values.shape[0] < 1:
            raise ValidationError(f"answers must be a 2-d matrix with n >= 1, got shape {values.shape}")
        bad = np.argwhere((values != YES_CODE) & (values != NO_CODE) & (values != NA_CODE))
        if bad.size:
            i, k = bad[0]
            raise ValidationError(
                f"answers cell ({i}, {k}) = {values[i, k]} is not one of 1/0/NA"
            )
        object.__setattr__(self, "values", _frozen(values))
        object.__setattr__(
            self,
            "question_labels",
            _check_labels(question_labels, values.shape[1], "question_labels"),
        )

    @property
    def n_interviews(self) -> int:
        return self.values.shape[0]

    @property
    def n_questions(self) -> int:
        return self.values.shape[1]

    def row(self, i: int) -> np.ndarray:
        return self.values[i]


@dataclass(frozen=True)
class BlockPartition:
    """Disjoint cover of question indices by conditional-independence blocks.

    Blocks are kept in a canonical order (ascending smallest member), so a
    partition is identified by its grouping alone, not by input order.
    """

    blocks: tuple
    block_of: tuple = field(compare=False)

    def __init__(self, blocks):
        cleaned = []
        for members in blocks:
            members = tuple(sorted(int(k) for k in members))
            if not members:
                raise ValidationError("partition contains an empty block")
            cleaned.append(members)
        cleaned.sort(key=lambda m: m[0])
        size = sum(len(m) for m in cleaned)
        block_of = [-1] * size
        for l, members in enumerate(cleaned):
            for k in members:
                if not 0 <= k < size:
                    raise ValidationError(
                        f"partition question index {k} outside [0, {size})"
                    )
                if block_of[k] != -1:
                    raise ValidationError(f"question {k} appears in two blocks")
                block_of[k] = l
        missing = [k for k, l in enumerate(block_of) if l == -1]
        if missing:
            raise ValidationError(f"partition does not cover question index {missing[0]}")
        object.__setattr__(self, "blocks", tuple(cleaned))
        object.__setattr__(self, "block_of", tuple(block_of))

    @property
    def n_blocks(self) -> int:
        return len(self.blocks)

    @property
    def n_questions(self) -> int:
        return len(self.block_of)

    @classmethod
    def singletons(cls, s: int) -> "BlockPartition":
        return cls([(k,) for k in range(s)])

    @classmethod
    def contiguous(cls, s: int, b: int) -> "BlockPartition":
        """Split [s] into b contiguous blocks of near-equal size."""
        if not 1 <= b <= s:
            raise ValidationError(f"need 1 <= b <= s, got b={b}, s={s}")
        bounds = np.linspace(0, s, b + 1).round().astype(int)
        return cls([tuple(range(bounds[i], bounds[i + 1])) for i in range(b)])


@dataclass(frozen=True)
class LetterCodeTable:
    """Lookup from qualitative probbase codes (e.g. "A+".."F") to numbers."""

    mapping: dict

    def __init__(self, mapping):
        cleaned = {}
        for code, value in dict(mapping).items():
            code = str(code).strip()
            value = float(value)
            if not code:
                raise ValidationError("letter-code table contains an empty code")
            if code in cleaned:
                raise ValidationError(f"duplicate letter code {code!r}")
            if not 0.0 < value < 1.0:
                raise ValidationError(
                    f"letter code {code!r} maps to {value!r}, outside (0, 1)"
                )
            cleaned[code] = value
        if not cleaned:
            raise ValidationError("letter-code table is empty")
        object.__setattr__(self, "mapping", cleaned)


def validate_inputs(
    pb: Probbase,
    prior: Prior,
    answers: AnswerMatrix,
    part: BlockPartition,
) -> None:
    """Cross-check dimensions and labels of a full problem instance.

    Raises ValidationError naming the offending dimension or index; returns
    None when everything is consistent.
    """
    if pb.n_questions != answers.n_questions:
        raise ValidationError(
            f"probbase has {pb.n_questions} question columns, answers have "
            f"{answers.n_questions}"
        )
    if pb.n_questions != part.n_questions:
        raise ValidationError(
            f"probbase has {pb.n_questions} question columns, partition covers "
            f"{part.n_questions}"
        )
    if pb.n_causes != prior.n_causes:
        raise ValidationError(
            f"probbase has {pb.n_causes} causes, prior has {prior.n_causes}"
        )
    if pb.question_labels != answers.question_labels:
        diff = next(
            k
            for k, (a, b) in enumerate(zip(pb.question_labels, answers.question_labels))
            if a != b
        )
        raise ValidationError(
            f"question label mismatch at column {diff}: probbase "
            f"{pb.question_labels[diff]!r} vs answers {answers.question_labels[diff]!r}"
        )


def mask_block(answers: AnswerMatrix, part: BlockPartition, block: int) -> AnswerMatrix:
    """Copy of the answers with every column of the given block set to NA."""
    if not 0 <= block < part.n_blocks:
        raise ValidationError(
            f"block index {block} outside [0, {part.n_blocks})"
        )
    if part.n_questions != answers.n_questions:
        raise ValidationError(
            f"partition covers {part.n_questions} questions, answers have "
            f"{answers.n_questions}"
        )
    v = np.array(answers.values)
    v[:, list(part.blocks[block])] = NA_CODE
    return AnswerMatrix(v, answers.question_labels)


def clamp_probbase(pb: Probbase, eps_clamp: float = DEFAULT_EPS_CLAMP) -> Probbase:
    """Push every entry into [eps_clamp, 1 - eps_clamp].

    Applied once on load so that downstream log/product code never sees an
    exact 0 or 1.
    """
    if not 0.0 < eps_clamp < 0.5:
        raise ValidationError(f"eps_clamp must be in (0, 0.5), got {eps_clamp!r}")
    v = np.clip(pb.values, eps_clamp, 1.0 - eps_clamp)
    return Probbase(v, pb.cause_labels, pb.question_labels)


def decode_letter_probbase(codes, table: LetterCodeTable, cause_labels, question_labels) -> Probbase:
    """Replace qualitative codes with numbers via the lookup table."""
    rows = [list(r) for r in codes]
    if not rows or not rows[0]:
        raise ValidationError("letter-coded probbase is empty")
    values = np.empty((len(rows), len(rows[0])), dtype=np.float64)
    for j, row in enumerate(rows):
        if len(row) != values.shape[1]:
            raise ValidationError(
                f"letter-coded probbase row {j} has {len(row)} cells, expected "
                f"{values.shape[1]}"
            )
        for k, code in enumerate(row):
            code = str(code).strip()
            if code not in table.mapping:
                raise ValidationError(
                    f"unknown letter code {code!r} at (row {j}, col {k})"
                )
            values[j, k] = table.mapping[code]
    return Probbase(values, cause_labels, question_labels)
