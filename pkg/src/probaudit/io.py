"""CSV readers and writers for every file schema.

All numbers are serialised with 17 significant digits, so write-then-read
is the identity on every valid file.  Missing answers are written as "NA"
and accepted case-insensitively or as an empty field.  Errors name the
offending line (1-based, header included).
"""

from __future__ import annotations

import csv
import os
from importlib import resources

import numpy as np

from .core import (
    DEFAULT_EPS_CLAMP,
    NA_CODE,
    NO_CODE,
    YES_CODE,
    AnswerMatrix,
    BlockPartition,
    LetterCodeTable,
    Prior,
    Probbase,
    ValidationError,
    clamp_probbase,
)
from .simulate import CovarianceModel


def fmt(x) -> str:
    """Serialise one cell; floats keep 17 significant digits."""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (float, np.floating)):
        return "%.17g" % float(x)
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return str(x)


def write_rows(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([fmt(c) for c in header])
        for row in rows:
            writer.writerow([fmt(c) for c in row])


def _read_rows(path) -> list:
    with open(path, "r", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValidationError(f"{path}: file is empty")
    return rows


def _require_width(path, row, width, line) -> None:
    if len(row) != width:
        raise ValidationError(
            f"{path}: line {line} has {len(row)} cells, expected {width}"
        )


def _parse_float(path, cell, line, col) -> float:
    try:
        return float(cell)
    except ValueError:
        raise ValidationError(
            f"{path}: line {line}, column {col + 1}: {cell!r} is not a number"
        ) from None


# -- probbase ---------------------------------------------------------------


def read_probbase(
    path,
    eps_clamp: float | None = DEFAULT_EPS_CLAMP,
    letter_table: LetterCodeTable | None = None,
) -> Probbase:
    """Read a probbase CSV; numeric by default, letter-coded with a table.

    Clamping is applied on load (pass ``eps_clamp=None`` for raw values).
    """
    rows = _read_rows(path)
    header = rows[0]
    if len(header) < 2 or len(rows) < 2:
        raise ValidationError(f"{path}: need a header plus at least one cause row")
    question_labels = header[1:]
    cause_labels = []
    cells = []
    for line, row in enumerate(rows[1:], start=2):
        _require_width(path, row, len(header), line)
        cause_labels.append(row[0])
        cells.append(row[1:])
    if letter_table is None:
        values = np.array(
            [
                [_parse_float(path, c, line + 2, col + 1) for col, c in enumerate(r)]
                for line, r in enumerate(cells)
            ]
        )
        pb = Probbase(values, cause_labels, question_labels)
    else:
        from .core import decode_letter_probbase

        pb = decode_letter_probbase(cells, letter_table, cause_labels, question_labels)
    return pb if eps_clamp is None else clamp_probbase(pb, eps_clamp)


def write_probbase(path, pb: Probbase) -> None:
    write_rows(
        path,
        ["cause", *pb.question_labels],
        [[label, *row] for label, row in zip(pb.cause_labels, pb.values)],
    )


# -- answers ----------------------------------------------------------------

_ANSWER_CODES = {"1": YES_CODE, "0": NO_CODE, "": NA_CODE, "NA": NA_CODE}


def read_answers(path) -> AnswerMatrix:
    rows = _read_rows(path)
    header = rows[0]
    if len(rows) < 2:
        raise ValidationError(f"{path}: no interview rows")
    values = np.empty((len(rows) - 1, len(header)), dtype=np.int8)
    for line, row in enumerate(rows[1:], start=2):
        _require_width(path, row, len(header), line)
        for col, cell in enumerate(row):
            code = _ANSWER_CODES.get(cell.strip().upper())
            if code is None:
                raise ValidationError(
                    f"{path}: line {line}, column {col + 1}: {cell!r} is not "
                    "1, 0, NA or empty"
                )
            values[line - 2, col] = code
    return AnswerMatrix(values, header)


def write_answers(path, answers: AnswerMatrix) -> None:
    lookup = {int(YES_CODE): "1", int(NO_CODE): "0", int(NA_CODE): "NA"}
    write_rows(
        path,
        list(answers.question_labels),
        [[lookup[int(c)] for c in row] for row in answers.values],
    )


# -- block partition ----------------------------------------------------------


def read_partition(path, question_labels) -> BlockPartition:
    """Read (question_label, block_id) rows against a known label order."""
    rows = _read_rows(path)
    _require_width(path, rows[0], 2, 1)
    index = {label: k for k, label in enumerate(question_labels)}
    assignment = {}
    for line, row in enumerate(rows[1:], start=2):
        _require_width(path, row, 2, line)
        label, block_id = row
        if label not in index:
            raise ValidationError(f"{path}: line {line}: unknown question {label!r}")
        if label in assignment:
            raise ValidationError(f"{path}: line {line}: duplicate question {label!r}")
        assignment[label] = block_id
    missing = [lab for lab in question_labels if lab not in assignment]
    if missing:
        raise ValidationError(f"{path}: question {missing[0]!r} has no block")
    groups = {}
    for label, block_id in assignment.items():
        groups.setdefault(block_id, []).append(index[label])
    return BlockPartition(list(groups.values()))


def write_partition(path, part: BlockPartition, question_labels) -> None:
    question_labels = list(question_labels)
    rows = []
    for block_id, members in enumerate(part.blocks):
        for k in members:
            rows.append((k, question_labels[k], block_id))
    rows.sort()
    write_rows(path, ["question", "block"], [r[1:] for r in rows])


# -- prior --------------------------------------------------------------------


def read_prior(path, cause_labels=None) -> tuple[Prior, tuple]:
    """Read (cause, probability) rows; reordered to ``cause_labels`` if given."""
    rows = _read_rows(path)
    _require_width(path, rows[0], 2, 1)
    seen = {}
    order = []
    for line, row in enumerate(rows[1:], start=2):
        _require_width(path, row, 2, line)
        label, value = row
        if label in seen:
            raise ValidationError(f"{path}: line {line}: duplicate cause {label!r}")
        seen[label] = _parse_float(path, value, line, 1)
        order.append(label)
    if cause_labels is not None:
        cause_labels = tuple(str(x) for x in cause_labels)
        missing = [lab for lab in cause_labels if lab not in seen]
        if missing:
            raise ValidationError(f"{path}: cause {missing[0]!r} has no prior entry")
        extra = [lab for lab in order if lab not in set(cause_labels)]
        if extra:
            raise ValidationError(f"{path}: unexpected cause {extra[0]!r}")
        order = list(cause_labels)
    return Prior([seen[lab] for lab in order]), tuple(order)


def write_prior(path, prior: Prior, cause_labels) -> None:
    write_rows(
        path,
        ["cause", "probability"],
        list(zip(cause_labels, prior.probabilities)),
    )


# -- covariance ----------------------------------------------------------------


def read_matrix_csv(path) -> tuple[tuple, np.ndarray]:
    """Square labelled matrix: header row and first column carry labels."""
    rows = _read_rows(path)
    labels = tuple(rows[0][1:])
    n = len(labels)
    if len(rows) != n + 1:
        raise ValidationError(f"{path}: expected {n} data rows, found {len(rows) - 1}")
    values = np.empty((n, n))
    for line, row in enumerate(rows[1:], start=2):
        _require_width(path, row, n + 1, line)
        if row[0] != labels[line - 2]:
            raise ValidationError(
                f"{path}: line {line}: row label {row[0]!r} does not match "
                f"column label {labels[line - 2]!r}"
            )
        values[line - 2] = [
            _parse_float(path, c, line, col + 1) for col, c in enumerate(row[1:])
        ]
    return labels, values


def write_matrix_csv(path, labels, values: np.ndarray) -> None:
    write_rows(
        path,
        ["", *labels],
        [[label, *row] for label, row in zip(labels, values)],
    )


def _cov_filename(j: int, l: int) -> str:
    return f"cov_cause{j}_block{l}.csv"


def read_covariance_dir(
    path, part: BlockPartition, n_causes: int, question_labels
) -> CovarianceModel:
    question_labels = list(question_labels)
    matrices = []
    for j in range(n_causes):
        per_block = []
        for l, blk in enumerate(part.blocks):
            fname = os.path.join(path, _cov_filename(j, l))
            if not os.path.exists(fname):
                raise ValidationError(f"covariance file missing: {fname}")
            labels, values = read_matrix_csv(fname)
            expected = tuple(question_labels[k] for k in blk)
            if labels != expected:
                raise ValidationError(
                    f"{fname}: labels {labels} do not match block {expected}"
                )
            per_block.append(values)
        matrices.append(per_block)
    return CovarianceModel(matrices, part, n_causes)


def write_covariance_dir(
    path, model: CovarianceModel, part: BlockPartition, question_labels
) -> None:
    question_labels = list(question_labels)
    os.makedirs(path, exist_ok=True)
    for j in range(model.n_causes):
        for l, blk in enumerate(part.blocks):
            write_matrix_csv(
                os.path.join(path, _cov_filename(j, l)),
                tuple(question_labels[k] for k in blk),
                model.matrix(j, l),
            )


# -- letter codes, cause labels, truth tables -----------------------------------


def read_letter_table(path) -> LetterCodeTable:
    rows = _read_rows(path)
    _require_width(path, rows[0], 2, 1)
    mapping = {}
    for line, row in enumerate(rows[1:], start=2):
        _require_width(path, row, 2, line)
        mapping[row[0]] = _parse_float(path, row[1], line, 1)
    return LetterCodeTable(mapping)


def default_letter_table() -> LetterCodeTable:
    """The bundled, user-editable default code ladder."""
    ref = resources.files("probaudit").joinpath("data/letter_codes.csv")
    mapping = {}
    lines = ref.read_text().strip().splitlines()[1:]
    for line in lines:
        code, value = line.split(",")
        mapping[code] = float(value)
    return LetterCodeTable(mapping)


def read_labels(path) -> tuple:
    rows = _read_rows(path)
    _require_width(path, rows[0], 1, 1)
    return tuple(row[0] for row in rows[1:])


def write_labels(path, labels) -> None:
    write_rows(path, ["cause"], [[lab] for lab in labels])


def read_sign_matrix(path) -> tuple[tuple, tuple, np.ndarray]:
    """Probbase-shaped table of -1/0/+1 (audit truth tables)."""
    rows = _read_rows(path)
    header = rows[0]
    question_labels = tuple(header[1:])
    cause_labels = []
    values = np.empty((len(rows) - 1, len(question_labels)), dtype=np.int8)
    for line, row in enumerate(rows[1:], start=2):
        _require_width(path, row, len(header), line)
        cause_labels.append(row[0])
        for col, cell in enumerate(row[1:]):
            if cell not in ("-1", "0", "1"):
                raise ValidationError(
                    f"{path}: line {line}, column {col + 2}: {cell!r} is not "
                    "-1, 0 or 1"
                )
            values[line - 2, col] = int(cell)
    return tuple(cause_labels), question_labels, values


def write_sign_matrix(path, cause_labels, question_labels, values) -> None:
    write_rows(
        path,
        ["cause", *question_labels],
        [[lab, *row] for lab, row in zip(cause_labels, np.asarray(values))],
    )


def read_entries(path, cause_labels, question_labels) -> np.ndarray:
    """Entry subset file: (cause, question) label pairs to (j, k) indices."""
    rows = _read_rows(path)
    _require_width(path, rows[0], 2, 1)
    jdx = {label: j for j, label in enumerate(cause_labels)}
    kdx = {label: k for k, label in enumerate(question_labels)}
    out = []
    for line, row in enumerate(rows[1:], start=2):
        _require_width(path, row, 2, line)
        if row[0] not in jdx:
            raise ValidationError(f"{path}: line {line}: unknown cause {row[0]!r}")
        if row[1] not in kdx:
            raise ValidationError(f"{path}: line {line}: unknown question {row[1]!r}")
        out.append((jdx[row[0]], kdx[row[1]]))
    return np.asarray(out, dtype=np.int64).reshape(-1, 2)
