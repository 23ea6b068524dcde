import csv
import logging
from pathlib import Path
from typing import List, Optional, Union

import numpy as np

from ..core import DenseMatrix, InvalidInputError, MatrixFormatError, ObservedMatrix

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def gen_gaussian(d: int, T: int, mean: float = 0.0, sd: float = 1.0, seed: int = 0) -> DenseMatrix:
    """
    Synthetic data with i.i.d. Normal(mean, sd^2) entries.

    Draws come from numpy's PCG64 generator (``default_rng(seed)``) and its
    ziggurat normal sampler, filled row-major.

    Args:
        d (int): Rows
        T (int): Columns (samples)
        mean (float): Entry mean
        sd (float): Entry standard deviation, > 0
        seed (int): PRNG seed

    Returns:
        DenseMatrix: d x T data matrix
    """
    if d < 1 or T < 1:
        raise InvalidInputError(f"d and T must be >= 1, got d={d}, T={T}")
    if not sd > 0:
        raise InvalidInputError(f"sd must be > 0, got {sd}")
    rng = np.random.default_rng(seed)
    return DenseMatrix(mean + sd * rng.standard_normal((d, T)))


def format_float(value: float) -> str:
    """17 significant digits: enough to read back the same double."""
    return f"{float(value):.17g}"


def _parse_cell(text: str, row: int, col: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise MatrixFormatError(f"Cannot parse {text!r} as a number", row, col) from None
    if not np.isfinite(value):
        raise MatrixFormatError(f"Non-finite value {text!r}", row, col)
    return value


def read_matrix_csv(path: PathLike) -> Union[DenseMatrix, ObservedMatrix]:
    """
    Read a comma-separated matrix; empty cells mark unobserved entries.

    Rows and columns in error messages are 1-based.

    Returns:
        DenseMatrix when every cell is filled, otherwise an ObservedMatrix whose
        unobserved values are stored as 0.0
    """
    rows: List[List[Optional[float]]] = []
    with open(path, newline="", encoding="utf-8") as handle:
        for r, record in enumerate(csv.reader(handle), start=1):
            if not record or (len(record) == 1 and not record[0].strip()):
                continue
            rows.append(
                [
                    None if not cell.strip() else _parse_cell(cell.strip(), r, c)
                    for c, cell in enumerate(record, start=1)
                ]
            )

    if not rows:
        raise MatrixFormatError(f"{path} holds no rows")
    width = len(rows[0])
    for r, values in enumerate(rows, start=1):
        if len(values) != width:
            raise MatrixFormatError(f"Ragged CSV: expected {width} cells, found {len(values)}", r)

    mask = np.array([[v is not None for v in values] for values in rows])
    data = np.array([[0.0 if v is None else v for v in values] for values in rows])
    if mask.all():
        return DenseMatrix(data)
    if not mask.any():
        raise MatrixFormatError(f"{path} has no observed entries")
    logger.debug("Read %s with %d of %d entries observed", path, int(mask.sum()), mask.size)
    return ObservedMatrix(DenseMatrix(data), mask)


def write_matrix_csv(M: Union[DenseMatrix, ObservedMatrix, np.ndarray], path: PathLike) -> None:
    """Write a matrix as UTF-8 CSV with LF line endings; unobserved entries are left empty."""
    if isinstance(M, ObservedMatrix):
        data, mask = M.values.data, M.mask
    else:
        data = M.data if isinstance(M, DenseMatrix) else DenseMatrix(M).data
        mask = np.ones(data.shape, dtype=bool)

    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        for values, observed in zip(data, mask):
            writer.writerow([format_float(v) if o else "" for v, o in zip(values, observed)])
