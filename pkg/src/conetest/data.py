"""CSV ingestion into :class:`~conetest.engine.Dataset`."""

from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

from .engine import Dataset

__all__ = ["ingest_csv", "read_matrix_csv"]


def _number(cell, row, col):
    text = cell.strip()
    if text == "":
        raise ValueError(f"row {row}: empty cell in column {col!r}")
    try:
        v = float(text)
    except ValueError:
        raise ValueError(f"row {row}: non-numeric value {text!r} in column {col!r}") from None
    if not math.isfinite(v):
        raise ValueError(f"row {row}: non-finite value {text!r} in column {col!r}")
    return v


def _dummies(values, name):
    levels = sorted(set(values))
    cols = [np.array([1.0 if v == lev else 0.0 for v in values]) for lev in levels[1:]]
    names = [f"{name}={lev}" for lev in levels[1:]]
    return cols, names


def ingest_csv(path, response, predictors, covariates=(), categorical=None, weights=None):
    """Read a headed CSV file into a Dataset.

    Parameters
    ----------
    path : str or Path
    response : str
        Column holding ``y``.
    predictors : sequence of str
        Columns forming the design ``x``.
    covariates : sequence of str
        Columns forming ``Z``.  A covariate is treated as categorical when
        listed in ``categorical`` or when any of its cells is non-numeric;
        categorical covariates become dummy columns with the first level in
        sort order as reference.
    categorical : sequence of str, optional
    weights : str, optional
        Column of positive observation weights.

    Row numbers in error messages count the header as row 1.
    """
    path = Path(path)
    predictors = list(predictors)
    covariates = list(covariates or ())
    categorical = set(categorical or ())
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        rows = [r for r in reader if any(c.strip() for c in r)]
    index = {h: i for i, h in enumerate(header)}
    for col in [response, *predictors, *covariates, *([weights] if weights else [])]:
        if col not in index:
            raise ValueError(f"{path}: missing column {col!r}")
    if not rows:
        raise ValueError(f"{path}: no data rows")
    for k, r in enumerate(rows, start=2):
        if len(r) != len(header):
            raise ValueError(f"row {k}: expected {len(header)} cells, got {len(r)}")

    def column(col):
        return [_number(r[index[col]], k, col) for k, r in enumerate(rows, start=2)]

    y = np.array(column(response))
    x = np.column_stack([column(c) for c in predictors]) if predictors else np.zeros((len(rows), 0))
    zcols, znames = [], []
    for col in covariates:
        raw = [r[index[col]].strip() for r in rows]
        for k, cell in enumerate(raw, start=2):
            if cell == "":
                raise ValueError(f"row {k}: empty cell in column {col!r}")
        is_cat = col in categorical
        if not is_cat:
            try:
                [float(c) for c in raw]
            except ValueError:
                is_cat = True
        if is_cat:
            cols, names = _dummies(raw, col)
            zcols += cols
            znames += names
        else:
            zcols.append(np.array(column(col)))
            znames.append(col)
    Z = np.column_stack(zcols) if zcols else None
    w = np.array(column(weights)) if weights else None
    names = tuple([response, *predictors, *znames])
    return Dataset(x=x, y=y, Z=Z, weights=w, column_names=names)


def read_matrix_csv(path):
    """Numeric matrix from a CSV file without header (blank lines ignored)."""
    rows = []
    with Path(path).open(newline="") as fh:
        for k, r in enumerate(csv.reader(fh), start=1):
            if not any(c.strip() for c in r):
                continue
            rows.append([_number(c, k, j) for j, c in enumerate(r)])
    if not rows:
        raise ValueError(f"{path}: empty matrix")
    width = len(rows[0])
    for k, r in enumerate(rows, start=1):
        if len(r) != width:
            raise ValueError(f"{path}: row {k} has {len(r)} entries, expected {width}")
    return np.array(rows)
