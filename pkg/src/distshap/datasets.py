"""Synthetic dataset generators and delimited-text ingestion."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import CsvParseError, InvalidParameterError
from .numerics import RandomStream, inv_logit

__all__ = [
    "Dataset",
    "gen_gaussian_r",
    "gen_gaussian_c",
    "gen_mixture_c",
    "load_csv",
]


@dataclass
class Dataset:
    """Feature matrix with an optional target and generating parameters."""

    x: np.ndarray
    y: np.ndarray | None = None
    beta_true: np.ndarray | None = None
    noise_variance: float | None = None
    name: str = ""

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]


def gen_gaussian_r(m: int, p: int, rng: RandomStream) -> Dataset:
    """Regression data with standard normal inputs and unit noise.

    Coefficients are drawn once per dataset from a standard normal and
    recorded so analytic utilities can use the truth.
    """
    if m < 1 or p < 1:
        raise InvalidParameterError("m and p must be at least 1")
    gen = rng.generator
    beta = gen.standard_normal(p)
    x = gen.standard_normal((m, p))
    y = x @ beta + gen.standard_normal(m)
    return Dataset(x=x, y=y, beta_true=beta, noise_variance=1.0, name="gaussian-r")


def gen_gaussian_c(m: int, rng: RandomStream) -> Dataset:
    """Binary labels from a logistic model on three standard normal inputs."""
    if m < 1:
        raise InvalidParameterError("m must be at least 1")
    gen = rng.generator
    beta = np.array([2.0, 0.0, 0.0])
    x = gen.standard_normal((m, 3))
    y = (gen.uniform(size=m) < inv_logit(x @ beta)).astype(float)
    return Dataset(x=x, y=y, beta_true=beta, name="gaussian-c")


def gen_mixture_c(m: int, p: int, rng: RandomStream) -> Dataset:
    """Balanced two-class Gaussian mixture with a mean shift on the first coordinate.

    Used by the timing benchmark, where the classification dimension varies.
    """
    if m < 1 or p < 1:
        raise InvalidParameterError("m and p must be at least 1")
    gen = rng.generator
    y = (gen.uniform(size=m) < 0.5).astype(float)
    x = gen.standard_normal((m, p))
    x[:, 0] += 2.0 * y
    return Dataset(x=x, y=y, name="mixture-c")


def load_csv(path, target_column=None, has_header: bool = True) -> Dataset:
    """Load a numeric delimited file into a dataset.

    ``target_column`` may be a column name (requires a header), a 0-based
    index, or None for features-only data. Non-finite and non-numeric
    entries are rejected with their 1-based (data row, column) location.
    """
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        rows = [row for row in reader if row and not row[0].lstrip().startswith("#")]
    if not rows:
        raise CsvParseError(f"{path} contains no data")

    header = None
    if has_header:
        header = [name.strip() for name in rows[0]]
        rows = rows[1:]
        if not rows:
            raise CsvParseError(f"{path} contains a header but no data rows")

    width = len(rows[0])
    values = np.empty((len(rows), width))
    for r, row in enumerate(rows, start=1):
        if len(row) != width:
            raise CsvParseError(
                f"{path}: row has {len(row)} fields, expected {width}", row=r, col=len(row))
        for c, cell in enumerate(row, start=1):
            try:
                value = float(cell)
            except ValueError as exc:
                raise CsvParseError(f"{path}: could not parse {cell!r}", row=r, col=c) from exc
            if not math.isfinite(value):
                raise CsvParseError(f"{path}: non-finite value {cell!r}", row=r, col=c)
            values[r - 1, c - 1] = value

    if target_column is None:
        return Dataset(x=values, y=None, name=str(path))

    if isinstance(target_column, str):
        if header is None:
            raise InvalidParameterError("a named target column requires a header row")
        try:
            target_idx = header.index(target_column)
        except ValueError:
            raise InvalidParameterError(
                f"target column {target_column!r} not found; header has {header}") from None
    else:
        target_idx = int(target_column)
        if not -width <= target_idx < width:
            raise InvalidParameterError(
                f"target index {target_idx} outside the {width} columns")
        target_idx %= width

    y = values[:, target_idx]
    x = np.delete(values, target_idx, axis=1)
    return Dataset(x=x, y=y, name=str(path))
