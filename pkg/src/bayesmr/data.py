"""Dataset container and CSV input/output for instrument-exposure-outcome tables."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

_ALLOWED_DOSES = (0.0, 1.0, 2.0)


class DataFormatError(ValueError):
    """An input table violates the dataset contract."""


@dataclass(frozen=True)
class MRDataset:
    """Individual-level data: allele doses, exposure, outcome, optional binary covariate.

    genotypes has shape (n, j) with entries in {0, 1, 2} stored as floats;
    exposure/outcome have shape (n,); covariate (if present) is binary {0, 1}.
    """

    genotypes: np.ndarray
    exposure: np.ndarray
    outcome: np.ndarray
    covariate: np.ndarray | None = None

    def __post_init__(self):
        g = np.ascontiguousarray(np.asarray(self.genotypes, dtype=float))
        x = np.asarray(self.exposure, dtype=float).ravel()
        y = np.asarray(self.outcome, dtype=float).ravel()
        if g.ndim != 2:
            raise DataFormatError(f"genotypes must be 2-dimensional, got shape {g.shape}")
        n, j = g.shape
        if j < 1:
            raise DataFormatError("at least one instrument is required")
        if n < 1:
            raise DataFormatError("at least one individual is required")
        if x.shape[0] != n or y.shape[0] != n:
            raise DataFormatError(
                f"length mismatch: {n} genotype rows, {x.shape[0]} exposure, {y.shape[0]} outcome"
            )
        for name, arr in (("genotypes", g), ("exposure", x), ("outcome", y)):
            if not np.all(np.isfinite(arr)):
                raise DataFormatError(f"non-finite value in {name}")
        bad = ~np.isin(g, _ALLOWED_DOSES)
        if np.any(bad):
            r, c = np.argwhere(bad)[0]
            raise DataFormatError(
                f"genotype value {g[r, c]!r} at row {r + 1}, column z{c + 1} is not an allele dose in {{0, 1, 2}}"
            )
        w = self.covariate
        if w is not None:
            w = np.asarray(w, dtype=float).ravel()
            if w.shape[0] != n:
                raise DataFormatError(f"covariate length {w.shape[0]} does not match {n} individuals")
            if not np.all(np.isfinite(w)):
                raise DataFormatError("non-finite value in covariate")
            if not np.all(np.isin(w, (0.0, 1.0))):
                r = int(np.argwhere(~np.isin(w, (0.0, 1.0)))[0][0])
                raise DataFormatError(f"covariate value {w[r]!r} at row {r + 1} is not binary")
        object.__setattr__(self, "genotypes", g)
        object.__setattr__(self, "exposure", x)
        object.__setattr__(self, "outcome", y)
        object.__setattr__(self, "covariate", w)

    @property
    def n_individuals(self) -> int:
        return self.genotypes.shape[0]

    @property
    def n_instruments(self) -> int:
        return self.genotypes.shape[1]

    def genotype_variances(self) -> np.ndarray:
        return self.genotypes.var(axis=0)

    def drop_covariate(self) -> "MRDataset":
        if self.covariate is None:
            return self
        return MRDataset(self.genotypes, self.exposure, self.outcome, None)


def dataset_columns(j: int, with_covariate: bool) -> list[str]:
    cols = ["x", "y"]
    if with_covariate:
        cols.append("w")
    cols.extend(f"z{k}" for k in range(1, j + 1))
    return cols


def load_dataset_csv(path: str | Path) -> MRDataset:
    """Read a dataset CSV with header ``x,y[,w],z1..zJ`` (in that order).

    Raises DataFormatError naming the offending row/column on any violation.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        rows = [row for row in reader if row]

    if len(header) < 3 or header[0] != "x" or header[1] != "y":
        raise DataFormatError(f"{path}: header must start with 'x,y', got {header[:3]}")
    with_covariate = len(header) > 2 and header[2] == "w"
    j = len(header) - 2 - (1 if with_covariate else 0)
    expected = dataset_columns(j, with_covariate)
    if header != expected:
        raise DataFormatError(
            f"{path}: header {header} does not match expected {expected}"
        )
    if j < 1:
        raise DataFormatError(f"{path}: no instrument columns found")
    if not rows:
        raise DataFormatError(f"{path}: no data rows")

    parsed = np.empty((len(rows), len(header)), dtype=float)
    for i, row in enumerate(rows):
        if len(row) != len(header):
            raise DataFormatError(
                f"{path}: row {i + 1} has {len(row)} fields, expected {len(header)}"
            )
        for k, cell in enumerate(row):
            try:
                parsed[i, k] = float(cell)
            except ValueError:
                raise DataFormatError(
                    f"{path}: cannot parse {cell!r} at row {i + 1}, column {header[k]}"
                ) from None

    x = parsed[:, 0]
    y = parsed[:, 1]
    w = parsed[:, 2] if with_covariate else None
    z = parsed[:, (3 if with_covariate else 2):]
    try:
        return MRDataset(genotypes=z, exposure=x, outcome=y, covariate=w)
    except DataFormatError as exc:
        raise DataFormatError(f"{path}: {exc}") from None


def format_float(v: float) -> str:
    """Shortest round-trip decimal form; deterministic for a given value."""
    return repr(float(v))


def write_dataset_csv(dataset: MRDataset, path: str | Path) -> None:
    path = Path(path)
    with_cov = dataset.covariate is not None
    cols = dataset_columns(dataset.n_instruments, with_cov)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(cols)
        for i in range(dataset.n_individuals):
            row = [format_float(dataset.exposure[i]), format_float(dataset.outcome[i])]
            if with_cov:
                row.append(format_float(dataset.covariate[i]))
            row.extend(format_float(v) for v in dataset.genotypes[i])
            writer.writerow(row)
