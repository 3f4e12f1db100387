"""Dataset container, delimited-text IO, and structural validation.

A dataset couples unit-level observations with the pair of cutoffs that
define treatment assignment: a unit in group ``d`` is treated exactly when
its running variable exceeds the group's own cutoff, ``z = 1(x > c_d)``.
Group 0 carries the lower cutoff ``c0`` and group 1 the higher cutoff
``c1``, so between the cutoffs both treated and untreated outcomes are
observed (in different groups), which is what the estimators exploit.

Columns are stored as read-only numpy arrays; the record view exists for
single-unit inspection and for operations defined pointwise.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

from .errors import ParseError, SchemaError, ValidationError

REGION_LABELS = {
    (1, 0): "a",  # group 1 below its cutoff: untreated outcome observed
    (0, 1): "b",  # group 0 above its cutoff: treated outcome observed
    (0, 0): "c",  # group 0 below its cutoff
    (1, 1): "d",  # group 1 above its cutoff
}


@dataclass(frozen=True)
class Thresholds:
    """The two cutoffs; ``c0`` belongs to group 0 and ``c1`` to group 1."""

    c0: float
    c1: float


@dataclass(frozen=True)
class TargetOutcome:
    """Which potential outcome a curve estimates: j = 0 (untreated) or 1."""

    j: int

    def __post_init__(self) -> None:
        if self.j not in (0, 1):
            raise ValueError(f"target outcome must be 0 or 1, got {self.j!r}")


@dataclass(frozen=True)
class UnitRecord:
    """One observation: running variable, covariates, group, treatment, outcome."""

    x: float
    w: tuple[float, ...]
    d: int
    z: int
    y: float


@dataclass(frozen=True)
class Finding:
    """One validation result.  ``severity`` is ``"fatal"`` or ``"warning"``."""

    severity: str
    code: str
    message: str


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Dataset:
    """Column-oriented view of the sample plus its thresholds.

    Construction does not validate; use :func:`validate` to obtain findings,
    or go through :func:`load_dataset` / ``simulation.generate`` which reject
    fatally inconsistent data.
    """

    x: np.ndarray
    w: np.ndarray
    d: np.ndarray
    z: np.ndarray
    y: np.ndarray
    thresholds: Thresholds
    covariate_names: tuple[str, ...] = field(default=())

    def __post_init__(self) -> None:
        object.__setattr__(self, "x", _readonly(np.asarray(self.x, dtype=float)))
        w = np.asarray(self.w, dtype=float)
        if w.ndim == 1:
            w = w.reshape(len(w), 1) if w.size else w.reshape(0, 0)
        object.__setattr__(self, "w", _readonly(w))
        object.__setattr__(self, "d", _readonly(np.asarray(self.d, dtype=np.int8)))
        object.__setattr__(self, "z", _readonly(np.asarray(self.z, dtype=np.int8)))
        object.__setattr__(self, "y", _readonly(np.asarray(self.y, dtype=float)))
        if not self.covariate_names:
            names = tuple(f"w{k + 1}" for k in range(self.w.shape[1]))
            object.__setattr__(self, "covariate_names", names)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    def __len__(self) -> int:
        return self.n

    def unit(self, i: int) -> UnitRecord:
        return UnitRecord(
            x=float(self.x[i]),
            w=tuple(float(v) for v in self.w[i]),
            d=int(self.d[i]),
            z=int(self.z[i]),
            y=float(self.y[i]),
        )

    @property
    def units(self) -> Iterator[UnitRecord]:
        return (self.unit(i) for i in range(self.n))


def derive_z(x: np.ndarray, d: np.ndarray, thresholds: Thresholds) -> np.ndarray:
    """Treatment status implied by group membership: ``1(x > c_d)``, strict."""
    x = np.asarray(x, dtype=float)
    cut = np.where(np.asarray(d) == 1, thresholds.c1, thresholds.c0)
    return (x > cut).astype(np.int8)


def region_census(dataset: Dataset) -> dict[str, int]:
    """Counts of the four (d, z) cells, keyed by their letter labels."""
    census = {label: 0 for label in ("a", "b", "c", "d")}
    for dd, zz in zip(dataset.d, dataset.z):
        census[REGION_LABELS[(int(dd), int(zz))]] += 1
    return census


def validate(dataset: Dataset) -> list[Finding]:
    """Structural checks.  Findings are data, not failures.

    Fatal findings: cutoffs out of order, non-finite cells, ragged covariates,
    flags outside {0, 1}, or a stored ``z`` that contradicts ``1(x > c_d)``.
    Warnings flag empty (d, z) regions, which starve one of the estimators.
    """
    out: list[Finding] = []
    th = dataset.thresholds
    if not (th.c0 < th.c1):
        out.append(
            Finding("fatal", "thresholds-order", f"need c0 < c1, got c0={th.c0!r}, c1={th.c1!r}")
        )
    n = dataset.n
    for name, col in (("x", dataset.x), ("y", dataset.y)):
        if col.shape != (n,):
            out.append(Finding("fatal", "column-shape", f"column {name} has shape {col.shape}"))
        elif not np.all(np.isfinite(col)):
            rows = np.flatnonzero(~np.isfinite(col))[:10].tolist()
            out.append(Finding("fatal", "non-finite", f"column {name} non-finite at rows {rows}"))
    if dataset.w.ndim != 2 or dataset.w.shape[0] != n:
        out.append(Finding("fatal", "covariate-shape", f"w has shape {dataset.w.shape}"))
    elif dataset.w.size and not np.all(np.isfinite(dataset.w)):
        rows = np.flatnonzero(~np.isfinite(dataset.w).all(axis=1))[:10].tolist()
        out.append(Finding("fatal", "non-finite", f"covariates non-finite at rows {rows}"))
    if len(dataset.covariate_names) != dataset.w.shape[1]:
        out.append(
            Finding(
                "fatal",
                "covariate-names",
                f"{len(dataset.covariate_names)} names for {dataset.w.shape[1]} covariates",
            )
        )
    for name, col in (("d", dataset.d), ("z", dataset.z)):
        if col.shape != (n,):
            out.append(Finding("fatal", "column-shape", f"column {name} has shape {col.shape}"))
        elif not np.all((col == 0) | (col == 1)):
            rows = np.flatnonzero((col != 0) & (col != 1))[:10].tolist()
            out.append(Finding("fatal", "flag-domain", f"column {name} not in {{0,1}} at rows {rows}"))
    if not any(f.severity == "fatal" for f in out):
        implied = derive_z(dataset.x, dataset.d, dataset.thresholds)
        bad = np.flatnonzero(implied != dataset.z)
        if bad.size:
            out.append(
                Finding(
                    "fatal",
                    "z-consistency",
                    f"z contradicts 1(x > c_d) at rows {bad[:20].tolist()}"
                    + ("..." if bad.size > 20 else ""),
                )
            )
        census = region_census(dataset)
        for label, count in census.items():
            if count == 0:
                out.append(
                    Finding(
                        "warning",
                        "empty-region",
                        f"region {label} (d,z cell) holds no units; some estimators lose support",
                    )
                )
    return out


def check_dataset(dataset: Dataset) -> Dataset:
    """Raise :class:`ValidationError` when any finding is fatal."""
    findings = validate(dataset)
    fatal = [f for f in findings if f.severity == "fatal"]
    if fatal:
        raise ValidationError(
            "; ".join(f"{f.code}: {f.message}" for f in fatal), findings=tuple(findings)
        )
    return dataset


@dataclass(frozen=True)
class ColumnSchema:
    """Explicit column mapping for delimited files.  No positional guessing.

    ``z`` may be None, in which case treatment status is derived from the
    thresholds instead of read from the file.
    """

    x: str = "x"
    d: str = "d"
    y: str = "y"
    w: tuple[str, ...] = ("w1", "w2")
    z: str | None = "z"


def _parse_cell(raw: str, row: int, col: str) -> float:
    try:
        return float(raw)
    except ValueError:
        raise ParseError(f"row {row}: column {col!r} holds unparseable value {raw!r}") from None


def load_dataset(
    path: str | Path,
    thresholds: Thresholds,
    schema: ColumnSchema | None = None,
    delimiter: str = ",",
) -> Dataset:
    """Read a delimited file into a validated :class:`Dataset`.

    The first non-comment line must name the columns; lines starting with
    ``#`` are skipped so tables written by this package round-trip.  Missing
    or unparseable cells raise :class:`ParseError` naming the row.
    """
    schema = schema or ColumnSchema()
    path = Path(path)
    with path.open(newline="") as fh:
        rows = [r for r in csv.reader(fh, delimiter=delimiter) if r and not r[0].startswith("#")]
    if not rows:
        raise SchemaError(f"{path} holds no data")
    header = [c.strip() for c in rows[0]]
    wanted = [schema.x, schema.d, schema.y, *schema.w]
    if schema.z is not None:
        wanted.append(schema.z)
    missing = [c for c in wanted if c not in header]
    if missing:
        raise SchemaError(f"{path} lacks columns {missing}; header is {header}")
    idx = {c: header.index(c) for c in wanted}

    n = len(rows) - 1
    x = np.empty(n)
    y = np.empty(n)
    d = np.empty(n, dtype=np.int8)
    w = np.empty((n, len(schema.w)))
    z_raw = np.empty(n, dtype=np.int8) if schema.z is not None else None
    for r, row in enumerate(rows[1:]):
        if len(row) != len(header):
            raise ParseError(f"row {r}: expected {len(header)} cells, got {len(row)}")
        x[r] = _parse_cell(row[idx[schema.x]], r, schema.x)
        y[r] = _parse_cell(row[idx[schema.y]], r, schema.y)
        d_val = _parse_cell(row[idx[schema.d]], r, schema.d)
        if d_val not in (0.0, 1.0):
            raise ParseError(f"row {r}: column {schema.d!r} must be 0 or 1, got {row[idx[schema.d]]!r}")
        d[r] = int(d_val)
        for k, cname in enumerate(schema.w):
            w[r, k] = _parse_cell(row[idx[cname]], r, cname)
        if z_raw is not None:
            z_val = _parse_cell(row[idx[schema.z]], r, schema.z)
            if z_val not in (0.0, 1.0):
                raise ParseError(f"row {r}: column {schema.z!r} must be 0 or 1, got {row[idx[schema.z]]!r}")
            z_raw[r] = int(z_val)

    z = z_raw if z_raw is not None else derive_z(x, d, thresholds)
    ds = Dataset(x=x, w=w, d=d, z=z, y=y, thresholds=thresholds, covariate_names=tuple(schema.w))
    return check_dataset(ds)


def write_dataset(
    dataset: Dataset,
    path: str | Path,
    delimiter: str = ",",
    header_lines: tuple[str, ...] = (),
) -> Path:
    """Write a dataset so that :func:`load_dataset` reproduces it bit-exactly.

    Floats are rendered with ``repr``, whose shortest round-trip guarantee is
    what makes the bit-exactness hold.  ``header_lines`` are written first as
    ``#`` comments, which the loader skips.
    """
    path = Path(path)
    header = ["x", *dataset.covariate_names, "d", "z", "y"]
    with path.open("w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        writer.writerow(header)
        for i in range(dataset.n):
            row = [repr(float(dataset.x[i]))]
            row += [repr(float(v)) for v in dataset.w[i]]
            row += [str(int(dataset.d[i])), str(int(dataset.z[i])), repr(float(dataset.y[i]))]
            writer.writerow(row)
    return path
