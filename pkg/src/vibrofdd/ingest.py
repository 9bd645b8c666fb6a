"""Accelerometer CSV ingestion, windowing and label manifests.

Schema is fixed: ``t,ax,ay,az`` with optional ``gx,gy,gz``.
"""

from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Iterator, Sequence

import numpy as np

from .errors import (
    BadWindowLen,
    DatasetError,
    EmptyFile,
    InsufficientSamples,
    MalformedRow,
    MissingColumn,
    TooShort,
)

DEFAULT_RATE_HZ = 1600.0
DEFAULT_WINDOW_LEN = 1024

REQUIRED_COLUMNS = ("t", "ax", "ay", "az")
GYRO_COLUMNS = ("gx", "gy", "gz")


class FaultClass(enum.IntEnum):
    STRUCTURAL_LOOSENESS = 0
    MISALIGNMENT = 1
    BEARING_PROBLEM = 2

    @property
    def label(self) -> str:
        return self.name.lower()

    @classmethod
    def from_label(cls, text: str) -> "FaultClass":
        try:
            return cls[text.strip().upper()]
        except KeyError:
            raise DatasetError(
                f"unknown fault label {text!r}; expected one of "
                + ", ".join(c.label for c in cls)
            ) from None


CLASS_NAMES = tuple(c.label for c in FaultClass)


@dataclass(frozen=True)
class VibrationRecord:
    t: float
    ax: float
    ay: float
    az: float
    gx: float | None = None
    gy: float | None = None
    gz: float | None = None


@dataclass(frozen=True)
class RecordBatch:
    """Column-oriented batch of samples.

    Columns are float64 arrays of equal length; gyro columns are ``None``
    when the source file did not carry them.
    """

    t: np.ndarray
    ax: np.ndarray
    ay: np.ndarray
    az: np.ndarray
    gx: np.ndarray | None = None
    gy: np.ndarray | None = None
    gz: np.ndarray | None = None
    nominal_rate_hz: float = DEFAULT_RATE_HZ

    def __post_init__(self):
        if not self.nominal_rate_hz > 0:
            raise ValueError("nominal_rate_hz must be positive")

    def __len__(self) -> int:
        return len(self.t)

    @property
    def has_gyro(self) -> bool:
        return self.gx is not None

    @property
    def records(self) -> list[VibrationRecord]:
        return list(self.iter_records())

    def iter_records(self) -> Iterator[VibrationRecord]:
        for i in range(len(self)):
            gyro = (
                (float(self.gx[i]), float(self.gy[i]), float(self.gz[i]))
                if self.has_gyro
                else (None, None, None)
            )
            yield VibrationRecord(
                float(self.t[i]), float(self.ax[i]), float(self.ay[i]), float(self.az[i]), *gyro
            )

    @classmethod
    def from_records(
        cls, records: Sequence[VibrationRecord], nominal_rate_hz: float = DEFAULT_RATE_HZ
    ) -> "RecordBatch":
        cols = {name: np.array([getattr(r, name) for r in records], dtype=float) for name in REQUIRED_COLUMNS}
        if records and all(r.gx is not None for r in records):
            for name in GYRO_COLUMNS:
                cols[name] = np.array([getattr(r, name) for r in records], dtype=float)
        return cls(**cols, nominal_rate_hz=nominal_rate_hz)


@dataclass(frozen=True)
class VibrationWindow:
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    rate_hz: float = DEFAULT_RATE_HZ
    label: FaultClass | None = None

    def __post_init__(self):
        n = len(self.x)
        if not (len(self.y) == len(self.z) == n):
            raise BadWindowLen("window axes must have equal length")
        if not is_power_of_two(n) or n < 64:
            raise BadWindowLen(f"window length {n} must be a power of two >= 64")

    def __len__(self) -> int:
        return len(self.x)


@dataclass(frozen=True)
class RateReport:
    median_interval_s: float
    implied_rate_hz: float
    nominal_rate_hz: float
    deviation_fraction: float
    flagged: bool


def is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


def _parse_float(text: str, row: int, col: str) -> float:
    try:
        value = float(text)
    except (TypeError, ValueError):
        raise MalformedRow(row, col, text) from None
    if not math.isfinite(value):
        raise MalformedRow(row, col, text)
    return value


def parse_csv(stream: IO[str] | str, nominal_rate_hz: float = DEFAULT_RATE_HZ) -> RecordBatch:
    """Parse a CSV text stream into a :class:`RecordBatch`.

    Data rows are numbered from 1 (the header is row 0) in error messages.
    Gyro columns are read only when all three are present in the header.
    """
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    reader = csv.reader(stream)
    header = next(reader, None)
    if header is None or not any(h.strip() for h in header):
        raise EmptyFile("CSV file has no header row")
    header = [h.strip() for h in header]
    for col in REQUIRED_COLUMNS:
        if col not in header:
            raise MissingColumn(col)
    wanted = list(REQUIRED_COLUMNS)
    if all(g in header for g in GYRO_COLUMNS):
        wanted += GYRO_COLUMNS
    index = {name: header.index(name) for name in wanted}

    values: dict[str, list[float]] = {name: [] for name in wanted}
    row_no = 0
    for row in reader:
        if not row or all(not cell.strip() for cell in row):
            continue
        row_no += 1
        for name in wanted:
            j = index[name]
            cell = row[j].strip() if j < len(row) else ""
            values[name].append(_parse_float(cell, row_no, name))
    if row_no == 0:
        raise EmptyFile("CSV file has a header but no data rows")

    cols = {name: np.asarray(v, dtype=float) for name, v in values.items()}
    return RecordBatch(**cols, nominal_rate_hz=nominal_rate_hz)


def read_csv(path: str | Path, nominal_rate_hz: float = DEFAULT_RATE_HZ) -> RecordBatch:
    with open(path, encoding="utf-8", newline="") as fh:
        return parse_csv(fh, nominal_rate_hz)


def to_csv(batch: RecordBatch) -> str:
    """Serialize with ``repr`` precision so that re-parsing is exact."""
    names = list(REQUIRED_COLUMNS) + (list(GYRO_COLUMNS) if batch.has_gyro else [])
    cols = [getattr(batch, n) for n in names]
    lines = [",".join(names)]
    for i in range(len(batch)):
        lines.append(",".join(repr(float(c[i])) for c in cols))
    return "\n".join(lines) + "\n"


def segment(
    batch: RecordBatch, window_len: int = DEFAULT_WINDOW_LEN, hop: int | None = None
) -> list[VibrationWindow]:
    """Cut the batch into contiguous windows of ``window_len`` samples.

    ``hop`` defaults to ``window_len`` (no overlap).
    """
    if hop is None:
        hop = window_len
    if not is_power_of_two(window_len) or window_len < 64:
        raise BadWindowLen(f"window length {window_len} must be a power of two >= 64")
    if hop < 1:
        raise ValueError("hop must be >= 1")
    n = len(batch)
    if n < window_len:
        raise TooShort(f"{n} records is fewer than window length {window_len}")
    count = (n - window_len) // hop + 1
    windows = []
    for w in range(count):
        lo = w * hop
        hi = lo + window_len
        windows.append(
            VibrationWindow(
                batch.ax[lo:hi].copy(),
                batch.ay[lo:hi].copy(),
                batch.az[lo:hi].copy(),
                rate_hz=batch.nominal_rate_hz,
            )
        )
    return windows


def validate_rate(batch: RecordBatch, tolerance_fraction: float = 0.05) -> RateReport:
    """Compare the median sampling interval against the nominal rate."""
    if len(batch) < 2:
        raise InsufficientSamples("need at least two records to estimate the sampling rate")
    dt = np.diff(batch.t)
    dt = dt[dt > 0]
    if dt.size == 0:
        raise InsufficientSamples("all timestamps are identical")
    median_dt = float(np.median(dt))
    implied = 1.0 / median_dt
    deviation = abs(implied - batch.nominal_rate_hz) / batch.nominal_rate_hz
    return RateReport(
        median_interval_s=median_dt,
        implied_rate_hz=implied,
        nominal_rate_hz=batch.nominal_rate_hz,
        deviation_fraction=deviation,
        flagged=deviation > tolerance_fraction,
    )


# -- label manifests and dataset directories ---------------------------------

MANIFEST_NAME = "manifest.csv"


def read_manifest(path: str | Path) -> dict[str, FaultClass]:
    """Read a ``file,label`` manifest into a mapping file name -> class."""
    path = Path(path)
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"file", "label"} <= {f.strip() for f in reader.fieldnames}:
            raise DatasetError(f"{path}: manifest must have columns file,label")
        out = {}
        for row in reader:
            name = row["file"].strip()
            if not name:
                continue
            out[name] = FaultClass.from_label(row["label"])
    return out


def write_manifest(path: str | Path, labels: dict[str, FaultClass]) -> None:
    lines = ["file,label"] + [f"{name},{cls.label}" for name, cls in labels.items()]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


@dataclass(frozen=True)
class LabeledWindow:
    source: str
    index: int
    window: VibrationWindow


def load_dataset(
    directory: str | Path,
    window_len: int = DEFAULT_WINDOW_LEN,
    nominal_rate_hz: float = DEFAULT_RATE_HZ,
    require_labels: bool = True,
) -> list[LabeledWindow]:
    """Load every CSV in ``directory`` and window it.

    With a manifest present, only listed files are read and windows carry
    labels. Without one, all ``*.csv`` files are read unlabeled unless
    ``require_labels`` is set.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise DatasetError(f"{directory}: not a directory")
    manifest_path = directory / MANIFEST_NAME
    if manifest_path.exists():
        labels: dict[str, FaultClass] | None = read_manifest(manifest_path)
        names = sorted(labels)
    elif require_labels:
        raise DatasetError(f"{directory}: no {MANIFEST_NAME} found")
    else:
        labels = None
        names = sorted(p.name for p in directory.glob("*.csv") if p.name != MANIFEST_NAME)

    out = []
    for name in names:
        path = directory / name
        if not path.exists():
            raise DatasetError(f"{path}: listed in manifest but missing")
        batch = read_csv(path, nominal_rate_hz)
        label = labels[name] if labels is not None else None
        for i, w in enumerate(segment(batch, window_len)):
            if label is not None:
                w = VibrationWindow(w.x, w.y, w.z, w.rate_hz, label)
            out.append(LabeledWindow(name, i, w))
    return out
