"""Normalized CSV streams for IMU, GNSS and truth, plus run output files."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.typing import NDArray

from .errors import MalformedRowError, MissingFileError, MonotonicityError, NanFieldError
from .simulator import GnssStream, ImuStream

IMU_HEADER = ("t", "fx", "fy", "fz", "wx", "wy", "wz")
GNSS_HEADER = ("t", "lat", "lon", "h", "sn", "se", "sd")
TRUTH_HEADER = ("t", "lat", "lon", "h")


@dataclass
class TruthStream:
    t: NDArray[np.float64]
    llh: NDArray[np.float64]


@dataclass
class DatasetBundle:
    imu: ImuStream
    gnss: GnssStream
    truth: TruthStream | None = None


def fmt(x: float) -> str:
    """17 significant digits: round-trips every double exactly."""
    return format(float(x), ".17g")


def _read_table(path: Path, header: tuple[str, ...]) -> NDArray[np.float64]:
    if not path.is_file():
        raise MissingFileError(f"{path}: file not found")
    rows = []
    prev_t = -math.inf
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        first = next(reader, None)
        if first is None or tuple(c.strip() for c in first) != header:
            raise MalformedRowError(f"{path}:1: expected header {','.join(header)}")
        for row in reader:
            lineno = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise MalformedRowError(
                    f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}"
                )
            try:
                values = [float(c) for c in row]
            except ValueError:
                raise MalformedRowError(f"{path}:{lineno}: non-numeric field") from None
            if not all(math.isfinite(v) for v in values):
                raise NanFieldError(f"{path}:{lineno}: NaN or infinite field")
            if not values[0] > prev_t:
                raise MonotonicityError(
                    f"{path}:{lineno}: timestamp {values[0]!r} does not increase"
                )
            prev_t = values[0]
            rows.append(values)
    return np.array(rows, dtype=float).reshape(-1, len(header))


def _write_table(path: Path, header, columns) -> None:
    data = np.column_stack(columns)
    with path.open("w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in data:
            fh.write(",".join(fmt(x) for x in row) + "\n")


def load_dataset(imu_path, gnss_path, truth_path=None) -> DatasetBundle:
    """
    Load and validate the three CSV streams.

    ``truth_path`` may be omitted or point to a missing file; the bundle then
    has no truth and PRMSE evaluation will refuse to run.
    """
    imu = _read_table(Path(imu_path), IMU_HEADER)
    gnss = _read_table(Path(gnss_path), GNSS_HEADER)
    truth = None
    if truth_path and Path(truth_path).is_file():
        tr = _read_table(Path(truth_path), TRUTH_HEADER)
        truth = TruthStream(tr[:, 0], tr[:, 1:4])
    return DatasetBundle(
        ImuStream(imu[:, 0], imu[:, 1:4], imu[:, 4:7]),
        GnssStream(gnss[:, 0], gnss[:, 1:4], gnss[:, 4:7]),
        truth,
    )


def write_dataset(bundle: DatasetBundle, out_dir) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"imu": out / "imu.csv", "gnss": out / "gnss.csv"}
    imu, gnss = bundle.imu, bundle.gnss
    _write_table(paths["imu"], IMU_HEADER, [imu.t, imu.specific_force, imu.angular_rate])
    _write_table(paths["gnss"], GNSS_HEADER, [gnss.t, gnss.llh, gnss.sigma])
    if bundle.truth is not None:
        paths["truth"] = out / "truth.csv"
        _write_table(paths["truth"], TRUTH_HEADER, [bundle.truth.t, bundle.truth.llh])
    return paths


def write_csv(path, header, columns) -> Path:
    """Write numeric columns with the same exact formatting as the streams."""
    path = Path(path)
    _write_table(path, tuple(header), columns)
    return path
