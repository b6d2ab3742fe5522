"""PRMSE scoring and baseline-versus-aided comparison tables."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.typing import NDArray

from .geodesy import WGS84, EarthParams, radii_of_curvature

VARIANTS = ("baseline", "accel")


@dataclass
class RunResult:
    """
    Estimated and true positions on a common time base.

    Positions are geodetic rows ``[lat, lon, h]``. ``extra`` holds per-epoch
    diagnostics keyed by name (bias estimates, for instance).
    """

    t: NDArray[np.float64]
    est_llh: NDArray[np.float64]
    truth_llh: NDArray[np.float64] | None = None
    scenario: str = ""
    variant: str = "baseline"
    seed: int | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.est_llh = np.asarray(self.est_llh, dtype=float).reshape(-1, 3)
        if self.truth_llh is not None:
            self.truth_llh = np.asarray(self.truth_llh, dtype=float).reshape(-1, 3)
            if self.truth_llh.shape != self.est_llh.shape:
                raise ValueError("estimate and truth series differ in length")
        if self.t.shape[0] != self.est_llh.shape[0]:
            raise ValueError("timestamps and estimates differ in length")


@dataclass(frozen=True)
class ComparisonRow:
    """
    One trajectory of a comparison table.

    ``reported_improvement`` carries a published, already rounded percentage
    and takes precedence over the value computed from the PRMSE pair.
    """

    trajectory: str
    prmse_baseline: float
    prmse_accel: float
    reported_improvement: float | None = None

    def is_consistent(self, resolution: float = 0.01) -> bool:
        """Whether the reported percentage matches PRMSEs rounded to ``resolution`` m."""
        if self.reported_improvement is None:
            return True
        b, a, half = self.prmse_baseline, self.prmse_accel, 0.5 * resolution
        bound = 100.0 * (half / b + a * half / b**2) + 0.05  # plus display rounding to 0.1 %
        return abs(self.reported_improvement - improvement_pct(b, a)) <= bound

    @property
    def improvement(self) -> float:
        if self.reported_improvement is not None:
            return self.reported_improvement
        return improvement_pct(self.prmse_baseline, self.prmse_accel)


def align_to_truth(
    est_t: NDArray, est_llh: NDArray, truth_t: NDArray, truth_llh: NDArray, tol: float | None = None
) -> tuple[NDArray, NDArray, NDArray]:
    """
    Nearest-neighbour match of estimate epochs to truth epochs.

    Estimates with no truth sample within ``tol`` (default half the median
    truth period) are dropped. Returns ``(t, est, truth)``.
    """
    est_t = np.asarray(est_t, dtype=float)
    truth_t = np.asarray(truth_t, dtype=float)
    if tol is None:
        tol = 0.5 * float(np.median(np.diff(truth_t))) if len(truth_t) > 1 else 0.0
    idx = np.clip(np.searchsorted(truth_t, est_t), 1, max(len(truth_t) - 1, 1))
    left = truth_t[idx - 1]
    right = truth_t[np.minimum(idx, len(truth_t) - 1)]
    idx = np.where(np.abs(est_t - left) <= np.abs(right - est_t), idx - 1, idx)
    idx = np.minimum(idx, len(truth_t) - 1)
    keep = np.abs(truth_t[idx] - est_t) <= tol + 1e-9
    return est_t[keep], np.asarray(est_llh)[keep], np.asarray(truth_llh)[idx[keep]]


def position_errors(
    est_llh: NDArray, truth_llh: NDArray, earth: EarthParams = WGS84
) -> NDArray[np.float64]:
    """NED-meter error rows (estimate minus truth) about the first truth point."""
    est_llh = np.asarray(est_llh, dtype=float)
    truth_llh = np.asarray(truth_llh, dtype=float)
    lat0, _, h0 = truth_llh[0]
    r_m, r_n = radii_of_curvature(lat0, earth)
    d = est_llh - truth_llh
    d[:, 1] = np.remainder(d[:, 1] + math.pi, 2.0 * math.pi) - math.pi
    return np.column_stack(
        [d[:, 0] * (r_m + h0), d[:, 1] * (r_n + h0) * math.cos(lat0), -d[:, 2]]
    )


def prmse(result: RunResult) -> float:
    """Root mean square of the 3D position error norm [m]."""
    if result.truth_llh is None:
        raise ValueError("run has no truth; PRMSE needs a truth stream")
    if len(result.t) == 0:
        raise ValueError("empty series")
    err = position_errors(result.est_llh, result.truth_llh)
    return prmse_from_errors(err)


def prmse_from_errors(err: NDArray) -> float:
    err = np.asarray(err, dtype=float).reshape(-1, 3)
    if err.shape[0] == 0:
        raise ValueError("empty series")
    return float(np.sqrt(np.mean(np.sum(err**2, axis=1))))


def improvement_pct(baseline: float, proposed: float) -> float:
    if not baseline > 0:
        raise ValueError("baseline PRMSE must be positive")
    return 100.0 * (1.0 - proposed / baseline)


def aggregate(rows: Sequence[ComparisonRow]) -> tuple[float, float, float]:
    """
    Column means ``(prmse_baseline, prmse_accel, improvement)``.

    The improvement is the mean of per-row improvements, not the improvement
    of the mean PRMSEs.
    """
    if not rows:
        raise ValueError("cannot aggregate an empty table")
    return (
        float(np.mean([r.prmse_baseline for r in rows])),
        float(np.mean([r.prmse_accel for r in rows])),
        float(np.mean([r.improvement for r in rows])),
    )


def format_table(rows: Sequence[ComparisonRow]) -> str:
    """Plain-text table with an Average row, two decimals."""
    lines = [f"{'Trajectory':>10}  {'No Acc':>8}  {'With Acc':>8}  {'Impr [%]':>8}"]
    for r in rows:
        lines.append(
            f"{r.trajectory:>10}  {r.prmse_baseline:8.2f}  {r.prmse_accel:8.2f}  {r.improvement:8.2f}"
        )
    b, a, imp = aggregate(rows)
    lines.append(f"{'Average':>10}  {b:8.2f}  {a:8.2f}  {imp:8.2f}")
    return "\n".join(lines)
