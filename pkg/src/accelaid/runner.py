"""
Filter run loop and Monte-Carlo batches.

The loop propagates the INS and covariance at IMU rate; on every GNSS fix it
applies a position update and, for the acceleration-aided variant once the fix
window is full, a stacked GNSS-acceleration update.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .config import RunConfig, write_config_echo
from .dataset import DatasetBundle, TruthStream, fmt, write_csv, write_dataset
from .ekf import ErrorStateEKF, ProcessNoiseParams
from .errors import AccelAidError
from .evaluation import (
    VARIANTS,
    ComparisonRow,
    RunResult,
    aggregate,
    align_to_truth,
    position_errors,
    prmse,
)
from .geodesy import GeodeticPosition, dcm_to_euler, euler_to_dcm, local_ned_to_llh, so3_exp
from .gnss_accel import FixWindow, GnssFix, extract_accel
from .measurement import accel_residual, position_residual, stack
from .simulator import (
    GnssErrorModel,
    ImuErrorModel,
    TrajectoryProfile,
    generate_truth,
    spawn_seeds,
    synthesize_gnss,
    synthesize_imu,
)
from .strapdown import MAX_DT, NavState

log = logging.getLogger(__name__)

SIMULTANEOUS = 1e-3  # IMU and GNSS stamps closer than this are one epoch


class BatchError(AccelAidError):
    def __init__(self, seed, cause):
        self.seed = seed
        super().__init__(f"run with seed {seed} failed: {cause}")


@dataclass
class Scenario:
    bundle: DatasetBundle
    init_state: NavState
    accel_bias: np.ndarray
    gyro_bias: np.ndarray
    seed: int
    name: str = ""


def initial_covariance(cfg: RunConfig) -> np.ndarray:
    std = np.concatenate(
        [
            np.full(3, cfg.p0_pos),
            np.full(3, cfg.p0_vel),
            [cfg.p0_tilt, cfg.p0_tilt, cfg.p0_yaw],
            np.full(3, cfg.p0_accel_bias),
            np.full(3, cfg.p0_gyro_bias),
        ]
    )
    return np.diag(std**2)


def process_noise(cfg: RunConfig) -> ProcessNoiseParams:
    cfg = cfg.resolved()
    return ProcessNoiseParams(
        accel_noise=(cfg.q_accel_noise,) * 3,
        gyro_noise=(cfg.q_gyro_noise,) * 3,
        accel_bias_walk=(cfg.q_accel_bias_walk,) * 3,
        gyro_bias_walk=(cfg.q_gyro_bias_walk,) * 3,
    )


def simulate_scenario(cfg: RunConfig, seed: int | None = None) -> Scenario:
    """
    Build a simulated dataset and a perturbed initial state.

    ``seed`` (default ``cfg.seed``) fans out into IMU noise, GNSS noise and
    initial-error streams. Initial errors are Gaussian with the ``p0_*``
    standard deviations times ``init_error_scale``; bias estimates start at 0.
    """
    cfg = cfg.resolved()
    seed = cfg.seed if seed is None else seed
    imu_seed, gnss_seed, init_seed = spawn_seeds(seed, 3)
    profile = TrajectoryProfile(
        kind=cfg.profile,
        speed=cfg.speed,
        duration=cfg.duration,
        origin=GeodeticPosition(cfg.origin_lat, cfg.origin_lon, cfg.origin_h),
        period=cfg.figure8_period,
    )
    truth = generate_truth(profile, cfg.imu_rate)
    ba = np.asarray(cfg.accel_bias, dtype=float)
    bg = np.asarray(cfg.gyro_bias, dtype=float)
    imu = synthesize_imu(
        truth,
        ImuErrorModel(tuple(ba), tuple(bg), cfg.accel_noise, cfg.gyro_noise, cfg.imu_rate, imu_seed),
    )
    gnss = synthesize_gnss(truth, GnssErrorModel((cfg.gnss_sigma,) * 3, cfg.gnss_rate, gnss_seed))
    bundle = DatasetBundle(imu, gnss, TruthStream(truth.t, truth.llh))

    rng = np.random.default_rng(init_seed)
    std = np.sqrt(np.diag(initial_covariance(cfg)))[:9] * cfg.init_error_scale
    err = std * rng.standard_normal(9)
    true0 = truth.state(0)

    init = NavState(
        local_ned_to_llh(true0.position, err[0:3]),
        true0.velocity + err[3:6],
        true0.attitude @ so3_exp(-err[6:9]),
        true0.timestamp,
    )
    return Scenario(bundle, init, ba, bg, seed, f"{cfg.profile}-{seed}")


def replay_initial_state(bundle: DatasetBundle, cfg: RunConfig) -> NavState:
    """Initial state from config, falling back to the first GNSS fix for position."""
    g = bundle.gnss
    pos = [cfg.init_lat, cfg.init_lon, cfg.init_h]
    for i, v in enumerate(pos):
        if math.isnan(v):
            pos[i] = g.llh[0, i]
    t0 = min(float(g.t[0]), float(bundle.imu.t[0]))
    return NavState(GeodeticPosition(*pos), np.array(cfg.init_vel), euler_to_dcm(*cfg.init_rpy), t0)


def _expand_gaps(t_prev, times, f, w, nominal):
    """Split steps longer than the integrator limit into equal sub-steps."""
    dts = np.diff(np.concatenate([[t_prev], times]))
    if np.any(dts <= 0):
        raise AccelAidError("IMU timestamps are not increasing")
    long = dts > 10.0 * nominal
    for i in np.flatnonzero(long):
        log.warning("IMU gap of %.3f s ending at t=%.3f", dts[i], times[i])
    if not np.any(dts > MAX_DT):
        return times, f, w
    reps = np.maximum(1, np.ceil(dts / MAX_DT - 1e-9)).astype(int)
    new_t = np.concatenate(
        [t0 + dt * np.arange(1, n + 1) / n for t0, dt, n in zip(times - dts, dts, reps)]
    )
    return new_t, np.repeat(f, reps, axis=0), np.repeat(w, reps, axis=0)


def run_filter(
    bundle: DatasetBundle,
    cfg: RunConfig,
    variant: str | None = None,
    init_state: NavState | None = None,
    scenario: str = "",
    seed: int | None = None,
) -> RunResult:
    """
    Run one filter variant over a dataset.

    Parameters
    ----------
    variant : {'baseline', 'accel'}, optional
        Defaults to ``'accel'`` when ``cfg.accel_update`` is set.
    init_state : NavState, optional
        Defaults to :func:`replay_initial_state`.

    Returns
    -------
    RunResult
        Estimates at GNSS epochs (or IMU epochs with ``eval_at = imu``), aligned
        with truth when the bundle carries one.
    """
    cfg = cfg.resolved()
    if variant is None:
        variant = "accel" if cfg.accel_update else "baseline"
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}")
    use_accel = variant == "accel"
    state0 = init_state if init_state is not None else replay_initial_state(bundle, cfg)
    ekf = ErrorStateEKF(state0.copy(), initial_covariance(cfg), process_noise(cfg))
    window = FixWindow(cfg.window_fixes, cfg.window_min_span)

    imu_t = bundle.imu.t
    imu_f = bundle.imu.specific_force
    imu_w = bundle.imu.angular_rate
    nominal = float(np.median(np.diff(imu_t))) if len(imu_t) > 1 else 1.0 / cfg.imu_rate
    k = int(np.searchsorted(imu_t, state0.timestamp + 1e-9, side="right"))
    clock = state0.timestamp

    ep_t, ep_llh, ep_vel, ep_rpy, ep_ba, ep_bg = [], [], [], [], [], []
    imu_hist_t, imu_hist = [], []
    n_accel = 0

    def advance(k_end):
        nonlocal k
        if k_end <= k:
            return
        t, f, w = _expand_gaps(ekf.state.timestamp, imu_t[k:k_end], imu_f[k:k_end], imu_w[k:k_end], nominal)
        hist = ekf.propagate_many(t, f, w)
        if cfg.eval_at == "imu":
            imu_hist_t.append(t)
            imu_hist.append(hist)
        k = k_end

    def record(t):
        s = ekf.state
        ep_t.append(t)
        ep_llh.append(tuple(s.position))
        ep_vel.append(s.velocity.copy())
        ep_rpy.append(dcm_to_euler(s.attitude))
        ep_ba.append(s.accel_bias.copy())
        ep_bg.append(s.gyro_bias.copy())

    g = bundle.gnss
    for j in range(len(g.t)):
        tf = float(g.t[j])
        if tf < clock - SIMULTANEOUS:
            log.warning("dropping GNSS fix at t=%.3f older than filter time %.3f", tf, clock)
            continue
        advance(int(np.searchsorted(imu_t, tf + SIMULTANEOUS, side="right")))
        if ekf.state.timestamp < clock:
            raise AccelAidError("filter clock went backwards")
        clock = max(clock, tf, ekf.state.timestamp)

        fix = GnssFix(tf, GeodeticPosition(*g.llh[j]), g.sigma[j])
        window.push_fix(fix)
        meas = [position_residual(ekf.state, fix, cfg.pos_noise_scale)]
        if use_accel and window.ready and k > 0:
            f_now = imu_f[k - 1] - ekf.state.accel_bias
            est = extract_accel(window)
            meas.append(accel_residual(ekf.state, f_now, est, cfg.accel_noise_scale))
            n_accel += 1
        ekf.correct(stack(meas))
        record(tf)
        if cfg.eval_at == "imu":
            imu_hist_t.append(np.array([ekf.state.timestamp]))
            imu_hist.append(np.array([tuple(ekf.state.position)]))
    advance(len(imu_t))

    if cfg.eval_at == "imu" and imu_hist:
        out_t = np.concatenate(imu_hist_t)
        out_llh = np.concatenate(imu_hist)
        # an update at an IMU epoch supersedes the propagated point
        keep = np.append(np.diff(out_t) > 1e-9, True)
        out_t, out_llh = out_t[keep], out_llh[keep]
    else:
        out_t, out_llh = np.array(ep_t), np.array(ep_llh).reshape(-1, 3)

    extra = {
        "epoch_t": np.array(ep_t),
        "epoch_llh": np.array(ep_llh).reshape(-1, 3),
        "velocity": np.array(ep_vel).reshape(-1, 3),
        "rpy": np.array(ep_rpy).reshape(-1, 3),
        "accel_bias": np.array(ep_ba).reshape(-1, 3),
        "gyro_bias": np.array(ep_bg).reshape(-1, 3),
        "n_accel_updates": n_accel,
        "final_state": ekf.state,
        "final_P": ekf.P,
    }
    truth_llh = None
    if bundle.truth is not None:
        out_t, out_llh, truth_llh = align_to_truth(out_t, out_llh, bundle.truth.t, bundle.truth.llh)
    return RunResult(out_t, out_llh, truth_llh, scenario, variant, seed, extra)


# ---------------------------------------------------------------- outputs


def write_run_outputs(result: RunResult, out_dir) -> None:
    """``errors_<variant>.csv`` (if truth) and ``trace_<variant>.csv``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ex = result.extra
    write_csv(
        out / f"trace_{result.variant}.csv",
        "t lat lon h vn ve vd roll pitch yaw bax bay baz bgx bgy bgz".split(),
        [ex["epoch_t"], ex["epoch_llh"], ex["velocity"], ex["rpy"], ex["accel_bias"], ex["gyro_bias"]],
    )
    if result.truth_llh is not None:
        err = position_errors(result.est_llh, result.truth_llh)
        write_csv(
            out / f"errors_{result.variant}.csv",
            ["t", "err_n", "err_e", "err_d", "err_norm"],
            [result.t, err, np.linalg.norm(err, axis=1)],
        )


def write_comparison(path, rows: list[dict]) -> None:
    """Per-trajectory PRMSE table plus an ``average`` row; blank where undefined."""
    header = ["trajectory", "seed", "prmse_baseline", "prmse_accel", "improvement_pct"]

    def cell(v):
        return "" if v is None else fmt(v)

    lines = [",".join(header)]
    for r in rows:
        lines.append(
            ",".join(
                [str(r["trajectory"]), "" if r.get("seed") is None else str(r["seed"])]
                + [cell(r.get(k)) for k in header[2:]]
            )
        )
    full = [ComparisonRow(str(r["trajectory"]), r["prmse_baseline"], r["prmse_accel"])
            for r in rows if r.get("prmse_baseline") is not None and r.get("prmse_accel") is not None]
    if full:
        b, a, imp = aggregate(full)
        lines.append(",".join(["average", "", fmt(b), fmt(a), fmt(imp)]))
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------- batches


@dataclass
class RunPlan:
    mode: str = "simulate"
    variants: tuple[str, ...] = VARIANTS
    repetitions: int = 1
    config: RunConfig = field(default_factory=RunConfig)
    out_dir: Path | None = None
    seed: int | None = None
    jobs: int = 1
    bundle: DatasetBundle | None = None

    def __post_init__(self):
        if self.mode not in ("simulate", "replay"):
            raise ValueError("mode must be 'simulate' or 'replay'")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if not self.variants or any(v not in VARIANTS for v in self.variants):
            raise ValueError(f"variants must be a non-empty subset of {VARIANTS}")


@dataclass
class RepetitionOutcome:
    index: int
    seed: int | None
    results: dict[str, RunResult]
    true_accel_bias: np.ndarray | None = None

    @property
    def row(self) -> dict:
        row = {"trajectory": self.index + 1, "seed": self.seed}
        for v in VARIANTS:
            r = self.results.get(v)
            row[f"prmse_{v}"] = prmse(r) if r is not None and r.truth_llh is not None else None
        if row["prmse_baseline"] is not None and row["prmse_accel"] is not None:
            row["improvement_pct"] = ComparisonRow("", row["prmse_baseline"], row["prmse_accel"]).improvement
        return row

    def bias_error(self, variant: str) -> float:
        """Terminal accelerometer-bias estimation error norm [m/s^2]."""
        est = self.results[variant].extra["accel_bias"][-1]
        return float(np.linalg.norm(est - self.true_accel_bias))


def repetition_seeds(seed: int, repetitions: int) -> list[int]:
    return spawn_seeds(seed, repetitions)


def _run_repetition(args) -> RepetitionOutcome:
    index, seed, plan = args
    cfg = plan.config
    try:
        if plan.mode == "simulate":
            sc = simulate_scenario(cfg, seed)
            results = {
                v: run_filter(sc.bundle, cfg, v, sc.init_state, sc.name, seed) for v in plan.variants
            }
            return RepetitionOutcome(index, seed, results, sc.accel_bias)
        results = {v: run_filter(plan.bundle, cfg, v, None, "replay", None) for v in plan.variants}
        return RepetitionOutcome(index, None, results)
    except Exception as exc:  # noqa: BLE001 - re-raised with the seed attached
        raise BatchError(seed, exc) from exc


def run_batch(plan: RunPlan) -> list[RepetitionOutcome]:
    """
    Execute every (repetition, variant) run and write outputs when
    ``plan.out_dir`` is set.

    Repetition ``r`` of a simulated batch uses the ``r``-th child of the plan
    seed, shared by all variants, so each row compares the filters on the same
    data. Results are merged by repetition index and are independent of
    ``jobs``.
    """
    cfg = plan.config.resolved()
    plan = replace(plan, config=cfg)
    seed = cfg.seed if plan.seed is None else plan.seed
    if plan.mode == "simulate":
        seeds = [seed] if plan.repetitions == 1 else repetition_seeds(seed, plan.repetitions)
    else:
        if plan.bundle is None:
            raise ValueError("replay plan needs a dataset bundle")
        seeds = [None] * plan.repetitions
    tasks = [(i, s, plan) for i, s in enumerate(seeds)]
    if plan.jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=plan.jobs) as pool:
            outcomes = list(pool.map(_run_repetition, tasks))
    else:
        outcomes = [_run_repetition(t) for t in tasks]
    outcomes.sort(key=lambda o: o.index)

    if plan.out_dir is not None:
        out = Path(plan.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_config_echo(cfg, out)
        for o in outcomes:
            sub = out if len(outcomes) == 1 else out / f"rep_{o.index:03d}"
            for r in o.results.values():
                write_run_outputs(r, sub)
        if all(r.truth_llh is not None for o in outcomes for r in o.results.values()):
            write_comparison(out / "comparison.csv", [o.row for o in outcomes])
    return outcomes


def export_scenario(sc: Scenario, out_dir) -> None:
    write_dataset(sc.bundle, out_dir)
