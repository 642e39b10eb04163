"""Closed-loop scenario orchestration.

One scenario wires reference -> sensors -> filter -> controller -> plant
at their respective rates inside a fixed-step master loop at the plant
period. Everything is deterministic for a given seed: sensor RNG streams
are spawned from the scenario seed, and log files are written with fixed
formatting so identical configurations produce byte-identical output.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import metrics as metrics_mod
from . import reference as ref_mod
from . import vehicle as veh_mod
from .config import (
    HelixReferenceSpec,
    ScenarioConfig,
    StepReferenceSpec,
    SuiteConfig,
    WaypointReferenceSpec,
)
from .control import AttitudeCommand, CascadeController
from .estimator import POS_IDX, VEL_IDX, DkfFilter
from .metrics import MetricsReport, ResponseLog
from .pose_sources import ImuSource, PoseMeasurement, SlamPoseSource
from .reference import StepEvent, TrajectoryStream
from .vehicle import VehicleState

SAFETY_BOUND = 1e3  # m; beyond this the run is declared diverged

LOG_COLUMNS = (
    ["t"]
    + ["truth_x", "truth_y", "truth_z", "truth_vx", "truth_vy", "truth_vz",
       "truth_roll", "truth_pitch", "truth_yaw"]
    + ["ref_x", "ref_y", "ref_z", "ref_vx", "ref_vy", "ref_vz",
       "ref_ax", "ref_ay", "ref_az", "ref_yaw"]
    + ["raw_x", "raw_y", "raw_z", "raw_yaw"]
    + ["meas_x", "meas_y", "meas_z", "meas_yaw"]
    + ["est_x", "est_vx", "est_ax", "est_y", "est_vy", "est_ay",
       "est_z", "est_vz", "est_az"]
    + ["p_x", "p_vx", "p_ax", "p_y", "p_vy", "p_ay", "p_z", "p_vz", "p_az"]
    + ["cmd_roll", "cmd_pitch", "cmd_yaw_rate", "cmd_thrust"]
    + ["event_flag"]
)

_FMT = "%.10g"


@dataclass
class Timeline:
    """Composed reference for a whole run, takeoff to touchdown."""

    stream: TrajectoryStream
    main_start: float
    main_end: float
    step_events: list[StepEvent] = field(default_factory=list)
    hold_time: float = 0.0
    kind: str = "step_sequence"


def build_timeline(cfg: ScenarioConfig) -> Timeline:
    """Bracket the configured reference with takeoff, settle and landing legs.

    If the composed reference is shorter than ``cfg.duration``, a hover
    hold before landing fills the difference, so the configured duration
    acts as a minimum mission length.
    """
    dt = cfg.dt
    br = cfg.bracket
    spec = cfg.reference

    if isinstance(spec, StepReferenceSpec):
        hover = np.asarray(spec.hover, dtype=float)
        main, events = ref_mod.step_sequence(
            spec.axis, spec.amplitude, spec.hold_time, spec.repetitions,
            start=hover, dt=dt,
        )
        kind = "step_sequence"
        hold_time = spec.hold_time
        start_point = hover
    elif isinstance(spec, HelixReferenceSpec):
        main = ref_mod.helix(spec.spec, dt=dt)
        events = []
        kind = "helix"
        hold_time = 0.0
        start_point = spec.spec.start_point
    elif isinstance(spec, WaypointReferenceSpec):
        pts = [np.asarray(p, dtype=float) for p in spec.points]
        legs = []
        tour = pts * spec.laps
        for a, b in zip(tour[:-1], tour[1:]):
            legs.append(ref_mod.line_segment(a, b, spec.v_limit, spec.a_limit, dt=dt))
            if spec.pause > 0:
                legs.append(ref_mod.hold_point(b, spec.pause, dt=dt))
        main = ref_mod.concatenate(legs)
        events = []
        kind = "waypoints"
        hold_time = 0.0
        start_point = pts[0]
    else:
        raise TypeError(f"unsupported reference spec {type(spec).__name__}")

    ground = np.array([start_point[0], start_point[1], 0.0])
    takeoff = ref_mod.line_segment(ground, start_point, br.transit_v, br.transit_a, dt=dt)
    settle = ref_mod.hold_point(start_point, br.settle_time, dt=dt)
    end_point = main.position[-1]
    end_hold = ref_mod.hold_point(end_point, br.end_hold, dt=dt)

    pre = [takeoff, settle, main, end_hold]
    pre_duration = sum(s.duration for s in pre)
    landing_spot = np.array([end_point[0], end_point[1], 0.0])
    landing = ref_mod.line_segment(
        end_point, landing_spot, br.transit_v, br.transit_a, dt=dt
    )
    ground_hold = ref_mod.hold_point(landing_spot, br.ground_hold, dt=dt)
    tail_duration = landing.duration + ground_hold.duration

    fill = cfg.duration - (pre_duration + tail_duration)
    parts = list(pre)
    if fill > dt:
        parts.append(ref_mod.hold_point(end_point, fill, dt=dt))
    parts.extend([landing, ground_hold])
    stream = ref_mod.concatenate(parts)

    main_start = takeoff.duration + settle.duration
    main_end = main_start + main.duration
    shifted = [
        StepEvent(e.time + main_start, e.axis, e.start, e.target) for e in events
    ]
    return Timeline(
        stream=stream,
        main_start=main_start,
        main_end=main_end,
        step_events=shifted,
        hold_time=hold_time,
        kind=kind,
    )


@dataclass
class RunResult:
    """Everything a single scenario run produced."""

    name: str
    seed: int
    status: str                      # "completed" or "diverged"
    t: np.ndarray
    truth_pos: np.ndarray            # (n, 3)
    ref_pos: np.ndarray              # (n, 3)
    est_pos: np.ndarray              # (n, 3)
    timeline: Timeline
    step_reports: list[tuple[StepEvent, MetricsReport]] = field(default_factory=list)
    hausdorff_rms: float | None = None
    hausdorff_max: float | None = None
    landing_error: float | None = None
    raw_measurements: np.ndarray | None = None       # (m, 6): t,x,y,z,yaw,event
    smoothed_measurements: np.ndarray | None = None
    log: np.ndarray | None = None                    # (n, len(LOG_COLUMNS))
    events: list = field(default_factory=list)
    fuse_count: int = 0
    drops: dict = field(default_factory=dict)
    diverged_at: float | None = None

    @property
    def tracking_error(self) -> np.ndarray:
        return np.linalg.norm(self.truth_pos - self.ref_pos, axis=1)

    def axis_response(self, axis: int, t0: float, t1: float) -> ResponseLog:
        """Reference/truth pair on one axis over [t0, t1)."""
        i0 = int(np.searchsorted(self.t, t0 - 1e-9))
        i1 = int(np.searchsorted(self.t, t1 - 1e-9))
        return ResponseLog(
            t=self.t[i0:i1],
            ref=self.ref_pos[i0:i1, axis],
            resp=self.truth_pos[i0:i1, axis],
        )


def run_scenario(cfg: ScenarioConfig, log_full: bool | None = None) -> RunResult:
    """Execute one scenario deterministically and compute its metrics."""
    if log_full is None:
        log_full = cfg.log_full
    timeline = build_timeline(cfg)
    stream = timeline.stream
    n = len(stream)
    dt = cfg.dt

    seed_seq = np.random.SeedSequence(cfg.seed)
    pose_rng, imu_rng = [np.random.default_rng(s) for s in seed_seq.spawn(2)]
    slam = SlamPoseSource(
        cfg.profile, pose_rng, scripted_events=list(cfg.loop_closure_events)
    )
    if cfg.warmup.duration > 0:
        slam.set_warmup(cfg.warmup.duration, cfg.warmup.noise_factor)
    imu = ImuSource(cfg.imu, imu_rng)

    truth = VehicleState(position=stream.position[0].copy(), yaw=float(stream.yaw[0]))
    raw0, smoothed0 = slam.sample(truth.position, truth.yaw, 0.0)
    imu.sample(np.zeros(3), 0.0)  # consume the t=0 grid slot
    filt = DkfFilter.initialize(smoothed0, cfg.filter)
    controller = CascadeController(cfg.gains, cfg.plant.hover_thrust, cfg.plant.gravity)

    ticks_per_fuse = round((1.0 / dt) / cfg.imu.rate)

    truth_pos = np.empty((n, 3))
    ref_pos = stream.position
    est_pos = np.empty((n, 3))
    log = np.full((n, len(LOG_COLUMNS)), np.nan) if log_full else None
    raw_rows: list[list[float]] = []
    smoothed_rows: list[list[float]] = []

    truth_pos[0] = truth.position
    est_pos[0] = filt.position
    hover_cmd = AttitudeCommand(0.0, 0.0, 0.0, cfg.plant.hover_thrust)
    cmd = hover_cmd
    est_state = filt.state.copy()
    cov_diag = filt.cov_diagonal
    last_raw = raw0
    pending_pose = None
    n_events_seen = 0
    fuse_count = 0
    status = "completed"
    diverged_at = None

    def _event_flag() -> float:
        nonlocal n_events_seen
        fired = len(slam.events) - n_events_seen
        n_events_seen = len(slam.events)
        return 1.0 if fired > 0 else 0.0

    flag0 = _event_flag()
    _append_measurement(raw_rows, raw0, flag0)
    _append_measurement(smoothed_rows, smoothed0, flag0)
    if log is not None:
        _write_row(log, 0, 0.0, truth, stream, 0, raw0, smoothed0,
                   est_state, cov_diag, cmd, flag0)

    last_i = n - 1
    prev_vel = truth.velocity
    for k in range(1, n):
        t = k * dt
        truth = veh_mod.step(truth, cmd, cfg.plant, dt)
        accel_truth = (truth.velocity - prev_vel) / dt
        prev_vel = truth.velocity

        raw, smoothed = slam.sample(truth.position, truth.yaw, t)
        flag = _event_flag()
        if raw is not None:
            last_raw = raw
            _append_measurement(raw_rows, raw, flag)
            _append_measurement(smoothed_rows, smoothed, flag)
            pending_pose = smoothed
        accel_msg = imu.sample(accel_truth, t)

        if k % ticks_per_fuse == 0:
            est_state = filt.fuse_step(pose=pending_pose, accel=accel_msg)
            pending_pose = None
            if log is not None:
                cov_diag = filt.cov_diagonal
            fuse_count += 1
            cmd = controller.update(
                stream.position[k], stream.velocity[k], stream.acceleration[k],
                float(stream.yaw[k]), est_state[POS_IDX], est_state[VEL_IDX],
                filt.yaw, dt * ticks_per_fuse,
            )

        truth_pos[k] = truth.position
        est_pos[k] = est_state[POS_IDX]
        if log is not None:
            _write_row(log, k, t, truth, stream, k, raw, smoothed,
                       est_state, cov_diag, cmd, flag)

        if not np.isfinite(truth.position).all() or (
            np.abs(truth.position).max() > SAFETY_BOUND
        ):
            status = "diverged"
            diverged_at = t
            last_i = k
            break

    end = last_i + 1
    result = RunResult(
        name=cfg.name,
        seed=cfg.seed,
        status=status,
        t=stream.t[:end].copy(),
        truth_pos=truth_pos[:end],
        ref_pos=ref_pos[:end],
        est_pos=est_pos[:end],
        timeline=timeline,
        raw_measurements=np.array(raw_rows) if raw_rows else np.empty((0, 6)),
        smoothed_measurements=(
            np.array(smoothed_rows) if smoothed_rows else np.empty((0, 6))
        ),
        log=log[:end] if log is not None else None,
        events=list(slam.events),
        fuse_count=fuse_count,
        drops=dict(filt.drops),
        diverged_at=diverged_at,
    )
    _compute_metrics(result, cfg)
    return result


def _append_measurement(rows: list, m: PoseMeasurement, flag: float) -> None:
    rows.append([m.timestamp, m.position[0], m.position[1], m.position[2],
                 m.yaw, flag])


def _write_row(log, k, t, truth, stream, ref_i, raw, smoothed,
               est_state, cov_diag, cmd, flag) -> None:
    row = log[k]
    row[0] = t
    row[1:4] = truth.position
    row[4:7] = truth.velocity
    row[7] = truth.roll
    row[8] = truth.pitch
    row[9] = truth.yaw
    row[10:13] = stream.position[ref_i]
    row[13:16] = stream.velocity[ref_i]
    row[16:19] = stream.acceleration[ref_i]
    row[19] = stream.yaw[ref_i]
    if raw is not None:
        row[20:23] = raw.position
        row[23] = raw.yaw
    if smoothed is not None:
        row[24:27] = smoothed.position
        row[27] = smoothed.yaw
    row[28:37] = est_state
    row[37:46] = cov_diag
    row[46] = cmd.roll
    row[47] = cmd.pitch
    row[48] = cmd.yaw_rate
    row[49] = cmd.thrust
    row[50] = flag


def _compute_metrics(result: RunResult, cfg: ScenarioConfig) -> None:
    timeline = result.timeline
    if result.status == "completed":
        if timeline.kind == "step_sequence":
            for event in timeline.step_events:
                t_end = min(event.time + timeline.hold_time, result.t[-1])
                log = result.axis_response(event.axis, event.time, t_end)
                result.step_reports.append(
                    (event, metrics_mod.step_report(log, event.time))
                )
        elif timeline.kind == "helix":
            i0 = int(np.searchsorted(result.t, timeline.main_start - 1e-9))
            i1 = int(np.searchsorted(result.t, timeline.main_end - 1e-9))
            planned = result.ref_pos[i0:i1]
            executed = result.truth_pos[i0:i1]
            result.hausdorff_rms = metrics_mod.hausdorff_rms(planned, executed)
            result.hausdorff_max = metrics_mod.hausdorff_max(planned, executed)
    if result.raw_measurements is not None and len(result.raw_measurements):
        reported = result.raw_measurements[-1, 1:4]
        result.landing_error = metrics_mod.landing_error(
            reported, result.truth_pos[-1]
        )


def aggregate_step_metrics(
    results: list[RunResult],
) -> dict[int, dict[str, tuple[float, float]]]:
    """Mean/std of each step criterion per axis over a batch of runs."""
    per_axis: dict[int, dict[str, list[float]]] = {}
    for res in results:
        for event, report in res.step_reports:
            bucket = per_axis.setdefault(event.axis, {})
            for key, value in report.as_dict().items():
                if value is not None:
                    bucket.setdefault(key, []).append(value)
    out: dict[int, dict[str, tuple[float, float]]] = {}
    for axis, buckets in sorted(per_axis.items()):
        out[axis] = {
            key: (float(np.mean(vals)), float(np.std(vals)))
            for key, vals in buckets.items()
        }
    return out


@dataclass
class SuiteResult:
    name: str
    runs: list[RunResult]
    table: list[dict]

    def format_table(self) -> str:
        cols = ["scenario", "axis", "IAE", "ISE", "ITAE", "ITSE", "PO_pct",
                "rise_time_s", "hausdorff_rms_m", "landing_error_m", "runs"]
        widths = {c: len(c) for c in cols}
        rows = []
        for entry in self.table:
            row = {}
            for c in cols:
                v = entry.get(c)
                if v is None:
                    row[c] = "-"
                elif isinstance(v, tuple):
                    row[c] = f"{v[0]:.4g}±{v[1]:.2g}"
                elif isinstance(v, float):
                    row[c] = f"{v:.4g}"
                else:
                    row[c] = str(v)
                widths[c] = max(widths[c], len(row[c]))
            rows.append(row)
        header = "  ".join(c.ljust(widths[c]) for c in cols)
        lines = [header, "-" * len(header)]
        for row in rows:
            lines.append("  ".join(row[c].ljust(widths[c]) for c in cols))
        return "\n".join(lines)


_AXIS_NAMES = {0: "x", 1: "y", 2: "z"}


def run_suite(suite: SuiteConfig) -> SuiteResult:
    """Run every scenario at every seed and aggregate the metrics.

    Any configuration error surfaces before the first run starts, because
    all scenarios were parsed eagerly at load time.
    """
    runs = []
    table = []
    for scenario in suite.scenarios:
        batch = []
        for seed in suite.seeds:
            cfg_run = _with_seed(scenario, seed)
            batch.append(run_scenario(cfg_run))
        runs.extend(batch)
        completed = [r for r in batch if r.status == "completed"]

        step_agg = aggregate_step_metrics(completed)
        if step_agg:
            for axis, agg in step_agg.items():
                entry = {"scenario": scenario.name, "axis": _AXIS_NAMES[axis],
                         "runs": f"{len(completed)}/{len(batch)}"}
                entry.update({k: v for k, v in agg.items()})
                table.append(entry)
        else:
            entry = {"scenario": scenario.name, "axis": "-",
                     "runs": f"{len(completed)}/{len(batch)}"}
            hrms = [r.hausdorff_rms for r in completed if r.hausdorff_rms is not None]
            land = [r.landing_error for r in completed if r.landing_error is not None]
            if hrms:
                entry["hausdorff_rms_m"] = (float(np.mean(hrms)), float(np.std(hrms)))
            if land:
                entry["landing_error_m"] = (float(np.mean(land)), float(np.std(land)))
            table.append(entry)
    return SuiteResult(name=suite.name, runs=runs, table=table)


def _with_seed(cfg: ScenarioConfig, seed: int) -> ScenarioConfig:
    clone = copy.copy(cfg)
    clone.seed = seed
    clone.name = f"{cfg.name}_seed{seed}"
    return clone


def write_run_outputs(result: RunResult, out_dir: str | Path) -> list[Path]:
    """Write run log, measurement streams, metrics and plot series CSVs."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    if result.log is not None:
        path = out / "run.csv"
        np.savetxt(path, result.log, fmt=_FMT, delimiter=",",
                   header=",".join(LOG_COLUMNS), comments="")
        written.append(path)

    meas_header = "t,x,y,z,yaw,event_flag"
    for name, arr in (("measurements_raw.csv", result.raw_measurements),
                      ("measurements_smoothed.csv", result.smoothed_measurements)):
        if arr is not None:
            path = out / name
            np.savetxt(path, arr, fmt=_FMT, delimiter=",",
                       header=meas_header, comments="")
            written.append(path)

    path = out / "metrics.csv"
    with open(path, "w") as fh:
        fh.write("scenario,seed,status,axis,step_time,"
                 "IAE,ISE,ITAE,ITSE,PO_pct,rise_time_s,"
                 "hausdorff_rms_m,hausdorff_max_m,landing_error_m\n")
        base = f"{result.name},{result.seed},{result.status}"
        if result.step_reports:
            for event, rep in result.step_reports:
                fh.write(
                    f"{base},{_AXIS_NAMES[event.axis]},{event.time:g},"
                    f"{rep.iae:.10g},{rep.ise:.10g},{rep.itae:.10g},"
                    f"{rep.itse:.10g},{rep.overshoot_pct:.10g},"
                    f"{rep.rise_time:.10g},,,"
                    f"{_fmt_opt(result.landing_error)}\n"
                )
        else:
            fh.write(
                f"{base},,,,,,,,"
                f"{_fmt_opt(result.hausdorff_rms)},"
                f"{_fmt_opt(result.hausdorff_max)},"
                f"{_fmt_opt(result.landing_error)}\n"
            )
    written.append(path)

    series_dir = out / "series"
    series_dir.mkdir(exist_ok=True)
    series = {
        "truth_x": result.truth_pos[:, 0], "truth_y": result.truth_pos[:, 1],
        "truth_z": result.truth_pos[:, 2],
        "ref_x": result.ref_pos[:, 0], "ref_y": result.ref_pos[:, 1],
        "ref_z": result.ref_pos[:, 2],
        "est_x": result.est_pos[:, 0], "est_y": result.est_pos[:, 1],
        "est_z": result.est_pos[:, 2],
        "tracking_error": result.tracking_error,
    }
    for name, values in series.items():
        path = series_dir / f"{name}.csv"
        np.savetxt(path, np.column_stack([result.t, values]), fmt=_FMT,
                   delimiter=",", header="t,value", comments="")
        written.append(path)
    return written


def _fmt_opt(value: float | None) -> str:
    return "" if value is None else f"{value:.10g}"
