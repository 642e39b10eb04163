"""Command-line entry points: run, suite, metrics, list-profiles."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import harness, metrics as metrics_mod
from .config import ConfigError, load_scenario, load_suite
from .metrics import MetricsError, ResponseLog
from .pose_sources import builtin_profiles


def _cmd_run(args) -> int:
    cfg = load_scenario(args.config)
    result = harness.run_scenario(cfg)
    out_dir = args.out or cfg.output_dir or f"runs/{cfg.name}_seed{cfg.seed}"
    written = harness.write_run_outputs(result, out_dir)
    print(f"[{result.status}] {cfg.name} seed={cfg.seed} "
          f"duration={result.t[-1]:.2f}s")
    if result.diverged_at is not None:
        print(f"  diverged at t={result.diverged_at:.2f}s")
    for event, rep in result.step_reports:
        print(f"  step @ {event.time:.1f}s axis={event.axis}: "
              f"IAE={rep.iae:.3f} ISE={rep.ise:.3f} ITAE={rep.itae:.3f} "
              f"ITSE={rep.itse:.3f} PO={rep.overshoot_pct:.1f}% "
              f"tr={rep.rise_time:.2f}s")
    if result.hausdorff_rms is not None:
        print(f"  hausdorff RMS={result.hausdorff_rms:.4f} m "
              f"(max={result.hausdorff_max:.4f} m)")
    if result.landing_error is not None:
        print(f"  landing error={result.landing_error:.4f} m")
    print(f"  wrote {len(written)} files under {out_dir}")
    return 0 if result.status == "completed" else 2


def _cmd_suite(args) -> int:
    suite = load_suite(args.config)
    result = harness.run_suite(suite)
    print(result.format_table())
    out_dir = Path(args.out or suite.output_dir or f"runs/{suite.name}")
    out_dir.mkdir(parents=True, exist_ok=True)
    table_path = out_dir / "suite_metrics.csv"
    _write_suite_csv(result, table_path)
    print(f"wrote {table_path}")
    return 0


def _write_suite_csv(result: harness.SuiteResult, path: Path) -> None:
    cols = ["scenario", "axis", "IAE", "ISE", "ITAE", "ITSE", "PO_pct",
            "rise_time_s", "hausdorff_rms_m", "landing_error_m", "runs"]
    with open(path, "w") as fh:
        header = []
        for c in cols:
            if c in ("scenario", "axis", "runs"):
                header.append(c)
            else:
                header.extend([f"{c}_mean", f"{c}_std"])
        fh.write(",".join(header) + "\n")
        for entry in result.table:
            cells = []
            for c in cols:
                v = entry.get(c)
                if c in ("scenario", "axis", "runs"):
                    cells.append(str(v) if v is not None else "")
                elif isinstance(v, tuple):
                    cells.extend([f"{v[0]:.10g}", f"{v[1]:.10g}"])
                else:
                    cells.extend(["", ""])
            fh.write(",".join(cells) + "\n")


def _cmd_metrics(args) -> int:
    """Recompute metrics offline from a run.csv log."""
    data = np.genfromtxt(args.log, delimiter=",", names=True)
    t = data["t"]
    unsettled = False
    any_step = False
    for axis, name in ((0, "x"), (1, "y"), (2, "z")):
        ref = data[f"ref_{name}"]
        resp = data[f"truth_{name}"]
        onsets = np.flatnonzero(np.abs(np.diff(ref)) > 1e-12) + 1
        for i, onset in enumerate(onsets):
            end = onsets[i + 1] if i + 1 < len(onsets) else len(t)
            if end - onset < 2:
                continue
            log = ResponseLog(t=t[onset:end], ref=ref[onset:end],
                              resp=resp[onset:end])
            any_step = True
            try:
                rep = metrics_mod.step_report(log, float(t[onset]))
                print(f"step @ {t[onset]:.2f}s axis={name}: "
                      f"IAE={rep.iae:.4f} ISE={rep.ise:.4f} "
                      f"ITAE={rep.itae:.4f} ITSE={rep.itse:.4f} "
                      f"PO={rep.overshoot_pct:.2f}% tr={rep.rise_time:.3f}s")
            except MetricsError as exc:
                print(f"step @ {t[onset]:.2f}s axis={name}: {exc}")
                unsettled = True
    if not any_step:
        planned = np.column_stack([data["ref_x"], data["ref_y"], data["ref_z"]])
        executed = np.column_stack(
            [data["truth_x"], data["truth_y"], data["truth_z"]]
        )
        moving = np.abs(np.diff(planned, axis=0)).sum(axis=1) > 1e-12
        if moving.any():
            rms = metrics_mod.hausdorff_rms(planned, executed)
            hmax = metrics_mod.hausdorff_max(planned, executed)
            print(f"hausdorff RMS={rms:.4f} m (max={hmax:.4f} m)")
    raw = np.column_stack([data["raw_x"], data["raw_y"], data["raw_z"]])
    valid = np.isfinite(raw).all(axis=1)
    if valid.any():
        reported = raw[np.flatnonzero(valid)[-1]]
        truth_final = np.array([data["truth_x"][-1], data["truth_y"][-1],
                                data["truth_z"][-1]])
        print(f"landing error={metrics_mod.landing_error(reported, truth_final):.4f} m")
    return 3 if unsettled else 0


def _cmd_list_profiles(_args) -> int:
    for name, prof in builtin_profiles().items():
        print(f"{name}:")
        print(f"  rate: {prof.rate:g} Hz")
        print(f"  noise_sigma: {np.asarray(prof.noise_sigma).tolist()} m")
        print(f"  drift_density: {np.asarray(prof.drift_density).tolist()} m/sqrt(s)"
              f" (z x{prof.z_drift_multiplier:g})")
        print(f"  degradation: slope {prof.degradation_slope:g}/m above "
              f"{prof.degradation_altitude:g} m")
        print(f"  loop_closure: {prof.loop_closure} "
              f"(radius {prof.revisit_radius:g} m, "
              f"min interval {prof.min_revisit_interval:g} s, "
              f"min drift {prof.min_drift_trigger:g} m)")
        print(f"  smoothing_window: {prof.smoothing_window:g} s")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="slamloop",
        description="Closed-loop flight simulation with SLAM-like pose feedback",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one scenario config")
    p_run.add_argument("config", help="scenario JSON file")
    p_run.add_argument("--out", help="output directory")
    p_run.set_defaults(func=_cmd_run)

    p_suite = sub.add_parser("suite", help="run a scenario suite")
    p_suite.add_argument("config", help="suite JSON file")
    p_suite.add_argument("--out", help="output directory")
    p_suite.set_defaults(func=_cmd_suite)

    p_metrics = sub.add_parser("metrics", help="recompute metrics from a run log")
    p_metrics.add_argument("log", help="run.csv produced by 'run'")
    p_metrics.set_defaults(func=_cmd_metrics)

    p_list = sub.add_parser("list-profiles", help="show built-in sensor profiles")
    p_list.set_defaults(func=_cmd_list_profiles)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except MetricsError as exc:
        print(f"metrics error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
