"""``egokin`` command line: one subcommand per pipeline stage plus ``annotate``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with status 1 (argparse's default is 2)."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _write_json(obj, out: str | None) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


# ---------------------------------------------------------------------------
# subcommand handlers
# ---------------------------------------------------------------------------

def cmd_filter_imu(args) -> int:
    from .core_types import read_imu_csv, write_imu_csv
    from .imu_signal import FilterKind, FilterSpec, bandpass_accel, is_uniform, resample_uniform, sample_rate

    seq = read_imu_csv(args.input)
    if not (is_uniform(seq) and abs(sample_rate(seq) - args.rate) <= 1e-6 * args.rate):
        seq = resample_uniform(seq, args.rate)
    out = bandpass_accel(seq, FilterSpec(args.gravity_cut, args.order, FilterKind.HIGH_PASS),
                         FilterSpec(args.noise_cut, args.order, FilterKind.LOW_PASS))
    write_imu_csv(out, args.out)
    return 0


def cmd_calibrate(args) -> int:
    from .calibration import CalibrationOptions, solve_calibration
    from .core_types import read_imu_csv, read_trajectory

    opts = CalibrationOptions(endpoint_only=args.endpoint_only, max_iterations=args.max_iterations)
    result = solve_calibration(read_imu_csv(args.imu), read_trajectory(args.sfm), opts)
    result.save(args.out)
    if not result.converged:
        logging.warning("calibration did not converge; best iterate written")
    return 0


def cmd_fuse(args) -> int:
    from .calibration import CalibrationResult, apply_scale
    from .core_types import read_imu_csv, read_trajectory, write_trajectory
    from .kalman import KalmanConfig, fuse_trajectories

    calib = CalibrationResult.load(args.calib)
    sfm = read_trajectory(args.sfm)
    if not sfm.scaled:
        sfm = apply_scale(sfm, calib.lam)
    res = fuse_trajectories(read_imu_csv(args.imu), sfm, calib, KalmanConfig.scaled(args.q, args.r, args.p0))
    write_trajectory(res.trajectory, args.out)
    if res.dropped:
        logging.warning("%d SfM frames had no IMU sample within 10 ms and were skipped", res.dropped)
    return 0


def cmd_pluecker(args) -> int:
    from .core_types import read_trajectory
    from .pluecker import Intrinsics, embed_trajectory, write_plk

    K = Intrinsics(args.fx, args.fy, args.cx, args.cy, args.width, args.height)
    frames = embed_trajectory(read_trajectory(args.poses), K, pixel_centers=not args.corner,
                              relative=not args.absolute)
    write_plk(frames, args.out)
    return 0


def cmd_metrics(args) -> int:
    from .core_types import fmt, read_trajectory
    from .curation import CleansingRecord, five_point_stats, load_flow_dir, motion_smoothness, \
        motion_strength, write_metadata

    if args.metric == "flow":
        maps = load_flow_dir(args.input)
        clip_id = args.clip_id or Path(args.input).resolve().name
        rec = CleansingRecord(clip_id, mean_flow=motion_strength(maps), five_point=five_point_stats(maps))
        write_metadata([rec], args.out)
    else:
        tv, rv = motion_smoothness(read_trajectory(args.poses))
        _write_json({"trans_var": float(fmt(tv)), "rot_var": float(fmt(rv))}, args.out)
    return 0


def _strategy(args):
    from .curation import STRATEGIES, RescueRule, StrategyConfig

    cfg = StrategyConfig.load(args.config) if args.config else STRATEGIES[args.strategy]
    if args.rescue_bins and cfg.rescue_rule is not None:
        r = cfg.rescue_rule
        cfg = StrategyConfig(**{**cfg.__dict__, "rescue_rule": RescueRule(r.flow_below, r.min_p12_plus,
                                                                           args.rescue_bins)})
    return cfg


def cmd_clean(args) -> int:
    from .curation import apply_strategy, ingest_metadata, write_metadata

    cfg = _strategy(args)
    kept, drops = [], []
    for rec in ingest_metadata(args.input, lenient=args.lenient):
        dec = apply_strategy(rec, cfg)
        if dec.keep:
            kept.append(rec)
        else:
            drops.append({"clip_id": rec.clip_id, "reasons": list(dec.reasons)})
    write_metadata(kept, args.out)
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            for d in drops:
                fh.write(json.dumps(d, separators=(", ", ": ")) + "\n")
    logging.info("kept %d, dropped %d", len(kept), len(drops))
    return 0


def cmd_stats(args) -> int:
    from .curation import histogram_stats, ingest_metadata, write_histogram_csv

    recs = ingest_metadata(args.input, lenient=args.lenient)
    write_histogram_csv(histogram_stats(recs, args.field, args.bins), args.out)
    return 0


def cmd_eval(args) -> int:
    from .core_types import read_trajectory
    from .evaluation import evaluate

    align = "umeyama" if args.umeyama else ("canonical" if not args.no_align else None)
    err = evaluate(read_trajectory(args.gen), read_trajectory(args.gt), align)
    _write_json(err.to_dict(), args.out)
    return 0


def cmd_simulate(args) -> int:
    from .sim import SimProfile, generate

    profile = SimProfile.load(args.profile) if args.profile else SimProfile()
    if args.seed is not None:
        profile = profile.replace(seed=args.seed)
    generate(profile).save(args.out)
    return 0


def cmd_annotate(args) -> int:
    from .pipeline import ConfigError, PipelineConfig, annotate

    try:
        cfg = PipelineConfig.load(args.config)
        if args.workers is not None:
            cfg = PipelineConfig(**{**cfg.__dict__, "workers": args.workers})
        summary = annotate(cfg)
    except ConfigError as exc:
        print(f"egokin annotate: config error: {exc}", file=sys.stderr)
        return 1
    logging.info("%d of %d clips succeeded", summary.succeeded, len(summary.records))
    return summary.exit_code


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="egokin", description="Egocentric kinematic annotation toolkit.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    s = sub.add_parser("filter-imu", help="resample and band-pass an IMU CSV")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--rate", type=float, default=200.0, help="uniform sample rate in Hz (default 200)")
    s.add_argument("--gravity-cut", type=float, default=0.25, help="high-pass cutoff in Hz")
    s.add_argument("--noise-cut", type=float, default=15.0, help="low-pass cutoff in Hz")
    s.add_argument("--order", type=int, default=4)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_filter_imu)

    s = sub.add_parser("calibrate", help="solve initial velocity, IMU-to-camera transform and SfM scale")
    s.add_argument("--imu", required=True, help="filtered IMU CSV")
    s.add_argument("--sfm", required=True, help="unscaled SfM trajectory")
    s.add_argument("--out", required=True, help="calibration JSON")
    s.add_argument("--endpoint-only", action="store_true", help="fit only the final frame's residual")
    s.add_argument("--max-iterations", type=int, default=200)
    s.set_defaults(func=cmd_calibrate)

    s = sub.add_parser("fuse", help="EKF fusion of IMU and scaled SfM poses")
    s.add_argument("--imu", required=True, help="filtered IMU CSV")
    s.add_argument("--sfm", required=True, help="SfM trajectory; scaled by the calibration if unscaled")
    s.add_argument("--calib", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--q", type=float, default=0.01, help="process noise scale (Q = q I)")
    s.add_argument("--r", type=float, default=0.1, help="observation noise scale (R = r I)")
    s.add_argument("--p0", type=float, default=0.1, help="initial covariance scale")
    s.set_defaults(func=cmd_fuse)

    s = sub.add_parser("pluecker", help="write per-pixel Plücker maps for a trajectory")
    s.add_argument("--poses", required=True)
    for name in ("fx", "fy", "cx", "cy"):
        s.add_argument(f"--{name}", type=float, required=True)
    s.add_argument("--width", type=int, required=True)
    s.add_argument("--height", type=int, required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--corner", action="store_true", help="sample integer pixel indices, not centres")
    s.add_argument("--absolute", action="store_true", help="do not re-express poses relative to frame 0")
    s.set_defaults(func=cmd_pluecker)

    s = sub.add_parser("metrics", help="flow statistics or motion smoothness")
    msub = s.add_subparsers(dest="metric", required=True)
    m = msub.add_parser("flow", help="mean flow and five-point proportions from FLW1 maps")
    m.add_argument("--in", dest="input", required=True, help="directory of .flw files")
    m.add_argument("--out", required=True)
    m.add_argument("--clip-id", help="defaults to the directory name")
    m.set_defaults(func=cmd_metrics)
    m = msub.add_parser("smoothness", help="translation and rotation increment variances")
    m.add_argument("--poses", required=True)
    m.add_argument("--out", help="JSON output (default stdout)")
    m.set_defaults(func=cmd_metrics)

    s = sub.add_parser("clean", help="filter metadata with a cleaning strategy")
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--strategy", type=int, choices=(1, 2, 3))
    g.add_argument("--config", help="JSON strategy thresholds")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--report", help="JSONL of dropped clips and their reasons")
    s.add_argument("--rescue-bins", choices=("p12_plus", "p16_plus"))
    s.add_argument("--lenient", action="store_true", help="skip malformed lines instead of failing")
    s.set_defaults(func=cmd_clean)

    s = sub.add_parser("stats", help="histogram of one metadata field")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--field", required=True, help="e.g. dover or five_point.p12_16")
    s.add_argument("--bins", type=int, default=50)
    s.add_argument("--out", required=True)
    s.add_argument("--lenient", action="store_true")
    s.set_defaults(func=cmd_stats)

    s = sub.add_parser("eval", help="trajectory error metrics")
    esub = s.add_subparsers(dest="target", required=True)
    e = esub.add_parser("poses", help="RotErr / TransErr of a generated trajectory")
    e.add_argument("--gen", required=True)
    e.add_argument("--gt", required=True)
    e.add_argument("--umeyama", action="store_true", help="similarity alignment over all frames")
    e.add_argument("--no-align", action="store_true", help="compare the trajectories as given")
    e.add_argument("--out", help="JSON output (default stdout)")
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("simulate", help="write a synthetic imu.csv / sfm.txt / gt.txt bundle")
    s.add_argument("--profile", help="JSON simulation profile (defaults when omitted)")
    s.add_argument("--seed", type=int)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("annotate", help="run the whole pipeline over a manifest")
    s.add_argument("--config", required=True, help="pipeline config JSON")
    s.add_argument("--workers", type=int)
    s.set_defaults(func=cmd_annotate)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except (OSError, ValueError, np.linalg.LinAlgError) as exc:
        print(f"egokin {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
