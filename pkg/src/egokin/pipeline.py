"""End-to-end annotation: one manifest in, per-clip artefacts plus a metadata file out."""
from __future__ import annotations

import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

from .calibration import apply_scale, solve_calibration
from .core_types import read_imu_csv, read_trajectory, write_trajectory
from .curation import (
    CleansingRecord,
    StrategyConfig,
    STRATEGIES,
    apply_strategy,
    dumps_record,
    five_point_stats,
    load_flow_dir,
    motion_smoothness,
    motion_strength,
)
from .imu_signal import (
    DEFAULT_GRAVITY_CUT,
    DEFAULT_NOISE_CUT,
    DEFAULT_ORDER,
    DEFAULT_RATE,
    FilterKind,
    FilterSpec,
    QualityThresholds,
    bandpass_accel,
    is_uniform,
    quality_gate,
    resample_uniform,
)
from .kalman import KalmanConfig, fuse_trajectories
from .pluecker import Intrinsics, embed_trajectory, write_plk

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_ALL_FAILED = 2


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PipelineConfig:
    manifest: str
    out_dir: str
    workers: Optional[int] = None
    resample_rate: float = DEFAULT_RATE
    gravity_cut: float = DEFAULT_GRAVITY_CUT
    noise_cut: float = DEFAULT_NOISE_CUT
    filter_order: int = DEFAULT_ORDER
    min_points: int = 100
    max_variance: float = 1000.0
    variance_mode: str = "magnitude"
    q: float = 0.01
    r: float = 0.1
    p0: float = 0.1
    strategy: Optional[object] = None  # preset number, or a dict of StrategyConfig fields
    intrinsics: dict = field(default_factory=lambda: {
        "fx": 48.0, "fy": 48.0, "cx": 32.0, "cy": 24.0, "width": 64, "height": 48})
    pixel_centers: bool = True

    def __post_init__(self) -> None:
        try:
            FilterSpec(self.gravity_cut, self.filter_order, FilterKind.HIGH_PASS)
            FilterSpec(self.noise_cut, self.filter_order, FilterKind.LOW_PASS)
            QualityThresholds(self.min_points, self.max_variance, self.variance_mode)  # type: ignore[arg-type]
            Intrinsics(**self.intrinsics)
            self.kalman()
            self.strategy_config()
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None
        if self.variance_mode not in ("magnitude", "per_axis"):
            raise ConfigError(f"unknown variance_mode {self.variance_mode!r}")
        if not self.resample_rate > 0:
            raise ConfigError("resample_rate must be > 0")
        if self.workers is not None and (not isinstance(self.workers, int) or self.workers < 1):
            raise ConfigError("workers must be a positive integer")

    @classmethod
    def from_dict(cls, d: dict, base: Path | None = None) -> "PipelineConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        missing = {"manifest", "out_dir"} - set(d)
        if missing:
            raise ConfigError(f"missing config keys: {sorted(missing)}")
        d = dict(d)
        if base is not None:
            for key in ("manifest", "out_dir"):
                d[key] = str(base / d[key])
        return cls(**d)

    @classmethod
    def load(cls, path: str | Path) -> "PipelineConfig":
        path = Path(path)
        try:
            d = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_dict(d, base=path.parent)

    def kalman(self) -> KalmanConfig:
        return KalmanConfig.scaled(self.q, self.r, self.p0)

    def strategy_config(self) -> Optional[StrategyConfig]:
        if self.strategy is None:
            return None
        if isinstance(self.strategy, dict):
            return StrategyConfig.from_dict(self.strategy)
        if self.strategy in STRATEGIES:
            return STRATEGIES[self.strategy]
        raise ValueError(f"unknown strategy {self.strategy!r}")

    def pool_size(self) -> int:
        if self.workers is not None:
            return self.workers
        env = os.environ.get("EGOKIN_WORKERS")
        if env:
            try:
                n = int(env)
            except ValueError:
                raise ConfigError(f"EGOKIN_WORKERS must be an integer, got {env!r}") from None
            if n < 1:
                raise ConfigError("EGOKIN_WORKERS must be >= 1")
            return n
        return os.cpu_count() or 1


@dataclass(frozen=True)
class ClipEntry:
    clip_id: str
    imu_path: str
    sfm_path: str
    flow_dir: Optional[str] = None
    scores: Optional[dict] = None


def read_manifest(path: str | Path) -> list[ClipEntry]:
    """Manifest JSONL; relative paths resolve against the manifest's directory."""
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read manifest {path}: {exc}") from None
    base = path.parent
    entries, seen = [], set()
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            d = json.loads(line)
            entry = ClipEntry(**d)
        except (json.JSONDecodeError, TypeError) as exc:
            raise ConfigError(f"{path}:{lineno}: bad manifest entry ({exc})") from None
        if not entry.clip_id or "/" in entry.clip_id or entry.clip_id in seen:
            raise ConfigError(f"{path}:{lineno}: clip_id missing, unsafe or duplicated")
        seen.add(entry.clip_id)
        if entry.scores is not None and (not isinstance(entry.scores, dict)
                                         or set(entry.scores) - {"clip_tf", "clip_ff", "egovideo", "dover"}):
            raise ConfigError(f"{path}:{lineno}: scores must hold clip_tf/clip_ff/egovideo/dover")

        def resolve(p):
            return None if p is None else str(base / p)

        entries.append(ClipEntry(entry.clip_id, resolve(entry.imu_path), resolve(entry.sfm_path),
                                 resolve(entry.flow_dir), entry.scores))
    return entries


def _empty_record(entry: ClipEntry, status: str) -> CleansingRecord:
    scores = entry.scores or {}
    return CleansingRecord(entry.clip_id, status=status, **scores)


def process_clip(entry: ClipEntry, cfg: PipelineConfig) -> CleansingRecord:
    """Run every stage for one clip; any failure becomes the record's status."""
    try:
        return _process_clip(entry, cfg)
    except Exception as exc:
        log.warning("clip %s failed: %s", entry.clip_id, exc)
        return _empty_record(entry, f"failed:{type(exc).__name__}")


def _process_clip(entry: ClipEntry, cfg: PipelineConfig) -> CleansingRecord:
    out = Path(cfg.out_dir)
    imu = read_imu_csv(entry.imu_path)
    sfm = read_trajectory(entry.sfm_path)
    if not is_uniform(imu):
        imu = resample_uniform(imu, cfg.resample_rate)
    filtered = bandpass_accel(
        imu,
        FilterSpec(cfg.gravity_cut, cfg.filter_order, FilterKind.HIGH_PASS),
        FilterSpec(cfg.noise_cut, cfg.filter_order, FilterKind.LOW_PASS),
    )
    gate = quality_gate(sfm, filtered, QualityThresholds(cfg.min_points, cfg.max_variance, cfg.variance_mode))
    if not gate:
        return _empty_record(entry, gate.status)

    calib = solve_calibration(filtered, sfm)
    fused = fuse_trajectories(filtered, apply_scale(sfm, calib.lam), calib, cfg.kalman()).trajectory
    calib.save(out / f"{entry.clip_id}.calib.json")
    write_trajectory(fused, out / f"{entry.clip_id}.fused.txt")
    write_plk(embed_trajectory(fused, Intrinsics(**cfg.intrinsics), cfg.pixel_centers),
              out / f"{entry.clip_id}.plk")

    trans_var, rot_var = motion_smoothness(fused) if len(fused) >= 2 else (None, None)
    mean_flow = five = None
    if entry.flow_dir is not None:
        maps = load_flow_dir(entry.flow_dir)
        mean_flow, five = motion_strength(maps), five_point_stats(maps)
    rec = CleansingRecord(entry.clip_id, mean_flow=mean_flow, five_point=five,
                          trans_var=trans_var, rot_var=rot_var, status="ok", **(entry.scores or {}))
    strategy = cfg.strategy_config()
    if strategy is not None:
        dec = apply_strategy(rec, strategy)
        if not dec.keep:
            rec = CleansingRecord(**{**rec.__dict__, "status": "dropped:" + ",".join(dec.reasons)})
    return rec


def _job(args):
    return process_clip(*args)


@dataclass(frozen=True)
class AnnotateSummary:
    records: tuple[CleansingRecord, ...]
    exit_code: int

    @property
    def succeeded(self) -> int:
        return sum(1 for r in self.records if r.status == "ok" or (r.status or "").startswith("dropped:"))


def annotate(cfg: PipelineConfig) -> AnnotateSummary:
    """Process every manifest clip and write ``metadata.jsonl`` in manifest order.

    Exit code 0 when at least one clip succeeded, 2 when none did (including an
    empty manifest). Configuration problems raise :class:`ConfigError`.
    """
    entries = read_manifest(cfg.manifest)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    workers = min(cfg.pool_size(), max(1, len(entries)))
    jobs = [(e, cfg) for e in entries]
    if workers == 1:
        records = [_job(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_job, jobs))
    with open(out / "metadata.jsonl", "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(dumps_record(rec) + "\n")
    summary = AnnotateSummary(tuple(records), EXIT_OK)
    code = EXIT_OK if summary.succeeded else EXIT_ALL_FAILED
    return AnnotateSummary(tuple(records), code)
