"""Clip curation: flow statistics, motion smoothness, metadata and cleaning strategies."""
from __future__ import annotations

import csv
import json
import logging
import math
import struct
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Iterable, Iterator, Optional, Sequence

import numpy as np

from .core_types import FloatArray, PoseTrajectory, fmt

log = logging.getLogger(__name__)

FLW_MAGIC = b"FLW1"
FLOW_EDGES = np.array([4.0, 8.0, 12.0, 16.0])


# ---------------------------------------------------------------------------
# flow maps
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FlowMap:
    magnitudes: np.ndarray  # (height, width) float32, pixels per frame interval

    def __post_init__(self) -> None:
        m = np.asarray(self.magnitudes, dtype=np.float32)
        if m.ndim != 2 or m.size == 0:
            raise ValueError("flow map must be a non-empty 2-D array")
        if not np.all(np.isfinite(m)) or np.any(m < 0):
            raise ValueError("flow magnitudes must be finite and non-negative")
        m.flags.writeable = False
        object.__setattr__(self, "magnitudes", m)

    @property
    def height(self) -> int:
        return self.magnitudes.shape[0]

    @property
    def width(self) -> int:
        return self.magnitudes.shape[1]


def write_flw(fm: FlowMap, path: str | Path) -> None:
    with open(path, "wb") as fh:
        fh.write(FLW_MAGIC)
        fh.write(struct.pack("<II", fm.width, fm.height))
        fh.write(np.ascontiguousarray(fm.magnitudes, dtype="<f4").tobytes())


def read_flw(path: str | Path) -> FlowMap:
    raw = Path(path).read_bytes()
    if raw[:4] != FLW_MAGIC:
        raise ValueError(f"{path}: not a FLW1 file")
    w, h = struct.unpack("<II", raw[4:12])
    if len(raw) != 12 + 4 * w * h:
        raise ValueError(f"{path}: size does not match {w}x{h} header")
    return FlowMap(np.frombuffer(raw, dtype="<f4", offset=12).reshape(h, w))


def load_flow_dir(path: str | Path) -> list[FlowMap]:
    files = sorted(Path(path).glob("*.flw"))
    if not files:
        raise ValueError(f"{path}: no .flw files")
    return [read_flw(f) for f in files]


@dataclass(frozen=True)
class FivePointStats:
    p0_4: float
    p4_8: float
    p8_12: float
    p12_16: float
    p16_plus: float

    def __post_init__(self) -> None:
        vals = self.as_tuple()
        if any(not (0.0 <= v <= 1.0) for v in vals):
            raise ValueError("five-point proportions must lie in [0, 1]")
        if abs(sum(vals) - 1.0) > 1e-6:
            raise ValueError("five-point proportions must sum to 1")

    def as_tuple(self) -> tuple[float, float, float, float, float]:
        return (self.p0_4, self.p4_8, self.p8_12, self.p12_16, self.p16_plus)

    @property
    def p12_plus(self) -> float:
        return self.p12_16 + self.p16_plus


def _pooled(maps: Sequence[FlowMap]) -> np.ndarray:
    if not maps:
        raise ValueError("no flow maps given")
    return np.concatenate([m.magnitudes.ravel() for m in maps])


def five_point_stats(maps: Sequence[FlowMap]) -> FivePointStats:
    """Share of pixels with magnitude in [0,4), [4,8), [8,12), [12,16), [16,∞)."""
    mags = _pooled(maps)
    counts = np.bincount(np.searchsorted(FLOW_EDGES, mags, side="right"), minlength=5)
    return FivePointStats(*(counts / mags.size).tolist())


def motion_strength(maps: Sequence[FlowMap]) -> float:
    return float(np.mean(_pooled(maps), dtype=np.float64))


def _rotation_increments(q: FloatArray) -> FloatArray:
    a, b = q[:-1], q[1:]
    # w and vector part of conj(a) ⊗ b
    w = np.sum(a * b, axis=1)
    vec = (a[:, :1] * b[:, 1:] - b[:, :1] * a[:, 1:]) - np.cross(a[:, 1:], b[:, 1:])
    return 2.0 * np.arctan2(np.linalg.norm(vec, axis=1), np.abs(w))


def motion_smoothness(traj: PoseTrajectory) -> tuple[float, float]:
    """Population variances of per-frame displacement length and rotation angle."""
    if len(traj) < 2:
        raise ValueError("motion smoothness needs at least 2 poses")
    steps = np.linalg.norm(np.diff(traj.translations, axis=0), axis=1)
    turns = _rotation_increments(traj.rotations)
    return float(np.var(steps)), float(np.var(turns))


# ---------------------------------------------------------------------------
# metadata records
# ---------------------------------------------------------------------------

SCORE_FIELDS = ("clip_tf", "clip_ff", "egovideo", "dover")
NUMERIC_FIELDS = SCORE_FIELDS + ("mean_flow", "trans_var", "rot_var")
FIVE_POINT_KEYS = tuple(f.name for f in fields(FivePointStats))


@dataclass(frozen=True)
class CleansingRecord:
    """One clip's curation metadata. Unavailable metrics are ``None``."""

    clip_id: str
    clip_tf: Optional[float] = None
    clip_ff: Optional[float] = None
    egovideo: Optional[float] = None
    dover: Optional[float] = None
    mean_flow: Optional[float] = None
    five_point: Optional[FivePointStats] = None
    trans_var: Optional[float] = None
    rot_var: Optional[float] = None
    status: Optional[str] = None

    def __post_init__(self) -> None:
        for name in ("clip_tf", "clip_ff", "egovideo"):
            v = getattr(self, name)
            if v is not None and not -1.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [-1, 1]")
        if self.dover is not None and not 0.0 <= self.dover <= 1.0:
            raise ValueError("dover must lie in [0, 1]")
        for name in ("mean_flow", "trans_var", "rot_var"):
            v = getattr(self, name)
            if v is not None and v < 0:
                raise ValueError(f"{name} must be >= 0")

    def to_dict(self) -> dict:
        d: dict = {"clip_id": self.clip_id}
        for name in ("clip_tf", "clip_ff", "egovideo", "dover", "mean_flow"):
            d[name] = _num_out(getattr(self, name))
        d["five_point"] = None if self.five_point is None else {
            k: _num_out(getattr(self.five_point, k)) for k in FIVE_POINT_KEYS
        }
        d["trans_var"] = _num_out(self.trans_var)
        d["rot_var"] = _num_out(self.rot_var)
        if self.status is not None:
            d["status"] = self.status
        return d

    def get(self, field_name: str) -> Optional[float]:
        """Numeric field by name; ``five_point.p12_16`` style paths reach the bins."""
        if field_name.startswith("five_point."):
            if self.five_point is None:
                return None
            return getattr(self.five_point, field_name.split(".", 1)[1])
        if field_name == "p12_plus":
            return None if self.five_point is None else self.five_point.p12_plus
        return getattr(self, field_name)


def _num_out(v: Optional[float]) -> Optional[float]:
    return None if v is None else float(fmt(v))


class MetadataError(ValueError):
    def __init__(self, lineno: int, message: str, field_name: str | None = None):
        self.lineno = lineno
        self.field = field_name
        where = f"line {lineno}" + (f", field {field_name!r}" if field_name else "")
        super().__init__(f"{where}: {message}")


def _parse_number(obj: dict, name: str, lineno: int) -> Optional[float]:
    v = obj[name]
    if v is None:
        return None
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise MetadataError(lineno, f"expected a number or null, got {v!r}", name)
    if not math.isfinite(v):
        raise MetadataError(lineno, "non-finite value", name)
    return float(v)


def record_from_dict(obj: dict, lineno: int = 0) -> CleansingRecord:
    if not isinstance(obj, dict):
        raise MetadataError(lineno, "expected a JSON object")
    required = ("clip_id",) + NUMERIC_FIELDS + ("five_point",)
    for name in required:
        if name not in obj:
            raise MetadataError(lineno, "missing required field", name)
    unknown = set(obj) - set(required) - {"status"}
    if unknown:
        raise MetadataError(lineno, f"unknown fields {sorted(unknown)}")
    if not isinstance(obj["clip_id"], str) or not obj["clip_id"]:
        raise MetadataError(lineno, "clip_id must be a non-empty string", "clip_id")
    nums = {name: _parse_number(obj, name, lineno) for name in NUMERIC_FIELDS}
    fp = obj["five_point"]
    five = None
    if fp is not None:
        if not isinstance(fp, dict) or set(fp) != set(FIVE_POINT_KEYS):
            raise MetadataError(lineno, f"five_point must have keys {list(FIVE_POINT_KEYS)}", "five_point")
        vals = {k: _parse_number(fp, k, lineno) for k in FIVE_POINT_KEYS}
        if any(v is None for v in vals.values()):
            raise MetadataError(lineno, "five_point bins cannot be null", "five_point")
        try:
            five = FivePointStats(**vals)
        except ValueError as exc:
            raise MetadataError(lineno, str(exc), "five_point") from None
    status = obj.get("status")
    if status is not None and not isinstance(status, str):
        raise MetadataError(lineno, "status must be a string", "status")
    try:
        return CleansingRecord(obj["clip_id"], five_point=five, status=status, **nums)
    except ValueError as exc:
        raise MetadataError(lineno, str(exc)) from None


def iter_metadata(path: str | Path, lenient: bool = False,
                  errors: list[MetadataError] | None = None) -> Iterator[CleansingRecord]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise MetadataError(lineno, f"invalid JSON ({exc.msg})") from None
                yield record_from_dict(obj, lineno)
            except MetadataError as err:
                if not lenient:
                    raise
                log.warning("skipping %s: %s", path, err)
                if errors is not None:
                    errors.append(err)


def ingest_metadata(path: str | Path, lenient: bool = False,
                    errors: list[MetadataError] | None = None) -> list[CleansingRecord]:
    return list(iter_metadata(path, lenient, errors))


def dumps_record(rec: CleansingRecord | dict) -> str:
    d = rec.to_dict() if isinstance(rec, CleansingRecord) else rec
    return json.dumps(d, separators=(", ", ": "))


def write_metadata(records: Iterable[CleansingRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(dumps_record(rec) + "\n")


def merge_shards(shards: Iterable[str | Path], path: str | Path) -> None:
    """Merge per-worker shard files into one file ordered by ``clip_id``."""
    records = [r for s in shards for r in ingest_metadata(s)]
    write_metadata(sorted(records, key=lambda r: r.clip_id), path)


# ---------------------------------------------------------------------------
# cleaning strategies
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RescueRule:
    flow_below: float
    min_p12_plus: float
    bins: str = "p12_plus"  # or "p16_plus": which share counts as large motion

    def __post_init__(self) -> None:
        if self.bins not in ("p12_plus", "p16_plus"):
            raise ValueError("rescue bins must be 'p12_plus' or 'p16_plus'")

    def share(self, fp: FivePointStats) -> float:
        return fp.p12_plus if self.bins == "p12_plus" else fp.p16_plus


@dataclass(frozen=True)
class StrategyConfig:
    min_clip_tf: float
    min_clip_ff: float
    min_dover: float
    min_egovideo: Optional[float] = None
    flow_min: Optional[float] = None
    flow_max: Optional[float] = None
    rescue_rule: Optional[RescueRule] = None
    name: str = "custom"

    def __post_init__(self) -> None:
        if self.flow_min is not None and self.flow_max is not None and self.flow_min > self.flow_max:
            raise ValueError("flow_min must not exceed flow_max")
        if isinstance(self.rescue_rule, dict):
            object.__setattr__(self, "rescue_rule", RescueRule(**self.rescue_rule))

    @classmethod
    def from_dict(cls, d: dict) -> "StrategyConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown strategy keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path: str | Path) -> "StrategyConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


STRATEGY_1 = StrategyConfig(min_clip_tf=0.275, min_clip_ff=0.8, min_dover=0.3, flow_min=3.0, name="strategy-1")
STRATEGY_2 = StrategyConfig(min_clip_tf=0.27, min_clip_ff=0.75, min_dover=0.3, flow_min=3.0, flow_max=40.0,
                            name="strategy-2")
STRATEGY_3 = StrategyConfig(min_clip_tf=0.26, min_clip_ff=0.7, min_dover=0.3, min_egovideo=0.22,
                            flow_min=3.0, flow_max=35.0,
                            rescue_rule=RescueRule(flow_below=3.0, min_p12_plus=0.03), name="strategy-3")
STRATEGIES = {1: STRATEGY_1, 2: STRATEGY_2, 3: STRATEGY_3}


@dataclass(frozen=True)
class Decision:
    keep: bool
    reasons: tuple[str, ...] = ()
    rescued: bool = False

    def __bool__(self) -> bool:
        return self.keep


def _below(value: Optional[float], threshold: float) -> bool:
    return value is None or value < threshold


def apply_strategy(rec: CleansingRecord, cfg: StrategyConfig) -> Decision:
    """All thresholds are inclusive; a missing metric counts as a violation."""
    reasons = []
    if _below(rec.clip_tf, cfg.min_clip_tf):
        reasons.append("clip_tf")
    if _below(rec.clip_ff, cfg.min_clip_ff):
        reasons.append("clip_ff")
    if cfg.min_egovideo is not None and _below(rec.egovideo, cfg.min_egovideo):
        reasons.append("egovideo")
    if _below(rec.dover, cfg.min_dover):
        reasons.append("dover")

    flow_reasons = []
    if cfg.flow_min is not None or cfg.flow_max is not None:
        if rec.mean_flow is None:
            flow_reasons.append("mean_flow")
        else:
            if cfg.flow_min is not None and rec.mean_flow < cfg.flow_min:
                flow_reasons.append("flow_min")
            if cfg.flow_max is not None and rec.mean_flow > cfg.flow_max:
                flow_reasons.append("flow_max")

    if not reasons and not flow_reasons:
        return Decision(True)
    rule = cfg.rescue_rule
    if (not reasons and rule is not None and rec.mean_flow is not None and rec.five_point is not None
            and rec.mean_flow < rule.flow_below and rule.share(rec.five_point) > rule.min_p12_plus):
        return Decision(True, rescued=True)
    return Decision(False, tuple(reasons + flow_reasons))


def clean(records: Iterable[CleansingRecord], cfg: StrategyConfig):
    """Split records into ``(kept, [(record, decision), ...] dropped)``."""
    kept, dropped = [], []
    for rec in records:
        dec = apply_strategy(rec, cfg)
        if dec.keep:
            kept.append(rec)
        else:
            dropped.append((rec, dec))
    return kept, dropped


# ---------------------------------------------------------------------------
# distributions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HistogramBin:
    lo: float
    hi: float
    count: int


def histogram_stats(records: Iterable[CleansingRecord], field_name: str, bin_count: int) -> list[HistogramBin]:
    """Equal-width histogram over ``[min, max]`` of one field; null values are skipped."""
    if bin_count < 1:
        raise ValueError("bin_count must be >= 1")
    valid = {f.name for f in fields(CleansingRecord)} - {"clip_id", "status", "five_point"}
    valid |= {f"five_point.{k}" for k in FIVE_POINT_KEYS} | {"p12_plus"}
    if field_name not in valid:
        raise ValueError(f"unknown field {field_name!r}")
    values = np.array([v for r in records if (v := r.get(field_name)) is not None], dtype=np.float64)
    if values.size == 0:
        return []
    counts, edges = np.histogram(values, bins=bin_count)
    return [HistogramBin(float(lo), float(hi), int(c)) for lo, hi, c in zip(edges[:-1], edges[1:], counts)]


def write_histogram_csv(bins: Sequence[HistogramBin], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bin_lo", "bin_hi", "count"])
        for b in bins:
            w.writerow([fmt(b.lo), fmt(b.hi), b.count])
