import json

import pytest

from egokin.curation import ingest_metadata
from egokin.pipeline import ConfigError, PipelineConfig, annotate, read_manifest
from egokin.pluecker import read_plk

from synth_clips import make_manifest, write_config


def test_three_clips(tmp_path):
    make_manifest(tmp_path)
    summary = annotate(PipelineConfig.load(write_config(tmp_path, "a.json", "out", workers=1)))
    assert summary.exit_code == 0 and summary.succeeded == 3
    out = tmp_path / "out"
    recs = ingest_metadata(out / "metadata.jsonl")
    assert [r.clip_id for r in recs] == ["clip0", "clip1", "clip2"]
    assert all(r.status == "ok" and r.trans_var is not None and r.five_point is not None for r in recs)
    for k in range(3):
        assert (out / f"clip{k}.fused.txt").exists() and (out / f"clip{k}.calib.json").exists()
        assert read_plk(out / f"clip{k}.plk").shape[1:] == (12, 16, 6)


def test_gate_failure_is_isolated(tmp_path):
    make_manifest(tmp_path, bad_points=(1,))
    summary = annotate(PipelineConfig.load(write_config(tmp_path, "a.json", "out", workers=1)))
    assert summary.exit_code == 0
    assert [r.status for r in summary.records] == ["ok", "rejected:points", "ok"]
    assert not (tmp_path / "out" / "clip1.plk").exists()
    assert summary.records[1].dover == 0.5  # ingested scores still recorded


def test_broken_clip_is_isolated(tmp_path):
    make_manifest(tmp_path)
    (tmp_path / "clip0" / "imu.csv").write_text("garbage\n")
    summary = annotate(PipelineConfig.load(write_config(tmp_path, "a.json", "out", workers=1)))
    assert summary.records[0].status.startswith("failed:")
    assert [r.status for r in summary.records[1:]] == ["ok", "ok"]


def test_empty_manifest(tmp_path):
    (tmp_path / "manifest.jsonl").write_text("")
    summary = annotate(PipelineConfig.load(write_config(tmp_path, "a.json", "out")))
    assert summary.exit_code == 2
    assert (tmp_path / "out" / "metadata.jsonl").read_text() == ""


def test_all_rejected_exit_code(tmp_path):
    make_manifest(tmp_path, n=2, bad_points=(0, 1))
    assert annotate(PipelineConfig.load(write_config(tmp_path, "a.json", "out", workers=1))).exit_code == 2


def test_strategy_status(tmp_path):
    make_manifest(tmp_path, n=1)
    cfg = write_config(tmp_path, "a.json", "out", workers=1,
                       strategy={"min_clip_tf": 0.5, "min_clip_ff": 0.1, "min_dover": 0.1})
    assert annotate(PipelineConfig.load(cfg)).records[0].status == "dropped:clip_tf"


def test_config_validation(tmp_path):
    with pytest.raises(ConfigError, match="unknown config keys"):
        PipelineConfig.from_dict({"manifest": "m", "out_dir": "o", "bogus": 1})
    with pytest.raises(ConfigError):
        PipelineConfig.from_dict({"manifest": "m"})
    with pytest.raises(ConfigError):
        PipelineConfig(manifest="m", out_dir="o", gravity_cut=-1.0)
    with pytest.raises(ConfigError):
        PipelineConfig(manifest="m", out_dir="o", strategy=7)
    with pytest.raises(ConfigError):
        PipelineConfig(manifest="m", out_dir="o", intrinsics={"fx": 1.0})
    with pytest.raises(ConfigError):
        PipelineConfig.load(tmp_path / "missing.json")


def test_manifest_errors(tmp_path):
    with pytest.raises(ConfigError):
        read_manifest(tmp_path / "missing.jsonl")
    (tmp_path / "m.jsonl").write_text(json.dumps({"clip_id": "a", "imu_path": "x", "sfm_path": "y"}) * 2)
    with pytest.raises(ConfigError):
        read_manifest(tmp_path / "m.jsonl")
    line = json.dumps({"clip_id": "a", "imu_path": "x", "sfm_path": "y"})
    (tmp_path / "m.jsonl").write_text(line + "\n" + line + "\n")
    with pytest.raises(ConfigError, match="duplicated"):
        read_manifest(tmp_path / "m.jsonl")


def test_worker_count_from_environment(monkeypatch):
    cfg = PipelineConfig(manifest="m", out_dir="o")
    monkeypatch.setenv("EGOKIN_WORKERS", "3")
    assert cfg.pool_size() == 3
    monkeypatch.setenv("EGOKIN_WORKERS", "zero")
    with pytest.raises(ConfigError):
        cfg.pool_size()
    assert PipelineConfig(manifest="m", out_dir="o", workers=2).pool_size() == 2
