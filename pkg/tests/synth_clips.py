"""Build small on-disk synthetic clips and manifests for the pipeline tests."""
import json

import numpy as np

from egokin.curation import FlowMap, write_flw
from egokin.sim import SimProfile, generate

SCORES = {"clip_tf": 0.3, "clip_ff": 0.85, "egovideo": 0.25, "dover": 0.5}


def make_clip(root, clip_id, seed, duration=4.0, point_count=2000):
    d = root / clip_id
    generate(SimProfile.randomized(seed, duration=duration, point_count=point_count)).save(d)
    flow = d / "flow"
    flow.mkdir()
    rng = np.random.default_rng(seed)
    for k in range(3):
        write_flw(FlowMap(rng.gamma(2.0, 4.0, (6, 8))), flow / f"{k:03d}.flw")
    return {"clip_id": clip_id, "imu_path": f"{clip_id}/imu.csv", "sfm_path": f"{clip_id}/sfm.txt",
            "flow_dir": f"{clip_id}/flow", "scores": SCORES}


def make_manifest(root, n=3, bad_points=()):
    entries = [make_clip(root, f"clip{k}", 100 + k, point_count=10 if k in bad_points else 2000)
               for k in range(n)]
    (root / "manifest.jsonl").write_text("".join(json.dumps(e) + "\n" for e in entries))
    return root / "manifest.jsonl"


def write_config(root, name, out_dir, **extra):
    cfg = {"manifest": "manifest.jsonl", "out_dir": out_dir,
           "intrinsics": {"fx": 20.0, "fy": 20.0, "cx": 8.0, "cy": 6.0, "width": 16, "height": 12}}
    cfg.update(extra)
    (root / name).write_text(json.dumps(cfg))
    return root / name
