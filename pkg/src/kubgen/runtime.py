"""Batch execution: seed sharding, per-scene isolation, manifest assembly.

A job owns every scene index i with i % num_jobs == job_id.  Each scene is
built from derive_scene_seed(master_seed, i) alone, so any sharding of the
index range produces byte-identical scene directories.  Scene failures are
recorded in the manifest and never abort the job.
"""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import records
from .errors import InvalidJobSpec
from .physics import simulate
from .render import render_frame
from .rng import derive_scene_seed
from .tracks import extract_point_tracks
from .workers import get_worker

SCENE_DIR_FORMAT = "scene_{index:08d}"
MANIFEST_NAME = "dataset_manifest.json"


@dataclass
class JobSpec:
    """One shard of a dataset generation run."""

    worker: str
    num_scenes: int
    master_seed: int
    out_dir: Path
    job_id: int = 0
    num_jobs: int = 1
    resolution: tuple | None = None
    frame_range: tuple | None = None
    jobs_parallel: int = 1
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        self.out_dir = Path(self.out_dir)
        if self.num_scenes < 0:
            raise InvalidJobSpec(f"num_scenes {self.num_scenes} is negative")
        if self.num_jobs < 1:
            raise InvalidJobSpec(f"num_jobs {self.num_jobs} must be at least 1")
        if not 0 <= self.job_id < self.num_jobs:
            raise InvalidJobSpec(
                f"job_id {self.job_id} outside [0, {self.num_jobs})"
            )
        if self.jobs_parallel < 1:
            raise InvalidJobSpec(
                f"jobs_parallel {self.jobs_parallel} must be at least 1"
            )
        if self.resolution is not None:
            w, h = self.resolution
            if w < 1 or h < 1:
                raise InvalidJobSpec(f"resolution {w}x{h} is not positive")
            self.resolution = (int(w), int(h))
        if self.frame_range is not None:
            a, b = self.frame_range
            if a > b:
                raise InvalidJobSpec(f"frame range {a}..{b} is empty")
            self.frame_range = (int(a), int(b))

    def owned_indices(self):
        return [
            i for i in range(self.num_scenes) if i % self.num_jobs == self.job_id
        ]


def config_digest(config):
    """Canonical sha256 hex digest of a worker config map."""
    doc = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(doc.encode("utf-8")).hexdigest()


def _generate_scene(worker_name, index, seed, out_root, resolution, frame_range,
                    config):
    worker = get_worker(worker_name)
    scene = worker(seed, config)
    if resolution is not None:
        scene.resolution = tuple(resolution)
    if frame_range is not None:
        scene.frame_start, scene.frame_end = frame_range

    events = []
    if scene.info.get("simulate", True):
        events = simulate(scene).events
    bundles = [render_frame(scene, f) for f in scene.frames]
    tracks = None
    if scene.info.get("point_tracks"):
        tracks = extract_point_tracks(scene, bundles)

    scene_dir = Path(out_root) / SCENE_DIR_FORMAT.format(index=index)
    records.write_scene_record(scene_dir, scene, bundles, events, tracks=tracks)
    cutoffs = scene.info.get("cutoff_by_segmentation")
    if cutoffs:
        _write_cutoff_layers(scene_dir, bundles, cutoffs)
    return scene_dir


def _write_cutoff_layers(scene_dir, bundles, cutoff_by_id):
    # extra per-pixel annotation: the cutoff frequency of the texture under
    # each pixel, 0 where no annotated patch is visible
    table = {int(k): float(v) for k, v in cutoff_by_id.items()}
    for ordinal, bundle in enumerate(bundles):
        seg = bundle.segmentation[:, :, 0]
        layer = np.zeros(seg.shape, dtype=np.float32)
        for sid, cutoff in table.items():
            layer[seg == sid] = np.float32(cutoff)
        records.write_raster(
            scene_dir / f"cutoff_frequency_{ordinal:05d}.kbr", layer
        )


def _run_scene_entry(worker_name, index, seed, out_root, resolution,
                     frame_range, config):
    """Build one scene; any failure becomes a manifest entry, not a crash."""
    try:
        path = _generate_scene(
            worker_name, index, seed, out_root, resolution, frame_range, config
        )
    except Exception as exc:
        return {
            "error": f"{type(exc).__name__}: {exc}",
            "index": index,
            "seed": seed,
            "status": "failed",
        }
    return {"index": index, "path": path.name, "seed": seed, "status": "ok"}


def run_job(spec):
    """Generate every scene owned by this job; returns the manifest document.

    The manifest is also written to out_dir/dataset_manifest.json.  Failed
    scenes appear under "failures" with their error; the remaining scenes
    are still generated.
    """
    get_worker(spec.worker)
    out = Path(spec.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tasks = [(i, derive_scene_seed(spec.master_seed, i))
             for i in spec.owned_indices()]

    results = {}
    if spec.jobs_parallel > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=spec.jobs_parallel) as pool:
            futures = {
                idx: pool.submit(
                    _run_scene_entry, spec.worker, idx, seed, str(out),
                    spec.resolution, spec.frame_range, spec.config,
                )
                for idx, seed in tasks
            }
            for idx, fut in futures.items():
                results[idx] = fut.result()
    else:
        for idx, seed in tasks:
            results[idx] = _run_scene_entry(
                spec.worker, idx, seed, str(out),
                spec.resolution, spec.frame_range, spec.config,
            )

    scenes = []
    failures = []
    for idx, _ in tasks:
        entry = results[idx]
        (failures if entry["status"] == "failed" else scenes).append(entry)

    manifest = {
        "config": spec.config,
        "config_digest": config_digest(spec.config),
        "failures": failures,
        "job_id": spec.job_id,
        "master_seed": spec.master_seed,
        "num_jobs": spec.num_jobs,
        "num_scenes": spec.num_scenes,
        "scenes": scenes,
        "worker": spec.worker,
    }
    records.dump_json(out / MANIFEST_NAME, manifest)
    return manifest
