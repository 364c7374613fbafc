"""Regenerate the committed loader fixtures from the installed kubgen package.

Writes three things next to this script:
  dataset/            a small generated dataset (2 scenes, 32x32, 3 frames)
  layer_digests.json  sha256 per layer file payload plus pinned pixel values
  golden_rays.json    reference camera rays from the generator's own math

The TypeScript tests treat these as ground truth, so regenerating them
only makes sense after an intentional change to the record format or the
camera model; the dataset itself is byte-deterministic, so an unchanged
generator reproduces identical fixtures.

Usage: python3 frontend/fixtures/make_fixtures.py
"""

import hashlib
import json
import math
import shutil
from pathlib import Path

from kubgen.records import read_scene_record
from kubgen.rng import Rng
from kubgen.runtime import JobSpec, run_job
from kubgen.camera import generate_ray
from kubgen.scene import PerspectiveCamera

HERE = Path(__file__).resolve().parent
MASTER_SEED = 977
RESOLUTION = (32, 32)
FRAMES = (0, 2)


def build_dataset():
    out = HERE / "dataset"
    if out.exists():
        shutil.rmtree(out)
    manifest = run_job(
        JobSpec(
            worker="movi-basic", num_scenes=2, master_seed=MASTER_SEED,
            out_dir=out, resolution=RESOLUTION, frame_range=FRAMES,
        )
    )
    assert manifest["failures"] == []
    return manifest


def layer_digests(manifest):
    doc = {"layers": {}, "samples": []}
    rng = Rng(4)
    for entry in manifest["scenes"]:
        rec = read_scene_record(HERE / "dataset" / entry["path"])
        per_scene = {}
        n_frames = rec.n_frames
        for layer in ("rgba", "depth", "segmentation", "normal",
                      "object_coordinates", "forward_flow", "backward_flow"):
            hashes = []
            for ordinal in range(n_frames):
                arr = rec.layer(layer, ordinal)
                hashes.append(hashlib.sha256(arr.tobytes()).hexdigest())
                # pin a couple of raw values so a reader with a correct
                # hash but a wrong element view still fails loudly
                for _ in range(2):
                    r = rng.randint(arr.shape[0])
                    c = rng.randint(arr.shape[1])
                    ch = rng.randint(arr.shape[2])
                    value = float(arr[r, c, ch])
                    if math.isinf(value):
                        # strict JSON has no infinity literal; same
                        # convention as the eval reports
                        value = "inf" if value > 0 else "-inf"
                    doc["samples"].append({
                        "scene": entry["path"], "layer": layer,
                        "ordinal": ordinal, "row": r, "col": c, "channel": ch,
                        "value": value,
                    })
            per_scene[layer] = hashes
        doc["layers"][entry["path"]] = per_scene
    return doc


def golden_rays(manifest):
    entry = manifest["scenes"][0]
    rec = read_scene_record(HERE / "dataset" / entry["path"])
    cam_doc = rec.metadata["camera"]
    cam = PerspectiveCamera(
        focal_length=cam_doc["focal_length"], sensor_width=cam_doc["sensor_width"]
    )
    width, height = rec.resolution
    rng = Rng(31)

    def ray_doc(ordinal, x, y):
        state = cam_doc["frames"][ordinal]
        ray = generate_ray(
            cam, x, y, (width, height),
            position=state["position"], quaternion=state["quaternion"],
        )
        return {
            "ordinal": ordinal, "x": x, "y": y,
            "origin": list(ray.origin), "direction": list(ray.direction),
        }

    center_samples = []
    for _ in range(1000):
        ordinal = rng.randint(rec.n_frames)
        col = rng.randint(width)
        row = rng.randint(height)
        center_samples.append(ray_doc(ordinal, col + 0.5, row + 0.5))
    free_samples = []
    for _ in range(200):
        ordinal = rng.randint(rec.n_frames)
        free_samples.append(
            ray_doc(ordinal, rng.uniform(0.0, width), rng.uniform(0.0, height))
        )
    return {
        "scene": entry["path"],
        "resolution": [width, height],
        "pixel_center_samples": center_samples,
        "free_samples": free_samples,
    }


def main():
    manifest = build_dataset()
    (HERE / "layer_digests.json").write_text(
        json.dumps(layer_digests(manifest), indent=1, sort_keys=True) + "\n"
    )
    (HERE / "golden_rays.json").write_text(
        json.dumps(golden_rays(manifest), indent=1, sort_keys=True) + "\n"
    )
    print("fixtures written under", HERE)


if __name__ == "__main__":
    main()
