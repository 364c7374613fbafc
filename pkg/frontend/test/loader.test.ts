import * as crypto from "node:crypto";
import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";
import { fileURLToPath } from "node:url";

import { describe, expect, it } from "vitest";

import {
  FormatError,
  FrameFeatures,
  MissingCamera,
  UnknownFeature,
  frames,
  nerfRays,
  openDataset,
  rayAt,
  rotate,
} from "../src/index.js";
import type { Quat, Vec3 } from "../src/index.js";

const FIXTURES = fileURLToPath(new URL("../fixtures", import.meta.url));
const DATASET = path.join(FIXTURES, "dataset");

const digestsDoc = JSON.parse(
  fs.readFileSync(path.join(FIXTURES, "layer_digests.json"), "utf8")
);
const raysDoc = JSON.parse(
  fs.readFileSync(path.join(FIXTURES, "golden_rays.json"), "utf8")
);

function treeDigest(root: string): string {
  const hash = crypto.createHash("sha256");
  const walk = (dir: string) => {
    for (const name of fs.readdirSync(dir).sort()) {
      const p = path.join(dir, name);
      if (fs.statSync(p).isDirectory()) {
        walk(p);
      } else {
        hash.update(name);
        hash.update(fs.readFileSync(p));
      }
    }
  };
  walk(root);
  return hash.digest("hex");
}

function copyDataset(): string {
  const tmp = fs.mkdtempSync(path.join(os.tmpdir(), "loader-test-"));
  fs.cpSync(DATASET, tmp, { recursive: true });
  return tmp;
}

describe("openDataset", () => {
  it("exposes every generated scene with its metadata", () => {
    const handle = openDataset(DATASET);
    expect(handle.scenes.length).toBe(2);
    expect(handle.manifest.worker).toBe("movi-basic");
    for (const scene of handle.scenes) {
      expect(scene.metadata.scene.resolution).toEqual([32, 32]);
      expect(scene.nFrames).toBe(3);
      expect(scene.layers).toContain("depth");
    }
  });

  it("returns equal handles when opened twice", () => {
    expect(openDataset(DATASET)).toEqual(openDataset(DATASET));
  });

  it("rejects a directory without a manifest", () => {
    const tmp = fs.mkdtempSync(path.join(os.tmpdir(), "loader-empty-"));
    expect(() => openDataset(tmp)).toThrow(FormatError);
  });

  it("rejects a corrupt manifest", () => {
    const tmp = copyDataset();
    fs.writeFileSync(path.join(tmp, "dataset_manifest.json"), "{oops");
    expect(() => openDataset(tmp)).toThrow(FormatError);
  });

  it("names the scene when one is deleted", () => {
    const tmp = copyDataset();
    fs.rmSync(path.join(tmp, "scene_00000001"), { recursive: true });
    expect(() => openDataset(tmp)).toThrow(/scene_00000001/);
  });

  it("rejects a scene with a raster file missing", () => {
    const tmp = copyDataset();
    fs.rmSync(path.join(tmp, "scene_00000000", "normal_00002.kbr"));
    expect(() => openDataset(tmp)).toThrow(/normal_00002\.kbr/);
  });
});

describe("frames", () => {
  it("iterates in (scene, frame) order", () => {
    const handle = openDataset(DATASET);
    const order: Array<[number, number]> = [];
    for (const frame of frames(handle, { name: "frames" })) {
      order.push([frame.sceneIndex, frame.frame]);
    }
    expect(order).toEqual([
      [0, 0], [0, 1], [0, 2],
      [1, 0], [1, 1], [1, 2],
    ]);
  });

  it("decodes only the selected layers", () => {
    // corrupting every depth file proves depth is never opened unless asked
    const tmp = copyDataset();
    for (const scene of ["scene_00000000", "scene_00000001"]) {
      for (let ordinal = 0; ordinal < 3; ordinal++) {
        const p = path.join(tmp, scene, `depth_0000${ordinal}.kbr`);
        fs.writeFileSync(p, Buffer.from("not a raster"));
      }
    }
    const handle = openDataset(tmp);
    let count = 0;
    for (const frame of frames(handle, { name: "frames", features: ["segmentation"] })) {
      expect(Object.keys(frame.features)).toEqual(["segmentation"]);
      count += 1;
    }
    expect(count).toBe(6);
    const withDepth = frames(handle, { name: "frames", features: ["depth"] });
    expect(() => withDepth.next()).toThrow(FormatError);
  });

  it("rejects a selection naming an unknown layer", () => {
    const handle = openDataset(DATASET);
    const it_ = frames(handle, { name: "frames", features: ["albedo_maps"] });
    expect(() => it_.next()).toThrow(UnknownFeature);
  });

  it("matches the generator's bytes and element values exactly", () => {
    const handle = openDataset(DATASET);
    for (const frame of frames(handle, { name: "frames" })) {
      const expected = digestsDoc.layers[frame.scenePath];
      for (const [layer, raster] of Object.entries(frame.features)) {
        const got = crypto
          .createHash("sha256")
          .update(
            Buffer.from(raster.data.buffer, raster.data.byteOffset, raster.data.byteLength)
          )
          .digest("hex");
        expect(got).toBe(expected[layer][frame.ordinal]);
      }
    }
    // pinned single-element reads catch a reader whose bytes hash right
    // but whose dtype or striding is wrong
    const handle2 = openDataset(DATASET);
    const byScene = new Map<string, FrameFeatures[]>();
    for (const frame of frames(handle2, { name: "frames" })) {
      const list = byScene.get(frame.scenePath) ?? [];
      list.push(frame);
      byScene.set(frame.scenePath, list);
    }
    for (const sample of digestsDoc.samples) {
      const frame = byScene.get(sample.scene)![sample.ordinal];
      const raster = frame.features[sample.layer];
      const at =
        (sample.row * raster.width + sample.col) * raster.channels + sample.channel;
      const want =
        sample.value === "inf" ? Infinity
        : sample.value === "-inf" ? -Infinity
        : sample.value;
      expect(raster.data[at]).toBe(want);
    }
  });

  it("attaches point tracks for the tracking task", () => {
    const handle = openDataset(DATASET);
    for (const frame of frames(handle, { name: "tracking" })) {
      expect(frame.tracks).not.toBeNull();
      const tracks = frame.tracks!;
      expect(tracks.length).toBeGreaterThan(0);
      expect(tracks.length).toBeLessThanOrEqual(256);
      for (const track of tracks) {
        expect(track.query.length).toBe(3);
        expect(track.positions.length).toBe(3);
        expect(track.visibility.length).toBe(3);
      }
    }
  });

  it("rejects an unknown task name", () => {
    const handle = openDataset(DATASET);
    const bogus = frames(handle, { name: "segmentation" as never });
    expect(() => bogus.next()).toThrow(UnknownFeature);
  });
});

describe("nerfRays", () => {
  const handle = openDataset(DATASET);
  const sceneFrames: FrameFeatures[] = [];
  for (const frame of frames(handle, { name: "nerf" })) {
    if (frame.scenePath === raysDoc.scene) {
      sceneFrames.push(frame);
    }
  }
  const perOrdinal = sceneFrames.map((frame) => nerfRays(frame));

  it("reproduces the generator's rays at pixel centers", () => {
    const [width] = raysDoc.resolution;
    let worst = 0;
    for (const sample of raysDoc.pixel_center_samples) {
      const rays = perOrdinal[sample.ordinal];
      const at = ((sample.y - 0.5) * width + (sample.x - 0.5)) * 3;
      for (let k = 0; k < 3; k++) {
        worst = Math.max(
          worst,
          Math.abs(rays.origins[at + k] - sample.origin[k]),
          Math.abs(rays.directions[at + k] - sample.direction[k])
        );
      }
    }
    expect(raysDoc.pixel_center_samples.length).toBe(1000);
    expect(worst).toBeLessThanOrEqual(1e-6);
  });

  it("reproduces the generator's rays at arbitrary image points", () => {
    let worst = 0;
    for (const sample of raysDoc.free_samples) {
      const camera = sceneFrames[sample.ordinal].camera!;
      const ray = rayAt(camera, sample.x, sample.y);
      for (let k = 0; k < 3; k++) {
        worst = Math.max(
          worst,
          Math.abs(ray.origin[k] - sample.origin[k]),
          Math.abs(ray.direction[k] - sample.direction[k])
        );
      }
    }
    expect(worst).toBeLessThanOrEqual(1e-6);
  });

  it("emits unit directions and constant origins", () => {
    const rays = perOrdinal[0];
    const camera = sceneFrames[0].camera!;
    let worstNorm = 0;
    for (let at = 0; at < rays.directions.length; at += 3) {
      const n = Math.hypot(
        rays.directions[at], rays.directions[at + 1], rays.directions[at + 2]
      );
      worstNorm = Math.max(worstNorm, Math.abs(n - 1));
      expect(rays.origins[at]).toBe(camera.position[0]);
      expect(rays.origins[at + 1]).toBe(camera.position[1]);
      expect(rays.origins[at + 2]).toBe(camera.position[2]);
    }
    expect(worstNorm).toBeLessThanOrEqual(1e-9);
  });

  it("sends the principal point along the optical axis", () => {
    const camera = sceneFrames[0].camera!;
    const axis = rotate(camera.quaternion, [0, 0, -1]);
    const ray = rayAt(camera, camera.K[0][2], camera.K[1][2]);
    for (let k = 0; k < 3; k++) {
      expect(Math.abs(ray.direction[k] - axis[k])).toBeLessThanOrEqual(1e-12);
    }
  });

  it("carries the color target alongside the rays", () => {
    const frame = sceneFrames[0];
    const rays = perOrdinal[0];
    expect(rays.rgb).not.toBeNull();
    const rgba = frame.features["rgba"];
    expect(rays.rgb![5 * 3]).toBe(rgba.data[5 * rgba.channels]);
  });

  it("requires a camera pose", () => {
    const blind = { ...sceneFrames[0], camera: null };
    expect(() => nerfRays(blind)).toThrow(MissingCamera);
  });
});

describe("geometric consistency", () => {
  it("reconstructs surface points from depth and ray direction", () => {
    // origin + depth * direction must land where object_coordinates says
    // the surface is, instance pose applied
    const handle = openDataset(DATASET);
    const first = frames(handle, {
      name: "frames",
      features: ["depth", "segmentation", "object_coordinates"],
    }).next().value as FrameFeatures;
    const rays = nerfRays(first);
    const scene = handle.scenes[first.sceneIndex];
    const instances = new Map(
      scene.metadata.instances.map((inst) => [inst.segmentation_id, inst])
    );
    const [width, height] = first.resolution;
    const depth = first.features["depth"].data;
    const seg = first.features["segmentation"].data;
    const oc = first.features["object_coordinates"].data;
    let worst = 0;
    let checked = 0;
    for (let px = 0; px < width * height; px++) {
      const id = seg[px];
      if (id === 0 || !Number.isFinite(depth[px])) {
        continue;
      }
      const inst = instances.get(id as number)!;
      const [mn, mx] = inst.bbox_3d;
      const local: Vec3 = [0, 0, 0];
      for (let k = 0; k < 3; k++) {
        local[k] = (mn[k] + oc[px * 3 + k] * (mx[k] - mn[k])) * inst.scale;
      }
      const pose = inst.frames[first.ordinal];
      const fromOc = rotate(pose.quaternion as Quat, local);
      let err = 0;
      for (let k = 0; k < 3; k++) {
        const fromRay = rays.origins[px * 3 + k] + depth[px] * rays.directions[px * 3 + k];
        err += (fromRay - fromOc[k] - pose.position[k]) ** 2;
      }
      worst = Math.max(worst, Math.sqrt(err));
      checked += 1;
    }
    expect(checked).toBeGreaterThan(200);
    expect(worst).toBeLessThanOrEqual(1e-3);
  });

  it("never mutates the dataset", () => {
    const before = treeDigest(DATASET);
    const handle = openDataset(DATASET);
    for (const frame of frames(handle, { name: "frames" })) {
      nerfRays(frame);
    }
    for (const _ of frames(handle, { name: "tracking" })) {
      // consume; tracks already attached
    }
    expect(treeDigest(DATASET)).toBe(before);
  });
});
