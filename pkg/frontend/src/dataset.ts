import * as fs from "node:fs";
import * as path from "node:path";

import { FormatError, UnknownFeature } from "./errors.js";
import { Raster, readRaster } from "./raster.js";

/** Layers every scene record carries, one raster per frame. */
export const STANDARD_LAYERS = [
  "rgba",
  "depth",
  "segmentation",
  "normal",
  "object_coordinates",
  "forward_flow",
  "backward_flow",
] as const;

export type Vec3 = [number, number, number];
export type Quat = [number, number, number, number]; // (w, x, y, z)

export interface CameraFrame {
  position: Vec3;
  quaternion: Quat;
  /** 3x3 row-major intrinsics [[fx,0,cx],[0,fy,cy],[0,0,1]]. */
  K: number[][];
}

export interface SceneMetadata {
  scene: {
    resolution: [number, number];
    frame_start: number;
    frame_end: number;
    frame_rate: number;
    [key: string]: unknown;
  };
  camera?: {
    focal_length: number;
    sensor_width: number;
    near_clip: number;
    far_clip: number;
    frames: CameraFrame[];
  };
  instances: Array<{
    uid: string;
    segmentation_id: number;
    scale: number;
    bbox_3d: [Vec3, Vec3];
    frames: Array<{
      position: Vec3;
      quaternion: Quat;
      visible_pixels: number;
      [key: string]: unknown;
    }>;
    [key: string]: unknown;
  }>;
  [key: string]: unknown;
}

export interface Track {
  query: [number, number, number]; // x, y, frame
  positions: Array<[number, number]>;
  visibility: number[];
  instance: string;
  local_point: Vec3;
}

export interface SceneEntry {
  /** Scene index from the manifest (also the seed-derivation index). */
  index: number;
  /** Directory name, e.g. scene_00000000. */
  path: string;
  /** Absolute directory path. */
  dir: string;
  metadata: SceneMetadata;
  /** Layer names present on disk, standard ones plus worker extras. */
  layers: string[];
  frameStart: number;
  nFrames: number;
}

export interface DatasetManifest {
  worker: string;
  num_scenes: number;
  master_seed: number;
  scenes: Array<{
    index: number;
    seed: number;
    status: string;
    path?: string;
    error?: string;
  }>;
  [key: string]: unknown;
}

export interface DatasetHandle {
  root: string;
  manifest: DatasetManifest;
  scenes: SceneEntry[];
}

function readJson(file: string, what: string): unknown {
  let text: string;
  try {
    text = fs.readFileSync(file, "utf8");
  } catch {
    throw new FormatError(`missing ${what}: ${file}`);
  }
  try {
    return JSON.parse(text);
  } catch (err) {
    throw new FormatError(`corrupt ${what}: ${file} (${(err as Error).message})`);
  }
}

function rasterName(layer: string, ordinal: number): string {
  return `${layer}_${String(ordinal).padStart(5, "0")}.kbr`;
}

/**
 * Open a generated dataset directory and validate its structure.
 *
 * Reads the manifest and every scene's metadata up front; raster files
 * are only checked for existence here and decoded lazily by frames().
 */
export function openDataset(root: string): DatasetHandle {
  const manifest = readJson(
    path.join(root, "dataset_manifest.json"),
    "dataset manifest"
  ) as DatasetManifest;
  if (!Array.isArray(manifest.scenes)) {
    throw new FormatError(`dataset manifest in ${root} has no scene list`);
  }

  const scenes: SceneEntry[] = [];
  for (const entry of manifest.scenes) {
    if (entry.status !== "ok" || entry.path === undefined) {
      continue; // failed scenes carry no directory
    }
    const dir = path.join(root, entry.path);
    if (!fs.existsSync(dir) || !fs.statSync(dir).isDirectory()) {
      throw new FormatError(`missing scene ${entry.path} under ${root}`);
    }
    const metadata = readJson(
      path.join(dir, "metadata.json"),
      `metadata for ${entry.path}`
    ) as SceneMetadata;
    if (!fs.existsSync(path.join(dir, "events.json"))) {
      throw new FormatError(`scene ${entry.path} is missing events.json`);
    }
    const frameStart = metadata.scene.frame_start;
    const nFrames = metadata.scene.frame_end - frameStart + 1;

    const present = new Set<string>();
    for (const name of fs.readdirSync(dir)) {
      const m = /^([a-z0-9_]+)_(\d{5})\.kbr$/.exec(name);
      if (m !== null && m[2] === "00000") {
        present.add(m[1]);
      }
    }
    for (const layer of STANDARD_LAYERS) {
      for (let ordinal = 0; ordinal < nFrames; ordinal++) {
        if (!fs.existsSync(path.join(dir, rasterName(layer, ordinal)))) {
          throw new FormatError(
            `scene ${entry.path} is missing ${rasterName(layer, ordinal)}`
          );
        }
      }
    }
    scenes.push({
      index: entry.index,
      path: entry.path,
      dir,
      metadata,
      layers: [...present].sort(),
      frameStart,
      nFrames,
    });
  }
  return { root, manifest, scenes };
}

export type TaskName = "frames" | "nerf" | "tracking";

export interface TaskSpec {
  name: TaskName;
  /** Layers to decode; defaults depend on the task. */
  features?: string[];
}

export interface FrameFeatures {
  /** Position of the scene in the handle's scene list. */
  sceneIndex: number;
  scenePath: string;
  /** Absolute frame number (frame_start + ordinal). */
  frame: number;
  ordinal: number;
  resolution: [number, number];
  /** Decoded rasters, keyed by layer name; only the selection is read. */
  features: Record<string, Raster>;
  camera: CameraFrame | null;
  /** Scene point tracks; populated for the tracking task. */
  tracks: Track[] | null;
}

function defaultFeatures(task: TaskSpec): string[] {
  if (task.features !== undefined) {
    return task.features;
  }
  switch (task.name) {
    case "frames":
      return [...STANDARD_LAYERS];
    case "nerf":
      return ["rgba"]; // rays come from metadata, not rasters
    case "tracking":
      return [];
  }
}

/**
 * Iterate per-frame feature maps in (scene, frame) order.
 *
 * Rasters are decoded lazily, one frame at a time, and only for the
 * selected layers; unselected files are never opened.
 */
export function* frames(
  handle: DatasetHandle,
  task: TaskSpec
): Generator<FrameFeatures> {
  if (!["frames", "nerf", "tracking"].includes(task.name)) {
    throw new UnknownFeature(`unknown task: ${task.name}`);
  }
  const selection = defaultFeatures(task);
  for (let sceneIndex = 0; sceneIndex < handle.scenes.length; sceneIndex++) {
    const scene = handle.scenes[sceneIndex];
    const known = new Set(scene.layers);
    for (const layer of selection) {
      if (!known.has(layer)) {
        throw new UnknownFeature(
          `layer ${layer} not in scene ${scene.path} (has: ${scene.layers.join(", ")})`
        );
      }
    }
    let tracks: Track[] | null = null;
    if (task.name === "tracking") {
      tracks = readJson(
        path.join(scene.dir, "tracks.json"),
        `tracks for ${scene.path}`
      ) as Track[];
    }
    const cameraFrames = scene.metadata.camera?.frames;
    for (let ordinal = 0; ordinal < scene.nFrames; ordinal++) {
      const features: Record<string, Raster> = {};
      for (const layer of selection) {
        features[layer] = readRaster(path.join(scene.dir, rasterName(layer, ordinal)));
      }
      yield {
        sceneIndex,
        scenePath: scene.path,
        frame: scene.frameStart + ordinal,
        ordinal,
        resolution: scene.metadata.scene.resolution,
        features,
        camera: cameraFrames?.[ordinal] ?? null,
        tracks,
      };
    }
  }
}
