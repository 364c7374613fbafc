export { FormatError, MissingCamera, UnknownFeature } from "./errors.js";
export { decodeRaster, readRaster } from "./raster.js";
export type { Raster, RasterData } from "./raster.js";
export { STANDARD_LAYERS, frames, openDataset } from "./dataset.js";
export type {
  CameraFrame,
  DatasetHandle,
  DatasetManifest,
  FrameFeatures,
  Quat,
  SceneEntry,
  SceneMetadata,
  TaskName,
  TaskSpec,
  Track,
  Vec3,
} from "./dataset.js";
export { nerfRays, rayAt, rotate } from "./rays.js";
export type { NerfRays, Ray } from "./rays.js";
