import { CameraFrame, FrameFeatures, Quat, Vec3 } from "./dataset.js";
import { MissingCamera } from "./errors.js";

/** Rotate v by unit quaternion q = (w, x, y, z). */
export function rotate(q: Quat, v: Vec3): Vec3 {
  const [w, x, y, z] = q;
  // v' = v + 2 q_v x (q_v x v + w v)
  const tx = y * v[2] - z * v[1] + w * v[0];
  const ty = z * v[0] - x * v[2] + w * v[1];
  const tz = x * v[1] - y * v[0] + w * v[2];
  return [
    v[0] + 2 * (y * tz - z * ty),
    v[1] + 2 * (z * tx - x * tz),
    v[2] + 2 * (x * ty - y * tx),
  ];
}

export interface Ray {
  origin: Vec3;
  direction: Vec3;
}

/**
 * Unit world-space ray through the continuous image point (x, y).
 *
 * Image origin is the top-left corner with pixel centers at
 * half-integers; the camera looks along its local -Z with +Y up, so
 * y grows downward in the image.  The direction is normalized in
 * camera space before rotating, matching the generator's own ray
 * construction bit for bit apart from rounding.
 */
export function rayAt(camera: CameraFrame, x: number, y: number): Ray {
  const k = camera.K;
  const local: Vec3 = [
    (x - k[0][2]) / k[0][0],
    (k[1][2] - y) / k[1][1],
    -1.0,
  ];
  const n = Math.hypot(local[0], local[1], local[2]);
  local[0] /= n;
  local[1] /= n;
  local[2] /= n;
  return {
    origin: [...camera.position],
    direction: rotate(camera.quaternion, local),
  };
}

export interface NerfRays {
  width: number;
  height: number;
  /** (height*width*3) row-major; every pixel repeats the camera position. */
  origins: Float64Array;
  /** (height*width*3) row-major unit directions through pixel centers. */
  directions: Float64Array;
  /** (height*width*3) linear color, when the frame selected rgba. */
  rgb: Float32Array | null;
}

/** Per-pixel camera rays for a frame, NeRF style. */
export function nerfRays(frame: FrameFeatures): NerfRays {
  const camera = frame.camera;
  if (camera === null || camera === undefined) {
    throw new MissingCamera(
      `frame ${frame.frame} of ${frame.scenePath} has no camera pose`
    );
  }
  const [width, height] = frame.resolution;
  const origins = new Float64Array(width * height * 3);
  const directions = new Float64Array(width * height * 3);
  for (let row = 0; row < height; row++) {
    for (let col = 0; col < width; col++) {
      const ray = rayAt(camera, col + 0.5, row + 0.5);
      const at = (row * width + col) * 3;
      origins[at] = ray.origin[0];
      origins[at + 1] = ray.origin[1];
      origins[at + 2] = ray.origin[2];
      directions[at] = ray.direction[0];
      directions[at + 1] = ray.direction[1];
      directions[at + 2] = ray.direction[2];
    }
  }
  let rgb: Float32Array | null = null;
  const rgba = frame.features["rgba"];
  if (rgba !== undefined && rgba.channels >= 3) {
    rgb = new Float32Array(width * height * 3);
    const src = rgba.data;
    for (let px = 0; px < width * height; px++) {
      rgb[px * 3] = src[px * rgba.channels] as number;
      rgb[px * 3 + 1] = src[px * rgba.channels + 1] as number;
      rgb[px * 3 + 2] = src[px * rgba.channels + 2] as number;
    }
  }
  return { width, height, origins, directions, rgb };
}
