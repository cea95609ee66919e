/**
 * Client-side layer compositing.
 *
 * Mirrors the server math exactly: straight-alpha 8-bit layers are blended
 * bottom-to-top by ascending z in premultiplied float, then quantized to
 * 8-bit once, so the preview stays honest against server renders.
 */

export interface CompositeLayer {
  /** Straight-alpha RGBA bytes, row-major, width*height*4 long. */
  pixels: Uint8Array | Uint8ClampedArray;
  width: number;
  height: number;
  /** Placement of the layer's top-left corner on the canvas. */
  x: number;
  y: number;
  z: number;
  visible: boolean;
}

/** Composite visible layers onto a transparent canvas; returns straight RGBA bytes. */
export function compositeLayers(
  canvasWidth: number,
  canvasHeight: number,
  layers: CompositeLayer[],
): Uint8ClampedArray {
  const acc = new Float32Array(canvasWidth * canvasHeight * 4); // premultiplied
  const ordered = layers
    .filter((l) => l.visible)
    .slice()
    .sort((a, b) => a.z - b.z);
  for (const layer of ordered) {
    const x0 = Math.max(layer.x, 0);
    const y0 = Math.max(layer.y, 0);
    const x1 = Math.min(layer.x + layer.width, canvasWidth);
    const y1 = Math.min(layer.y + layer.height, canvasHeight);
    for (let cy = y0; cy < y1; cy++) {
      const srcRow = (cy - layer.y) * layer.width;
      const dstRow = cy * canvasWidth;
      for (let cx = x0; cx < x1; cx++) {
        const s = (srcRow + (cx - layer.x)) * 4;
        const d = (dstRow + cx) * 4;
        const a = layer.pixels[s + 3] / 255;
        const inv = 1 - a;
        acc[d] = (layer.pixels[s] / 255) * a + acc[d] * inv;
        acc[d + 1] = (layer.pixels[s + 1] / 255) * a + acc[d + 1] * inv;
        acc[d + 2] = (layer.pixels[s + 2] / 255) * a + acc[d + 2] * inv;
        acc[d + 3] = a + acc[d + 3] * inv;
      }
    }
  }
  const out = new Uint8ClampedArray(canvasWidth * canvasHeight * 4);
  for (let i = 0; i < acc.length; i += 4) {
    const a = acc[i + 3];
    if (a > 0) {
      out[i] = Math.round((acc[i] / a) * 255);
      out[i + 1] = Math.round((acc[i + 1] / a) * 255);
      out[i + 2] = Math.round((acc[i + 2] / a) * 255);
    }
    out[i + 3] = Math.round(a * 255);
  }
  return out;
}

export const CHECKER_SIZE = 8;
const CHECKER_LIGHT = 204;
const CHECKER_DARK = 153;

/** The canonical transparency backdrop: an 8 px light/dark gray checkerboard. */
export function checkerboard(width: number, height: number, size = CHECKER_SIZE): Uint8ClampedArray {
  const out = new Uint8ClampedArray(width * height * 4);
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      const light = (Math.floor(x / size) + Math.floor(y / size)) % 2 === 0;
      const v = light ? CHECKER_LIGHT : CHECKER_DARK;
      const i = (y * width + x) * 4;
      out[i] = out[i + 1] = out[i + 2] = v;
      out[i + 3] = 255;
    }
  }
  return out;
}

/** Flatten straight RGBA over an opaque backdrop (both width*height*4). */
export function flattenOver(
  rgba: Uint8ClampedArray,
  backdrop: Uint8ClampedArray,
): Uint8ClampedArray {
  const out = new Uint8ClampedArray(rgba.length);
  for (let i = 0; i < rgba.length; i += 4) {
    const a = rgba[i + 3] / 255;
    const inv = 1 - a;
    out[i] = Math.round(rgba[i] * a + backdrop[i] * inv);
    out[i + 1] = Math.round(rgba[i + 1] * a + backdrop[i + 1] * inv);
    out[i + 2] = Math.round(rgba[i + 2] * a + backdrop[i + 2] * inv);
    out[i + 3] = 255;
  }
  return out;
}

/** Max per-channel absolute difference between two RGBA buffers. */
export function maxChannelDelta(a: Uint8ClampedArray, b: Uint8ClampedArray): number {
  if (a.length !== b.length) {
    throw new Error(`buffer length mismatch: ${a.length} vs ${b.length}`);
  }
  let worst = 0;
  for (let i = 0; i < a.length; i++) {
    const d = Math.abs(a[i] - b[i]);
    if (d > worst) worst = d;
  }
  return worst;
}
