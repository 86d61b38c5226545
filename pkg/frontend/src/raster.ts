import { PNG } from 'pngjs';

export interface Rgb {
  width: number;
  height: number;
  data: Uint8Array; // RGB, row-major, 3 bytes per pixel
}

export function decodeRgbPng(buf: Buffer): Rgb {
  const png = PNG.sync.read(buf);
  const n = png.width * png.height;
  const out = new Uint8Array(n * 3);
  for (let i = 0; i < n; i++) {
    out[3 * i] = png.data[4 * i];
    out[3 * i + 1] = png.data[4 * i + 1];
    out[3 * i + 2] = png.data[4 * i + 2];
  }
  return { width: png.width, height: png.height, data: out };
}

export function decodeMaskPng(buf: Buffer): { width: number; height: number; known: Uint8Array } {
  const png = PNG.sync.read(buf);
  const n = png.width * png.height;
  const known = new Uint8Array(n);
  for (let i = 0; i < n; i++) {
    // gray PNGs decode into RGBA; 255 = known, threshold at 128
    known[i] = png.data[4 * i] >= 128 ? 1 : 0;
  }
  return { width: png.width, height: png.height, known };
}

export function encodeRgbPng(img: Rgb): Buffer {
  const png = new PNG({ width: img.width, height: img.height });
  const n = img.width * img.height;
  for (let i = 0; i < n; i++) {
    png.data[4 * i] = img.data[3 * i];
    png.data[4 * i + 1] = img.data[3 * i + 1];
    png.data[4 * i + 2] = img.data[3 * i + 2];
    png.data[4 * i + 3] = 255;
  }
  return PNG.sync.write(png);
}
