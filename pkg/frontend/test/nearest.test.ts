import { describe, expect, it } from 'vitest';

import { nearestFill } from '../src/nearest';
import { Rgb } from '../src/raster';

function sparse(w: number, h: number, pixels: Array<[number, number, [number, number, number]]>) {
  const img: Rgb = { width: w, height: h, data: new Uint8Array(w * h * 3) };
  const known = new Uint8Array(w * h);
  for (const [r, c, rgb] of pixels) {
    const i = r * w + c;
    known[i] = 1;
    img.data[3 * i] = rgb[0];
    img.data[3 * i + 1] = rgb[1];
    img.data[3 * i + 2] = rgb[2];
  }
  return { img, known };
}

function px(out: Rgb, r: number, c: number): [number, number, number] {
  const i = r * out.width + c;
  return [out.data[3 * i], out.data[3 * i + 1], out.data[3 * i + 2]];
}

describe('nearestFill', () => {
  it('keeps known pixels and fills from the nearest one', () => {
    const { img, known } = sparse(16, 1, [
      [0, 0, [255, 0, 0]],
      [0, 10, [0, 0, 255]],
    ]);
    const out = nearestFill(img, known);
    expect(px(out, 0, 0)).toEqual([255, 0, 0]);
    expect(px(out, 0, 4)).toEqual([255, 0, 0]);
    expect(px(out, 0, 6)).toEqual([0, 0, 255]);
    // equidistant: smaller row then smaller column wins
    expect(px(out, 0, 5)).toEqual([255, 0, 0]);
  });

  it('ties prefer the smaller row', () => {
    const { img, known } = sparse(3, 3, [
      [0, 1, [10, 20, 30]],
      [2, 1, [40, 50, 60]],
    ]);
    const out = nearestFill(img, known);
    expect(px(out, 1, 1)).toEqual([10, 20, 30]);
  });

  it('brute-force and ring search agree', () => {
    const w = 40;
    const h = 33;
    // > 512 known pixels forces the ring path; rebuild with a sparse copy to
    // compare against the brute-force path on identical pixels
    const pts: Array<[number, number, [number, number, number]]> = [];
    let state = 12345;
    const rand = () => (state = (state * 1103515245 + 12345) % 2147483648) / 2147483648;
    for (let i = 0; i < 600; i++) {
      const r = Math.floor(rand() * h);
      const c = Math.floor(rand() * w);
      pts.push([r, c, [Math.floor(rand() * 256), Math.floor(rand() * 256), Math.floor(rand() * 256)]]);
    }
    const dense = sparse(w, h, pts);
    const ringOut = nearestFill(dense.img, dense.known);

    // brute-force oracle computed inline
    const knownIdx: number[] = [];
    for (let i = 0; i < w * h; i++) if (dense.known[i]) knownIdx.push(i);
    for (let r = 0; r < h; r++) {
      for (let c = 0; c < w; c++) {
        const i = r * w + c;
        if (dense.known[i]) continue;
        let bestD2 = Infinity;
        let best = -1;
        for (const k of knownIdx) {
          const kr = Math.floor(k / w);
          const kc = k % w;
          const d2 = (kr - r) ** 2 + (kc - c) ** 2;
          if (d2 < bestD2) {
            bestD2 = d2;
            best = k;
          }
        }
        expect(px(ringOut, r, c)).toEqual(px(dense.img, Math.floor(best / w), best % w));
      }
    }
  });

  it('rejects an empty known set', () => {
    const img: Rgb = { width: 4, height: 4, data: new Uint8Array(48) };
    expect(() => nearestFill(img, new Uint8Array(16))).toThrow();
  });
});
