import { Rgb } from './raster';

/**
 * Fill every unknown pixel with the color of its nearest known pixel.
 *
 * Nearest is by squared Euclidean pixel distance with ties broken by smaller
 * row, then smaller column - the exact rule the reference client implements,
 * so responses can be compared byte-for-byte.
 */
export function nearestFill(img: Rgb, known: Uint8Array): Rgb {
  const { width: w, height: h } = img;
  const out = new Uint8Array(img.data); // known pixels keep their value
  const knownList: number[] = [];
  for (let i = 0; i < w * h; i++) {
    if (known[i]) knownList.push(i);
  }
  if (knownList.length === 0) {
    throw new Error('no known pixels');
  }
  const useBrute = knownList.length <= 512;
  for (let r = 0; r < h; r++) {
    for (let c = 0; c < w; c++) {
      const idx = r * w + c;
      if (known[idx]) continue;
      const src = useBrute
        ? bruteNearest(knownList, w, r, c)
        : ringNearest(known, w, h, r, c);
      out[3 * idx] = img.data[3 * src];
      out[3 * idx + 1] = img.data[3 * src + 1];
      out[3 * idx + 2] = img.data[3 * src + 2];
    }
  }
  return { width: w, height: h, data: out };
}

function bruteNearest(knownList: number[], w: number, r: number, c: number): number {
  let bestD2 = Infinity;
  let best = knownList[0];
  for (const idx of knownList) {
    const kr = Math.floor(idx / w);
    const kc = idx % w;
    const d2 = (kr - r) * (kr - r) + (kc - c) * (kc - c);
    // knownList is in row-major order, so strict < keeps the smaller (row, col) on ties
    if (d2 < bestD2) {
      bestD2 = d2;
      best = idx;
    }
  }
  return best;
}

function ringNearest(known: Uint8Array, w: number, h: number, r: number, c: number): number {
  let bestD2 = Infinity;
  let best = -1;
  const consider = (rr: number, cc: number) => {
    if (rr < 0 || rr >= h || cc < 0 || cc >= w) return;
    const idx = rr * w + cc;
    if (!known[idx]) return;
    const d2 = (rr - r) * (rr - r) + (cc - c) * (cc - c);
    if (d2 < bestD2 || (d2 === bestD2 && idx < best)) {
      bestD2 = d2;
      best = idx;
    }
  };
  const maxK = Math.max(h, w);
  for (let k = 1; k <= maxK; k++) {
    if (best >= 0 && k * k > bestD2) break; // no closer candidate can exist beyond this ring
    // ring cells at chebyshev distance k, visited in row-major order
    for (let cc = c - k; cc <= c + k; cc++) {
      consider(r - k, cc);
    }
    for (let rr = r - k + 1; rr <= r + k - 1; rr++) {
      consider(rr, c - k);
      consider(rr, c + k);
    }
    for (let cc = c - k; cc <= c + k; cc++) {
      consider(r + k, cc);
    }
  }
  return best;
}
