import busboy from 'busboy';
import express, { Express, Request, Response } from 'express';

import { nearestFill } from './nearest';
import { decodeMaskPng, decodeRgbPng, encodeRgbPng } from './raster';

export type Backend = 'nearest' | 'passthrough';

interface Parts {
  image?: Buffer;
  mask?: Buffer;
}

function fail(res: Response, code: string, message: string, status = 400): void {
  res.status(status).json({ code, message });
}

function readMultipart(req: Request): Promise<Parts> {
  return new Promise((resolve, reject) => {
    let bb;
    try {
      bb = busboy({ headers: req.headers });
    } catch (err) {
      reject(err);
      return;
    }
    const parts: Parts = {};
    bb.on('file', (name, file) => {
      const chunks: Buffer[] = [];
      file.on('data', (d: Buffer) => chunks.push(d));
      file.on('end', () => {
        if (name === 'image' || name === 'mask') {
          parts[name] = Buffer.concat(chunks);
        }
      });
    });
    bb.on('error', reject);
    bb.on('close', () => resolve(parts));
    req.pipe(bb);
  });
}

export function createApp(backend: Backend, log: (line: object) => void = () => {}): Express {
  const app = express();

  app.get('/health', (_req, res) => {
    res.json({ status: 'ok', backend });
  });

  app.post('/inpaint', async (req, res) => {
    const started = Date.now();
    let parts: Parts;
    try {
      parts = await readMultipart(req);
    } catch (err) {
      fail(res, 'bad_multipart', `cannot parse multipart body: ${err}`);
      return;
    }
    if (!parts.image) {
      fail(res, 'missing_part', 'multipart part "image" is required');
      return;
    }
    if (!parts.mask) {
      fail(res, 'missing_part', 'multipart part "mask" is required');
      return;
    }
    let image, mask;
    try {
      image = decodeRgbPng(parts.image);
    } catch (err) {
      fail(res, 'bad_image', `cannot decode image PNG: ${err}`);
      return;
    }
    try {
      mask = decodeMaskPng(parts.mask);
    } catch (err) {
      fail(res, 'bad_mask', `cannot decode mask PNG: ${err}`);
      return;
    }
    if (mask.width !== image.width || mask.height !== image.height) {
      fail(res, 'dimension_mismatch',
        `image is ${image.width}x${image.height} but mask is ${mask.width}x${mask.height}`);
      return;
    }
    let out;
    if (backend === 'passthrough') {
      out = image;
    } else {
      try {
        out = nearestFill(image, mask.known);
      } catch (err) {
        fail(res, 'empty_mask', `${err}`);
        return;
      }
    }
    const body = encodeRgbPng(out);
    log({
      route: '/inpaint', backend,
      width: image.width, height: image.height,
      known: mask.known.reduce((a: number, b: number) => a + b, 0),
      ms: Date.now() - started,
    });
    res.status(200).type('image/png').send(body);
  });

  return app;
}
