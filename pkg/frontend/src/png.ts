/**
 * Minimal PNG writer and chart rasterizer.
 *
 * Encodes 8-bit RGB images with zlib-deflated scanlines (filter 0). The
 * raster rendering mirrors the SVG layout but carries no text; axis labels
 * and legends live in the SVG output only.
 */

import { deflateSync } from "node:zlib";
import type { ChartSpec } from "./svg.js";

const CRC_TABLE = (() => {
  const table = new Uint32Array(256);
  for (let n = 0; n < 256; n++) {
    let c = n;
    for (let k = 0; k < 8; k++) {
      c = c & 1 ? 0xedb88320 ^ (c >>> 1) : c >>> 1;
    }
    table[n] = c >>> 0;
  }
  return table;
})();

function crc32(buf: Buffer): number {
  let c = 0xffffffff;
  for (let i = 0; i < buf.length; i++) {
    c = CRC_TABLE[(c ^ buf[i]) & 0xff] ^ (c >>> 8);
  }
  return (c ^ 0xffffffff) >>> 0;
}

function chunk(type: string, data: Buffer): Buffer {
  const head = Buffer.alloc(8);
  head.writeUInt32BE(data.length, 0);
  head.write(type, 4, "ascii");
  const crcBuf = Buffer.alloc(4);
  crcBuf.writeUInt32BE(crc32(Buffer.concat([head.subarray(4), data])), 0);
  return Buffer.concat([head, data, crcBuf]);
}

export class Raster {
  readonly width: number;
  readonly height: number;
  readonly pixels: Uint8Array;

  constructor(width: number, height: number) {
    this.width = width;
    this.height = height;
    this.pixels = new Uint8Array(width * height * 3).fill(255);
  }

  set(x: number, y: number, rgb: [number, number, number]): void {
    if (x < 0 || y < 0 || x >= this.width || y >= this.height) {
      return;
    }
    const i = (y * this.width + x) * 3;
    this.pixels[i] = rgb[0];
    this.pixels[i + 1] = rgb[1];
    this.pixels[i + 2] = rgb[2];
  }

  line(x0: number, y0: number, x1: number, y1: number, rgb: [number, number, number]): void {
    let ax = Math.round(x0);
    let ay = Math.round(y0);
    const bx = Math.round(x1);
    const by = Math.round(y1);
    const dx = Math.abs(bx - ax);
    const dy = -Math.abs(by - ay);
    const sxs = ax < bx ? 1 : -1;
    const sys = ay < by ? 1 : -1;
    let err = dx + dy;
    for (;;) {
      this.set(ax, ay, rgb);
      if (ax === bx && ay === by) {
        break;
      }
      const e2 = 2 * err;
      if (e2 >= dy) {
        err += dy;
        ax += sxs;
      }
      if (e2 <= dx) {
        err += dx;
        ay += sys;
      }
    }
  }

  encode(): Buffer {
    const stride = this.width * 3;
    const raw = Buffer.alloc((stride + 1) * this.height);
    for (let y = 0; y < this.height; y++) {
      raw[y * (stride + 1)] = 0;
      raw.set(this.pixels.subarray(y * stride, (y + 1) * stride), y * (stride + 1) + 1);
    }
    const ihdr = Buffer.alloc(13);
    ihdr.writeUInt32BE(this.width, 0);
    ihdr.writeUInt32BE(this.height, 4);
    ihdr[8] = 8; // bit depth
    ihdr[9] = 2; // color type RGB
    const signature = Buffer.from([0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a]);
    return Buffer.concat([
      signature,
      chunk("IHDR", ihdr),
      chunk("IDAT", deflateSync(raw, { level: 9 })),
      chunk("IEND", Buffer.alloc(0)),
    ]);
  }
}

function parseColor(hex: string): [number, number, number] {
  return [
    parseInt(hex.slice(1, 3), 16),
    parseInt(hex.slice(3, 5), 16),
    parseInt(hex.slice(5, 7), 16),
  ];
}

const MARGIN = { left: 72, right: 24, top: 40, bottom: 48 };

export function renderChartPng(spec: ChartSpec): Buffer {
  const width = spec.width ?? 720;
  const height = spec.height ?? 480;
  const plotW = width - MARGIN.left - MARGIN.right;
  const plotH = height - MARGIN.top - MARGIN.bottom;

  const tr = spec.logY
    ? (y: number) => Math.log10(Math.max(y, Number.MIN_VALUE))
    : (y: number) => y;

  let xLo = Infinity;
  let xHi = -Infinity;
  let yLo = Infinity;
  let yHi = -Infinity;
  for (const s of spec.series) {
    for (const v of s.x) {
      xLo = Math.min(xLo, v);
      xHi = Math.max(xHi, v);
    }
    for (const v of s.y) {
      const w = tr(v);
      yLo = Math.min(yLo, w);
      yHi = Math.max(yHi, w);
    }
  }
  if (!(xHi > xLo)) {
    xHi = xLo + 1;
  }
  if (!(yHi > yLo)) {
    yHi = yLo + 1;
  }
  const minSpan = 1e-9 * Math.max(1, Math.abs(yLo), Math.abs(yHi));
  if (yHi - yLo < minSpan) {
    yLo -= 0.5;
    yHi += 0.5;
  }
  const yPad = 0.05 * (yHi - yLo);
  yLo -= yPad;
  yHi += yPad;

  const sx = (x: number) => MARGIN.left + ((x - xLo) / (xHi - xLo)) * plotW;
  const sy = (y: number) => MARGIN.top + (1 - (tr(y) - yLo) / (yHi - yLo)) * plotH;

  const img = new Raster(width, height);
  const black: [number, number, number] = [0, 0, 0];
  img.line(MARGIN.left, MARGIN.top, MARGIN.left + plotW, MARGIN.top, black);
  img.line(MARGIN.left, MARGIN.top + plotH, MARGIN.left + plotW, MARGIN.top + plotH, black);
  img.line(MARGIN.left, MARGIN.top, MARGIN.left, MARGIN.top + plotH, black);
  img.line(MARGIN.left + plotW, MARGIN.top, MARGIN.left + plotW, MARGIN.top + plotH, black);

  for (const s of spec.series) {
    const rgb = parseColor(s.color);
    for (let i = 1; i < s.x.length; i++) {
      img.line(sx(s.x[i - 1]), sy(s.y[i - 1]), sx(s.x[i]), sy(s.y[i]), rgb);
    }
  }
  return img.encode();
}
