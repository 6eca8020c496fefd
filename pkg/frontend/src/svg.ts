/**
 * Deterministic SVG line-chart renderer.
 *
 * No timestamps, locale formatting, or randomness anywhere: the same inputs
 * always produce byte-identical output.
 */

export interface Series {
  label: string;
  x: number[];
  y: number[];
  color: string;
  dash?: string;
}

export interface ChartSpec {
  title: string;
  xLabel: string;
  yLabel: string;
  series: Series[];
  width?: number;
  height?: number;
  logY?: boolean;
}

const MARGIN = { left: 72, right: 24, top: 40, bottom: 48 };

/** Fixed-precision coordinate formatting so output is reproducible. */
function fmt(v: number): string {
  return v.toFixed(3).replace(/\.?0+$/, "").replace(/^-0$/, "0");
}

function niceTicks(lo: number, hi: number, count: number): number[] {
  if (!(hi > lo)) {
    return [lo];
  }
  const span = hi - lo;
  const rawStep = span / count;
  const mag = Math.pow(10, Math.floor(Math.log10(rawStep)));
  let step = mag;
  for (const m of [1, 2, 5, 10]) {
    if (m * mag >= rawStep) {
      step = m * mag;
      break;
    }
  }
  const ticks: number[] = [];
  const first = Math.ceil(lo / step) * step;
  for (let i = 0; ticks.length < 32; i++) {
    const v = first + i * step;
    if (v > hi + 1e-12 * span) {
      break;
    }
    ticks.push(Math.abs(v) < 1e-12 * span ? 0 : v);
  }
  return ticks;
}

function tickLabel(v: number): string {
  if (v === 0) {
    return "0";
  }
  const a = Math.abs(v);
  if (a >= 1e4 || a < 1e-3) {
    return v.toExponential(2);
  }
  return String(Number(v.toPrecision(6)));
}

export function renderChart(spec: ChartSpec): string {
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

  const parts: string[] = [];
  parts.push(
    `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" height="${height}" viewBox="0 0 ${width} ${height}">`,
  );
  parts.push(`<rect width="${width}" height="${height}" fill="#ffffff"/>`);
  parts.push(
    `<text x="${width / 2}" y="24" text-anchor="middle" font-family="sans-serif" font-size="16">${escapeXml(spec.title)}</text>`,
  );

  const xTicks = niceTicks(xLo, xHi, 6);
  const yTicks = niceTicks(yLo, yHi, 6);

  for (const v of yTicks) {
    const py = MARGIN.top + (1 - (v - yLo) / (yHi - yLo)) * plotH;
    parts.push(
      `<line x1="${MARGIN.left}" y1="${fmt(py)}" x2="${MARGIN.left + plotW}" y2="${fmt(py)}" stroke="#dddddd"/>`,
    );
    const label = spec.logY ? `1e${tickLabel(v)}` : tickLabel(v);
    parts.push(
      `<text x="${MARGIN.left - 6}" y="${fmt(py + 4)}" text-anchor="end" font-family="sans-serif" font-size="11">${label}</text>`,
    );
  }
  for (const v of xTicks) {
    const px = sx(v);
    parts.push(
      `<line x1="${fmt(px)}" y1="${MARGIN.top}" x2="${fmt(px)}" y2="${MARGIN.top + plotH}" stroke="#dddddd"/>`,
    );
    parts.push(
      `<text x="${fmt(px)}" y="${MARGIN.top + plotH + 18}" text-anchor="middle" font-family="sans-serif" font-size="11">${tickLabel(v)}</text>`,
    );
  }

  parts.push(
    `<rect x="${MARGIN.left}" y="${MARGIN.top}" width="${plotW}" height="${plotH}" fill="none" stroke="#000000"/>`,
  );

  for (const s of spec.series) {
    const pts: string[] = [];
    for (let i = 0; i < s.x.length; i++) {
      pts.push(`${fmt(sx(s.x[i]))},${fmt(sy(s.y[i]))}`);
    }
    const dash = s.dash ? ` stroke-dasharray="${s.dash}"` : "";
    parts.push(
      `<polyline points="${pts.join(" ")}" fill="none" stroke="${s.color}" stroke-width="1.5"${dash}/>`,
    );
  }

  let legendY = MARGIN.top + 14;
  for (const s of spec.series) {
    const dash = s.dash ? ` stroke-dasharray="${s.dash}"` : "";
    parts.push(
      `<line x1="${MARGIN.left + plotW - 150}" y1="${legendY - 4}" x2="${MARGIN.left + plotW - 120}" y2="${legendY - 4}" stroke="${s.color}" stroke-width="1.5"${dash}/>`,
    );
    parts.push(
      `<text x="${MARGIN.left + plotW - 114}" y="${legendY}" font-family="sans-serif" font-size="11">${escapeXml(s.label)}</text>`,
    );
    legendY += 16;
  }

  parts.push(
    `<text x="${MARGIN.left + plotW / 2}" y="${height - 10}" text-anchor="middle" font-family="sans-serif" font-size="13">${escapeXml(spec.xLabel)}</text>`,
  );
  parts.push(
    `<text x="16" y="${MARGIN.top + plotH / 2}" text-anchor="middle" font-family="sans-serif" font-size="13" transform="rotate(-90 16 ${MARGIN.top + plotH / 2})">${escapeXml(spec.yLabel)}</text>`,
  );
  parts.push("</svg>");
  parts.push("");
  return parts.join("\n");
}

function escapeXml(s: string): string {
  return s
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}
