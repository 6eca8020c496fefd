/**
 * Figure builders over the diagnostic table.
 *
 * The energy figure overlays the recorded energy with the energy predicted
 * from the initial value and the trapezoid-accumulated dissipation. The
 * accumulation uses the same floating-point operations as the per-record
 * identity residual, so the pointwise gap between the two curves equals the
 * accumulated residual exactly.
 */

import type { ChartSpec } from "./svg.js";
import type { DiagTable } from "./csv.js";

export const FIGURE_NAMES = [
  "energy",
  "volume",
  "conformal",
  "concentration",
  "drift",
] as const;

export type FigureName = (typeof FIGURE_NAMES)[number];

/**
 * Energy predicted by trapezoid quadrature of the dissipation record.
 * Index i holds E(0) minus the accumulated dissipation integral up to t_i.
 */
export function energyFromDissipation(table: DiagTable): number[] {
  const t = table.t;
  const d = table.dissipation;
  const out = [table.energy[0]];
  let acc = 0.0;
  for (let i = 1; i < t.length; i++) {
    acc += 0.5 * (d[i - 1] + d[i]) * (t[i] - t[i - 1]);
    out.push(table.energy[0] - acc);
  }
  return out;
}

export function buildFigure(name: FigureName, table: DiagTable, a: number): ChartSpec {
  switch (name) {
    case "energy":
      return {
        title: "Bienergy and dissipation-predicted bienergy",
        xLabel: "t",
        yLabel: "E(t)",
        series: [
          { label: "recorded", x: table.t, y: table.energy, color: "#1f5fa8" },
          {
            label: "from dissipation",
            x: table.t,
            y: energyFromDissipation(table),
            color: "#d1495b",
            dash: "6 4",
          },
        ],
      };
    case "volume": {
      const predicted = table.t.map(
        (t) => table.volume[0] * Math.exp(-4.0 * a * t),
      );
      return {
        title: "Conformal volume and exponential envelope",
        xLabel: "t",
        yLabel: "volume",
        series: [
          { label: "recorded", x: table.t, y: table.volume, color: "#1f5fa8" },
          {
            label: "vol(0) exp(-4at)",
            x: table.t,
            y: predicted,
            color: "#d1495b",
            dash: "6 4",
          },
        ],
      };
    }
    case "conformal":
      return {
        title: "Conformal factor exponent range",
        xLabel: "t",
        yLabel: "4u",
        series: [
          { label: "min 4u", x: table.t, y: table.u_min, color: "#1f5fa8" },
          { label: "max 4u", x: table.t, y: table.u_max, color: "#d1495b" },
        ],
      };
    case "concentration":
      return {
        title: "Local energy concentration",
        xLabel: "t",
        yLabel: "windowed density integral",
        series: [
          {
            label: "concentration",
            x: table.t,
            y: table.concentration,
            color: "#1f5fa8",
          },
        ],
      };
    case "drift":
      return {
        title: "Sphere constraint drift",
        xLabel: "t",
        yLabel: "max | |f|^2 - 1 |",
        logY: true,
        series: [
          {
            label: "drift",
            x: table.t,
            y: table.drift.map((v) => Math.max(v, 1e-18)),
            color: "#1f5fa8",
          },
        ],
      };
  }
}
