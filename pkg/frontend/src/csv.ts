/**
 * Reader for the simulator's diagnostic CSV contract.
 *
 * One header row with a fixed column set, comma separated, one record per
 * line, values printed with 17 significant digits.
 */

export const CSV_COLUMNS = [
  "t",
  "energy",
  "dissipation",
  "volume",
  "u_min",
  "u_max",
  "df4",
  "hess2",
  "lap2",
  "concentration",
  "drift",
  "sobolev_ratio",
  "e8u",
  "e12u",
  "e16u",
] as const;

export type ColumnName = (typeof CSV_COLUMNS)[number];

export type DiagTable = Record<ColumnName, number[]>;

export function parseDiagCsv(text: string): DiagTable {
  const lines = text.split(/\r?\n/).filter((line) => line.trim().length > 0);
  if (lines.length === 0) {
    throw new Error("empty CSV");
  }
  const header = lines[0].split(",");
  if (header.length !== CSV_COLUMNS.length ||
      !CSV_COLUMNS.every((name, i) => header[i] === name)) {
    throw new Error(
      `unexpected CSV header: ${lines[0]} (want ${CSV_COLUMNS.join(",")})`,
    );
  }

  const table = Object.fromEntries(
    CSV_COLUMNS.map((name) => [name, [] as number[]]),
  ) as DiagTable;

  for (let row = 1; row < lines.length; row++) {
    const cells = lines[row].split(",");
    if (cells.length !== CSV_COLUMNS.length) {
      throw new Error(
        `row ${row}: expected ${CSV_COLUMNS.length} cells, got ${cells.length}`,
      );
    }
    for (let i = 0; i < CSV_COLUMNS.length; i++) {
      const value = Number(cells[i]);
      if (!Number.isFinite(value)) {
        throw new Error(`row ${row}, column ${CSV_COLUMNS[i]}: ${cells[i]}`);
      }
      table[CSV_COLUMNS[i]].push(value);
    }
  }

  const t = table.t;
  for (let i = 1; i < t.length; i++) {
    if (t[i] <= t[i - 1]) {
      throw new Error(`time column not strictly increasing at row ${i}`);
    }
  }
  return table;
}
