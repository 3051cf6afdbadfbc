import type { HeatmapResponse } from "./types.js";

export interface HeatmapCell {
  alpha: number;
  beta: number;
  value: number;
  row: number;
  col: number;
}

/** Row-major cells: row = beta index, col = alpha index, matching the CSV. */
export function heatmapCells(data: HeatmapResponse): HeatmapCell[] {
  const cells: HeatmapCell[] = [];
  data.betas.forEach((beta, row) => {
    const values = data.values[row];
    if (!values || values.length !== data.alphas.length) {
      throw new Error(`heatmap row ${row} has wrong width`);
    }
    data.alphas.forEach((alpha, col) => {
      cells.push({ alpha, beta, value: values[col] as number, row, col });
    });
  });
  return cells;
}

export function valueRange(data: HeatmapResponse): { min: number; max: number } {
  let min = Infinity;
  let max = -Infinity;
  for (const row of data.values) {
    for (const value of row) {
      if (value < min) min = value;
      if (value > max) max = value;
    }
  }
  return { min, max };
}

/** Background for a cell; lightness falls as the value rises. */
export function cellColor(value: number, min: number, max: number): string {
  const t = max > min ? (value - min) / (max - min) : 0.5;
  const lightness = Math.round(92 - 52 * t);
  return `hsl(214 65% ${lightness}%)`;
}

export function cellTextColor(value: number, min: number, max: number): string {
  const t = max > min ? (value - min) / (max - min) : 0.5;
  return t > 0.55 ? "#f5f8fc" : "#1c2733";
}

/** Exact display form of a cell value; identical to the CSV export's text. */
export function formatCell(value: number): string {
  return String(value);
}
