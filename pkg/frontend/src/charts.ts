/**
 * Adapters turning API payloads into chart-ready data for the experiment
 * tracking page: a bar chart of evaluation metrics and a forecast-versus-
 * actual line chart. Pure data mapping — no metric is computed here.
 */

import type { MetricsResponse, PlotResponse } from "./api.js";

export interface MetricBar {
  name: string;
  value: number;
}

export interface LineChartData {
  timestamps: string[];
  actual: (number | null)[];
  forecast: (number | null)[];
}

/** Metrics with a null (undefined) value are omitted from the bar chart. */
export function metricBars(response: MetricsResponse): MetricBar[] {
  return Object.entries(response.metrics)
    .filter((entry): entry is [string, number] => entry[1] !== null)
    .map(([name, value]) => ({ name, value }))
    .sort((a, b) => a.name.localeCompare(b.name));
}

/**
 * Forecast-vs-actual series, truncated to `nSamples` evaluation samples
 * when given. The server already honors n_samples; the cap here keeps the
 * chart bounded even against an older server.
 */
export function forecastChart(
  response: PlotResponse,
  nSamples?: number,
): LineChartData {
  let points = response.points;
  if (nSamples !== undefined && nSamples > 0) {
    points = points.slice(0, nSamples);
  }
  return {
    timestamps: points.map((p) => p.timestamp),
    actual: points.map((p) => p.actual),
    forecast: points.map((p) => p.forecast),
  };
}
