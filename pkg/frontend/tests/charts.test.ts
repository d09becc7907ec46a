import { describe, expect, it } from "vitest";

import type { MetricsResponse, PlotResponse } from "../src/api.js";
import { forecastChart, metricBars } from "../src/charts.js";

// fixture mirroring a finished evaluation run's API payloads
const METRICS_FIXTURE: MetricsResponse = {
  run_id: "eval123",
  metrics: {
    mae: 22.5,
    rmse: 25.98,
    mape: 8.75,
    smape: 8.9,
    nrmse_minmax: 0.0866,
    nrmse_mean: 0.1039,
    mase: null, // undefined on this run; must not reach the chart
  },
};

function plotFixture(n: number): PlotResponse {
  const points = [];
  const t0 = Date.parse("2021-01-01T00:00:00");
  for (let i = 0; i < n; i++) {
    points.push({
      timestamp: new Date(t0 + i * 3_600_000).toISOString(),
      actual: i % 7 === 0 ? null : 100 + i,
      forecast: 101 + i,
    });
  }
  return { run_id: "eval123", series: "forecast/series1.csv", points };
}

describe("tracking page chart adapters", () => {
  it("renders one bar per defined metric, sorted by name", () => {
    const bars = metricBars(METRICS_FIXTURE);
    expect(bars.map((b) => b.name)).toEqual([
      "mae", "mape", "nrmse_mean", "nrmse_minmax", "rmse", "smape",
    ]);
    expect(bars.find((b) => b.name === "mae")?.value).toBe(22.5);
    expect(bars.some((b) => b.name === "mase")).toBe(false);
  });

  it("line chart honors n_samples", () => {
    const chart = forecastChart(plotFixture(200), 100);
    expect(chart.timestamps.length).toBe(100);
    expect(chart.actual.length).toBe(100);
    expect(chart.forecast.length).toBe(100);
    expect(chart.timestamps[0]).toBe("2021-01-01T00:00:00.000Z");
  });

  it("keeps every point when no sample cap is given", () => {
    const chart = forecastChart(plotFixture(48));
    expect(chart.forecast.length).toBe(48);
    expect(chart.actual[0]).toBeNull(); // missing actuals pass through
    expect(chart.forecast[1]).toBe(102);
  });
});
