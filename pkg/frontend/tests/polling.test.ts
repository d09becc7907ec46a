import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import type { RunInfo } from "../src/api.js";
import { POLL_INTERVAL_MS, RunPoller } from "../src/polling.js";

function run(status: RunInfo["status"]): RunInfo {
  return {
    run_id: "r1",
    experiment: "uc7",
    stage: "pipeline",
    parent_run_id: null,
    status,
    params: {},
    start_time: "2021-01-01T00:00:00",
    end_time: status === "RUNNING" ? null : "2021-01-01T00:05:00",
    artifacts: [],
  };
}

describe("run status polling", () => {
  beforeEach(() => vi.useFakeTimers());
  afterEach(() => vi.useRealTimers());

  it("polls every 2 s and stops at the first terminal status", async () => {
    const statuses: RunInfo["status"][] = ["RUNNING", "RUNNING", "FINISHED"];
    let calls = 0;
    const poller = new RunPoller(async () => run(statuses[calls++] ?? "FINISHED"));
    poller.start("r1");

    await vi.advanceTimersByTimeAsync(2 * POLL_INTERVAL_MS);
    expect(calls).toBe(2);
    expect(poller.active).toBe(true);

    await vi.advanceTimersByTimeAsync(POLL_INTERVAL_MS);
    expect(poller.lastRun?.status).toBe("FINISHED");
    expect(poller.active).toBe(false);

    await vi.advanceTimersByTimeAsync(10 * POLL_INTERVAL_MS);
    expect(calls).toBe(3); // no polls after terminal status
  });

  it("stops on FAILED as well", async () => {
    const poller = new RunPoller(async () => run("FAILED"));
    poller.start("r1");
    await vi.advanceTimersByTimeAsync(POLL_INTERVAL_MS);
    expect(poller.lastRun?.status).toBe("FAILED");
    expect(poller.active).toBe(false);
  });

  it("keeps polling through transient fetch errors", async () => {
    let calls = 0;
    const poller = new RunPoller(async () => {
      calls += 1;
      if (calls < 3) throw new Error("network down");
      return run("FINISHED");
    });
    poller.start("r1");
    await vi.advanceTimersByTimeAsync(2 * POLL_INTERVAL_MS);
    expect(poller.active).toBe(true);
    expect(poller.lastError).toMatch(/network down/);

    await vi.advanceTimersByTimeAsync(POLL_INTERVAL_MS);
    expect(poller.lastRun?.status).toBe("FINISHED");
    expect(poller.lastError).toBeNull();
    expect(poller.active).toBe(false);
  });
});
