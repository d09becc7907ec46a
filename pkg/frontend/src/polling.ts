/**
 * Poll a RUNNING execution every two seconds until it reaches a terminal
 * status (FINISHED or FAILED), then stop and report the final run record.
 */

import type { RunInfo } from "./api.js";

export const POLL_INTERVAL_MS = 2000;

type Scheduler = {
  setInterval: (fn: () => void, ms: number) => number;
  clearInterval: (id: number) => void;
};

const realScheduler: Scheduler = {
  setInterval: (fn, ms) => setInterval(fn, ms) as unknown as number,
  clearInterval: (id) => clearInterval(id),
};

export class RunPoller {
  private timer: number | null = null;
  lastRun: RunInfo | null = null;
  lastError: string | null = null;

  constructor(
    private readonly getRun: (runId: string) => Promise<RunInfo>,
    private readonly onUpdate: (run: RunInfo) => void = () => {},
    private readonly scheduler: Scheduler = realScheduler,
  ) {}

  get active(): boolean {
    return this.timer !== null;
  }

  start(runId: string): void {
    this.stop();
    this.timer = this.scheduler.setInterval(() => {
      void this.poll(runId);
    }, POLL_INTERVAL_MS);
  }

  stop(): void {
    if (this.timer !== null) {
      this.scheduler.clearInterval(this.timer);
      this.timer = null;
    }
  }

  private async poll(runId: string): Promise<void> {
    try {
      const run = await this.getRun(runId);
      this.lastRun = run;
      this.lastError = null;
      if (run.status !== "RUNNING") this.stop();
      this.onUpdate(run);
    } catch (err) {
      // transient fetch errors keep the poller alive
      this.lastError = err instanceof Error ? err.message : String(err);
    }
  }
}
