/**
 * Live-feed controller for the system monitoring page.
 *
 * The feed refreshes once per second and is capped at one minute: after
 * exactly 60 refreshes the timer stops, and "Refresh Live Feed" starts a
 * new 60-tick window. A failed poll marks the feed stale but keeps the
 * last good snapshot on screen.
 */

import type { MonitorSnapshot } from "./api.js";

export const WINDOW_TICKS = 60;
export const TICK_MS = 1000;

type Scheduler = {
  setInterval: (fn: () => void, ms: number) => number;
  clearInterval: (id: number) => void;
};

const realScheduler: Scheduler = {
  setInterval: (fn, ms) => setInterval(fn, ms) as unknown as number,
  clearInterval: (id) => clearInterval(id),
};

export class MonitoringFeed {
  private timer: number | null = null;
  private ticks = 0;
  snapshot: MonitorSnapshot | null = null;
  stale = false;
  refreshCount = 0;

  constructor(
    private readonly poll: () => Promise<MonitorSnapshot>,
    private readonly scheduler: Scheduler = realScheduler,
    private readonly onUpdate: () => void = () => {},
  ) {}

  get running(): boolean {
    return this.timer !== null;
  }

  /** "Refresh Live Feed": (re)start a fresh 60-tick window. */
  start(): void {
    this.stop();
    this.ticks = 0;
    this.timer = this.scheduler.setInterval(() => {
      void this.tick();
    }, TICK_MS);
  }

  stop(): void {
    if (this.timer !== null) {
      this.scheduler.clearInterval(this.timer);
      this.timer = null;
    }
  }

  private async tick(): Promise<void> {
    if (this.ticks >= WINDOW_TICKS) {
      this.stop();
      return;
    }
    this.ticks += 1;
    if (this.ticks >= WINDOW_TICKS) this.stop();
    try {
      this.snapshot = await this.poll();
      this.stale = false;
      this.refreshCount += 1;
    } catch {
      this.stale = true; // keep the previous snapshot visible
    }
    this.onUpdate();
  }
}
