import { describe, expect, it } from "vitest";

import { canUse, featuresFor, startSession } from "../src/session.js";

describe("session and role features", () => {
  it("domain experts get read-only pages only", () => {
    const features = featuresFor("domain_expert");
    expect(features).not.toContain("codeless_forecast");
    expect(features).not.toContain("datasets");
    expect(features).toContain("experiment_tracking");
    expect(features).toContain("system_monitoring");
  });

  it("data scientists and admins see every section", () => {
    for (const role of ["data_scientist", "admin"] as const) {
      expect(featuresFor(role)).toEqual([
        "datasets",
        "codeless_forecast",
        "experiment_tracking",
        "system_monitoring",
      ]);
    }
  });

  it("no session means no features", () => {
    expect(canUse(null, "experiment_tracking")).toBe(false);
  });

  it("feature visibility derives solely from the role", () => {
    const s1 = startSession("t1", "domain_expert", "eve");
    const s2 = startSession("t2", "domain_expert", "erin");
    expect(canUse(s1, "codeless_forecast")).toBe(canUse(s2, "codeless_forecast"));
    expect(canUse(s1, "codeless_forecast")).toBe(false);
  });

  it("rejects roles the matrix does not know", () => {
    expect(() => startSession("t", "superuser", "mallory")).toThrow(/unknown role/);
  });
});
