/**
 * Session state and the role/feature matrix.
 *
 * Feature visibility derives solely from the signed-in role, and the UI
 * never issues a request the current role is not authorized for: every
 * page checks its feature flag before rendering or fetching.
 */

export type Role = "admin" | "data_scientist" | "domain_expert";

export type Feature =
  | "datasets"
  | "codeless_forecast"
  | "experiment_tracking"
  | "system_monitoring";

const FEATURE_MATRIX: Record<Role, readonly Feature[]> = {
  admin: [
    "datasets",
    "codeless_forecast",
    "experiment_tracking",
    "system_monitoring",
  ],
  data_scientist: [
    "datasets",
    "codeless_forecast",
    "experiment_tracking",
    "system_monitoring",
  ],
  domain_expert: ["experiment_tracking", "system_monitoring"],
};

export interface SessionState {
  token: string;
  role: Role;
  username: string;
  /** run ids the user has pinned on the tracking page */
  selectedRuns: string[];
}

export function isRole(value: string): value is Role {
  return value in FEATURE_MATRIX;
}

export function featuresFor(role: Role): readonly Feature[] {
  return FEATURE_MATRIX[role];
}

export function canUse(session: SessionState | null, feature: Feature): boolean {
  if (!session) return false;
  return FEATURE_MATRIX[session.role].includes(feature);
}

export function startSession(
  token: string,
  role: string,
  username: string,
): SessionState {
  if (!isRole(role)) {
    throw new Error(`unknown role: ${role}`);
  }
  return { token, role, username, selectedRuns: [] };
}
