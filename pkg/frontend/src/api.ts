/**
 * Typed HTTP client for the tsfops REST service.
 *
 * Every number shown in the UI comes straight out of these responses;
 * the client never computes metrics on its own.
 */

export interface LoginResponse {
  access_token: string;
  role: string;
  expires_at: string;
}

export interface DatasetMeta {
  id: string;
  name: string;
  layout: string;
  day_first: boolean;
  resolution: number;
  n_components: number;
}

export interface DatasetUpload {
  csv: string;
  name?: string;
  layout?: "single_long" | "multiple_wide";
  day_first?: boolean;
  resolution?: number;
}

export interface RunInfo {
  run_id: string;
  experiment: string;
  stage: string;
  parent_run_id: string | null;
  status: "RUNNING" | "FINISHED" | "FAILED";
  params: Record<string, string>;
  start_time: string;
  end_time: string | null;
  artifacts: string[];
}

export interface MetricsResponse {
  run_id: string;
  metrics: Record<string, number | null>;
}

export interface PlotPoint {
  timestamp: string;
  actual: number | null;
  forecast: number | null;
}

export interface PlotResponse {
  run_id: string;
  series: string;
  points: PlotPoint[];
}

export interface MonitorSnapshot {
  timestamp: string;
  cpu_percent: number;
  memory_used: number;
  memory_total: number;
  gpu: null | Record<string, number>;
}

export interface ExecuteResponse {
  run_id: string;
  status: string;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
    this.name = "ApiError";
  }
}

type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  private token: string | null = null;

  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = fetch,
  ) {}

  setToken(token: string | null): void {
    this.token = token;
  }

  private async request<T>(
    method: string,
    path: string,
    body?: unknown,
  ): Promise<T> {
    const headers: Record<string, string> = {};
    if (this.token) headers["Authorization"] = `Bearer ${this.token}`;
    let payload: string | undefined;
    if (body !== undefined) {
      headers["Content-Type"] = "application/json";
      payload = JSON.stringify(body);
    }
    const res = await this.fetchImpl(`${this.baseUrl}${path}`, {
      method,
      headers,
      body: payload,
    });
    if (!res.ok) {
      let detail = res.statusText;
      try {
        const parsed = await res.json();
        if (parsed && typeof parsed.detail === "string") detail = parsed.detail;
      } catch {
        // non-JSON error body; keep the status text
      }
      throw new ApiError(res.status, detail);
    }
    return (await res.json()) as T;
  }

  async login(username: string, password: string): Promise<LoginResponse> {
    const out = await this.request<LoginResponse>("POST", "/auth/login", {
      username,
      password,
    });
    this.token = out.access_token;
    return out;
  }

  async listDatasets(): Promise<DatasetMeta[]> {
    const out = await this.request<{ datasets: DatasetMeta[] }>(
      "GET",
      "/datasets",
    );
    return out.datasets;
  }

  uploadDataset(upload: DatasetUpload): Promise<DatasetMeta> {
    return this.request("POST", "/datasets", upload);
  }

  executeExperiment(config: Record<string, unknown>): Promise<ExecuteResponse> {
    return this.request("POST", "/experiments/execute", config);
  }

  getRun(runId: string): Promise<RunInfo> {
    return this.request("GET", `/runs/${encodeURIComponent(runId)}`);
  }

  getRunMetrics(runId: string): Promise<MetricsResponse> {
    return this.request("GET", `/runs/${encodeURIComponent(runId)}/metrics`);
  }

  getRunPlot(runId: string, nSamples?: number): Promise<PlotResponse> {
    const query = nSamples !== undefined ? `?n_samples=${nSamples}` : "";
    return this.request(
      "GET",
      `/runs/${encodeURIComponent(runId)}/plot${query}`,
    );
  }

  async listExperiments(query: {
    name?: string;
    run_id?: string;
  }): Promise<RunInfo[]> {
    const params = new URLSearchParams();
    if (query.name) params.set("name", query.name);
    if (query.run_id) params.set("run_id", query.run_id);
    const qs = params.toString();
    const out = await this.request<{ runs: RunInfo[] }>(
      "GET",
      `/experiments${qs ? `?${qs}` : ""}`,
    );
    return out.runs;
  }

  getMonitor(): Promise<MonitorSnapshot> {
    return this.request("GET", "/monitor");
  }
}
