/**
 * Form model for the codeless-forecast page.
 *
 * Tracks the dataset configuration and model training setup fields,
 * exposes per-model hyperparameter field definitions, and only enables
 * EXECUTE once every required field is filled in. `buildPayload` emits a
 * config object whose keys are exactly the service's experiment
 * configuration parameter names.
 */

export type ModelKind = "seasonal_naive" | "linear_ar" | "mlp";

export interface HyperparamField {
  name: string;
  label: string;
  kind: "int" | "float";
  /** value searched over when left blank (fixed when filled) */
  default: number;
}

const HYPERPARAM_FIELDS: Record<ModelKind, HyperparamField[]> = {
  seasonal_naive: [
    { name: "m", label: "Seasonality period (steps)", kind: "int", default: 24 },
  ],
  linear_ar: [
    { name: "input_chunk_length", label: "Lookback window", kind: "int", default: 168 },
    { name: "output_chunk_length", label: "Output chunk", kind: "int", default: 24 },
    { name: "ridge", label: "Ridge strength", kind: "float", default: 1e-3 },
  ],
  mlp: [
    { name: "input_chunk_length", label: "Lookback window", kind: "int", default: 168 },
    { name: "output_chunk_length", label: "Output chunk", kind: "int", default: 24 },
    { name: "hidden_size", label: "Hidden units", kind: "int", default: 64 },
    { name: "n_epochs", label: "Epochs", kind: "int", default: 50 },
    { name: "learning_rate", label: "Learning rate", kind: "float", default: 1e-3 },
    { name: "random_state", label: "Random seed", kind: "int", default: 0 },
  ],
};

/** Parameter names accepted by POST /experiments/execute. */
export const CONFIG_KEYS = new Set([
  "experiment_name", "series_csv", "day_first", "multiple", "resolution",
  "year_range", "time_covs", "country", "holidays_csv", "std_dev",
  "rmv_outliers", "non_negative", "l_interpolation", "a", "wncutoff",
  "ycutoff", "ydcutoff", "min_non_nan_interval", "allow_long_gaps",
  "cut_date_val", "cut_date_test", "test_end_date", "scale", "model",
  "hyperparams", "hyperparams_file", "hyperparams_entrypoint",
  "loss_function", "opt_test", "grid_search", "n_trials", "refit_with_val",
  "ignore_previous_runs", "forecast_horizon", "stride", "retrain", "m_mase",
  "evaluate_all_ts", "eval_series", "seed",
]);

export interface ForecastFormState {
  experimentName: string;
  datasetId: string;
  resolution: number | null;
  cutDateVal: string;
  cutDateTest: string;
  testEndDate: string;
  model: ModelKind | null;
  hyperparams: Record<string, number>;
  forecastHorizon: number | null;
  optimizeHyperparams: boolean;
  nTrials: number;
}

export function emptyForm(): ForecastFormState {
  return {
    experimentName: "",
    datasetId: "",
    resolution: null,
    cutDateVal: "",
    cutDateTest: "",
    testEndDate: "",
    model: null,
    hyperparams: {},
    forecastHorizon: 24,
    optimizeHyperparams: false,
    nTrials: 20,
  };
}

export function hyperparamFieldsFor(model: ModelKind): HyperparamField[] {
  return HYPERPARAM_FIELDS[model];
}

const DATE_RE = /^\d{8}$/;

/** Required-field check: the EXECUTE button is enabled iff this is empty. */
export function missingFields(form: ForecastFormState): string[] {
  const missing: string[] = [];
  if (!form.experimentName.trim()) missing.push("experimentName");
  if (!form.datasetId.trim()) missing.push("datasetId");
  if (form.resolution === null || form.resolution <= 0) missing.push("resolution");
  if (!DATE_RE.test(form.cutDateVal)) missing.push("cutDateVal");
  if (!DATE_RE.test(form.cutDateTest)) missing.push("cutDateTest");
  if (form.model === null) missing.push("model");
  if (form.forecastHorizon === null || form.forecastHorizon <= 0) {
    missing.push("forecastHorizon");
  }
  return missing;
}

export function canExecute(form: ForecastFormState): boolean {
  return missingFields(form).length === 0;
}

export function buildPayload(form: ForecastFormState): Record<string, unknown> {
  if (!canExecute(form)) {
    throw new Error(`form incomplete: ${missingFields(form).join(", ")}`);
  }
  const model = form.model as ModelKind;
  const hyperparams: Record<string, number> = {};
  for (const field of hyperparamFieldsFor(model)) {
    hyperparams[field.name] = form.hyperparams[field.name] ?? field.default;
  }
  const payload: Record<string, unknown> = {
    experiment_name: form.experimentName.trim(),
    series_csv: form.datasetId.trim(),
    resolution: form.resolution,
    cut_date_val: form.cutDateVal,
    cut_date_test: form.cutDateTest,
    model,
    hyperparams,
    forecast_horizon: form.forecastHorizon,
    opt_test: form.optimizeHyperparams,
    n_trials: form.nTrials,
  };
  if (form.testEndDate) payload["test_end_date"] = form.testEndDate;
  for (const key of Object.keys(payload)) {
    if (!CONFIG_KEYS.has(key)) {
      throw new Error(`payload key not in service config schema: ${key}`);
    }
  }
  return payload;
}
