export * from "./api.js";
export * from "./session.js";
export * from "./monitor.js";
export * from "./forecastForm.js";
export * from "./charts.js";
export * from "./polling.js";
