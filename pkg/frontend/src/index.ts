export { readSeries, readRates, SERIES_HEADER } from './csv.js';
export { loadSpec, PlotSpec, CurveSpec } from './spec.js';
export { renderEvolution } from './evolution.js';
export { renderRates } from './rates.js';
export { linearScale, logScale, extent } from './scale.js';
