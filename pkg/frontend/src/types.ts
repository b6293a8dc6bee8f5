/**
 * Mirrors of the control-service JSON schema.  The console renders these
 * payloads verbatim; it never derives a level, metric, or attribution.
 */

export interface SessionInfo {
  loaded: boolean;
  frame_hours: number;
  cursor: number;
  cursor_min: number;
  cursor_max: number;
  w: number;
  k: number;
  has_manager: boolean;
}

export interface WindowPayload {
  cursor: number;
  time: string;
  variables: string[];
  past: number[][];
  covariates: string[];
  future_cov: number[][];
  points: string[];
  structures: string[];
  flood_threshold_ft: number[];
  waste_threshold_ft: number[];
}

export interface ViolationMetrics {
  over_time: number;
  over_area_ft_hr: number;
  under_time: number;
  under_area_ft_hr: number;
}

export interface EvaluateResponse {
  cursor: number;
  time: string;
  schedule_fraction: number[][];
  structures: string[];
  points: string[];
  levels_ft: number[][];
  flood_threshold_ft: number[];
  waste_threshold_ft: number[];
  metrics: ViolationMetrics;
  losses: { flood: number; waste: number; combined: number };
  suggested?: boolean;
}

export interface AttributionHeatmapPayload {
  past: number[][];
  future_cov: number[][];
  future_controls: number[][];
  r_squared: number;
  output_point: number;
  output_step: number | null;
  intercept: number;
  faithful: boolean;
}

export interface ExplainPayload {
  cursor: number;
  points: string[];
  variables: string[];
  heatmaps: AttributionHeatmapPayload[];
  r_squared: number[];
  attention: { scores: number[][]; labels: string[] } | null;
}

export interface ApiError {
  detail: string;
}
