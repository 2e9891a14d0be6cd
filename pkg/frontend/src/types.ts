/** Shapes of the puresearch HTTP API responses. */

export type LabelValue = "relevant" | "irrelevant" | "difficult";

export interface QuerySummary {
  id: string;
  text: string;
  record_count: number;
  labeled_count: number;
}

export interface UiImage {
  image_id: string;
  original_rank: number;
  new_rank?: number;
  score?: number;
  label?: LabelValue;
  symbolic: boolean;
  width: number;
  height: number;
}

export interface RerankResponse {
  model_version: string;
  duration_ms: number;
}

export interface EvalMetrics {
  metrics: Record<string, { mean: number; std: number | null; n: number }>;
  folds: number;
  repeats: number;
  labeled_images: number;
}
