/** Wire types for the review service REST contract. */

export type Verdict = "accept" | "reject" | "accept_with_layer_rejects";

export interface LayerSummary {
  index: number;
  kind: string;
  caption: string;
  style: string | null;
  tips_score: number | null;
  artifact_flagged: boolean;
  bbox: [number, number, number, number];
  z: number;
  url?: string;
}

export interface QueueItem {
  sample_id: string;
  stage: string;
  scores: Record<string, number>;
  thumbnail_url: string;
  layers: LayerSummary[];
}

export interface QueuePage {
  total: number;
  page: number;
  page_size: number;
  items: QueueItem[];
}

export interface SampleDetail {
  sample_id: string;
  stage: string;
  canvas: [number, number];
  global_caption: string;
  style: string | null;
  scores: Record<string, number>;
  merged_url: string;
  layers: LayerSummary[];
}

export interface Decision {
  sample_id: string;
  verdict: Verdict;
  reviewer: string;
  timestamp: number;
  layer_rejects: number[];
  note: string;
}

export interface DecisionResponse {
  status: string;
  deduplicated: boolean;
}

export interface StatsResponse {
  accepted: number;
  stats: Record<string, unknown> | null;
}
