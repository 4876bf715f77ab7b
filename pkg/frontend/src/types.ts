/** Payload shapes of the engine's HTTP/JSON API. */

export interface SessionSummary {
  session_id: string;
  deployment_id: string;
  frames: [string, string][]; // [path, capture time ISO]
  night_of: string;
}

export interface FrameInfo {
  frame_id: string;
  index: number;
  path: string;
  capture_time: string;
}

export type JobStateName = "queued" | "running" | "completed" | "failed" | "cancelled";

export interface ModelSpec {
  stage: string;
  backend: string;
  model_uri: string;
  threshold: number;
  input_resolution: number;
  options: Record<string, number>;
}

export interface Job {
  job_id: string;
  session_id: string;
  stage_specs: Record<string, ModelSpec>;
  state: JobStateName;
  frames_done: number;
  frames_total: number;
  error: string | null;
  created_at: number;
  existing?: boolean;
}

export interface Detection {
  detection_id?: string;
  box: [number, number, number, number];
  det_score: number;
  index: number;
  binary: [string, number] | null;
  species: [number, number][] | null;
  feature: number[] | null;
}

export interface FrameDetections {
  frame: number;
  path: string;
  detections: Detection[];
}

export interface TrackItem {
  frame_index: number;
  detection_index: number;
  link_cost: number | null;
}

export interface Track {
  track_id: number;
  items: TrackItem[];
  consensus: { taxon_key: number; mean_probability: number } | null;
  session_id: string;
}

export type RollupLevel = "species" | "genus" | "family";

export interface SessionCounts {
  session_id: string;
  level: RollupLevel;
  counts: Record<string, number>;
  tracks: number;
}

export interface CropInfo {
  crop_id: string;
  review_state: "unreviewed" | "approved" | "rejected";
}

export interface JobProgressEvent {
  job_id: string;
  state: JobStateName;
  frames_done: number;
  frames_total: number;
  error: string | null;
}

export interface ApiErrorPayload {
  code: "not_found" | "invalid_input" | "conflict" | "backend_failure";
  message: string;
  detail?: unknown;
}
