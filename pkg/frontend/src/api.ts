/**
 * Typed client for the engine API.
 *
 * The UI never computes detections, tracks, counts, or rollups itself;
 * every number rendered comes back from these calls verbatim. The fetch
 * implementation is injectable so tests can serve fixtures.
 */

import type {
  ApiErrorPayload,
  CropInfo,
  FrameDetections,
  FrameInfo,
  Job,
  ModelSpec,
  RollupLevel,
  SessionCounts,
  SessionSummary,
  Track,
} from "./types.js";

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  readonly status: number;
  readonly code: ApiErrorPayload["code"] | "unknown";

  constructor(status: number, payload: Partial<ApiErrorPayload>) {
    super(payload.message ?? `API error ${status}`);
    this.status = status;
    this.code = payload.code ?? "unknown";
  }
}

export class ApiClient {
  constructor(
    readonly baseUrl: string = "",
    private readonly fetchImpl: FetchLike = (input, init) => globalThis.fetch(input, init),
  ) {}

  /** The underlying fetch, for consumers that stream (event sources). */
  get rawFetch(): FetchLike {
    return this.fetchImpl;
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchImpl(`${this.baseUrl}${path}`, init);
    if (!response.ok) {
      let payload: Partial<ApiErrorPayload> = {};
      try {
        payload = (await response.json()) as ApiErrorPayload;
      } catch {
        // non-JSON error body; keep the status
      }
      throw new ApiError(response.status, payload);
    }
    return (await response.json()) as T;
  }

  listDeployments(): Promise<{ deployments: string[] }> {
    return this.request("/api/deployments");
  }

  listSessions(deployment?: string): Promise<{ sessions: SessionSummary[] }> {
    const query = deployment ? `?deployment=${encodeURIComponent(deployment)}` : "";
    return this.request(`/api/sessions${query}`);
  }

  sessionFrames(sessionId: string): Promise<{ frames: FrameInfo[] }> {
    return this.request(`/api/sessions/${encodeURIComponent(sessionId)}/frames`);
  }

  listJobs(): Promise<{ jobs: Job[] }> {
    return this.request("/api/jobs");
  }

  createJob(sessionId: string, stageSpecs: Record<string, ModelSpec>): Promise<Job> {
    return this.request("/api/jobs", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ session_id: sessionId, stage_specs: stageSpecs }),
    });
  }

  cancelJob(jobId: string): Promise<Job> {
    return this.request(`/api/jobs/${encodeURIComponent(jobId)}/cancel`, { method: "POST" });
  }

  retryJob(jobId: string): Promise<Job> {
    return this.request(`/api/jobs/${encodeURIComponent(jobId)}/retry`, { method: "POST" });
  }

  sessionDetections(sessionId: string): Promise<{ session_id: string; frames: FrameDetections[] }> {
    return this.request(`/api/sessions/${encodeURIComponent(sessionId)}/detections`);
  }

  sessionTracks(sessionId: string): Promise<{ session_id: string; tracks: Track[] }> {
    return this.request(`/api/sessions/${encodeURIComponent(sessionId)}/tracks`);
  }

  sessionCounts(sessionId: string, level: RollupLevel): Promise<SessionCounts> {
    return this.request(
      `/api/sessions/${encodeURIComponent(sessionId)}/counts?level=${level}`,
    );
  }

  listCrops(reviewState?: string): Promise<{ crops: CropInfo[] }> {
    const query = reviewState ? `?review_state=${encodeURIComponent(reviewState)}` : "";
    return this.request(`/api/crops${query}`);
  }

  setCropState(cropId: string, reviewState: string): Promise<CropInfo> {
    return this.request(`/api/crops/${encodeURIComponent(cropId)}`, {
      method: "PATCH",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ review_state: reviewState }),
    });
  }

  listModels(): Promise<{ models: ModelSpec[] }> {
    return this.request("/api/models");
  }

  frameImageUrl(frameId: string): string {
    return `${this.baseUrl}/api/frames/${encodeURIComponent(frameId)}/image`;
  }

  cropImageUrl(cropId: string): string {
    return `${this.baseUrl}/api/crops/${encodeURIComponent(cropId)}/image`;
  }

  jobEventsUrl(jobId: string): string {
    return `${this.baseUrl}/api/jobs/${encodeURIComponent(jobId)}/events`;
  }
}
