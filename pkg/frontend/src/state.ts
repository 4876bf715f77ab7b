/**
 * View state serialized in the URL hash so every screen is
 * refresh-safe and shareable: #/<screen>?key=value&...
 */

export type ScreenName = "sessions" | "review" | "launch" | "queue" | "results";

export interface ViewState {
  screen: ScreenName;
  deployment?: string;
  session?: string;
  job?: string;
  level?: "species" | "genus" | "family";
  cursor?: string;
  reviewIndex?: number;
}

const SCREENS: ScreenName[] = ["sessions", "review", "launch", "queue", "results"];

export function parseHash(hash: string): ViewState {
  const trimmed = hash.replace(/^#\/?/, "");
  const [path, query = ""] = trimmed.split("?");
  const screen = SCREENS.includes(path as ScreenName) ? (path as ScreenName) : "sessions";
  const params = new URLSearchParams(query);
  const state: ViewState = { screen };
  const deployment = params.get("deployment");
  if (deployment) state.deployment = deployment;
  const session = params.get("session");
  if (session) state.session = session;
  const job = params.get("job");
  if (job) state.job = job;
  const level = params.get("level");
  if (level === "species" || level === "genus" || level === "family") state.level = level;
  const cursor = params.get("cursor");
  if (cursor) state.cursor = cursor;
  const reviewIndex = params.get("i");
  if (reviewIndex !== null && /^\d+$/.test(reviewIndex)) {
    state.reviewIndex = Number(reviewIndex);
  }
  return state;
}

export function serializeState(state: ViewState): string {
  const params = new URLSearchParams();
  if (state.deployment) params.set("deployment", state.deployment);
  if (state.session) params.set("session", state.session);
  if (state.job) params.set("job", state.job);
  if (state.level) params.set("level", state.level);
  if (state.cursor) params.set("cursor", state.cursor);
  if (state.reviewIndex !== undefined) params.set("i", String(state.reviewIndex));
  const query = params.toString();
  return `#/${state.screen}${query ? `?${query}` : ""}`;
}
