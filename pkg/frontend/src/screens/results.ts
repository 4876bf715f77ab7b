/**
 * Results screen: frame browser with detection overlays (red = moth,
 * blue = non-moth), track timelines, and the per-species count table
 * with a genus/family rollup toggle.
 *
 * Every figure shown here comes from the API verbatim: detections and
 * tracks from the session result files, counts and rollups from the
 * counts endpoint at the requested level. The screen only lays them
 * out.
 */

import type { ApiClient } from "../api.js";
import { clear, el, message } from "../dom.js";
import { drawDetections, type DrawingContext } from "../overlay.js";
import type { ViewState } from "../state.js";
import type { RollupLevel } from "../types.js";

const LEVELS: RollupLevel[] = ["species", "genus", "family"];

export interface ResultsController {
  setLevel(level: RollupLevel): Promise<void>;
}

export async function renderResults(
  container: HTMLElement,
  client: ApiClient,
  state: ViewState,
  navigate: (state: ViewState) => void,
): Promise<ResultsController | undefined> {
  clear(container);
  const sessionId = state.session;
  container.append(el("h2", {}, ["Results"]));
  if (!sessionId) {
    container.append(message("info", "pick a session on the sessions screen"));
    return undefined;
  }
  container.append(el("p", { class: "session-name" }, [sessionId]));

  let detections;
  let tracks;
  try {
    [detections, tracks] = await Promise.all([
      client.sessionDetections(sessionId),
      client.sessionTracks(sessionId),
    ]);
  } catch (error) {
    container.append(message("error", `no results yet: ${String(error)}`));
    return undefined;
  }

  // --- frame viewer with overlays ---
  const totalDetections = detections.frames.reduce(
    (sum, frame) => sum + frame.detections.length,
    0,
  );
  container.append(
    el("p", { class: "summary" }, [
      el("span", { class: "stat stat-detections", "data-value": String(totalDetections) }, [
        `${totalDetections} detections`,
      ]),
      " · ",
      el("span", { class: "stat stat-tracks", "data-value": String(tracks.tracks.length) }, [
        `${tracks.tracks.length} tracks`,
      ]),
    ]),
  );

  const viewer = el("div", { class: "frame-viewer" });
  for (const frame of detections.frames) {
    const figure = el("figure", { class: "frame", "data-frame": String(frame.frame) });
    const canvas = el("canvas", {
      class: "overlay",
      "data-frame": String(frame.frame),
      width: "320",
      height: "240",
    });
    const ctx = canvas.getContext("2d") as DrawingContext | null;
    if (ctx) {
      drawDetections(ctx, frame.detections);
    }
    figure.append(
      canvas,
      el("figcaption", {}, [
        `frame ${frame.frame}: ${frame.detections.length} detections`,
      ]),
    );
    viewer.append(figure);
  }
  container.append(viewer);

  // --- track timelines ---
  const timeline = el("div", { class: "track-timeline" });
  timeline.append(el("h3", {}, ["Tracks"]));
  for (const track of tracks.tracks) {
    const span = track.items
      .map((item) => `f${item.frame_index}`)
      .join(" → ");
    const consensus = track.consensus
      ? `taxon ${track.consensus.taxon_key} (${track.consensus.mean_probability.toFixed(2)})`
      : "unclassified";
    timeline.append(
      el("p", { class: "track-row", "data-track": String(track.track_id) }, [
        `#${track.track_id} ${span} — ${consensus}`,
      ]),
    );
  }
  container.append(timeline);

  // --- counts with rollup toggle ---
  const countsSection = el("section", { class: "counts" });
  const toggle = el("div", { class: "level-toggle", role: "tablist" });
  const table = el("table", { class: "counts-table" });
  countsSection.append(el("h3", {}, ["Individuals"]), toggle, table);
  container.append(countsSection);

  async function setLevel(level: RollupLevel): Promise<void> {
    const payload = await client.sessionCounts(sessionId!, level);
    clear(table);
    table.append(
      el("tr", {}, [el("th", {}, [level]), el("th", {}, ["individuals"])]),
    );
    const keys = Object.keys(payload.counts).sort();
    let total = 0;
    for (const key of keys) {
      const count = payload.counts[key];
      total += count;
      table.append(
        el("tr", { "data-taxon": key }, [
          el("td", {}, [key]),
          el("td", { class: "count" }, [String(count)]),
        ]),
      );
    }
    table.append(
      el("tr", { class: "total-row" }, [
        el("td", {}, ["total"]),
        el("td", { class: "count total", "data-total": String(total) }, [String(total)]),
      ]),
    );
    for (const button of toggle.querySelectorAll("button")) {
      button.classList.toggle("selected", button.dataset.level === level);
    }
  }

  for (const level of LEVELS) {
    const button = el("button", { type: "button", "data-level": level }, [level]);
    button.addEventListener("click", () => {
      navigate({ ...state, screen: "results", level });
      void setLevel(level);
    });
    toggle.append(button);
  }

  await setLevel(state.level ?? "species");
  return { setLevel };
}
