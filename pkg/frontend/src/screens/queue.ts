/**
 * Queue screen: live job table with cancel/retry.
 *
 * One event-stream connection per open queue screen: the focused job
 * (from the URL, else the first active one) streams progress events
 * that update its row in place; the stream reconnects with backoff if
 * the connection drops.
 */

import type { ApiClient } from "../api.js";
import { clear, el, message } from "../dom.js";
import { EventStream, type SseOptions } from "../events.js";
import type { ViewState } from "../state.js";
import type { Job, JobProgressEvent } from "../types.js";

export interface QueueController {
  refresh(): Promise<void>;
  destroy(): void;
}

function progressCell(done: number, total: number): HTMLElement {
  const percent = total > 0 ? Math.round((done / total) * 100) : 0;
  const cell = el("td", { class: "progress" });
  const bar = el("div", { class: "bar", "data-percent": String(percent) });
  bar.style.width = `${percent}%`;
  cell.append(
    el("div", { class: "bar-track" }, [bar]),
    el("span", { class: "bar-label" }, [`${done}/${total}`]),
  );
  return cell;
}

export async function renderQueue(
  container: HTMLElement,
  client: ApiClient,
  state: ViewState,
  sseOptions: SseOptions = {},
): Promise<QueueController> {
  clear(container);
  container.append(el("h2", {}, ["Processing queue"]));
  const connection = el("p", { class: "stream-state", role: "status" });
  const table = el("table", { class: "job-table" });
  container.append(connection, table);

  let stream: EventStream | null = null;

  function rowFor(job: Job): HTMLTableRowElement {
    const row = el("tr", { "data-job": job.job_id, "data-state": job.state });
    row.append(
      el("td", { class: "job-id" }, [job.job_id]),
      el("td", { class: "job-session" }, [job.session_id]),
      el("td", { class: "job-state" }, [job.state]),
      progressCell(job.frames_done, job.frames_total),
    );
    const actions = el("td", { class: "job-actions" });
    if (job.state === "queued" || job.state === "running") {
      const cancel = el("button", { type: "button" }, ["cancel"]);
      cancel.addEventListener("click", () => {
        void client.cancelJob(job.job_id).then(refresh, showError);
      });
      actions.append(cancel);
    }
    if (job.state === "failed") {
      const retry = el("button", { type: "button" }, ["retry"]);
      retry.addEventListener("click", () => {
        void client.retryJob(job.job_id).then(refresh, showError);
      });
      actions.append(retry);
    }
    row.append(actions);
    if (job.error) {
      row.append(el("td", { class: "job-error" }, [job.error]));
    }
    return row;
  }

  function showError(error: unknown): void {
    connection.textContent = `action failed: ${String(error)}`;
  }

  function applyProgress(event: JobProgressEvent): void {
    const row = table.querySelector<HTMLTableRowElement>(
      `tr[data-job="${event.job_id}"]`,
    );
    if (!row) return;
    row.dataset.state = event.state;
    const stateCell = row.querySelector(".job-state");
    if (stateCell) stateCell.textContent = event.state;
    const fresh = progressCell(event.frames_done, event.frames_total);
    const old = row.querySelector("td.progress");
    if (old) row.replaceChild(fresh, old);
  }

  function watch(jobId: string): void {
    stream?.close();
    stream = new EventStream(
      client.jobEventsUrl(jobId),
      {
        // handlers below; the stream reuses the client's fetch so tests
        // and alternate transports inject exactly one implementation
        onEvent: (event, data) => {
          if (event !== "progress" && event !== "end") return;
          if (event === "progress") {
            applyProgress(JSON.parse(data) as JobProgressEvent);
          }
          connection.textContent = `live: ${jobId}`;
        },
        onConnect: () => {
          connection.textContent = `live: ${jobId}`;
        },
        onDisconnect: (willReconnect) => {
          connection.textContent = willReconnect
            ? "stream dropped - reconnecting"
            : "stream closed";
        },
      },
      { fetchImpl: client.rawFetch, ...sseOptions },
    );
  }

  async function refresh(): Promise<void> {
    const { jobs } = await client.listJobs();
    clear(table);
    table.append(
      el("tr", {}, [
        el("th", {}, ["job"]),
        el("th", {}, ["session"]),
        el("th", {}, ["state"]),
        el("th", {}, ["progress"]),
        el("th", {}, ["actions"]),
      ]),
    );
    for (const job of jobs) {
      table.append(rowFor(job));
    }
    if (jobs.length === 0) {
      container.append(message("info", "queue is empty"));
      return;
    }
    const focused =
      (state.job && jobs.find((j) => j.job_id === state.job)) ||
      jobs.find((j) => j.state === "running" || j.state === "queued") ||
      jobs[0];
    watch(focused.job_id);
  }

  await refresh();
  return {
    refresh,
    destroy: () => stream?.close(),
  };
}
