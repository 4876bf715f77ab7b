/**
 * Launch screen: pick a session and a model per stage, then enqueue.
 * Re-submitting the same configuration surfaces the existing job rather
 * than duplicating it (the API enqueue is idempotent).
 */

import type { ApiClient } from "../api.js";
import { clear, el, message } from "../dom.js";
import type { ViewState } from "../state.js";
import { serializeState } from "../state.js";
import type { ModelSpec } from "../types.js";

const STAGES = ["detector", "binary", "species"] as const;

export async function renderLaunch(
  container: HTMLElement,
  client: ApiClient,
  state: ViewState,
  navigate: (state: ViewState) => void,
): Promise<void> {
  clear(container);
  container.append(el("h2", {}, ["Launch a processing job"]));

  const [{ sessions }, { models }] = await Promise.all([
    client.listSessions(),
    client.listModels(),
  ]);
  if (sessions.length === 0) {
    container.append(message("info", "no sessions to process"));
    return;
  }

  const form = el("form", { class: "launch-form" });

  const sessionSelect = el("select", { name: "session" });
  for (const session of sessions) {
    const option = el("option", { value: session.session_id }, [session.session_id]);
    if (state.session === session.session_id) option.selected = true;
    sessionSelect.append(option);
  }
  form.append(el("label", {}, ["Session ", sessionSelect]));

  const stagePickers = new Map<string, HTMLSelectElement>();
  const stageChoices = new Map<string, ModelSpec[]>();
  for (const stage of STAGES) {
    const select = el("select", { name: stage });
    const candidates = models.filter((m) => m.stage === stage || stage !== "detector");
    const usable = candidates.length > 0 ? candidates : models;
    if (stage !== "detector") {
      select.append(el("option", { value: "" }, ["(skip)"]));
    }
    usable.forEach((model, index) => {
      const label = `${model.backend}${model.model_uri ? `: ${model.model_uri}` : ""}`;
      select.append(el("option", { value: String(index) }, [label]));
    });
    stagePickers.set(stage, select);
    stageChoices.set(stage, usable);
    form.append(el("label", {}, [`${stage} model `, select]));
  }

  const submit = el("button", { type: "submit" }, ["Enqueue"]);
  const outcome = el("p", { class: "launch-outcome", role: "status" });
  form.append(submit, outcome);

  form.addEventListener("submit", (event) => {
    event.preventDefault();
    void (async () => {
      const specs: Record<string, ModelSpec> = {};
      for (const stage of STAGES) {
        const select = stagePickers.get(stage)!;
        if (select.value === "") continue;
        const chosen = stageChoices.get(stage)![Number(select.value)];
        specs[stage] = { ...chosen, stage };
      }
      try {
        const job = await client.createJob(sessionSelect.value, specs);
        outcome.textContent = job.existing
          ? `already queued as ${job.job_id}`
          : `queued as ${job.job_id}`;
        navigate({ screen: "queue", job: job.job_id });
      } catch (error) {
        outcome.textContent = `enqueue failed: ${String(error)}`;
      }
    })();
  });

  container.append(form);
  container.append(
    el("p", {}, [
      el("a", { href: serializeState({ screen: "queue" }) }, ["go to the queue"]),
    ]),
  );
}
