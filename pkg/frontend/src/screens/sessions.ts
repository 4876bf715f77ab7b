/**
 * Sessions screen: deployments and their nights, frame thumbnails,
 * jump-off points to launching a job or browsing results.
 */

import type { ApiClient } from "../api.js";
import { clear, el, message } from "../dom.js";
import type { ViewState } from "../state.js";
import { serializeState } from "../state.js";

export async function renderSessions(
  container: HTMLElement,
  client: ApiClient,
  state: ViewState,
): Promise<void> {
  clear(container);
  container.append(el("h2", {}, ["Sessions"]));

  let deployments: string[];
  try {
    deployments = (await client.listDeployments()).deployments;
  } catch (error) {
    container.append(message("error", `cannot load deployments: ${String(error)}`));
    return;
  }
  if (deployments.length === 0) {
    container.append(message("info", "no deployments registered yet - run discovery"));
    return;
  }

  const nav = el("nav", { class: "deployment-nav" });
  for (const deployment of deployments) {
    const selected = state.deployment === deployment ? " selected" : "";
    nav.append(
      el(
        "a",
        {
          class: `deployment${selected}`,
          href: serializeState({ ...state, screen: "sessions", deployment }),
        },
        [deployment],
      ),
    );
  }
  container.append(nav);

  const active = state.deployment ?? deployments[0];
  const { sessions } = await client.listSessions(active);
  const grid = el("div", { class: "session-grid" });
  for (const session of sessions) {
    const card = el("div", { class: "session-card", "data-session": session.session_id });
    card.append(el("h3", {}, [session.night_of]));
    card.append(
      el("p", { class: "session-meta" }, [
        `${session.frames.length} frames`,
      ]),
    );
    try {
      const { frames } = await client.sessionFrames(session.session_id);
      if (frames.length > 0) {
        card.append(
          el("img", {
            class: "thumb",
            src: client.frameImageUrl(frames[0].frame_id),
            alt: `first frame of ${session.session_id}`,
            loading: "lazy",
          }),
        );
      }
    } catch {
      // thumbnails are decoration; the card still links through
    }
    card.append(
      el("p", {}, [
        el(
          "a",
          { href: serializeState({ screen: "launch", session: session.session_id }) },
          ["launch"],
        ),
        " · ",
        el(
          "a",
          { href: serializeState({ screen: "results", session: session.session_id }) },
          ["results"],
        ),
      ]),
    );
    grid.append(card);
  }
  container.append(grid);
}
