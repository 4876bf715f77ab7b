/**
 * Shell and hash router. The five screens are pure functions of
 * (container, api client, view state); whatever they need to survive a
 * refresh lives in the URL.
 */

import { ApiClient } from "./api.js";
import { clear, el } from "./dom.js";
import { parseHash, serializeState, type ScreenName, type ViewState } from "./state.js";
import { renderLaunch } from "./screens/launch.js";
import { renderQueue, type QueueController } from "./screens/queue.js";
import { renderResults } from "./screens/results.js";
import { renderReview, type ReviewController } from "./screens/review.js";
import { renderSessions } from "./screens/sessions.js";

const SCREEN_TITLES: Record<ScreenName, string> = {
  sessions: "Sessions",
  review: "Crop review",
  launch: "Launch",
  queue: "Queue",
  results: "Results",
};

export class App {
  private readonly client: ApiClient;
  private readonly root: HTMLElement;
  private cleanup: (() => void) | null = null;

  constructor(root: HTMLElement, client?: ApiClient) {
    this.root = root;
    this.client = client ?? new ApiClient("");
    window.addEventListener("hashchange", () => void this.route());
  }

  navigate = (state: ViewState): void => {
    window.location.hash = serializeState(state);
  };

  async route(): Promise<void> {
    const state = parseHash(window.location.hash);
    this.cleanup?.();
    this.cleanup = null;
    clear(this.root);

    const nav = el("nav", { class: "top-nav" });
    for (const screen of Object.keys(SCREEN_TITLES) as ScreenName[]) {
      nav.append(
        el(
          "a",
          {
            class: screen === state.screen ? "selected" : "",
            href: serializeState({ ...state, screen }),
          },
          [SCREEN_TITLES[screen]],
        ),
      );
    }
    const main = el("main", { class: `screen screen-${state.screen}` });
    this.root.append(el("header", {}, [el("h1", {}, ["AMI data companion"]), nav]), main);

    switch (state.screen) {
      case "sessions":
        await renderSessions(main, this.client, state);
        break;
      case "review": {
        const controller: ReviewController = await renderReview(
          main,
          this.client,
          state.reviewIndex ?? 0,
        );
        this.cleanup = () => controller.destroy();
        break;
      }
      case "launch":
        await renderLaunch(main, this.client, state, this.navigate);
        break;
      case "queue": {
        const controller: QueueController = await renderQueue(main, this.client, state);
        this.cleanup = () => controller.destroy();
        break;
      }
      case "results":
        await renderResults(main, this.client, state, this.navigate);
        break;
    }
  }
}

export function mount(rootId = "app"): App {
  const root = document.getElementById(rootId);
  if (!root) throw new Error(`no #${rootId} element to mount on`);
  const app = new App(root);
  void app.route();
  return app;
}
