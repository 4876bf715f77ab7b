/**
 * Crop review: a keyboard-driven approve/reject stream.
 *
 * `a` approves, `x` rejects, `u` undoes the last decision. Updates are
 * optimistic - the next crop appears immediately - and roll back (the
 * crop re-enters the queue with an error note) if the PATCH fails.
 */

import type { ApiClient } from "../api.js";
import { clear, el, message } from "../dom.js";
import type { CropInfo } from "../types.js";

export interface ReviewController {
  decide(state: "approved" | "rejected"): Promise<void>;
  undo(): Promise<void>;
  pending(): CropInfo[];
  destroy(): void;
}

export async function renderReview(
  container: HTMLElement,
  client: ApiClient,
  startIndex = 0,
): Promise<ReviewController> {
  clear(container);
  container.append(el("h2", {}, ["Crop review"]));
  container.append(
    el("p", { class: "hint" }, ["a = approve · x = reject · u = undo"]),
  );

  const stage = el("div", { class: "review-stage" });
  const status = el("p", { class: "review-status", role: "status" });
  container.append(stage, status);

  let queue: CropInfo[] = [];
  try {
    queue = (await client.listCrops("unreviewed")).crops;
  } catch (error) {
    container.append(message("error", `cannot load crops: ${String(error)}`));
  }
  if (startIndex > 0 && queue.length > 0) {
    const offset = startIndex % queue.length;
    queue = [...queue.slice(offset), ...queue.slice(0, offset)];
  }
  const undoStack: { crop: CropInfo; state: string }[] = [];

  function show(): void {
    clear(stage);
    if (queue.length === 0) {
      stage.append(message("info", "review queue is empty"));
      return;
    }
    const current = queue[0];
    stage.append(
      el("figure", { class: "review-item", "data-crop": current.crop_id }, [
        el("img", {
          src: client.cropImageUrl(current.crop_id),
          alt: current.crop_id,
        }),
        el("figcaption", {}, [`${current.crop_id} (${queue.length} pending)`]),
      ]),
    );
  }

  async function decide(state: "approved" | "rejected"): Promise<void> {
    const current = queue.shift();
    if (!current) return;
    show(); // optimistic: advance before the PATCH resolves
    status.textContent = `${current.crop_id}: ${state}...`;
    try {
      await client.setCropState(current.crop_id, state);
      undoStack.push({ crop: current, state });
      status.textContent = `${current.crop_id}: ${state}`;
    } catch (error) {
      queue.unshift(current); // rollback
      show();
      status.textContent = `failed to save ${current.crop_id}: ${String(error)}`;
    }
  }

  async function undo(): Promise<void> {
    const last = undoStack.pop();
    if (!last) return;
    try {
      await client.setCropState(last.crop.crop_id, "unreviewed");
      queue.unshift(last.crop);
      show();
      status.textContent = `${last.crop.crop_id}: back in the queue`;
    } catch (error) {
      undoStack.push(last);
      status.textContent = `undo failed: ${String(error)}`;
    }
  }

  function onKey(event: KeyboardEvent): void {
    if (event.key === "a") void decide("approved");
    else if (event.key === "x") void decide("rejected");
    else if (event.key === "u") void undo();
  }

  document.addEventListener("keydown", onKey);
  show();

  return {
    decide,
    undo,
    pending: () => [...queue],
    destroy: () => document.removeEventListener("keydown", onKey),
  };
}
