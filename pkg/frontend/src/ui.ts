// Browser glue: mounts the rendered view and forwards button clicks to the
// controller. Buttons are re-rendered disabled while a request is in flight,
// and the controller drops duplicate submissions regardless.

import { SessionController } from "./controller.js";
import { renderSession } from "./render.js";
import type { WireAnswer } from "./types.js";

export function mountSession(root: HTMLElement, controller: SessionController): void {
  controller.onChange = (view) => {
    root.innerHTML = renderSession(view);
  };
  root.innerHTML = renderSession(controller.getView());

  root.addEventListener("click", (event) => {
    const target = event.target as HTMLElement | null;
    if (!target) return;
    const action = target.getAttribute("data-action");
    if (action === "answer") {
      const answer = target.getAttribute("data-answer") as WireAnswer | null;
      if (answer) void controller.submit(answer);
    } else if (action === "retry") {
      void controller.retry();
    }
  });
}
