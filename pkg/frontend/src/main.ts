// Console bootstrap: topic picker + budget, then a live session panel.

import { ServiceClient } from "./api.js";
import { SessionController } from "./controller.js";
import { escapeHtml } from "./render.js";
import { mountSession } from "./ui.js";

const DEFAULT_SERVICE = `${location.protocol}//${location.hostname}:8000`;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

async function boot(): Promise<void> {
  const serviceInput = el<HTMLInputElement>("service-url");
  serviceInput.value = DEFAULT_SERVICE;
  const topicSelect = el<HTMLSelectElement>("topic");
  const ratioSelect = el<HTMLSelectElement>("stop-ratio");
  const budgetInput = el<HTMLInputElement>("budget");
  const startButton = el<HTMLButtonElement>("start");
  const sessionRoot = el<HTMLDivElement>("session");
  const setupBanner = el<HTMLDivElement>("setup-banner");

  let client = new ServiceClient(serviceInput.value);

  async function loadTopics(): Promise<void> {
    setupBanner.textContent = "";
    try {
      client = new ServiceClient(serviceInput.value);
      const topics = await client.listTopics();
      topicSelect.innerHTML = topics
        .map((t) => `<option value="${escapeHtml(t.topic_id)}">${escapeHtml(t.topic_id)} — ${escapeHtml(t.title)}</option>`)
        .join("");
      const selected = topics.find((t) => t.topic_id === topicSelect.value);
      ratioSelect.innerHTML = (selected?.checkpoint_stop_ratios ?? [])
        .map((r) => `<option value="${r}">${(r * 100).toFixed(0)}%</option>`)
        .join("");
    } catch (error) {
      setupBanner.textContent = `service unreachable: ${String(error)}`;
    }
  }

  serviceInput.addEventListener("change", () => void loadTopics());
  topicSelect.addEventListener("change", () => void loadTopics());

  startButton.addEventListener("click", () => {
    const controller = new SessionController(client);
    mountSession(sessionRoot, controller);
    void controller.start(
      topicSelect.value,
      Number(ratioSelect.value),
      Number(budgetInput.value),
    );
  });

  await loadTopics();
}

void boot();
