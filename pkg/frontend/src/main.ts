/** App bootstrap: worker picks an id, works through the pending queue,
 * submits annotations, and sees quality scores once aggregation has run. */

import { ApiClient, ServiceUnreachable, ValidationRejected } from "./api";
import { renderBanner, renderQuality, renderQueue, TaskEditor } from "./ui";

const DEFAULT_BASE_URL = "http://127.0.0.1:8077";

function element(id: string): HTMLElement {
  const found = document.getElementById(id);
  if (!found) {
    throw new Error(`missing #${id}`);
  }
  return found;
}

export function startApp(): void {
  const baseUrl =
    new URLSearchParams(window.location.search).get("service") ?? DEFAULT_BASE_URL;
  const api = new ApiClient(baseUrl);
  const queueRoot = element("queue");
  const editorRoot = element("editor");
  const qualityRoot = element("quality");
  const bannerRoot = element("banner");
  const workerInput = element("worker") as HTMLInputElement;
  let editor: TaskEditor | null = null;

  async function refresh(): Promise<void> {
    bannerRoot.textContent = "";
    const worker = workerInput.value.trim();
    if (!worker) {
      return;
    }
    try {
      const tasks = await api.tasks(worker);
      renderQueue(queueRoot, tasks, openTask);
      renderQuality(qualityRoot, await api.workerQuality());
    } catch (err) {
      if (err instanceof ServiceUnreachable) {
        // in-progress selections stay untouched; only the queue pane re-renders
        renderBanner(bannerRoot, "Annotation service unreachable.", () => void refresh());
        return;
      }
      throw err;
    }
  }

  function openTask(reportId: string, tokens: string[]): void {
    editor = new TaskEditor(editorRoot, reportId, tokens, {
      onSubmit: async (task, tags) => {
        try {
          const revision = await api.submit({
            report_id: task.reportId,
            worker_id: workerInput.value.trim(),
            tokens: task.tokens,
            tags,
          });
          const note = document.createElement("p");
          note.dataset.role = "confirmation";
          note.textContent = `Stored revision ${revision} of ${task.reportId}.`;
          editorRoot.appendChild(note);
          await refresh();
        } catch (err) {
          if (err instanceof ValidationRejected) {
            editor?.showFieldErrors(err.fieldErrors);
          } else if (err instanceof ServiceUnreachable) {
            renderBanner(bannerRoot, "Submit failed: service unreachable.", () => void refresh());
          } else {
            throw err;
          }
        }
      },
    });
  }

  element("load").addEventListener("click", () => void refresh());
  workerInput.addEventListener("keydown", (event) => {
    if ((event as KeyboardEvent).key === "Enter") {
      void refresh();
    }
  });
}

if (typeof document !== "undefined" && document.getElementById("queue")) {
  startApp();
}
