/** DOM layer: token chips with drag and keyboard span selection, a
 * kind/category palette, the selection list, and inline validation. */

import {
  addSelection,
  blockedSelections,
  canSubmit,
  clearSelections,
  draftToSelection,
  newTask,
  removeSelection,
  setCategory,
  taskTags,
  type Draft,
} from "./state";
import { SelectionError } from "./tags";
import { CATEGORY_NAMES, KIND_NAMES, SPAN_KINDS, type SpanKind, type TaskView } from "./types";

const KIND_CLASS: Record<SpanKind, string> = { C: "cause", E: "effect", CE: "embedded" };

export interface TaskEditorOptions {
  onSubmit: (task: TaskView, tags: string[]) => Promise<void>;
}

export class TaskEditor {
  task: TaskView;
  private draft: Draft | null = null;
  private paletteKind: SpanKind = "C";
  private paletteCategory: number | null = null;
  private dragging = false;
  private focused = 0;
  private readonly root: HTMLElement;
  private readonly options: TaskEditorOptions;

  constructor(root: HTMLElement, reportId: string, tokens: string[], options: TaskEditorOptions) {
    this.root = root;
    this.task = newTask(reportId, tokens);
    this.options = options;
    this.render();
  }

  /** Apply a committed span; surfaces validation problems inline. */
  addSpan(kind: SpanKind, start: number, end: number, category: number | null): void {
    try {
      this.task = addSelection(this.task, { kind, start, end, category });
      this.setError("");
    } catch (err) {
      if (err instanceof SelectionError) {
        this.setError(err.message);
      } else {
        throw err;
      }
    }
    this.render();
  }

  compile(): string[] {
    return taskTags(this.task);
  }

  async submit(): Promise<void> {
    if (!canSubmit(this.task)) {
      this.setError("every cause needs a category");
      this.render();
      return;
    }
    await this.options.onSubmit(this.task, this.compile());
    this.task = { ...this.task, dirty: false };
    this.render();
  }

  showFieldErrors(errors: { loc: string[]; msg: string }[]): void {
    this.setError(errors.map((e) => `${e.loc[e.loc.length - 1]}: ${e.msg}`).join("; "));
    this.render();
  }

  private setError(message: string): void {
    this.root.dataset.error = message;
  }

  private beginDraft(index: number): void {
    this.draft = {
      kind: this.paletteKind,
      anchor: index,
      focus: index,
      category: this.paletteKind === "E" ? null : this.paletteCategory,
    };
  }

  private commitDraft(): void {
    if (!this.draft) {
      return;
    }
    const selection = draftToSelection(this.draft);
    this.draft = null;
    this.addSpan(selection.kind, selection.start, selection.end, selection.category);
  }

  private handleChipKey(event: KeyboardEvent, index: number): void {
    const count = this.task.tokens.length;
    if (event.key === "ArrowRight" || event.key === "ArrowLeft") {
      const delta = event.key === "ArrowRight" ? 1 : -1;
      const next = Math.min(count - 1, Math.max(0, index + delta));
      if (event.shiftKey) {
        if (!this.draft) {
          this.beginDraft(index);
        }
        this.draft!.focus = next;
      }
      this.focused = next;
      this.render();
      this.chip(next)?.focus();
      event.preventDefault();
    } else if (event.key === "Enter" || event.key === " ") {
      if (!this.draft) {
        this.beginDraft(index);
      }
      this.commitDraft();
      event.preventDefault();
    } else if (event.key === "Escape") {
      this.draft = null;
      this.render();
    }
  }

  chip(index: number): HTMLElement | null {
    return this.root.querySelector(`[data-token-index="${index}"]`);
  }

  private render(): void {
    this.root.textContent = "";

    const palette = document.createElement("div");
    palette.className = "palette";
    for (const kind of SPAN_KINDS) {
      const button = document.createElement("button");
      button.type = "button";
      button.textContent = KIND_NAMES[kind];
      button.dataset.kind = kind;
      button.className = kind === this.paletteKind ? "selected" : "";
      button.addEventListener("click", () => {
        this.paletteKind = kind;
        this.render();
      });
      palette.appendChild(button);
    }
    const categoryPicker = document.createElement("select");
    categoryPicker.dataset.role = "palette-category";
    categoryPicker.disabled = this.paletteKind === "E";
    const blank = document.createElement("option");
    blank.value = "";
    blank.textContent = "category…";
    categoryPicker.appendChild(blank);
    CATEGORY_NAMES.forEach((name, i) => {
      const option = document.createElement("option");
      option.value = String(i);
      option.textContent = `${i} - ${name}`;
      categoryPicker.appendChild(option);
    });
    categoryPicker.value = this.paletteCategory === null ? "" : String(this.paletteCategory);
    categoryPicker.addEventListener("change", () => {
      this.paletteCategory = categoryPicker.value === "" ? null : Number(categoryPicker.value);
    });
    palette.appendChild(categoryPicker);
    this.root.appendChild(palette);

    const sentence = document.createElement("div");
    sentence.className = "tokens";
    sentence.setAttribute("role", "listbox");
    const tags = safeTags(this.task);
    this.task.tokens.forEach((token, i) => {
      const chip = document.createElement("span");
      chip.dataset.tokenIndex = String(i);
      chip.textContent = token;
      chip.tabIndex = i === this.focused ? 0 : -1;
      const covering = this.task.selections.find((s) => s.start <= i && i < s.end);
      chip.className = `chip ${covering ? KIND_CLASS[covering.kind] : ""}`;
      if (tags) {
        chip.dataset.tag = tags[i];
      }
      if (this.draft) {
        const lo = Math.min(this.draft.anchor, this.draft.focus);
        const hi = Math.max(this.draft.anchor, this.draft.focus);
        if (lo <= i && i <= hi) {
          chip.classList.add("draft");
        }
      }
      chip.addEventListener("mousedown", () => {
        this.dragging = true;
        this.beginDraft(i);
        this.render();
      });
      chip.addEventListener("mouseover", () => {
        if (this.dragging && this.draft) {
          this.draft.focus = i;
          this.render();
        }
      });
      chip.addEventListener("mouseup", () => {
        this.dragging = false;
        if (this.draft) {
          this.draft.focus = i;
        }
        this.commitDraft();
      });
      chip.addEventListener("keydown", (event) => this.handleChipKey(event as KeyboardEvent, i));
      sentence.appendChild(chip);
    });
    this.root.appendChild(sentence);

    const blocked = new Set(blockedSelections(this.task));
    const list = document.createElement("ul");
    list.className = "selections";
    this.task.selections.forEach((selection, index) => {
      const item = document.createElement("li");
      item.dataset.selectionIndex = String(index);
      const text = this.task.tokens.slice(selection.start, selection.end).join(" ");
      const label = document.createElement("span");
      label.textContent = `${KIND_NAMES[selection.kind]}: "${text}"`;
      item.appendChild(label);

      if (selection.kind !== "E") {
        const picker = document.createElement("select");
        picker.dataset.role = "category";
        const none = document.createElement("option");
        none.value = "";
        none.textContent = "pick category";
        picker.appendChild(none);
        CATEGORY_NAMES.forEach((name, i) => {
          const option = document.createElement("option");
          option.value = String(i);
          option.textContent = `${i} - ${name}`;
          picker.appendChild(option);
        });
        picker.value = selection.category === null ? "" : String(selection.category);
        picker.addEventListener("change", () => {
          const value = picker.value === "" ? null : Number(picker.value);
          this.task = setCategory(this.task, index, value);
          this.render();
        });
        item.appendChild(picker);
      }

      if (blocked.has(index)) {
        const warning = document.createElement("em");
        warning.className = "field-error";
        warning.textContent = "category required";
        item.appendChild(warning);
      }

      const remove = document.createElement("button");
      remove.type = "button";
      remove.dataset.role = "remove";
      remove.textContent = "remove";
      remove.addEventListener("click", () => {
        this.task = removeSelection(this.task, index);
        this.render();
      });
      item.appendChild(remove);
      list.appendChild(item);
    });
    this.root.appendChild(list);

    const controls = document.createElement("div");
    const submit = document.createElement("button");
    submit.type = "button";
    submit.dataset.role = "submit";
    submit.textContent = "Submit annotation";
    submit.disabled = !canSubmit(this.task);
    submit.addEventListener("click", () => void this.submit());
    controls.appendChild(submit);
    const clear = document.createElement("button");
    clear.type = "button";
    clear.dataset.role = "clear";
    clear.textContent = "Clear";
    clear.addEventListener("click", () => {
      this.task = clearSelections(this.task);
      this.render();
    });
    controls.appendChild(clear);
    this.root.appendChild(controls);

    const error = this.root.dataset.error;
    if (error) {
      const banner = document.createElement("p");
      banner.className = "error-banner";
      banner.setAttribute("role", "alert");
      banner.textContent = error;
      this.root.appendChild(banner);
    }
  }
}

function safeTags(task: TaskView): string[] | null {
  try {
    return taskTags(task);
  } catch {
    return null;
  }
}

export function renderQueue(
  root: HTMLElement,
  tasks: { report_id: string; tokens: string[] }[],
  onOpen: (reportId: string, tokens: string[]) => void,
): void {
  root.textContent = "";
  if (tasks.length === 0) {
    const empty = document.createElement("p");
    empty.dataset.role = "empty-queue";
    empty.textContent = "No pending tasks.";
    root.appendChild(empty);
    return;
  }
  const list = document.createElement("ul");
  for (const task of tasks) {
    const item = document.createElement("li");
    const open = document.createElement("button");
    open.type = "button";
    open.dataset.reportId = task.report_id;
    open.textContent = `${task.report_id} (${task.tokens.length} tokens)`;
    open.addEventListener("click", () => onOpen(task.report_id, task.tokens));
    item.appendChild(open);
    list.appendChild(item);
  }
  root.appendChild(list);
}

export function renderQuality(root: HTMLElement, wqs: Record<string, number> | null): void {
  root.textContent = "";
  const heading = document.createElement("h3");
  heading.textContent = "Worker quality";
  root.appendChild(heading);
  if (wqs === null) {
    const note = document.createElement("p");
    note.textContent = "No aggregation results yet.";
    root.appendChild(note);
    return;
  }
  const table = document.createElement("table");
  for (const [worker, score] of Object.entries(wqs).sort()) {
    const row = document.createElement("tr");
    const name = document.createElement("td");
    name.textContent = worker;
    const value = document.createElement("td");
    value.dataset.worker = worker;
    value.textContent = score.toFixed(4);
    row.appendChild(name);
    row.appendChild(value);
    table.appendChild(row);
  }
  root.appendChild(table);
}

export function renderBanner(root: HTMLElement, message: string, onRetry: () => void): void {
  root.textContent = "";
  const banner = document.createElement("div");
  banner.className = "banner";
  banner.setAttribute("role", "alert");
  const text = document.createElement("span");
  text.textContent = message;
  banner.appendChild(text);
  const retry = document.createElement("button");
  retry.type = "button";
  retry.dataset.role = "retry";
  retry.textContent = "Retry";
  retry.addEventListener("click", onRetry);
  banner.appendChild(retry);
  root.appendChild(banner);
}
