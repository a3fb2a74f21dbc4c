// @vitest-environment jsdom
import { beforeEach, describe, expect, it, vi } from "vitest";

import { renderQueue, TaskEditor } from "../src/ui";
import type { TaskView } from "../src/types";

const SENTENCE = (
  "driver disengagement due to planning discrepancy in the determination " +
  "of autonomous vehicle speed"
).split(" ");

function mouse(type: string, target: Element): void {
  target.dispatchEvent(new MouseEvent(type, { bubbles: true }));
}

function key(target: Element, key: string, shift = false): void {
  target.dispatchEvent(new KeyboardEvent("keydown", { key, shiftKey: shift, bubbles: true }));
}

function editor(onSubmit = vi.fn(async () => {})) {
  const root = document.createElement("div");
  document.body.appendChild(root);
  return new TaskEditor(root, "r1", SENTENCE, { onSubmit });
}

function pickKind(root: HTMLElement, kind: string): void {
  (root.querySelector(`button[data-kind="${kind}"]`) as HTMLButtonElement).click();
}

function pickPaletteCategory(root: HTMLElement, value: string): void {
  const picker = root.querySelector('select[data-role="palette-category"]') as HTMLSelectElement;
  picker.value = value;
  picker.dispatchEvent(new Event("change", { bubbles: true }));
}

beforeEach(() => {
  document.body.innerHTML = "";
});

describe("TaskEditor", () => {
  it("creates a span from a mouse drag over token chips", () => {
    const ed = editor();
    const root = ed.chip(0)!.closest("div")!.parentElement as HTMLElement;
    pickKind(root, "E");
    mouse("mousedown", ed.chip(0)!);
    mouse("mouseover", ed.chip(1)!);
    mouse("mouseup", ed.chip(1)!);
    expect(ed.task.selections).toEqual([{ kind: "E", start: 0, end: 2, category: null }]);
    expect(ed.chip(0)!.className).toContain("effect");
  });

  it("supports a keyboard-only selection path", () => {
    const ed = editor();
    const root = ed.chip(0)!.parentElement!.parentElement as HTMLElement;
    pickKind(root, "C");
    pickPaletteCategory(root, "2");
    const start = ed.chip(4)!;
    key(start, "ArrowRight", true); // extend 4 -> 5
    key(ed.chip(5)!, "Enter");
    expect(ed.task.selections).toEqual([{ kind: "C", start: 4, end: 6, category: 2 }]);
  });

  it("compiles the worked example to the gold tags", () => {
    const ed = editor();
    ed.addSpan("E", 0, 2, null);
    ed.addSpan("C", 4, 6, 2);
    expect(ed.compile()).toEqual([
      "B-E", "I-E", "O", "O", "B-C-2", "I-C-2", "O", "O", "O", "O", "O", "O", "O",
    ]);
  });

  it("disables submit and flags the span while a cause lacks a category", () => {
    const onSubmit = vi.fn(async () => {});
    const ed = editor(onSubmit);
    ed.addSpan("C", 4, 6, null);
    const root = ed.chip(0)!.parentElement!.parentElement as HTMLElement;
    const submit = root.querySelector('button[data-role="submit"]') as HTMLButtonElement;
    expect(submit.disabled).toBe(true);
    expect(root.querySelector(".field-error")?.textContent).toBe("category required");
    void ed.submit();
    expect(onSubmit).not.toHaveBeenCalled();
    // picking a category unblocks it
    const picker = root.querySelector('li select[data-role="category"]') as HTMLSelectElement;
    picker.value = "2";
    picker.dispatchEvent(new Event("change", { bubbles: true }));
    const enabled = root.querySelector('button[data-role="submit"]') as HTMLButtonElement;
    expect(enabled.disabled).toBe(false);
  });

  it("shows inline errors for overlapping drags instead of losing state", () => {
    const ed = editor();
    ed.addSpan("E", 0, 2, null);
    ed.addSpan("C", 1, 3, 0); // overlaps the effect
    const root = ed.chip(0)!.parentElement!.parentElement as HTMLElement;
    expect(root.querySelector(".error-banner")?.textContent).toMatch(/overlaps/);
    expect(ed.task.selections).toHaveLength(1);
  });

  it("renders server field errors after a 422", () => {
    const ed = editor();
    ed.showFieldErrors([{ loc: ["body", "tags"], msg: "invalid tags" }]);
    const root = ed.chip(0)!.parentElement!.parentElement as HTMLElement;
    expect(root.querySelector(".error-banner")?.textContent).toContain("invalid tags");
  });

  it("submits the compiled tags through the callback", async () => {
    let seen: { task: TaskView; tags: string[] } | null = null;
    const ed = editor(vi.fn(async (task: TaskView, tags: string[]) => {
      seen = { task, tags };
    }));
    ed.addSpan("E", 0, 2, null);
    ed.addSpan("C", 4, 6, 2);
    await ed.submit();
    expect(seen!.tags[4]).toBe("B-C-2");
    expect(ed.task.dirty).toBe(false);
  });
});

describe("renderQueue", () => {
  it("renders an empty state", () => {
    const root = document.createElement("div");
    renderQueue(root, [], () => {});
    expect(root.querySelector('[data-role="empty-queue"]')?.textContent).toMatch(/No pending/);
  });

  it("opens a task on click", () => {
    const root = document.createElement("div");
    const onOpen = vi.fn();
    renderQueue(root, [{ report_id: "r9", tokens: ["a", "b"] }], onOpen);
    (root.querySelector('button[data-report-id="r9"]') as HTMLButtonElement).click();
    expect(onOpen).toHaveBeenCalledWith("r9", ["a", "b"]);
  });
});
