/** Task-level selection state: pure, so it can be driven headlessly. */

import { checkSelection, compileTags, missingCategories } from "./tags";
import type { Selection, SpanKind, TaskView } from "./types";

export function newTask(reportId: string, tokens: string[]): TaskView {
  return { reportId, tokens, selections: [], dirty: false };
}

/** Add a validated selection; returns the new state (never mutates). */
export function addSelection(task: TaskView, selection: Selection): TaskView {
  checkSelection(selection, task.selections, task.tokens.length);
  const selections = [...task.selections, selection].sort((a, b) => a.start - b.start);
  return { ...task, selections, dirty: true };
}

export function removeSelection(task: TaskView, index: number): TaskView {
  const selections = task.selections.filter((_, i) => i !== index);
  return { ...task, selections, dirty: true };
}

export function setCategory(task: TaskView, index: number, category: number | null): TaskView {
  const selections = task.selections.map((s, i) => (i === index ? { ...s, category } : s));
  return { ...task, selections, dirty: true };
}

export function clearSelections(task: TaskView): TaskView {
  return { ...task, selections: [], dirty: task.selections.length > 0 };
}

/** Submit is enabled only when every cause-like span has a category. */
export function canSubmit(task: TaskView): boolean {
  return missingCategories(task.selections).length === 0;
}

export function blockedSelections(task: TaskView): number[] {
  return missingCategories(task.selections);
}

export function taskTags(task: TaskView): string[] {
  return compileTags(task.selections, task.tokens.length);
}

/** Drag/keyboard span-in-progress: anchor plus focus token indices. */
export interface Draft {
  kind: SpanKind;
  anchor: number;
  focus: number;
  category: number | null;
}

export function draftToSelection(draft: Draft): Selection {
  return {
    kind: draft.kind,
    start: Math.min(draft.anchor, draft.focus),
    end: Math.max(draft.anchor, draft.focus) + 1,
    category: draft.category,
  };
}
