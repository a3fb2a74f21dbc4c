/** Client-side tag compilation mirroring the server's label rules, so any
 * sequence the UI submits is accepted by POST /annotations. */

import type { Selection, SpanKind } from "./types";

export class SelectionError extends Error {}

function overlaps(a: Selection, b: Selection): boolean {
  return a.start < b.end && b.start < a.end;
}

/** Validate one selection against those already on the task. Token tags are
 * one-per-token, so spans may never share a token regardless of kind. */
export function checkSelection(selection: Selection, existing: Selection[], tokenCount: number): void {
  if (!Number.isInteger(selection.start) || !Number.isInteger(selection.end)) {
    throw new SelectionError("span bounds must be integers");
  }
  if (selection.start < 0 || selection.end > tokenCount || selection.start >= selection.end) {
    throw new SelectionError(`bad span bounds [${selection.start}, ${selection.end})`);
  }
  if (selection.category !== null && (selection.category < 0 || selection.category > 8)) {
    throw new SelectionError(`category out of range: ${selection.category}`);
  }
  const clash = existing.find((other) => overlaps(selection, other));
  if (clash) {
    throw new SelectionError(
      `span [${selection.start}, ${selection.end}) overlaps [${clash.start}, ${clash.end})`,
    );
  }
}

/** Selections that stop the task from compiling: causes and embedded causes
 * without a category. Returns their indices. */
export function missingCategories(selections: Selection[]): number[] {
  const bad: number[] = [];
  selections.forEach((s, i) => {
    if ((s.kind === "C" || s.kind === "CE") && s.category === null) {
      bad.push(i);
    }
  });
  return bad;
}

function tagText(prefix: "B" | "I", kind: SpanKind, category: number | null): string {
  const base = `${prefix}-${kind}`;
  return category === null ? base : `${base}-${category}`;
}

/** Compile selections into the token tag sequence: B-/I- runs over an all-O
 * background. Effects stay uncategorized; causes carry their category. */
export function compileTags(selections: Selection[], tokenCount: number): string[] {
  const missing = missingCategories(selections);
  if (missing.length > 0) {
    throw new SelectionError(`selection ${missing[0]} needs a category`);
  }
  const tags: string[] = new Array(tokenCount).fill("O");
  const sorted = [...selections].sort((a, b) => a.start - b.start);
  for (let i = 1; i < sorted.length; i += 1) {
    if (overlaps(sorted[i - 1], sorted[i])) {
      throw new SelectionError("overlapping selections");
    }
  }
  for (const s of sorted) {
    if (s.end > tokenCount) {
      throw new SelectionError(`span past the end of the sentence`);
    }
    const category = s.kind === "E" ? null : s.category;
    for (let i = s.start; i < s.end; i += 1) {
      tags[i] = tagText(i === s.start ? "B" : "I", s.kind, category);
    }
  }
  return tags;
}

/** Inverse of compileTags, used to re-open a stored annotation for editing. */
export function decodeTags(tags: string[]): Selection[] {
  const selections: Selection[] = [];
  let open: Selection | null = null;
  tags.forEach((tag, i) => {
    if (tag === "O") {
      open = null;
      return;
    }
    const match = /^([BI])-(CE|C|E)(?:-([0-8]))?$/.exec(tag);
    if (!match) {
      throw new SelectionError(`unknown tag: ${tag}`);
    }
    const [, prefix, kind, category] = match;
    const cat = category === undefined ? null : Number(category);
    if (prefix === "B" || open === null || open.kind !== kind) {
      open = { kind: kind as SpanKind, start: i, end: i + 1, category: cat };
      selections.push(open);
    } else {
      open.end = i + 1;
    }
  });
  return selections;
}
