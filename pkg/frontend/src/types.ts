export type SpanKind = "C" | "E" | "CE";

export const SPAN_KINDS: SpanKind[] = ["C", "E", "CE"];

export const KIND_NAMES: Record<SpanKind, string> = {
  C: "Cause",
  E: "Effect",
  CE: "Embedded cause",
};

export const CATEGORY_NAMES = [
  "perception",
  "localization & mapping",
  "planning",
  "control",
  "AV driver",
  "other driver & vehicle",
  "environment",
  "system general",
  "others",
] as const;

/** A token-span selection; `end` is exclusive. Causes and embedded causes
 * must carry a category before the task can be submitted. */
export interface Selection {
  kind: SpanKind;
  start: number;
  end: number;
  category: number | null;
}

export interface TaskView {
  reportId: string;
  tokens: string[];
  selections: Selection[];
  dirty: boolean;
}

export interface PendingTask {
  report_id: string;
  tokens: string[];
  assigned_workers: string[];
  required_redundancy: number;
}

export interface AnnotationBody {
  report_id: string;
  worker_id: string;
  tokens: string[];
  tags: string[];
}

export interface StoredAnnotation extends AnnotationBody {
  submitted_at: string;
}

export interface FieldError {
  loc: string[];
  msg: string;
}
