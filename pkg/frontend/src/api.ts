/** Thin fetch client for the annotation service. */

import type { AnnotationBody, FieldError, PendingTask, StoredAnnotation } from "./types";

export class ServiceUnreachable extends Error {}

export class ValidationRejected extends Error {
  constructor(public readonly fieldErrors: FieldError[]) {
    super(fieldErrors.map((e) => `${e.loc.join(".")}: ${e.msg}`).join("; "));
  }
}

async function getJson<T>(url: string): Promise<T> {
  let response: Response;
  try {
    response = await fetch(url);
  } catch (err) {
    throw new ServiceUnreachable(String(err));
  }
  if (!response.ok) {
    throw new Error(`${url} -> ${response.status}`);
  }
  return (await response.json()) as T;
}

export class ApiClient {
  constructor(private readonly baseUrl: string) {}

  private url(path: string): string {
    return `${this.baseUrl.replace(/\/$/, "")}${path}`;
  }

  async health(): Promise<boolean> {
    try {
      const body = await getJson<{ status: string }>(this.url("/health"));
      return body.status === "ok";
    } catch {
      return false;
    }
  }

  async tasks(workerId: string): Promise<PendingTask[]> {
    const body = await getJson<{ tasks: PendingTask[] }>(
      this.url(`/tasks?worker=${encodeURIComponent(workerId)}`),
    );
    return body.tasks;
  }

  async report(reportId: string): Promise<{ report_id: string; tokens: string[]; description: string }> {
    return getJson(this.url(`/reports/${encodeURIComponent(reportId)}`));
  }

  async annotations(reportId: string): Promise<StoredAnnotation[]> {
    const body = await getJson<{ annotations: StoredAnnotation[] }>(
      this.url(`/annotations?report=${encodeURIComponent(reportId)}`),
    );
    return body.annotations;
  }

  /** POST an annotation; resolves to the stored revision id. Rejects with
   * ValidationRejected carrying per-field messages on a 422. */
  async submit(body: AnnotationBody): Promise<number> {
    let response: Response;
    try {
      response = await fetch(this.url("/annotations"), {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify(body),
      });
    } catch (err) {
      throw new ServiceUnreachable(String(err));
    }
    if (response.status === 422) {
      const payload = (await response.json()) as { detail: FieldError[] };
      throw new ValidationRejected(payload.detail ?? []);
    }
    if (response.status !== 201) {
      throw new Error(`POST /annotations -> ${response.status}`);
    }
    const payload = (await response.json()) as { revision: number };
    return payload.revision;
  }

  async workerQuality(): Promise<Record<string, number> | null> {
    try {
      const body = await getJson<{ wqs: Record<string, number> }>(this.url("/quality"));
      return body.wqs;
    } catch {
      return null; // aggregation has not been run yet
    }
  }
}
