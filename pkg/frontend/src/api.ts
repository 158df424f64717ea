// Typed client for the annotation service HTTP+JSON API. Field names match
// the wire format exactly; nothing is renamed or defaulted here.

export const CRITERIA = [
  "Grammaticality",
  "Appropriateness",
  "Relevance",
  "Complexity",
  "Novelty",
] as const;

export type Criterion = (typeof CRITERIA)[number];

export interface BatchItem {
  target_id: string;
  context: string;
  generated_question: string;
  setting: string;
  model_id: string;
  gold_question?: string;
}

export interface AnnotationBatch {
  batch_id: string;
  rater_id: string;
  items: BatchItem[];
  remaining: number;
}

export interface RatingPayload {
  rater_id: string;
  target_id: string;
  scores: Record<Criterion, number>;
}

export interface AgreementReport {
  kappa: Record<Criterion, number>;
  n_items: number;
  n_raters: number;
}

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    message: string,
    public readonly detail?: unknown,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

async function asApiError(response: Response): Promise<ApiError> {
  let detail: unknown;
  let message = `${response.status} ${response.statusText}`;
  try {
    detail = await response.json();
    const body = detail as { error?: string; detail?: string };
    if (body.error) message = `${body.error}: ${body.detail ?? ""}`.trim();
  } catch {
    // non-JSON error body; keep the status line
  }
  return new ApiError(response.status, message, detail);
}

export interface RatingApi {
  nextBatch(raterId: string): Promise<AnnotationBatch>;
  submitRating(payload: RatingPayload): Promise<void>;
}

export class HarnessApi implements RatingApi {
  constructor(private readonly baseUrl: string = "") {}

  private url(path: string): string {
    return this.baseUrl + path;
  }

  async nextBatch(raterId: string): Promise<AnnotationBatch> {
    const response = await fetch(
      this.url(`/api/batches/next?rater=${encodeURIComponent(raterId)}`),
    );
    if (!response.ok) throw await asApiError(response);
    return (await response.json()) as AnnotationBatch;
  }

  async submitRating(payload: RatingPayload): Promise<void> {
    const response = await fetch(this.url("/api/ratings"), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(payload),
    });
    if (response.status !== 201) throw await asApiError(response);
    await response.arrayBuffer(); // drain
  }

  async agreement(): Promise<AgreementReport> {
    const response = await fetch(this.url("/api/agreement"));
    if (!response.ok) throw await asApiError(response);
    return (await response.json()) as AgreementReport;
  }
}
