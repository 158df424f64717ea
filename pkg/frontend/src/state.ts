// Form-state machine for the rating workflow, independent of the DOM so it
// can be exercised headlessly. One item on screen at a time; a rating can
// only be submitted once every criterion has an explicitly chosen score.

import {
  AnnotationBatch,
  BatchItem,
  CRITERIA,
  Criterion,
  RatingApi,
  RatingPayload,
} from "./api.js";

export type SessionPhase = "idle" | "rating" | "loading" | "done" | "error";

export interface FormView {
  phase: SessionPhase;
  item: BatchItem | null;
  scores: Partial<Record<Criterion, number>>;
  canSubmit: boolean;
  inFlight: boolean;
  ratedInBatch: number;
  batchSize: number;
  remaining: number;
  error: string | null;
}

function assertValidScore(value: number): void {
  if (!Number.isInteger(value) || value < 1 || value > 5) {
    throw new RangeError(`score must be an integer in 1..5, got ${value}`);
  }
}

export class RatingSession {
  private batch: AnnotationBatch | null = null;
  private index = 0;
  private scores: Partial<Record<Criterion, number>> = {};
  private phase: SessionPhase = "idle";
  private inFlight = false;
  private error: string | null = null;

  constructor(
    private readonly api: RatingApi,
    readonly raterId: string,
  ) {}

  view(): FormView {
    const item = this.currentItem();
    return {
      phase: this.phase,
      item,
      scores: { ...this.scores },
      canSubmit: item !== null && !this.inFlight && this.allScoresSet(),
      inFlight: this.inFlight,
      ratedInBatch: this.index,
      batchSize: this.batch?.items.length ?? 0,
      remaining: this.batch?.remaining ?? 0,
      error: this.error,
    };
  }

  currentItem(): BatchItem | null {
    if (!this.batch || this.index >= this.batch.items.length) return null;
    return this.batch.items[this.index] ?? null;
  }

  async loadNextBatch(): Promise<FormView> {
    this.phase = "loading";
    this.error = null;
    try {
      this.batch = await this.api.nextBatch(this.raterId);
    } catch (err) {
      // keep whatever was on screen; the caller shows a retry banner
      this.phase = "error";
      this.error = messageOf(err);
      return this.view();
    }
    this.index = 0;
    this.scores = {};
    this.phase = this.batch.items.length === 0 ? "done" : "rating";
    return this.view();
  }

  setScore(criterion: Criterion, value: number): void {
    assertValidScore(value);
    if (!this.currentItem()) return;
    this.scores[criterion] = value;
  }

  clearScore(criterion: Criterion): void {
    delete this.scores[criterion];
  }

  private allScoresSet(): boolean {
    return CRITERIA.every((criterion) => this.scores[criterion] !== undefined);
  }

  // Builds the POST body from the explicitly selected values only; throws if
  // any criterion is unset so a submission can never fabricate a score.
  private buildPayload(item: BatchItem): RatingPayload {
    const scores = {} as Record<Criterion, number>;
    for (const criterion of CRITERIA) {
      const value = this.scores[criterion];
      if (value === undefined) {
        throw new Error(`criterion ${criterion} has no selected score`);
      }
      assertValidScore(value);
      scores[criterion] = value;
    }
    return { rater_id: this.raterId, target_id: item.target_id, scores };
  }

  async submit(): Promise<FormView> {
    const item = this.currentItem();
    if (!item || this.inFlight || !this.allScoresSet()) {
      return this.view(); // submit is a no-op unless the form is complete
    }
    const payload = this.buildPayload(item);
    this.inFlight = true;
    this.error = null;
    try {
      await this.api.submitRating(payload);
    } catch (err) {
      // 400s and transport errors both preserve the form for correction
      this.error = messageOf(err);
      return this.view();
    } finally {
      this.inFlight = false;
    }
    this.scores = {};
    this.index += 1;
    if (this.index >= (this.batch?.items.length ?? 0)) {
      return this.loadNextBatch();
    }
    return this.view();
  }
}

function messageOf(err: unknown): string {
  if (err instanceof Error) return err.message;
  return String(err);
}
