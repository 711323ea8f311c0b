/**
 * Reviewer-facing screening board: a polled pending queue with
 * approve/reject controls and the day's acceptance rate.
 *
 * The board is a thin view over the API: the queue is whatever
 * /v1/screening/pending last returned, and the rate figure is read back
 * from /v1/stats after every verdict rather than counted locally.
 */

import { ApiClient, ApiError, Artifact, Verdict, describeError } from "./api.js";

export interface ReviewBoardOptions {
  /** Pending-queue page size sent to the API. */
  limit?: number;
  /** Queue poll interval; the default matches a human review cadence. */
  pollMs?: number;
}

const DEFAULT_POLL_MS = 2000;

/** Error codes that mean another reviewer got there first (or the
 * artifact is gone); the fix is a refresh, not an error banner. */
const RACE_CODES = new Set(["already_reviewed", "not_eligible", "unknown_artifact"]);

export class ReviewBoard {
  pending: Artifact[] = [];
  acceptanceRate: number | null = null;
  error: string | null = null;
  refreshing = false;
  private readonly inFlight = new Set<string>();
  private timer: ReturnType<typeof setInterval> | null = null;

  constructor(
    private readonly api: ApiClient,
    private readonly options: ReviewBoardOptions = {},
  ) {}

  get acceptanceRateText(): string {
    if (this.acceptanceRate === null) return "n/a";
    return `${Math.round(this.acceptanceRate * 1000) / 10}%`;
  }

  /** True while a verdict for this artifact is being acknowledged. */
  isDeciding(artifactId: string): boolean {
    return this.inFlight.has(artifactId);
  }

  async refresh(): Promise<void> {
    this.refreshing = true;
    try {
      const [pending, stats] = await Promise.all([
        this.api.pending(this.options.limit),
        this.api.stats(),
      ]);
      this.pending = pending;
      this.acceptanceRate = stats.acceptance_rate_today;
      this.error = null;
    } catch (err) {
      this.error = describeError(err);
    } finally {
      this.refreshing = false;
    }
  }

  approve(artifactId: string, editedText?: string): Promise<boolean> {
    return this.decide(artifactId, "approve", editedText);
  }

  reject(artifactId: string): Promise<boolean> {
    return this.decide(artifactId, "reject");
  }

  /** Post one verdict. Returns true when this board's verdict won; a
   * race lost to another reviewer refreshes the queue and returns false.
   * Verdicts are serialized per artifact: a second call while one is in
   * flight is ignored. */
  private async decide(
    artifactId: string,
    verdict: Verdict,
    editedText?: string,
  ): Promise<boolean> {
    if (this.inFlight.has(artifactId)) return false;
    this.inFlight.add(artifactId);
    try {
      await this.api.postVerdict(artifactId, verdict, editedText);
    } catch (err) {
      if (err instanceof ApiError && RACE_CODES.has(err.code)) {
        await this.refresh();
        return false;
      }
      this.error = describeError(err);
      return false;
    } finally {
      this.inFlight.delete(artifactId);
    }
    // acknowledged: the artifact leaves the queue at once
    this.pending = this.pending.filter((a) => a.artifact_id !== artifactId);
    try {
      const stats = await this.api.stats();
      this.acceptanceRate = stats.acceptance_rate_today;
      this.error = null;
    } catch (err) {
      this.error = describeError(err);
    }
    return true;
  }

  startPolling(): void {
    if (this.timer !== null) return;
    const interval = this.options.pollMs ?? DEFAULT_POLL_MS;
    this.timer = setInterval(() => {
      if (!this.refreshing) void this.refresh();
    }, interval);
  }

  stopPolling(): void {
    if (this.timer !== null) {
      clearInterval(this.timer);
      this.timer = null;
    }
  }
}
