/**
 * Typed client for the review REST contract plus an offline-safe outbox.
 *
 * A decision's (sample_id, reviewer, timestamp) triple is fixed when the
 * draft is created and never changes across retries; the server deduplicates
 * on that key, which is what makes redelivery after a reconnect exactly-once.
 */

import type {
  Decision,
  DecisionResponse,
  QueuePage,
  SampleDetail,
  StatsResponse,
} from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    public status: number,
    message: string,
  ) {
    super(message);
  }
}

export class ApiClient {
  constructor(
    private baseUrl: string = "",
    private fetchFn: FetchLike = (...args) => fetch(...args),
  ) {}

  private async json<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchFn(this.baseUrl + path, init);
    if (!response.ok) {
      throw new ApiError(response.status, await response.text());
    }
    return (await response.json()) as T;
  }

  getQueue(page = 0, pageSize = 20): Promise<QueuePage> {
    return this.json(`/api/queue?page=${page}&page_size=${pageSize}`);
  }

  getSample(sampleId: string): Promise<SampleDetail> {
    return this.json(`/api/sample/${encodeURIComponent(sampleId)}`);
  }

  getStats(): Promise<StatsResponse> {
    return this.json("/api/stats");
  }

  postDecision(decision: Decision): Promise<DecisionResponse> {
    return this.json("/api/decision", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(decision),
    });
  }
}

export interface SubmitResult {
  delivered: boolean;
  deduplicated: boolean;
  pending: number;
}

/**
 * Outbox with retry: failed submissions stay queued (visibly pending) and are
 * redelivered on the next flush, e.g. when connectivity returns.
 */
export class DecisionOutbox {
  private queue: Decision[] = [];

  constructor(
    private client: ApiClient,
    private onChange: (pending: number) => void = () => {},
  ) {}

  get pending(): Decision[] {
    return [...this.queue];
  }

  /** Try to deliver now; on a network failure the decision queues for retry. */
  async submit(decision: Decision): Promise<SubmitResult> {
    try {
      const response = await this.client.postDecision(decision);
      return { delivered: true, deduplicated: response.deduplicated, pending: this.queue.length };
    } catch (err) {
      if (err instanceof ApiError) {
        throw err; // the server rejected it; retrying the same payload cannot help
      }
      this.queue.push(decision);
      this.onChange(this.queue.length);
      return { delivered: false, deduplicated: false, pending: this.queue.length };
    }
  }

  /** Redeliver everything pending, in order; stops at the first network failure. */
  async flush(): Promise<number> {
    let delivered = 0;
    while (this.queue.length > 0) {
      const head = this.queue[0];
      try {
        await this.client.postDecision(head);
      } catch (err) {
        if (!(err instanceof ApiError)) {
          break; // still offline; keep the rest queued
        }
        // server-side rejection: drop it, retrying cannot succeed
      }
      this.queue.shift();
      delivered += 1;
      this.onChange(this.queue.length);
    }
    return delivered;
  }
}
