// Thin fetch client for the session service. All belief math stays on the
// server; this module only moves JSON.

import type {
  RankingResponse,
  SessionHandle,
  TopicInfo,
  TranscriptRow,
  WireAnswer,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
    this.name = "ApiError";
  }
}

async function asJson<T>(response: Response): Promise<T> {
  if (!response.ok) {
    let detail = response.statusText;
    try {
      const body = (await response.json()) as { detail?: string };
      if (body && typeof body.detail === "string") detail = body.detail;
    } catch {
      // non-JSON error body; keep the status text
    }
    throw new ApiError(response.status, detail);
  }
  return (await response.json()) as T;
}

export interface CreateSessionRequest {
  topic_id: string;
  stop_ratio: number;
  n_questions: number;
  reveal_ranks?: boolean;
  idempotency_key?: string;
}

export class ServiceClient {
  constructor(private readonly baseUrl: string) {}

  private url(path: string): string {
    return this.baseUrl.replace(/\/$/, "") + path;
  }

  listTopics(): Promise<TopicInfo[]> {
    return fetch(this.url("/topics")).then((r) => asJson<TopicInfo[]>(r));
  }

  createSession(request: CreateSessionRequest): Promise<SessionHandle> {
    return fetch(this.url("/sessions"), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(request),
    }).then((r) => asJson<SessionHandle>(r));
  }

  getSession(sessionId: string): Promise<SessionHandle> {
    return fetch(this.url(`/sessions/${sessionId}`)).then((r) => asJson<SessionHandle>(r));
  }

  postAnswer(sessionId: string, answer: WireAnswer, idempotencyKey: string): Promise<SessionHandle> {
    return fetch(this.url(`/sessions/${sessionId}/answer`), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ answer, idempotency_key: idempotencyKey }),
    }).then((r) => asJson<SessionHandle>(r));
  }

  getRanking(sessionId: string, k: number): Promise<RankingResponse> {
    return fetch(this.url(`/sessions/${sessionId}/ranking?k=${k}`)).then((r) =>
      asJson<RankingResponse>(r),
    );
  }

  getTranscript(sessionId: string): Promise<TranscriptRow[]> {
    return fetch(this.url(`/sessions/${sessionId}/transcript`)).then((r) =>
      asJson<TranscriptRow[]>(r),
    );
  }
}
