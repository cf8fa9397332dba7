// Session state machine. One active session, optimistic UI disabled: every
// number on screen comes from a service response, and answer submission is
// guarded so a double click can apply at most one answer.

import { ApiError, ServiceClient } from "./api.js";
import type {
  PendingQuestion,
  RankingItem,
  SessionHandle,
  TranscriptRow,
  WireAnswer,
} from "./types.js";

export type Phase =
  | "idle"
  | "starting"
  | "awaiting_answer"
  | "submitting"
  | "finished"
  | "error";

export interface SessionView {
  phase: Phase;
  sessionId: string | null;
  topicId: string | null;
  question: PendingQuestion | null;
  questionsAsked: number;
  questionsRemaining: number;
  budget: number;
  poolExhausted: boolean;
  transcript: TranscriptRow[];
  ranking: RankingItem[];
  totalCandidates: number;
  banner: string | null;
  canAnswer: boolean;
}

const INITIAL_VIEW: SessionView = {
  phase: "idle",
  sessionId: null,
  topicId: null,
  question: null,
  questionsAsked: 0,
  questionsRemaining: 0,
  budget: 0,
  poolExhausted: false,
  transcript: [],
  ranking: [],
  totalCandidates: 0,
  banner: null,
  canAnswer: false,
};

function describeError(error: unknown): string {
  if (error instanceof ApiError) return error.detail;
  if (error instanceof Error) return error.message;
  return String(error);
}

export class SessionController {
  private view: SessionView = { ...INITIAL_VIEW };
  private inFlight = false;
  private answerSeq = 0;

  onChange: ((view: SessionView) => void) | null = null;

  constructor(
    private readonly client: ServiceClient,
    private readonly topK: number = 20,
  ) {}

  getView(): SessionView {
    return {
      ...this.view,
      transcript: [...this.view.transcript],
      ranking: [...this.view.ranking],
    };
  }

  private update(patch: Partial<SessionView>): void {
    this.view = { ...this.view, ...patch };
    this.view.canAnswer =
      this.view.phase === "awaiting_answer" && !this.inFlight && this.view.question !== null;
    if (this.onChange) this.onChange(this.getView());
  }

  private applyHandle(handle: SessionHandle): void {
    this.update({
      sessionId: handle.session_id,
      topicId: handle.topic_id,
      question: handle.question,
      questionsAsked: handle.questions_asked,
      questionsRemaining: handle.questions_remaining,
      budget: handle.budget,
      poolExhausted: handle.pool_exhausted,
      phase: handle.state === "finished" ? "finished" : "awaiting_answer",
    });
  }

  // The transcript panel is append-only: a refresh may extend what is shown,
  // never rewrite it.
  private mergeTranscript(incoming: TranscriptRow[]): TranscriptRow[] {
    const shown = this.view.transcript;
    if (incoming.length < shown.length) {
      throw new Error("transcript regression: service returned fewer rows than displayed");
    }
    shown.forEach((row, i) => {
      const next = incoming[i];
      if (!next || next.entity !== row.entity || next.answer !== row.answer) {
        throw new Error(`transcript rewrite at row ${i}`);
      }
    });
    return incoming;
  }

  private async refreshPanels(): Promise<void> {
    const sessionId = this.view.sessionId;
    if (!sessionId) return;
    const [ranking, transcript] = await Promise.all([
      this.client.getRanking(sessionId, this.topK),
      this.client.getTranscript(sessionId),
    ]);
    this.update({
      ranking: ranking.items,
      totalCandidates: ranking.total,
      transcript: this.mergeTranscript(transcript),
    });
  }

  async start(topicId: string, stopRatio: number, budget: number, revealRanks = false): Promise<SessionView> {
    if (this.inFlight) return this.getView();
    this.inFlight = true;
    this.update({ ...INITIAL_VIEW, phase: "starting" });
    try {
      const handle = await this.client.createSession({
        topic_id: topicId,
        stop_ratio: stopRatio,
        n_questions: budget,
        reveal_ranks: revealRanks,
        idempotency_key: `start:${topicId}:${stopRatio}:${budget}:${Date.now()}:${Math.random()}`,
      });
      this.applyHandle(handle);
      await this.refreshPanels();
    } catch (error) {
      this.update({ phase: "error", banner: describeError(error) });
    } finally {
      this.inFlight = false;
      this.update({});
    }
    return this.getView();
  }

  async submit(answer: WireAnswer): Promise<SessionView> {
    // Double-click guard: a second call while a request is in flight (or
    // with no pending question) is dropped without touching the service.
    if (this.inFlight || this.view.phase !== "awaiting_answer" || !this.view.sessionId) {
      return this.getView();
    }
    this.inFlight = true;
    const sessionId = this.view.sessionId;
    const key = `${sessionId}:answer:${this.answerSeq}`;
    this.update({ phase: "submitting", banner: null });
    try {
      const handle = await this.client.postAnswer(sessionId, answer, key);
      this.answerSeq += 1;
      this.applyHandle(handle);
      await this.refreshPanels();
    } catch (error) {
      if (error instanceof ApiError && (error.status === 409 || error.status === 400)) {
        // Surface inline and resynchronize with the server's view.
        this.update({ banner: describeError(error) });
        try {
          this.applyHandle(await this.client.getSession(sessionId));
        } catch {
          /* keep the original banner */
        }
      } else {
        this.update({ phase: "error", banner: describeError(error) });
      }
    } finally {
      this.inFlight = false;
      this.update({});
    }
    return this.getView();
  }

  async retry(): Promise<SessionView> {
    if (this.inFlight) return this.getView();
    const sessionId = this.view.sessionId;
    if (!sessionId) {
      this.update({ ...INITIAL_VIEW });
      return this.getView();
    }
    this.inFlight = true;
    try {
      this.applyHandle(await this.client.getSession(sessionId));
      await this.refreshPanels();
      this.update({ banner: null });
    } catch (error) {
      this.update({ phase: "error", banner: describeError(error) });
    } finally {
      this.inFlight = false;
      this.update({});
    }
    return this.getView();
  }
}
