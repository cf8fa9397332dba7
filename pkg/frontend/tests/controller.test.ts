import { describe, expect, it } from "vitest";

import { ApiError, ServiceClient } from "../src/api.js";
import { SessionController } from "../src/controller.js";
import { renderSession } from "../src/render.js";
import type {
  RankingResponse,
  SessionHandle,
  TranscriptRow,
  WireAnswer,
} from "../src/types.js";

function handle(overrides: Partial<SessionHandle> = {}): SessionHandle {
  return {
    session_id: "s1",
    topic_id: "t0",
    stop_ratio: 0.3,
    state: "awaiting_answer",
    question: { entity: "HPV", text: "Are the documents you are interested in about HPV?" },
    questions_asked: 0,
    questions_remaining: 5,
    budget: 5,
    pool_exhausted: false,
    stalled: false,
    ...overrides,
  };
}

interface FakeOptions {
  failCreate?: boolean;
  answerDelayMs?: number;
  conflictAfter?: number;
}

/** In-memory stand-in for the service; one applied answer per postAnswer. */
class FakeClient {
  transcript: TranscriptRow[] = [];
  postCalls = 0;
  rankingVersion = 0;
  private keys = new Map<string, SessionHandle>();

  constructor(private readonly options: FakeOptions = {}) {}

  private currentHandle(): SessionHandle {
    const asked = this.transcript.length;
    return handle({
      questions_asked: asked,
      questions_remaining: 5 - asked,
      state: asked >= 5 ? "finished" : "awaiting_answer",
      question: asked >= 5 ? null : { entity: `e${asked}`, text: `Are the documents you are interested in about e${asked}?` },
    });
  }

  async listTopics() {
    return [{ topic_id: "t0", title: "demo", checkpoint_stop_ratios: [0.3] }];
  }

  async createSession(): Promise<SessionHandle> {
    if (this.options.failCreate) throw new ApiError(404, "no review checkpoint for topic t0");
    return this.currentHandle();
  }

  async getSession(): Promise<SessionHandle> {
    return this.currentHandle();
  }

  async postAnswer(_id: string, answer: WireAnswer, key: string): Promise<SessionHandle> {
    this.postCalls += 1;
    if (this.options.answerDelayMs) {
      await new Promise((resolve) => setTimeout(resolve, this.options.answerDelayMs));
    }
    const stored = this.keys.get(key);
    if (stored) return stored;
    if (this.options.conflictAfter !== undefined && this.transcript.length >= this.options.conflictAfter) {
      throw new ApiError(409, "session is finished, not awaiting an answer");
    }
    this.transcript.push({ entity: `e${this.transcript.length}`, answer });
    if (answer !== "not_sure") this.rankingVersion += 1;
    const response = this.currentHandle();
    this.keys.set(key, response);
    return response;
  }

  async getRanking(): Promise<RankingResponse> {
    const items = [0, 1, 2].map((i) => ({
      rank: i + 1,
      doc_index: (i + this.rankingVersion * 3) % 7,
      external_id: `d${(i + this.rankingVersion * 3) % 7}`,
      title: `doc ${(i + this.rankingVersion * 3) % 7}`,
      score: 0.5 / (i + 1 + this.rankingVersion),
    }));
    return { items, total: 7, k: 3 };
  }

  async getTranscript(): Promise<TranscriptRow[]> {
    return [...this.transcript];
  }
}

function controllerWith(fake: FakeClient): SessionController {
  return new SessionController(fake as unknown as ServiceClient, 3);
}

describe("SessionController", () => {
  it("start populates the view from service responses only", async () => {
    const fake = new FakeClient();
    const controller = controllerWith(fake);
    const view = await controller.start("t0", 0.3, 5);
    expect(view.phase).toBe("awaiting_answer");
    expect(view.question?.text).toContain("Are the documents you are interested in about");
    expect(view.ranking).toHaveLength(3);
    expect(view.canAnswer).toBe(true);
  });

  it("service error on start raises a banner, not a crash", async () => {
    const controller = controllerWith(new FakeClient({ failCreate: true }));
    const view = await controller.start("t0", 0.3, 5);
    expect(view.phase).toBe("error");
    expect(view.banner).toContain("no review checkpoint");
  });

  it("submit advances the transcript and progress", async () => {
    const fake = new FakeClient();
    const controller = controllerWith(fake);
    await controller.start("t0", 0.3, 5);
    const view = await controller.submit("yes");
    expect(view.questionsAsked).toBe(1);
    expect(view.transcript).toEqual([{ entity: "e0", answer: "yes" }]);
    expect(view.questionsRemaining).toBe(4);
  });

  it("double click applies exactly one answer", async () => {
    const fake = new FakeClient({ answerDelayMs: 20 });
    const controller = controllerWith(fake);
    await controller.start("t0", 0.3, 5);
    await Promise.all([controller.submit("yes"), controller.submit("yes")]);
    expect(fake.transcript).toHaveLength(1);
    expect(fake.postCalls).toBe(1); // second click never left the browser
  });

  it("buttons are disabled while a request is in flight", async () => {
    const fake = new FakeClient({ answerDelayMs: 20 });
    const controller = controllerWith(fake);
    await controller.start("t0", 0.3, 5);
    const states: boolean[] = [];
    controller.onChange = (view) => states.push(view.canAnswer);
    const pending = controller.submit("no");
    expect(controller.getView().canAnswer).toBe(false);
    await pending;
    expect(controller.getView().canAnswer).toBe(true);
    expect(states.some((s) => !s)).toBe(true);
  });

  it("session finishes after the budget is spent", async () => {
    const fake = new FakeClient();
    const controller = controllerWith(fake);
    await controller.start("t0", 0.3, 5);
    for (const answer of ["yes", "no", "not_sure", "yes", "no"] as const) {
      await controller.submit(answer);
    }
    const view = controller.getView();
    expect(view.phase).toBe("finished");
    expect(view.canAnswer).toBe(false);
    expect(view.transcript).toHaveLength(5);
    // further submissions are ignored locally
    await controller.submit("yes");
    expect(fake.transcript).toHaveLength(5);
  });

  it("409 conflicts surface inline and resynchronize", async () => {
    const fake = new FakeClient({ conflictAfter: 0 });
    const controller = controllerWith(fake);
    await controller.start("t0", 0.3, 5);
    const view = await controller.submit("yes");
    expect(view.banner).toContain("not awaiting");
    expect(view.phase).not.toBe("error"); // recoverable, stays interactive
  });

  it("each question gets a fresh idempotency key", async () => {
    const fake = new FakeClient();
    const controller = controllerWith(fake);
    await controller.start("t0", 0.3, 5);
    await controller.submit("yes");
    await controller.submit("no");
    expect(fake.transcript).toHaveLength(2); // distinct keys applied separately
  });
});

describe("renderSession", () => {
  it("renders the question verbatim and escapes entities", async () => {
    const fake = new FakeClient();
    const controller = controllerWith(fake);
    const view = await controller.start("t0", 0.3, 5);
    const html = renderSession(view);
    expect(html).toContain("Are the documents you are interested in about e0?");
    expect(html).toContain('data-answer="not_sure"');
  });

  it("disables buttons when answering is not possible", async () => {
    const controller = controllerWith(new FakeClient({ failCreate: true }));
    const view = await controller.start("t0", 0.3, 5);
    const html = renderSession(view);
    expect(html).toContain("banner");
    expect(html).not.toContain('data-answer="yes"'); // no question card at all
  });

  it("transcript rows appear in order with answers", async () => {
    const fake = new FakeClient();
    const controller = controllerWith(fake);
    await controller.start("t0", 0.3, 5);
    await controller.submit("yes");
    await controller.submit("not_sure");
    const html = renderSession(controller.getView());
    expect(html.indexOf("e0")).toBeGreaterThan(-1);
    expect(html.indexOf("e0")).toBeLessThan(html.indexOf("e1"));
    expect(html).toContain("not sure");
  });
});
