// Wire types mirroring the session service JSON.

export type WireAnswer = "yes" | "no" | "not_sure";

export type SessionState = "awaiting_answer" | "ready_for_question" | "finished";

export interface PendingQuestion {
  entity: string;
  text: string;
}

export interface SessionHandle {
  session_id: string;
  topic_id: string;
  stop_ratio: number;
  state: SessionState;
  question: PendingQuestion | null;
  questions_asked: number;
  questions_remaining: number;
  budget: number;
  pool_exhausted: boolean;
  stalled: boolean;
}

export interface RankingItem {
  rank: number;
  doc_index: number;
  external_id: string;
  title: string;
  score: number;
}

export interface RankingResponse {
  items: RankingItem[];
  total: number;
  k: number;
}

export interface TranscriptRow {
  entity: string;
  answer: WireAnswer;
  last_rel_after?: number;
}

export interface TopicInfo {
  topic_id: string;
  title: string;
  checkpoint_stop_ratios: number[];
}
