import type { AskResult, SourceChunk } from './api';

export type TurnStatus = 'pending' | 'answered' | 'degraded' | 'failed';

export interface SessionTurn {
  question: string;
  status: TurnStatus;
  answer: string;
  sources: SourceChunk[];
  latencyMs: number | null;
  error: string | null;
}

export interface SessionState {
  serverUrl: string;
  connection: 'unknown' | 'ok' | 'down';
  turns: SessionTurn[];
  pendingIndex: number | null;
}

// All transitions return a fresh state object so the view stays a pure
// function of the ordered results applied so far.

export function createSession(serverUrl: string): SessionState {
  return { serverUrl, connection: 'unknown', turns: [], pendingIndex: null };
}

export function canSend(state: SessionState, text: string): boolean {
  return text.trim().length > 0 && state.pendingIndex === null;
}

export function setConnection(state: SessionState, up: boolean): SessionState {
  return { ...state, connection: up ? 'ok' : 'down' };
}

export function setServerUrl(state: SessionState, serverUrl: string): SessionState {
  return { ...state, serverUrl, connection: 'unknown' };
}

export function beginTurn(state: SessionState, question: string): SessionState {
  if (!canSend(state, question)) {
    throw new Error('cannot send: empty question or another question in flight');
  }
  const turn: SessionTurn = {
    question: question.trim(),
    status: 'pending',
    answer: '',
    sources: [],
    latencyMs: null,
    error: null
  };
  return { ...state, turns: [...state.turns, turn], pendingIndex: state.turns.length };
}

export function completeTurn(state: SessionState, result: AskResult): SessionState {
  if (state.pendingIndex === null) throw new Error('no pending turn to complete');
  const pending = state.turns[state.pendingIndex];
  let resolved: SessionTurn;
  if (result.kind === 'failed') {
    resolved = { ...pending, status: 'failed', error: result.message };
  } else {
    resolved = {
      ...pending,
      status: result.kind,
      answer: result.turn.answer,
      sources: [...result.turn.retrieved].sort((a, b) => a.rank - b.rank),
      latencyMs: result.turn.latency_ms,
      error: result.turn.error
    };
  }
  const turns = state.turns.slice();
  turns[state.pendingIndex] = resolved;
  return { ...state, turns, pendingIndex: null };
}

export function exportableTurns(state: SessionState): SessionTurn[] {
  return state.turns.filter((t) => t.status === 'answered' || t.status === 'degraded');
}
