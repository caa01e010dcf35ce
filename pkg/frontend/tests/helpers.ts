import { JSDOM } from 'jsdom';
import type { SourceChunk, TurnResponse } from '../src/api';

export function makeDocument(): Document {
  return new JSDOM('<!doctype html><html><body></body></html>').window.document;
}

export function makeSource(rank: number, overrides: Partial<SourceChunk> = {}): SourceChunk {
  return {
    chunk_id: `ds:${rank - 1}:0`,
    score: 1 - rank * 0.1,
    rank,
    text: `chunk text ${rank}`,
    ...overrides
  };
}

export function makeTurnResponse(overrides: Partial<TurnResponse> = {}): TurnResponse {
  return {
    turn_id: 'turn-1',
    timestamp: '2026-01-01T00:00:00.000Z',
    question: 'What is routing?',
    retrieved: [makeSource(1), makeSource(2)],
    prompt: 'Context:\n...\n\nQuestion: What is routing?\nAnswer:',
    answer: 'Routing selects packet paths.',
    generator_id: 'stub',
    latency_ms: 12,
    error: null,
    ...overrides
  };
}
