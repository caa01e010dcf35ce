import type { SessionTurn } from './state';

// One JSON object per line, candidate first: the exact shape the eval CLI
// reads back (references get added to each line before scoring).
export function sessionToJsonl(turns: SessionTurn[]): string {
  return turns
    .map((turn) => JSON.stringify({ candidate: turn.answer, question: turn.question }) + '\n')
    .join('');
}

export function exportFileName(now: Date): string {
  const stamp = now.toISOString().replace(/[:.]/g, '-');
  return `courseqa-session-${stamp}.jsonl`;
}
