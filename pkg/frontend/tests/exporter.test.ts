import { spawnSync } from 'node:child_process';
import { mkdtempSync, rmSync, writeFileSync } from 'node:fs';
import { tmpdir } from 'node:os';
import { join } from 'node:path';
import { afterAll, describe, expect, it } from 'vitest';
import { exportFileName, sessionToJsonl } from '../src/exporter';
import type { SessionTurn } from '../src/state';

function turn(question: string, answer: string): SessionTurn {
  return { question, status: 'answered', answer, sources: [], latencyMs: 5, error: null };
}

const workDir = mkdtempSync(join(tmpdir(), 'chat-ui-export-'));

afterAll(() => {
  rmSync(workDir, { recursive: true, force: true });
});

describe('sessionToJsonl', () => {
  it('writes one candidate/question line per turn', () => {
    const jsonl = sessionToJsonl([
      turn('q1?', 'a1.'),
      turn('q2?', 'a2.'),
      turn('q3?', 'a3.')
    ]);
    const lines = jsonl.split('\n').filter((line) => line.length > 0);
    expect(lines).toHaveLength(3);
    expect(jsonl.endsWith('\n')).toBe(true);
    expect(JSON.parse(lines[0])).toEqual({ candidate: 'a1.', question: 'q1?' });
    expect(Object.keys(JSON.parse(lines[1]))).toEqual(['candidate', 'question']);
  });

  it('is byte-identical across repeated exports', () => {
    const turns = [turn('q?', 'an answer.'), turn('p?', 'another.')];
    expect(sessionToJsonl(turns)).toBe(sessionToJsonl(turns));
  });

  it('keeps answers verbatim through the JSON round trip', () => {
    const tricky = 'line one\nline "two" with \\ and unicode: 课程';
    const parsed = JSON.parse(sessionToJsonl([turn('q?', tricky)]).trim());
    expect(parsed.candidate).toBe(tricky);
  });

  it('keeps a degraded turn as an empty candidate', () => {
    const degraded: SessionTurn = {
      question: 'q?',
      status: 'degraded',
      answer: '',
      sources: [],
      latencyMs: 9,
      error: 'gen down'
    };
    expect(JSON.parse(sessionToJsonl([degraded]).trim())).toEqual({
      candidate: '',
      question: 'q?'
    });
  });

  it('round-trips through the eval command', () => {
    const jsonl = sessionToJsonl([
      turn('q1?', 'routing selects packet paths'),
      turn('q2?', 'switching forwards frames'),
      turn('q3?', 'cloud rents elastic resources')
    ]);
    const pairsPath = join(workDir, 'session.jsonl');
    writeFileSync(pairsPath, jsonl, 'utf-8');
    const result = spawnSync('courseqa', ['eval', '--pairs', pairsPath], { encoding: 'utf-8' });
    expect(result.status).toBe(0);
    const report = JSON.parse(result.stdout);
    expect(report.n_pairs).toBe(3);
    expect(report.metrics).toHaveProperty('BLEU');
  });
});

describe('exportFileName', () => {
  it('derives a stable name from the timestamp', () => {
    const name = exportFileName(new Date('2026-02-03T04:05:06.789Z'));
    expect(name).toBe('courseqa-session-2026-02-03T04-05-06-789Z.jsonl');
  });
});
