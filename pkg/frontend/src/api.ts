export interface SourceChunk {
  chunk_id: string;
  score: number;
  rank: number;
  text: string;
}

export interface TurnResponse {
  turn_id: string;
  timestamp: string;
  question: string;
  retrieved: SourceChunk[];
  prompt: string;
  answer: string;
  generator_id: string;
  latency_ms: number;
  error: string | null;
}

export interface HealthReport {
  status: string;
  index_size: number;
  embedder: 'ok' | 'down';
  generator: 'ok' | 'down';
}

// 'answered' is a clean 200; 'degraded' is the 502 contract where the server
// still returns the full turn so the sources stay visible; 'failed' means no
// usable response at all (network error or an unexpected status).
export type AskResult =
  | { kind: 'answered'; turn: TurnResponse }
  | { kind: 'degraded'; turn: TurnResponse }
  | { kind: 'failed'; message: string };

export function normalizeBaseUrl(raw: string): string {
  return raw.trim().replace(/\/+$/, '');
}

export async function askQuestion(baseUrl: string, question: string, k?: number): Promise<AskResult> {
  const body: { question: string; k?: number } = { question };
  if (k !== undefined) body.k = k;
  let resp: Response;
  try {
    resp = await fetch(`${normalizeBaseUrl(baseUrl)}/v1/ask`, {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify(body)
    });
  } catch (err) {
    return { kind: 'failed', message: err instanceof Error ? err.message : String(err) };
  }
  if (resp.status === 200 || resp.status === 502) {
    let turn: TurnResponse;
    try {
      turn = (await resp.json()) as TurnResponse;
    } catch {
      return { kind: 'failed', message: `unreadable response (HTTP ${resp.status})` };
    }
    return resp.status === 200 ? { kind: 'answered', turn } : { kind: 'degraded', turn };
  }
  return { kind: 'failed', message: `HTTP ${resp.status}` };
}

export async function checkHealth(baseUrl: string): Promise<HealthReport | null> {
  try {
    const resp = await fetch(`${normalizeBaseUrl(baseUrl)}/health`);
    if (!resp.ok) return null;
    return (await resp.json()) as HealthReport;
  } catch {
    return null;
  }
}
