import { askQuestion, checkHealth } from './api';
import { exportFileName, sessionToJsonl } from './exporter';
import {
  beginTurn,
  canSend,
  completeTurn,
  createSession,
  exportableTurns,
  setConnection,
  setServerUrl,
  type SessionState
} from './state';
import { buildUi, render, type UiRefs } from './ui';

function downloadJsonl(document: Document, content: string, name: string): void {
  const blob = new Blob([content], { type: 'application/jsonl' });
  const url = URL.createObjectURL(blob);
  const anchor = document.createElement('a');
  anchor.href = url;
  anchor.download = name;
  anchor.click();
  URL.revokeObjectURL(url);
}

export function startApp(document: Document, mount: HTMLElement): void {
  let state: SessionState = createSession('http://127.0.0.1:8080');
  let refs: UiRefs;

  const repaint = () => render(refs, state);

  const send = async (text: string) => {
    if (!canSend(state, text)) return;
    state = beginTurn(state, text);
    refs.questionInput.value = '';
    repaint();
    const result = await askQuestion(state.serverUrl, text.trim());
    state = completeTurn(state, result);
    repaint();
  };

  refs = buildUi(document, mount, {
    onSend: (text) => void send(text),
    onExport: () => {
      const turns = exportableTurns(state);
      if (turns.length === 0) return;
      downloadJsonl(document, sessionToJsonl(turns), exportFileName(new Date()));
    },
    onRetry: (turnIndex) => void send(state.turns[turnIndex].question),
    onServerUrlChange: (url) => {
      state = setServerUrl(state, url);
      repaint();
      void probe();
    }
  });

  const probe = async () => {
    const health = await checkHealth(state.serverUrl);
    state = setConnection(state, health !== null && health.status === 'ok');
    repaint();
  };

  refs.questionInput.addEventListener('input', repaint);
  refs.serverInput.value = state.serverUrl;
  repaint();
  void probe();
}
