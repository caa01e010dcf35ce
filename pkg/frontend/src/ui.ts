import { canSend, exportableTurns, type SessionState, type SessionTurn } from './state';

export interface UiHandlers {
  onSend: (text: string) => void;
  onExport: () => void;
  onRetry: (turnIndex: number) => void;
  onServerUrlChange: (url: string) => void;
}

export interface UiRefs {
  document: Document;
  root: HTMLElement;
  serverInput: HTMLInputElement;
  connectionEl: HTMLElement;
  exportButton: HTMLButtonElement;
  turnsEl: HTMLElement;
  questionInput: HTMLInputElement;
  sendButton: HTMLButtonElement;
  handlers: UiHandlers;
}

export function buildUi(document: Document, mount: HTMLElement, handlers: UiHandlers): UiRefs {
  const root = document.createElement('div');
  root.className = 'chat-app';

  const header = document.createElement('header');
  const title = document.createElement('h1');
  title.textContent = 'Course Q&A';
  const serverInput = document.createElement('input');
  serverInput.className = 'server-url';
  serverInput.setAttribute('aria-label', 'Server URL');
  serverInput.value = 'http://127.0.0.1:8080';
  const connectionEl = document.createElement('span');
  connectionEl.className = 'connection';
  const exportButton = document.createElement('button');
  exportButton.className = 'export';
  exportButton.textContent = 'Export session';
  header.append(title, serverInput, connectionEl, exportButton);

  const turnsEl = document.createElement('main');
  turnsEl.className = 'turns';

  const form = document.createElement('form');
  form.className = 'composer';
  const questionInput = document.createElement('input');
  questionInput.className = 'question-input';
  questionInput.setAttribute('placeholder', 'Ask about a course...');
  const sendButton = document.createElement('button');
  sendButton.className = 'send';
  sendButton.textContent = 'Send';
  form.append(questionInput, sendButton);

  root.append(header, turnsEl, form);
  mount.append(root);

  serverInput.addEventListener('change', () => handlers.onServerUrlChange(serverInput.value));
  exportButton.addEventListener('click', (event) => {
    event.preventDefault();
    handlers.onExport();
  });
  form.addEventListener('submit', (event) => {
    event.preventDefault();
    handlers.onSend(questionInput.value);
  });

  return {
    document,
    root,
    serverInput,
    connectionEl,
    exportButton,
    turnsEl,
    questionInput,
    sendButton,
    handlers
  };
}

export function render(refs: UiRefs, state: SessionState): void {
  refs.connectionEl.textContent =
    state.connection === 'unknown' ? 'connecting' : `server ${state.connection}`;
  refs.connectionEl.setAttribute('data-connection', state.connection);
  refs.exportButton.disabled = exportableTurns(state).length === 0;
  refs.sendButton.disabled = !canSend(state, refs.questionInput.value);

  refs.turnsEl.replaceChildren();
  state.turns.forEach((turn, index) => {
    refs.turnsEl.append(renderTurn(refs.document, turn, index, refs.handlers));
  });
}

function renderTurn(
  document: Document,
  turn: SessionTurn,
  index: number,
  handlers: UiHandlers
): HTMLElement {
  const item = document.createElement('section');
  item.className = `turn turn-${turn.status}`;

  const question = document.createElement('div');
  question.className = 'bubble question';
  question.textContent = turn.question;
  item.append(question);

  if (turn.status === 'pending') {
    const pending = document.createElement('div');
    pending.className = 'bubble pending';
    pending.textContent = '...';
    item.append(pending);
    return item;
  }

  if (turn.error !== null || turn.status === 'failed') {
    const banner = document.createElement('div');
    banner.className = 'error-banner';
    banner.textContent = turn.error ?? 'request failed';
    item.append(banner);
  }

  if (turn.status === 'failed') {
    const retry = document.createElement('button');
    retry.className = 'retry';
    retry.textContent = 'Retry';
    retry.addEventListener('click', () => handlers.onRetry(index));
    item.append(retry);
    return item;
  }

  if (turn.answer !== '') {
    const answer = document.createElement('div');
    answer.className = 'bubble answer';
    answer.textContent = turn.answer;
    if (turn.latencyMs !== null) answer.setAttribute('data-latency-ms', String(turn.latencyMs));
    item.append(answer);
  }

  if (turn.sources.length > 0) {
    item.append(renderSources(document, turn.sources));
  }
  return item;
}

function renderSources(document: Document, sources: SessionTurn['sources']): HTMLElement {
  // Collapsed by default; provenance stays one click away.
  const details = document.createElement('details');
  details.className = 'sources';
  const summary = document.createElement('summary');
  summary.textContent = `Sources (${sources.length})`;
  details.append(summary);

  const list = document.createElement('ol');
  for (const source of sources) {
    const entry = document.createElement('li');
    entry.className = 'source';
    entry.setAttribute('data-rank', String(source.rank));

    const label = document.createElement('code');
    label.className = 'chunk-id';
    label.textContent = source.chunk_id;
    const badge = document.createElement('span');
    badge.className = 'score-badge';
    badge.textContent = source.score.toFixed(4);
    const text = document.createElement('div');
    text.className = 'source-text';
    text.textContent = source.text;

    entry.append(label, badge, text);
    list.append(entry);
  }
  details.append(list);
  return details;
}
