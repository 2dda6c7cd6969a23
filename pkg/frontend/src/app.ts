/**
 * Browser entry point: wires DOM events to the state machine and re-renders
 * the page after every event. All service traffic goes through the injected
 * client; nothing here computes answers locally.
 */

import { createClient, ServiceError, type ServiceClient } from './api.js';
import { renderApp } from './render.js';
import { canSend, currentCitations, initialState, reduce, type UiEvent } from './state.js';
import type { RetrievalMode, Scope, UiState } from './types.js';

const JOB_POLL_MS = 1000;

function serviceBaseUrl(): string {
  // same-origin by default; override via <meta name="litrag-service" content="...">
  const meta = document.querySelector('meta[name="litrag-service"]');
  return meta?.getAttribute('content') || window.location.origin;
}

export class App {
  private state: UiState = initialState();

  constructor(
    private readonly client: ServiceClient,
    private readonly root: { innerHTML: string },
  ) {}

  get view(): UiState {
    return this.state;
  }

  dispatch(event: UiEvent): void {
    this.state = reduce(this.state, event);
    this.root.innerHTML = renderApp(this.state);
  }

  private fail(error: unknown): void {
    if (error instanceof ServiceError) {
      this.dispatch({ type: 'request_failed', message: error.message, status: error.status });
    } else {
      this.dispatch({
        type: 'request_failed',
        message: 'service unreachable',
        status: null,
      });
    }
  }

  async checkHealth(): Promise<void> {
    try {
      const health = await this.client.health();
      this.dispatch({
        type: 'health_checked',
        ok: health.status === 'ok',
        indexLoaded: health.index_loaded,
      });
      await this.refreshDocuments();
    } catch {
      this.dispatch({ type: 'health_checked', ok: false, indexLoaded: false });
    }
  }

  async refreshDocuments(): Promise<void> {
    try {
      const documents = await this.client.listDocuments();
      this.dispatch({ type: 'documents_loaded', documents });
    } catch (error) {
      this.fail(error);
    }
  }

  async upload(filename: string, text: string): Promise<void> {
    try {
      await this.client.uploadDocument(filename, text);
      await this.refreshDocuments();
    } catch (error) {
      this.fail(error);
    }
  }

  async build(): Promise<void> {
    try {
      const jobId = await this.client.startBuild();
      this.dispatch({ type: 'build_started', jobId });
      const job = await this.client.waitForJob(jobId, {
        intervalMs: JOB_POLL_MS,
        onProgress: (j) =>
          this.dispatch({
            type: 'build_progress',
            jobState: j.state,
            progress: j.progress,
            error: j.error ?? null,
          }),
      });
      if (job.state === 'failed') {
        this.dispatch({
          type: 'request_failed',
          message: job.error ?? 'build failed',
          status: 500,
        });
      }
    } catch (error) {
      this.fail(error);
    }
  }

  setScope(scope: Scope): void {
    this.dispatch({ type: 'scope_changed', scope });
  }

  setMode(mode: RetrievalMode): void {
    this.dispatch({ type: 'mode_selected', mode });
  }

  /** Lazily create the session so it pins the doc_filter active at first send. */
  private async ensureSession(): Promise<string> {
    if (this.state.sessionId) return this.state.sessionId;
    const docFilter =
      this.state.scope.kind === 'single_paper' ? [this.state.scope.docId] : undefined;
    const sessionId = await this.client.createSession(this.state.selectedMode, docFilter);
    this.dispatch({ type: 'session_created', sessionId });
    return sessionId;
  }

  async send(query: string): Promise<void> {
    const trimmed = query.trim();
    if (!trimmed || !canSend(this.state)) return;
    this.dispatch({ type: 'query_sent', query: trimmed });
    try {
      const sessionId = await this.ensureSession();
      const started = performance.now();
      const response = await this.client.sendMessage(sessionId, trimmed, this.state.selectedMode);
      this.dispatch({
        type: 'answer_received',
        query: trimmed,
        response,
        latencyMs: performance.now() - started,
      });
    } catch (error) {
      this.fail(error);
    }
  }

  async openSource(index: number): Promise<void> {
    const citation = currentCitations(this.state)[index];
    if (!citation) return;
    this.dispatch({ type: 'source_opened', citation });
    try {
      const chunk = await this.client.getChunk(citation.doc_id, citation.chunk_id);
      this.dispatch({ type: 'source_loaded', text: chunk.text });
    } catch (error) {
      this.fail(error);
    }
  }
}

function bind(app: App, root: HTMLElement): void {
  root.addEventListener('submit', (event) => {
    const form = (event.target as HTMLElement).closest('form');
    if (!form) return;
    event.preventDefault();
    const action = form.getAttribute('data-action');
    if (action === 'upload') {
      const data = new FormData(form);
      void app.upload(String(data.get('filename') ?? ''), String(data.get('text') ?? ''));
    } else if (action === 'send') {
      const input = form.querySelector<HTMLInputElement>('.input-row__query');
      if (input) void app.send(input.value);
    }
  });

  root.addEventListener('click', (event) => {
    const el = (event.target as HTMLElement).closest('[data-action]');
    if (!el || el instanceof HTMLSelectElement) return;
    const action = el.getAttribute('data-action');
    if (action === 'build') void app.build();
    else if (action === 'retry-health') void app.checkHealth();
    else if (action === 'dismiss-toast') app.dispatch({ type: 'toast_cleared' });
    else if (action === 'open-source') {
      const index = Number(el.getAttribute('data-index'));
      if (!Number.isNaN(index)) void app.openSource(index);
    }
  });

  root.addEventListener('change', (event) => {
    const el = event.target as HTMLElement;
    const action = el.getAttribute('data-action');
    if (action === 'mode' && el instanceof HTMLSelectElement) {
      app.setMode(el.value as RetrievalMode);
    } else if (action === 'scope' && el instanceof HTMLSelectElement) {
      app.setScope(
        el.value ? { kind: 'single_paper', docId: el.value } : { kind: 'database' },
      );
    }
  });
}

export function mount(root: HTMLElement): App {
  const app = new App(createClient(serviceBaseUrl()), root);
  bind(app, root);
  app.dispatch({ type: 'toast_cleared' }); // initial render
  void app.checkHealth();
  return app;
}

const rootEl = typeof document !== 'undefined' ? document.getElementById('app') : null;
if (rootEl) mount(rootEl);
