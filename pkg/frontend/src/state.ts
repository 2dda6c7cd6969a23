/**
 * UI state machine.
 *
 * The state is a pure function of service responses plus local input: every
 * change flows through reduce(state, event), which returns a fresh state and
 * never mutates its argument. That keeps the whole view snapshot-testable.
 */

import type {
  Citation,
  DocumentInfo,
  JobState,
  MessageResponse,
  RetrievalMode,
  Scope,
  UiState,
} from './types.js';

export function initialState(): UiState {
  return {
    serviceOk: true,
    indexLoaded: false,
    documents: [],
    build: { jobId: null, state: 'idle', progress: 0, error: null },
    scope: { kind: 'database' },
    selectedMode: 'hybrid',
    sessionId: null,
    turns: [],
    pendingQuery: null,
    toast: null,
    needsBuild: false,
    openSource: null,
  };
}

export type UiEvent =
  | { type: 'health_checked'; ok: boolean; indexLoaded: boolean }
  | { type: 'documents_loaded'; documents: DocumentInfo[] }
  | { type: 'build_started'; jobId: string }
  | { type: 'build_progress'; jobState: JobState; progress: number; error: string | null }
  | { type: 'scope_changed'; scope: Scope }
  | { type: 'mode_selected'; mode: RetrievalMode }
  | { type: 'session_created'; sessionId: string }
  | { type: 'query_sent'; query: string }
  | { type: 'answer_received'; query: string; response: MessageResponse; latencyMs: number }
  | { type: 'request_failed'; message: string; status: number | null }
  | { type: 'source_opened'; citation: Citation }
  | { type: 'source_loaded'; text: string }
  | { type: 'source_closed' }
  | { type: 'toast_cleared' };

/** True when the input box should accept a send right now. */
export function canSend(state: UiState): boolean {
  return state.serviceOk && state.pendingQuery === null;
}

/** Citations shown in the sources panel: those of the most recent answer. */
export function currentCitations(state: UiState): Citation[] {
  const last = state.turns[state.turns.length - 1];
  return last ? last.citations : [];
}

export function reduce(state: UiState, event: UiEvent): UiState {
  switch (event.type) {
    case 'health_checked':
      return { ...state, serviceOk: event.ok, indexLoaded: event.indexLoaded };

    case 'documents_loaded':
      return { ...state, documents: event.documents };

    case 'build_started':
      return {
        ...state,
        build: { jobId: event.jobId, state: 'queued', progress: 0, error: null },
        needsBuild: false,
      };

    case 'build_progress': {
      const build = {
        ...state.build,
        state: event.jobState,
        progress: event.progress,
        error: event.error,
      };
      return {
        ...state,
        build,
        indexLoaded: event.jobState === 'done' ? true : state.indexLoaded,
      };
    }

    // Switching scope starts a fresh conversation: the session pins its
    // doc_filter at creation, so the old session cannot be reused.
    case 'scope_changed':
      return {
        ...state,
        scope: event.scope,
        sessionId: null,
        turns: [],
        openSource: null,
        needsBuild: false,
      };

    case 'mode_selected':
      return { ...state, selectedMode: event.mode };

    case 'session_created':
      return { ...state, sessionId: event.sessionId };

    case 'query_sent':
      return { ...state, pendingQuery: event.query, toast: null };

    case 'answer_received': {
      const turn = {
        query: event.query,
        answerText: event.response.answer,
        citations: event.response.citations,
        mode: event.response.mode,
        latencyMs: event.latencyMs,
      };
      return {
        ...state,
        turns: [...state.turns, turn],
        pendingQuery: null,
        needsBuild: false,
        openSource: null,
      };
    }

    case 'request_failed':
      return {
        ...state,
        pendingQuery: null,
        toast: event.message,
        // 409 means "no index yet"; anything network-shaped flips the banner
        needsBuild: event.status === 409 ? true : state.needsBuild,
        serviceOk: event.status === null ? false : state.serviceOk,
      };

    case 'source_opened':
      return { ...state, openSource: { citation: event.citation, text: null } };

    case 'source_loaded':
      return state.openSource
        ? { ...state, openSource: { ...state.openSource, text: event.text } }
        : state;

    case 'source_closed':
      return { ...state, openSource: null };

    case 'toast_cleared':
      return { ...state, toast: null };
  }
}
