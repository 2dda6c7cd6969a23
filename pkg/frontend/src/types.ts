/**
 * Wire types for the litrag service API and the view model derived from it.
 *
 * Everything the UI displays comes from these response shapes plus local
 * input; there is no client-side retrieval logic.
 */

export type RetrievalMode = 'vector' | 'graph' | 'hybrid';

export const RETRIEVAL_MODES: readonly RetrievalMode[] = ['vector', 'graph', 'hybrid'];

// -- service responses -------------------------------------------------------

export type HealthResponse = {
  status: string;
  index_loaded: boolean;
  graph_loaded: boolean;
};

export type UploadResponse = {
  doc_id: string;
  chunk_count: number;
};

export type DocumentInfo = {
  doc_id: string;
  title: string;
  filename: string;
  chunk_count: number;
};

export type ChunkResponse = {
  doc_id: string;
  chunk_id: string;
  text: string;
};

export type JobState = 'queued' | 'running' | 'done' | 'failed';

export type JobResponse = {
  job_id: string;
  kind: string;
  state: JobState;
  progress: number;
  result?: Record<string, unknown> | null;
  error?: string | null;
};

export type Citation = {
  doc_id: string;
  chunk_id: string;
  snippet: string;
};

export type ContextItem = {
  kind: string;
  text: string;
  score: number;
  chunk_ids: string[];
  doc_ids: string[];
};

export type MessageResponse = {
  answer: string;
  mode: RetrievalMode;
  citations: Citation[];
  contexts: ContextItem[];
  trace: Record<string, number>;
};

// -- view model ---------------------------------------------------------------

/** Corpus scope for a chat session: one selected paper or the whole database. */
export type Scope =
  | { kind: 'database' }
  | { kind: 'single_paper'; docId: string };

/** One completed exchange as shown in the transcript. */
export type Turn = {
  query: string;
  answerText: string;
  citations: Citation[];
  mode: RetrievalMode;
  latencyMs: number;
};

export type BuildStatus = {
  jobId: string | null;
  state: JobState | 'idle';
  progress: number;
  error: string | null;
};

export type SourceView = {
  citation: Citation;
  /** Full chunk text once fetched; null while loading. */
  text: string | null;
};

export type UiState = {
  /** False after a network failure; drives the persistent retry banner. */
  serviceOk: boolean;
  indexLoaded: boolean;
  documents: DocumentInfo[];
  build: BuildStatus;
  scope: Scope;
  selectedMode: RetrievalMode;
  sessionId: string | null;
  turns: Turn[];
  /** Query text while a chat request is in flight; blocks a second send. */
  pendingQuery: string | null;
  /** Transient error message surfaced as a toast. */
  toast: string | null;
  /** Set when the service answered 409: index not built yet. */
  needsBuild: boolean;
  /** Citation opened from the sources panel, with its fetched chunk. */
  openSource: SourceView | null;
};
