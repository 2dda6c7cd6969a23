/**
 * HTTP client for the litrag service.
 *
 * The fetch implementation is injectable so tests can script the service.
 * All errors surface as ServiceError with the status code and the message
 * extracted from the response body.
 */

import type {
  ChunkResponse,
  DocumentInfo,
  HealthResponse,
  JobResponse,
  MessageResponse,
  RetrievalMode,
  UploadResponse,
} from './types.js';

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ServiceError extends Error {
  readonly status: number;
  readonly retryable: boolean;

  constructor(message: string, status: number, retryable = false) {
    super(message);
    this.name = 'ServiceError';
    this.status = status;
    this.retryable = retryable;
  }
}

/**
 * Pull a human-readable message out of a FastAPI error body.
 *
 * Bodies come in three shapes: {detail: "..."}, {detail: {message, retryable}}
 * for provider failures, and {detail: [{loc, msg}, ...]} for validation.
 */
export function extractErrorMessage(body: unknown): { message: string; retryable: boolean } {
  if (body && typeof body === 'object' && 'detail' in body) {
    const detail = (body as { detail: unknown }).detail;
    if (typeof detail === 'string') {
      return { message: detail, retryable: false };
    }
    if (Array.isArray(detail)) {
      const parts = detail
        .filter((d): d is { loc?: unknown[]; msg?: string } => !!d && typeof d === 'object')
        .map((d) => {
          const field = Array.isArray(d.loc) ? d.loc[d.loc.length - 1] : undefined;
          return field ? `${String(field)}: ${d.msg ?? 'invalid'}` : (d.msg ?? 'invalid');
        });
      if (parts.length > 0) return { message: parts.join('; '), retryable: false };
    }
    if (detail && typeof detail === 'object' && 'message' in detail) {
      const d = detail as { message: string; retryable?: boolean };
      return { message: d.message, retryable: !!d.retryable };
    }
  }
  return { message: 'request failed', retryable: false };
}

async function requestJson<T>(
  fetchImpl: FetchLike,
  url: string,
  init?: RequestInit,
): Promise<T> {
  const response = await fetchImpl(url, init);
  if (!response.ok) {
    const body = await response.json().catch(() => null);
    const { message, retryable } = extractErrorMessage(body);
    throw new ServiceError(message, response.status, retryable);
  }
  return (await response.json()) as T;
}

function jsonInit(method: string, payload: unknown): RequestInit {
  return {
    method,
    headers: { 'Content-Type': 'application/json' },
    body: JSON.stringify(payload),
  };
}

export type ServiceClient = ReturnType<typeof createClient>;

export function createClient(baseUrl: string, fetchImpl?: FetchLike) {
  // bind to globalThis so the browser fetch keeps its receiver
  const doFetch: FetchLike = fetchImpl ?? ((url, init) => globalThis.fetch(url, init));
  const base = baseUrl.replace(/\/+$/, '');

  return {
    health(): Promise<HealthResponse> {
      return requestJson(doFetch, `${base}/health`);
    },

    listDocuments(): Promise<DocumentInfo[]> {
      return requestJson<{ documents: DocumentInfo[] }>(
        doFetch,
        `${base}/api/corpus/documents`,
      ).then((body) => body.documents);
    },

    uploadDocument(filename: string, text: string): Promise<UploadResponse> {
      return requestJson(
        doFetch,
        `${base}/api/corpus/documents`,
        jsonInit('POST', { filename, text }),
      );
    },

    getChunk(docId: string, chunkId: string): Promise<ChunkResponse> {
      return requestJson(
        doFetch,
        `${base}/api/corpus/documents/${encodeURIComponent(docId)}/chunks/${encodeURIComponent(chunkId)}`,
      );
    },

    startBuild(modes: string[] = ['vector', 'graph']): Promise<string> {
      return requestJson<{ job_id: string }>(
        doFetch,
        `${base}/api/index/build`,
        jsonInit('POST', { modes }),
      ).then((body) => body.job_id);
    },

    getJob(jobId: string): Promise<JobResponse> {
      return requestJson(doFetch, `${base}/api/jobs/${encodeURIComponent(jobId)}`);
    },

    /**
     * Poll a job until it settles. Resolves with the final job on both
     * "done" and "failed"; the caller inspects job.state.
     */
    async waitForJob(
      jobId: string,
      options: { intervalMs?: number; onProgress?: (job: JobResponse) => void } = {},
    ): Promise<JobResponse> {
      const intervalMs = options.intervalMs ?? 1000;
      for (;;) {
        const job = await this.getJob(jobId);
        options.onProgress?.(job);
        if (job.state === 'done' || job.state === 'failed') return job;
        await new Promise((resolve) => setTimeout(resolve, intervalMs));
      }
    },

    createSession(mode: RetrievalMode, docFilter?: string[]): Promise<string> {
      return requestJson<{ session_id: string }>(
        doFetch,
        `${base}/api/chat/sessions`,
        jsonInit('POST', { mode, doc_filter: docFilter ?? null }),
      ).then((body) => body.session_id);
    },

    sendMessage(
      sessionId: string,
      query: string,
      mode: RetrievalMode,
    ): Promise<MessageResponse> {
      return requestJson(
        doFetch,
        `${base}/api/chat/sessions/${encodeURIComponent(sessionId)}/messages`,
        jsonInit('POST', { query, mode }),
      );
    },
  };
}
