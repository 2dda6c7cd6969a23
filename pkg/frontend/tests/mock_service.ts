/**
 * Scripted in-memory stand-in for the litrag service.
 *
 * Implements just enough of the HTTP contract for the UI tests: uploads are
 * stored, builds become "done" after a fixed number of polls, and answers for
 * chat messages are dequeued from a script. Every request is recorded so
 * tests can assert on outgoing payloads.
 */

import type { Citation, MessageResponse } from '../src/types.js';
import type { FetchLike } from '../src/api.js';

export type RecordedRequest = {
  method: string;
  path: string;
  body: unknown;
};

export type ScriptedAnswer = {
  answer: string;
  citations?: Citation[];
};

type MockOptions = {
  answers?: ScriptedAnswer[];
  /** Number of job polls that report "running" before the build is done. */
  buildPolls?: number;
};

function jsonResponse(status: number, body: unknown): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { 'Content-Type': 'application/json' },
  });
}

export function mockService(options: MockOptions = {}) {
  const answers = [...(options.answers ?? [])];
  const buildPolls = options.buildPolls ?? 1;
  const requests: RecordedRequest[] = [];
  const documents = new Map<string, { filename: string; text: string }>();
  const chunkTexts = new Map<string, string>();
  const sessions = new Map<string, { mode: string; doc_filter: string[] | null }>();
  let built = false;
  let pollsSeen = 0;
  let nextId = 1;

  const fetchImpl: FetchLike = async (url, init) => {
    const method = init?.method ?? 'GET';
    const path = new URL(url, 'http://mock').pathname;
    const body = init?.body ? JSON.parse(String(init.body)) : null;
    requests.push({ method, path, body });

    if (method === 'GET' && path === '/health') {
      return jsonResponse(200, { status: 'ok', index_loaded: built, graph_loaded: built });
    }

    if (method === 'POST' && path === '/api/corpus/documents') {
      const docId = `doc-${nextId++}`;
      documents.set(docId, { filename: body.filename, text: body.text });
      chunkTexts.set(`${docId}/${docId}-0000`, body.text);
      return jsonResponse(201, { doc_id: docId, chunk_count: 1 });
    }

    if (method === 'GET' && path === '/api/corpus/documents') {
      const listed = [...documents.entries()].map(([docId, doc]) => ({
        doc_id: docId,
        title: doc.filename,
        filename: doc.filename,
        chunk_count: 1,
      }));
      return jsonResponse(200, { documents: listed });
    }

    const chunkMatch = path.match(/^\/api\/corpus\/documents\/([^/]+)\/chunks\/([^/]+)$/);
    if (method === 'GET' && chunkMatch) {
      const text = chunkTexts.get(`${chunkMatch[1]}/${chunkMatch[2]}`);
      if (text === undefined) return jsonResponse(404, { detail: 'unknown chunk' });
      return jsonResponse(200, { doc_id: chunkMatch[1], chunk_id: chunkMatch[2], text });
    }

    if (method === 'POST' && path === '/api/index/build') {
      if (documents.size === 0) {
        return jsonResponse(409, { detail: 'no documents uploaded; nothing to index' });
      }
      pollsSeen = 0;
      return jsonResponse(202, { job_id: 'job-1' });
    }

    if (method === 'GET' && path === '/api/jobs/job-1') {
      pollsSeen += 1;
      if (pollsSeen > buildPolls) built = true;
      return jsonResponse(200, {
        job_id: 'job-1',
        kind: 'build',
        state: built ? 'done' : 'running',
        progress: built ? 1.0 : 0.5,
        result: built ? { chunks: documents.size, vector: true, graph: true } : null,
      });
    }

    if (method === 'POST' && path === '/api/chat/sessions') {
      const sessionId = `s-${nextId++}`;
      sessions.set(sessionId, { mode: body.mode, doc_filter: body.doc_filter });
      return jsonResponse(201, { session_id: sessionId });
    }

    const messageMatch = path.match(/^\/api\/chat\/sessions\/([^/]+)\/messages$/);
    if (method === 'POST' && messageMatch) {
      if (!sessions.has(messageMatch[1])) {
        return jsonResponse(404, { detail: `unknown session '${messageMatch[1]}'` });
      }
      if (!String(body.query ?? '').trim()) {
        return jsonResponse(422, { detail: 'query must be non-empty' });
      }
      if (!built) {
        return jsonResponse(409, { detail: 'no index built yet' });
      }
      const scripted = answers.shift();
      if (!scripted) {
        return jsonResponse(500, { detail: 'mock script exhausted' });
      }
      const payload: MessageResponse = {
        answer: scripted.answer,
        mode: body.mode,
        citations: scripted.citations ?? [],
        contexts: [],
        trace: { total_seconds: 0.01 },
      };
      return jsonResponse(200, payload);
    }

    return jsonResponse(404, { detail: `unmatched route ${method} ${path}` });
  };

  return {
    fetchImpl,
    requests,
    /** Requests to a given path, most useful for payload assertions. */
    sent(path: string): RecordedRequest[] {
      return requests.filter((r) => r.path === path);
    },
    markBuilt(): void {
      built = true;
    },
  };
}
