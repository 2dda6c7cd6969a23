/**
 * HTML rendering.
 *
 * Every function here maps state to a markup string with no DOM access and
 * no side effects, so render output can be asserted and snapshotted in tests.
 * Interactive elements carry data-action attributes; the app shell attaches
 * one delegated listener per kind.
 */

import { canSend, currentCitations } from './state.js';
import type { Citation, Turn, UiState } from './types.js';

export function escapeHtml(value: string): string {
  return value
    .replace(/&/g, '&amp;')
    .replace(/</g, '&lt;')
    .replace(/>/g, '&gt;')
    .replace(/"/g, '&quot;')
    .replace(/'/g, '&#039;');
}

// -- top-level chrome ---------------------------------------------------------

export function renderBanner(state: UiState): string {
  if (state.serviceOk) return '';
  return (
    '<div class="banner banner--error" role="alert">' +
    '<span>Service unreachable. Check that the litrag server is running.</span>' +
    '<button class="banner__retry" data-action="retry-health">Retry</button>' +
    '</div>'
  );
}

export function renderToast(state: UiState): string {
  if (!state.toast) return '';
  return (
    '<div class="toast" role="status">' +
    escapeHtml(state.toast) +
    '<button class="toast__close" data-action="dismiss-toast">&times;</button>' +
    '</div>'
  );
}

// -- corpus panel ---------------------------------------------------------------

function renderBuildStatus(state: UiState): string {
  const build = state.build;
  if (build.state === 'idle') return '';
  if (build.state === 'failed') {
    return `<div class="build-status build-status--failed">build failed: ${escapeHtml(build.error ?? 'unknown error')}</div>`;
  }
  if (build.state === 'done') {
    return '<div class="build-status build-status--done">index ready</div>';
  }
  const pct = Math.round(build.progress * 100);
  return (
    '<div class="build-status">' +
    `<div class="build-status__bar"><div class="build-status__fill" style="width:${pct}%"></div></div>` +
    `<span>building ${pct}%</span>` +
    '</div>'
  );
}

export function renderCorpusPanel(state: UiState): string {
  const docs = state.documents
    .map(
      (doc) =>
        `<li class="doc-list__item" data-doc-id="${escapeHtml(doc.doc_id)}">` +
        `<span class="doc-list__title">${escapeHtml(doc.title || doc.filename)}</span>` +
        `<span class="doc-list__meta">${doc.chunk_count} chunks</span>` +
        '</li>',
    )
    .join('');
  return (
    '<section class="panel corpus-panel">' +
    '<h2 class="panel__title">Corpus</h2>' +
    '<form class="upload-form" data-action="upload">' +
    '<input class="upload-form__name" name="filename" placeholder="paper.txt" required>' +
    '<textarea class="upload-form__text" name="text" placeholder="Paste document text" rows="4" required></textarea>' +
    '<button class="upload-form__submit" type="submit">Upload</button>' +
    '</form>' +
    `<ul class="doc-list">${docs || '<li class="doc-list__empty">No documents uploaded</li>'}</ul>` +
    '<button class="build-button" data-action="build"' +
    (state.documents.length === 0 ? ' disabled' : '') +
    '>Build index</button>' +
    renderBuildStatus(state) +
    '</section>'
  );
}

export function renderScopeToggle(state: UiState): string {
  const single = state.scope.kind === 'single_paper' ? state.scope.docId : '';
  const options = state.documents
    .map((doc) => {
      const selected = doc.doc_id === single ? ' selected' : '';
      return `<option value="${escapeHtml(doc.doc_id)}"${selected}>${escapeHtml(doc.title || doc.filename)}</option>`;
    })
    .join('');
  return (
    '<div class="scope-toggle">' +
    '<label class="scope-toggle__label">Scope</label>' +
    '<select class="scope-toggle__select" data-action="scope">' +
    `<option value=""${single ? '' : ' selected'}>Database (all papers)</option>` +
    options +
    '</select>' +
    '</div>'
  );
}

// -- transcript -----------------------------------------------------------------

function renderCitationRefs(citations: Citation[]): string {
  if (citations.length === 0) return '';
  const refs = citations
    .map(
      (_, i) =>
        `<button class="citation-ref" data-action="open-source" data-index="${i}">[${i + 1}]</button>`,
    )
    .join('');
  return `<span class="message__refs">${refs}</span>`;
}

function renderTurn(turn: Turn, index: number): string {
  const latency = (turn.latencyMs / 1000).toFixed(1);
  return (
    `<div class="message message--user" data-turn="${index}">` +
    `<div class="message__bubble">${escapeHtml(turn.query)}</div>` +
    '</div>' +
    `<div class="message message--assistant" data-turn="${index}">` +
    '<div class="message__bubble">' +
    escapeHtml(turn.answerText) +
    renderCitationRefs(turn.citations) +
    '</div>' +
    `<div class="message__meta">${escapeHtml(turn.mode)} &middot; ${latency}s</div>` +
    '</div>'
  );
}

export function renderTranscript(state: UiState): string {
  const turns = state.turns.map(renderTurn).join('');
  const pending = state.pendingQuery
    ? '<div class="message message--user message--pending">' +
      `<div class="message__bubble">${escapeHtml(state.pendingQuery)}</div>` +
      '</div>' +
      '<div class="message message--assistant"><div class="message__bubble message__bubble--typing">&hellip;</div></div>'
    : '';
  const buildPrompt = state.needsBuild
    ? '<div class="inline-prompt">No index yet. ' +
      '<button class="inline-prompt__action" data-action="build">Build it now</button>' +
      '</div>'
    : '';
  const empty =
    turns === '' && pending === ''
      ? '<div class="transcript__empty">Ask a question about the uploaded literature.</div>'
      : '';
  return `<div class="transcript">${empty}${turns}${pending}${buildPrompt}</div>`;
}

// -- sources panel ----------------------------------------------------------------

export function renderSourcesPanel(state: UiState): string {
  const citations = currentCitations(state);
  const open = state.openSource;
  const cards = citations
    .map((citation, i) => {
      const isOpen =
        open !== null &&
        open.citation.doc_id === citation.doc_id &&
        open.citation.chunk_id === citation.chunk_id;
      const body = isOpen
        ? `<div class="source-card__chunk source-card__chunk--highlight">${escapeHtml(open.text ?? 'loading')}</div>`
        : '';
      return (
        `<li class="source-card${isOpen ? ' source-card--open' : ''}" data-action="open-source" data-index="${i}">` +
        `<span class="source-card__badge">${i + 1}</span>` +
        `<span class="source-card__id">${escapeHtml(citation.chunk_id)}</span>` +
        `<p class="source-card__snippet">${escapeHtml(citation.snippet)}</p>` +
        body +
        '</li>'
      );
    })
    .join('');
  return (
    '<section class="panel sources-panel">' +
    '<h2 class="panel__title">Sources</h2>' +
    (cards
      ? `<ul class="sources-panel__list">${cards}</ul>`
      : '<div class="sources-panel__empty">Citations from the latest answer appear here.</div>') +
    '</section>'
  );
}

// -- input row ------------------------------------------------------------------

export function renderInputRow(state: UiState): string {
  const disabled = canSend(state) ? '' : ' disabled';
  const option = (mode: string) =>
    `<option value="${mode}"${state.selectedMode === mode ? ' selected' : ''}>${mode}</option>`;
  return (
    '<form class="input-row" data-action="send">' +
    '<select class="input-row__mode" data-action="mode" aria-label="Retrieval mode">' +
    option('vector') +
    option('graph') +
    option('hybrid') +
    '</select>' +
    `<input class="input-row__query" name="query" placeholder="Ask about the literature" autocomplete="off"${disabled}>` +
    `<button class="input-row__send" type="submit"${disabled}>Send</button>` +
    '</form>'
  );
}

// -- page -----------------------------------------------------------------------

export function renderApp(state: UiState): string {
  return (
    renderBanner(state) +
    renderToast(state) +
    '<div class="layout">' +
    renderCorpusPanel(state) +
    '<main class="chat-panel">' +
    renderScopeToggle(state) +
    renderTranscript(state) +
    renderInputRow(state) +
    '</main>' +
    renderSourcesPanel(state) +
    '</div>'
  );
}
