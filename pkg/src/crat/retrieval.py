"""External evidence sources behind one interface.

Three source kinds produce ranked ``RetrievedDocument`` lists: a local
BM25 inverted index, a bilingual glossary (one TSV record per line), and a
pluggable remote search endpoint. ``retrieve_for_term`` queries configured
sources in order, deduplicates, and caps the merged list.
"""

from __future__ import annotations

import json
import logging
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import requests

from . import tokenizers
from .transkg import TermCandidate

log = logging.getLogger(__name__)

LOCAL_INDEX = "local_index"
GLOSSARY = "glossary"
REMOTE = "remote"
SOURCE_KINDS = (LOCAL_INDEX, GLOSSARY, REMOTE)

# Standard BM25 constants; both the index and the test oracle use them.
BM25_K1 = 1.2
BM25_B = 0.75

INDEX_FORMAT_VERSION = 1

DEFAULT_N2 = 5
CONTEXT_WINDOW_TOKENS = 10


class RetrievalError(Exception):
    pass


class SourceError(RetrievalError):
    """A single retrieval source failed; callers skip it and continue."""


@dataclass(frozen=True)
class RetrievedDocument:
    id: str
    title: str
    text: str
    source: str
    score: float

    def __post_init__(self):
        if not self.text:
            raise ValueError(f"retrieved document {self.id!r} has empty text")
        if self.source not in SOURCE_KINDS:
            raise ValueError(f"unknown document source: {self.source!r}")


@dataclass
class CorpusIndex:
    """Inverted index over a small document corpus."""

    doc_count: int
    postings: dict[str, list[tuple[str, int]]]  # term -> [(doc_id, tf)] by doc_id
    doc_lengths: dict[str, int]
    avg_doc_length: float
    tokenizer_id: str
    docs: dict[str, tuple[str, str]] = field(default_factory=dict)  # id -> (title, text)


def build_index(corpus: Iterable[Mapping], tokenizer_id: str = tokenizers.SIMPLE) -> CorpusIndex:
    """Index ``corpus`` records ({id, title, text}); ids must be unique."""
    if tokenizer_id not in tokenizers.TOKENIZER_IDS:
        raise ValueError(f"unknown tokenizer: {tokenizer_id!r}")
    postings: dict[str, dict[str, int]] = {}
    doc_lengths: dict[str, int] = {}
    docs: dict[str, tuple[str, str]] = {}
    for record in corpus:
        doc_id = str(record["id"])
        if doc_id in docs:
            raise ValueError(f"duplicate document id: {doc_id!r}")
        title = str(record.get("title", ""))
        text = str(record.get("text", ""))
        docs[doc_id] = (title, text)
        tokens = tokenizers.tokenize(text, tokenizer_id)
        doc_lengths[doc_id] = len(tokens)
        for token in tokens:
            postings.setdefault(token, {}).setdefault(doc_id, 0)
            postings[token][doc_id] += 1
    doc_count = len(docs)
    avg = sum(doc_lengths.values()) / doc_count if doc_count else 0.0
    sorted_postings = {
        term: sorted(freqs.items()) for term, freqs in postings.items()
    }
    return CorpusIndex(doc_count=doc_count, postings=sorted_postings,
                       doc_lengths=doc_lengths, avg_doc_length=avg,
                       tokenizer_id=tokenizer_id, docs=docs)


def bm25_idf(doc_count: int, doc_freq: int) -> float:
    return math.log(1.0 + (doc_count - doc_freq + 0.5) / (doc_freq + 0.5))


def search(index: CorpusIndex, query: str, k: int) -> list[RetrievedDocument]:
    """Top-k documents by BM25; ties broken by ascending document id."""
    if k <= 0 or index.doc_count == 0:
        return []
    terms = list(dict.fromkeys(tokenizers.tokenize(query, index.tokenizer_id)))
    if not terms:
        return []
    scores: dict[str, float] = {}
    for term in terms:
        posting = index.postings.get(term)
        if not posting:
            continue
        idf = bm25_idf(index.doc_count, len(posting))
        for doc_id, tf in posting:
            length_norm = BM25_K1 * (1.0 - BM25_B + BM25_B * index.doc_lengths[doc_id]
                                     / index.avg_doc_length)
            scores[doc_id] = scores.get(doc_id, 0.0) + idf * tf * (BM25_K1 + 1.0) / (tf + length_norm)
    ranked = sorted(scores.items(), key=lambda item: (-item[1], item[0]))[:k]
    results = []
    for doc_id, score in ranked:
        title, text = index.docs[doc_id]
        results.append(RetrievedDocument(doc_id, title, text, LOCAL_INDEX, score))
    return results


def save_index(index: CorpusIndex, path: str | Path) -> None:
    payload = {
        "version": INDEX_FORMAT_VERSION,
        "doc_count": index.doc_count,
        "postings": {t: [[d, f] for d, f in p] for t, p in index.postings.items()},
        "doc_lengths": index.doc_lengths,
        "avg_doc_length": index.avg_doc_length,
        "tokenizer_id": index.tokenizer_id,
        "docs": {i: [t, x] for i, (t, x) in index.docs.items()},
    }
    Path(path).write_text(
        json.dumps(payload, ensure_ascii=False, sort_keys=True, indent=2) + "\n",
        encoding="utf-8")


def load_index(path: str | Path) -> CorpusIndex:
    try:
        payload = json.loads(Path(path).read_text("utf-8"))
    except FileNotFoundError:
        raise RetrievalError(f"index file not found: {path}") from None
    except json.JSONDecodeError as err:
        raise RetrievalError(f"malformed index file {path}: {err}") from err
    if not isinstance(payload, dict) or payload.get("version") != INDEX_FORMAT_VERSION:
        raise RetrievalError(f"unsupported index file version in {path}")
    return CorpusIndex(
        doc_count=payload["doc_count"],
        postings={t: [(d, f) for d, f in p] for t, p in payload["postings"].items()},
        doc_lengths=payload["doc_lengths"],
        avg_doc_length=payload["avg_doc_length"],
        tokenizer_id=payload["tokenizer_id"],
        docs={i: (t, x) for i, (t, x) in payload["docs"].items()},
    )


# --- sources ----------------------------------------------------------------


class LocalIndexSource:
    kind = LOCAL_INDEX

    def __init__(self, index: CorpusIndex, label: str = "local_index"):
        self.index = index
        self.label = label

    def search(self, query: str, k: int) -> list[RetrievedDocument]:
        return search(self.index, query, k)


@dataclass(frozen=True)
class GlossaryEntry:
    source_term: str
    target_term: str
    note: str = ""


def load_glossary(path: str | Path) -> list[GlossaryEntry]:
    """Parse a TSV glossary: ``source_term<TAB>target_term[<TAB>note]``."""
    entries = []
    try:
        text = Path(path).read_text("utf-8")
    except FileNotFoundError:
        raise RetrievalError(f"glossary file not found: {path}") from None
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) < 2 or not parts[0].strip() or not parts[1].strip():
            raise RetrievalError(f"{path}:{lineno}: expected source<TAB>target[<TAB>note]")
        note = parts[2].strip() if len(parts) > 2 else ""
        entries.append(GlossaryEntry(parts[0].strip(), parts[1].strip(), note))
    return entries


class GlossarySource:
    """Bilingual glossary; each record is served as a one-line document."""

    kind = GLOSSARY

    def __init__(self, entries: Sequence[GlossaryEntry], label: str = "glossary"):
        self.entries = list(entries)
        self.label = label

    def search(self, query: str, k: int) -> list[RetrievedDocument]:
        if k <= 0:
            return []
        hits = []
        for i, entry in enumerate(self.entries, start=1):
            pattern = rf"(?<!\w){re.escape(entry.source_term)}(?!\w)"
            if re.search(pattern, query, re.IGNORECASE):
                text = f"{entry.source_term}: {entry.target_term}"
                if entry.note:
                    text += f" ({entry.note})"
                hits.append(RetrievedDocument(
                    f"glossary:{i}", entry.source_term, text, GLOSSARY, 1.0))
            if len(hits) >= k:
                break
        return hits


@dataclass(frozen=True)
class RemoteConfig:
    endpoint_url: str
    timeout_s: float = 10.0


def remote_search(client_config: RemoteConfig, query: str, k: int) -> list[RetrievedDocument]:
    """One GET against the remote wire contract: params {q, k}, JSON array of
    {id, title, text, score} back, kept in server order."""
    if k <= 0:
        return []
    try:
        resp = requests.get(client_config.endpoint_url, params={"q": query, "k": k},
                            timeout=client_config.timeout_s)
    except (requests.Timeout, requests.ConnectionError) as err:
        raise SourceError(f"remote search transport failure: {err}") from err
    if not 200 <= resp.status_code < 300:
        raise SourceError(f"remote search returned HTTP {resp.status_code}: {resp.text[:200]!r}")
    try:
        payload = resp.json()
        docs = [
            RetrievedDocument(str(item["id"]), str(item.get("title", "")),
                              str(item["text"]), REMOTE, float(item.get("score", 0.0)))
            for item in payload
        ]
    except (ValueError, KeyError, TypeError) as err:
        raise SourceError(f"remote search returned a malformed payload: {err}") from err
    return docs[:k]


class RemoteSource:
    kind = REMOTE

    def __init__(self, config: RemoteConfig, label: str = "remote"):
        self.config = config
        self.label = label

    def search(self, query: str, k: int) -> list[RetrievedDocument]:
        return remote_search(self.config, query, k)


# --- per-term retrieval -------------------------------------------------------


def term_query(term: TermCandidate, source_text: str,
               window: int = CONTEXT_WINDOW_TOKENS) -> str:
    """Query string for one term: the surface plus +-``window`` source tokens
    of context around its span."""
    spans = tokenizers.word_spans(source_text)
    if not spans:
        return term.surface
    overlapping = [i for i, (s, e) in enumerate(spans)
                   if e > term.start and s < term.end]
    if overlapping:
        first, last = overlapping[0], overlapping[-1]
    else:
        after = [i for i, (s, _) in enumerate(spans) if s >= term.start]
        first = last = after[0] if after else len(spans) - 1
    lo = max(0, first - window)
    hi = min(len(spans) - 1, last + window)
    context = source_text[spans[lo][0]:spans[hi][1]]
    return f"{term.surface} {context}"


def retrieve_for_term(term: TermCandidate, source_text: str, sources: Sequence,
                      k_per_source: int = DEFAULT_N2, n2: int = DEFAULT_N2,
                      transcript=None) -> list[RetrievedDocument]:
    """Query every configured source in order; merge, dedup, cap at ``n2``.

    A failing source is skipped with a warning and never affects results
    contributed by the other sources.
    """
    query = term_query(term, source_text)
    merged: list[RetrievedDocument] = []
    seen: set[tuple[str, str]] = set()
    for source in sources:
        try:
            hits = source.search(query, k_per_source)
        except SourceError as err:
            message = f"retrieval source {getattr(source, 'label', source)!r} failed: {err}"
            if transcript is not None:
                transcript.warn(message)
            log.warning("%s", message)
            continue
        for doc in hits:
            key = (doc.source, doc.id)
            if key in seen:
                continue
            seen.add(key)
            merged.append(doc)
    return merged[:n2]


def index_source_from_file(path: str | Path, label: str | None = None) -> LocalIndexSource:
    return LocalIndexSource(load_index(path), label or f"local_index:{path}")


def glossary_source_from_file(path: str | Path, label: str | None = None) -> GlossarySource:
    return GlossarySource(load_glossary(path), label or f"glossary:{path}")
