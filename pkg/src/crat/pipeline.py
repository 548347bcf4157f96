"""End-to-end orchestration for one source document and over batches.

Stage order is fixed: detect -> extract -> retrieve -> judge (one call per
term/document pair) -> integrate -> translate. External evidence enters the
graph only through the judge's verdict gate; with zero detected terms the
knowledge stages are skipped entirely and the translator runs on an empty
graph.
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
import time
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from .agents import (
    AgentError,
    JudgeVerdict,
    detect_unknown_terms,
    extract_internal_knowledge,
    judge_document,
    translate_with_knowledge,
)
from .agents.translator import (
    DEFAULT_EXCERPT_CHARS,
    DEFAULT_MAX_DOC_EXCERPTS,
    DEFAULT_MAX_TRIPLES,
)
from .gateway import Gateway
from .retrieval import DEFAULT_N2, RetrievedDocument, retrieve_for_term
from .transcript import AgentTranscript
from .transkg import (
    CORRECT,
    KnowledgeTriple,
    TransKG,
    external_provenance,
    graph_from_dict,
    graph_to_dict,
    integrate_external,
    new_graph,
    add_internal,
    serialize_graph,
)

log = logging.getLogger(__name__)

RESULT_FORMAT_VERSION = 1

ON_DETECTOR_ERROR = ("fail", "translate_direct")


class PipelineError(Exception):
    pass


@dataclass
class PipelineConfig:
    """Backends, retrieval setup, budgets, and failure policy for a run."""

    detector_backend: str = "main"
    extractor_backend: str = "main"
    judge_backend: str = "main"
    translator_backend: str = "main"
    sources: Sequence = ()
    n2: int = DEFAULT_N2
    k_per_source: int = DEFAULT_N2
    max_triples: int = DEFAULT_MAX_TRIPLES
    max_doc_excerpts: int = DEFAULT_MAX_DOC_EXCERPTS
    excerpt_chars: int = DEFAULT_EXCERPT_CHARS
    on_detector_error: str = "translate_direct"
    width: int = 1
    use_knowledge: bool = True   # False: direct mode, translator only
    use_judge: bool = True       # False: retrieved evidence is admitted unjudged

    def __post_init__(self):
        if self.n2 < 1:
            raise ValueError("n2 must be >= 1")
        if self.width < 1:
            raise ValueError("width must be >= 1")
        if self.on_detector_error not in ON_DETECTOR_ERROR:
            raise ValueError(f"on_detector_error must be one of {ON_DETECTOR_ERROR}")

    def required_backends(self) -> list[str]:
        roles = [self.translator_backend]
        if self.use_knowledge:
            roles = [self.detector_backend, self.extractor_backend] + roles
            if self.use_judge:
                roles.insert(2, self.judge_backend)
        return roles

    def validate_backends(self, gateway: Gateway) -> None:
        missing = sorted({b for b in self.required_backends() if not gateway.has_backend(b)})
        if missing:
            raise PipelineError(f"backends not registered: {', '.join(missing)}")

    def describe(self) -> dict:
        """Stable summary used for the manifest's config hash."""
        return {
            "backends": {
                "detector": self.detector_backend,
                "extractor": self.extractor_backend,
                "judge": self.judge_backend,
                "translator": self.translator_backend,
            },
            "sources": [getattr(s, "label", str(s)) for s in self.sources],
            "n2": self.n2,
            "k_per_source": self.k_per_source,
            "budget": {
                "max_triples": self.max_triples,
                "max_doc_excerpts": self.max_doc_excerpts,
                "excerpt_chars": self.excerpt_chars,
            },
            "on_detector_error": self.on_detector_error,
            "width": self.width,
            "use_knowledge": self.use_knowledge,
            "use_judge": self.use_judge,
        }

    def config_hash(self) -> str:
        blob = json.dumps(self.describe(), ensure_ascii=False, sort_keys=True,
                          separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


@dataclass
class TranslationResult:
    """Final target text plus the graph and audit log that produced it."""

    source_doc_id: str
    source_text: str
    target_text: str
    graph: TransKG
    transcript: AgentTranscript
    timings_ms: dict[str, float] = field(default_factory=dict)
    term_count: int = 0
    judged_count: int = 0
    accepted_count: int = 0
    term_renderings: dict[str, list[str]] = field(default_factory=dict)
    detector_fallback: bool = False


def result_to_dict(result: TranslationResult, volatile: bool = True) -> dict:
    out = {
        "format_version": RESULT_FORMAT_VERSION,
        "source_doc_id": result.source_doc_id,
        "source_text": result.source_text,
        "target_text": result.target_text,
        "graph": graph_to_dict(result.graph),
        "transcript": result.transcript.to_dict(volatile=volatile),
        "term_count": result.term_count,
        "judged_count": result.judged_count,
        "accepted_count": result.accepted_count,
        "term_renderings": result.term_renderings,
        "detector_fallback": result.detector_fallback,
    }
    if volatile:
        out["timings_ms"] = result.timings_ms
    return out


def serialize_result(result: TranslationResult, volatile: bool = True) -> bytes:
    """Canonical result bytes; ``volatile=False`` excludes timings, cache
    flags, and attempt counts so deterministic reruns compare byte-equal."""
    text = json.dumps(result_to_dict(result, volatile=volatile),
                      ensure_ascii=False, sort_keys=True, indent=2)
    return (text + "\n").encode("utf-8")


@contextmanager
def _timed(timings: dict, stage: str):
    started = time.perf_counter()
    try:
        yield
    finally:
        timings[stage] = round((time.perf_counter() - started) * 1000.0, 3)


def _verdict_triples(verdict: JudgeVerdict, doc: RetrievedDocument, term,
                     transcript: AgentTranscript) -> list[KnowledgeTriple]:
    """External triples to link for a CORRECT verdict: the judge's distilled
    document facts plus the proposed rendering of the term."""
    if verdict.verdict != CORRECT:
        return []
    triples = []
    for subject, relation, obj in verdict.facts:
        if not (subject.strip() and relation.strip() and obj.strip()):
            transcript.warn(f"judge: skipped blank fact from document {doc.id!r}")
            continue
        triples.append(KnowledgeTriple(subject, relation, obj,
                                       external_provenance(doc.id),
                                       frozenset({term.surface})))
    rendering = verdict.proposed_rendering.strip()
    if rendering:
        triples.append(KnowledgeTriple(term.surface, "renders as", rendering,
                                       external_provenance(doc.id),
                                       frozenset({term.surface})))
    return triples


def run_pipeline(source_text: str, lang_pair: tuple[str, str], config: PipelineConfig,
                 gateway: Gateway, source_doc_id: str = "doc-0") -> TranslationResult:
    """Translate one document through the full stage sequence."""
    if not source_text or not source_text.strip():
        raise PipelineError(f"{source_doc_id}: source text is empty")
    config.validate_backends(gateway)

    transcript = AgentTranscript()
    timings: dict[str, float] = {}
    terms = []
    detector_fallback = False

    if config.use_knowledge:
        with _timed(timings, "detect"):
            transcript.begin_stage("detect")
            try:
                terms = detect_unknown_terms(source_text, lang_pair,
                                             config.detector_backend, gateway, transcript)
            except AgentError as err:
                if config.on_detector_error == "translate_direct":
                    detector_fallback = True
                    transcript.warn(
                        f"detector failed ({err}); falling back to direct translation")
                else:
                    raise PipelineError(f"unknown-term detection failed: {err}") from err

    graph = new_graph(source_doc_id, terms)
    documents: dict[str, RetrievedDocument] = {}
    judged_count = 0

    if terms:
        with _timed(timings, "extract"):
            transcript.begin_stage("extract")
            try:
                internal = extract_internal_knowledge(
                    source_text, terms, config.extractor_backend, gateway, transcript)
            except AgentError as err:
                raise PipelineError(f"knowledge extraction failed: {err}") from err
            graph = add_internal(graph, internal)

        with _timed(timings, "retrieve"):
            transcript.begin_stage("retrieve")
            per_term_docs = []
            for term in terms:
                docs = retrieve_for_term(term, source_text, config.sources,
                                         config.k_per_source, config.n2, transcript)
                per_term_docs.append((term, docs))

        if any(docs for _, docs in per_term_docs):
            if config.use_judge:
                with _timed(timings, "judge"):
                    transcript.begin_stage("judge")
                    for term, docs in per_term_docs:
                        for doc in docs:
                            verdict = judge_document(
                                list(graph.internal_triples), doc, source_text, term,
                                lang_pair, config.judge_backend, gateway, transcript)
                            judged_count += 1
                            triples = _verdict_triples(verdict, doc, term, transcript)
                            graph = integrate_external(graph, doc, verdict, triples)
                            if verdict.verdict == CORRECT:
                                documents[doc.id] = doc
            else:
                # Unrefined mode: admit every retrieved document without judging.
                for term, docs in per_term_docs:
                    for doc in docs:
                        verdict = JudgeVerdict(doc.id, CORRECT, "", "",
                                               "auto-admitted: judging disabled")
                        graph = integrate_external(graph, doc, verdict, [])
                        documents[doc.id] = doc

    with _timed(timings, "translate"):
        transcript.begin_stage("translate")
        try:
            output = translate_with_knowledge(
                source_text, graph, lang_pair, config.translator_backend, gateway,
                transcript, documents=documents, max_triples=config.max_triples,
                max_doc_excerpts=config.max_doc_excerpts,
                excerpt_chars=config.excerpt_chars)
        except AgentError as err:
            raise PipelineError(f"translation failed: {err}") from err

    return TranslationResult(
        source_doc_id=source_doc_id,
        source_text=source_text,
        target_text=output.text,
        graph=graph,
        transcript=transcript,
        timings_ms=timings,
        term_count=len(terms),
        judged_count=judged_count,
        accepted_count=len(graph.accepted_docs),
        term_renderings=output.term_renderings,
        detector_fallback=detector_fallback,
    )


@dataclass
class BatchManifest:
    """Per-document status plus run-level aggregates for one batch."""

    config_hash: str
    records: list[dict] = field(default_factory=list)
    aggregate: dict = field(default_factory=dict)

    def to_jsonl(self) -> str:
        header = {"record": "run", "config_hash": self.config_hash, **self.aggregate}
        lines = [json.dumps(header, ensure_ascii=False, sort_keys=True)]
        lines += [json.dumps({"record": "doc", **r}, ensure_ascii=False, sort_keys=True)
                  for r in self.records]
        return "\n".join(lines) + "\n"


def _doc_fields(record: Mapping, position: int) -> tuple[str, str]:
    doc_id = str(record.get("id") or f"doc-{position:04d}")
    text = record.get("text", record.get("source_text", ""))
    return doc_id, text


def run_batch(corpus: Sequence[Mapping], lang_pair: tuple[str, str],
              config: PipelineConfig, gateway: Gateway,
              ) -> tuple[list[TranslationResult], BatchManifest]:
    """Run the pipeline over ``corpus`` records ({id, text}).

    Results come back in input order regardless of the concurrency width;
    per-document failures are recorded in the manifest and the batch
    continues.
    """
    started = time.perf_counter()
    docs = [_doc_fields(record, i) for i, record in enumerate(corpus)]

    def run_one(entry: tuple[str, str]) -> TranslationResult:
        doc_id, text = entry
        return run_pipeline(text, lang_pair, config, gateway, source_doc_id=doc_id)

    outcomes: list[TranslationResult | Exception] = [None] * len(docs)  # type: ignore[list-item]
    if docs:
        with ThreadPoolExecutor(max_workers=config.width) as pool:
            futures = [pool.submit(run_one, entry) for entry in docs]
            for i, future in enumerate(futures):
                try:
                    outcomes[i] = future.result()
                except Exception as err:  # per-doc isolation
                    outcomes[i] = err

    results = []
    records = []
    for (doc_id, _), outcome in zip(docs, outcomes):
        if isinstance(outcome, Exception):
            log.warning("document %s failed: %s", doc_id, outcome)
            records.append({"doc_id": doc_id, "status": "error", "error": str(outcome)})
            continue
        results.append(outcome)
        records.append({
            "doc_id": doc_id,
            "status": "ok",
            "term_count": outcome.term_count,
            "judged_count": outcome.judged_count,
            "accepted_count": outcome.accepted_count,
            "detector_fallback": outcome.detector_fallback,
            "timings_ms": outcome.timings_ms,
        })
    manifest = BatchManifest(
        config_hash=config.config_hash(),
        records=records,
        aggregate={
            "documents": len(docs),
            "ok": len(results),
            "failed": len(docs) - len(results),
            "total_ms": round((time.perf_counter() - started) * 1000.0, 3),
        },
    )
    return results, manifest


# --- transcript directories ---------------------------------------------------

_SAFE_NAME_RE = re.compile(r"[^\w.-]")


def _safe_name(doc_id: str) -> str:
    return _SAFE_NAME_RE.sub("_", doc_id) or "doc"


def write_transcript(result: TranslationResult, directory: str | Path) -> list[Path]:
    """Write ``{result, graph, transcript}`` files for one result.

    All three files are canonical (sorted keys, no volatile fields), so
    re-running an identical configuration overwrites them byte-identically.
    """
    doc_dir = Path(directory) / _safe_name(result.source_doc_id)
    doc_dir.mkdir(parents=True, exist_ok=True)
    result_path = doc_dir / "result.json"
    graph_path = doc_dir / "graph.json"
    transcript_path = doc_dir / "transcript.json"
    result_path.write_bytes(serialize_result(result, volatile=False))
    graph_path.write_bytes(serialize_graph(result.graph))
    transcript_text = json.dumps(result.transcript.to_dict(volatile=False),
                                 ensure_ascii=False, sort_keys=True, indent=2)
    transcript_path.write_text(transcript_text + "\n", encoding="utf-8")
    return [result_path, graph_path, transcript_path]


def result_from_dict(data: Mapping) -> TranslationResult:
    """Rebuild a result from its serialized form (transcript events are not
    reconstructed; evaluation only needs texts, graph, and counts)."""
    if data.get("format_version") != RESULT_FORMAT_VERSION:
        raise PipelineError(f"unsupported result format version: {data.get('format_version')!r}")
    return TranslationResult(
        source_doc_id=data["source_doc_id"],
        source_text=data["source_text"],
        target_text=data["target_text"],
        graph=graph_from_dict(data["graph"]),
        transcript=AgentTranscript(),
        timings_ms=dict(data.get("timings_ms", {})),
        term_count=data.get("term_count", 0),
        judged_count=data.get("judged_count", 0),
        accepted_count=data.get("accepted_count", 0),
        term_renderings={k: list(v) for k, v in data.get("term_renderings", {}).items()},
        detector_fallback=data.get("detector_fallback", False),
    )


def load_results(directory: str | Path) -> list[TranslationResult]:
    """Load every ``result.json`` under a transcript directory tree."""
    root = Path(directory)
    if not root.is_dir():
        raise PipelineError(f"not a results directory: {root}")
    results = []
    for path in sorted(root.glob("*/result.json")):
        try:
            results.append(result_from_dict(json.loads(path.read_text("utf-8"))))
        except (ValueError, KeyError) as err:
            raise PipelineError(f"unreadable result file {path}: {err}") from err
    return results
