"""Translation knowledge graph: term nodes, provenance-tagged triples, and
the verdict gate that admits or discards external evidence.

Graph values are immutable; every operation returns a new ``TransKG`` and
never mutates its input, so graphs can be shared freely across concurrent
runs. Triples are kept in two ordered groups -- facts extracted from the
source context first, then facts taken from admitted external documents --
which makes the serialized triple list a pure function of the insert
sequence.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

TERM_CATEGORIES = ("polyseme", "acronym", "proper_noun", "new_term", "low_confidence")

INTERNAL = "internal"
EXTERNAL = "external"
PROVENANCE_KINDS = (INTERNAL, EXTERNAL)

# Evidence verdict tokens consumed by the integration gate.
CORRECT = "CORRECT"
INCORRECT = "INCORRECT"
VERDICTS = (CORRECT, INCORRECT)

GRAPH_FORMAT_VERSION = 1


class GraphError(ValueError):
    """A graph operation was rejected (bad provenance, unknown term key, ...)."""


class GraphParseError(ValueError):
    """Serialized graph bytes could not be decoded."""


@dataclass(frozen=True)
class TermCandidate:
    """An unknown term flagged in the source text.

    ``start``/``end`` are character offsets into the source text such that
    ``source_text[start:end] == surface``; the detector guarantees this by
    anchoring each reported surface in the text.
    """

    surface: str
    start: int
    end: int
    category: str
    rationale: str = ""

    def __post_init__(self):
        if not self.surface:
            raise ValueError("term surface must be non-empty")
        if not (0 <= self.start < self.end):
            raise ValueError(f"invalid span [{self.start}, {self.end}) for {self.surface!r}")
        if self.end - self.start != len(self.surface):
            raise ValueError(f"span length does not match surface {self.surface!r}")
        if self.category not in TERM_CATEGORIES:
            raise ValueError(f"unknown term category: {self.category!r}")

    @property
    def span(self) -> tuple[int, int]:
        return (self.start, self.end)


@dataclass(frozen=True)
class TermNode:
    """A graph node for one distinct term surface."""

    surface: str
    category: str
    rationale: str = ""

    def __post_init__(self):
        if not self.surface:
            raise ValueError("term surface must be non-empty")
        if self.category not in TERM_CATEGORIES:
            raise ValueError(f"unknown term category: {self.category!r}")


@dataclass(frozen=True)
class Provenance:
    """Where a triple came from: the source context or an external document."""

    kind: str
    doc_id: str | None = None

    def __post_init__(self):
        if self.kind not in PROVENANCE_KINDS:
            raise ValueError(f"unknown provenance kind: {self.kind!r}")
        if self.kind == INTERNAL and self.doc_id is not None:
            raise ValueError("internal provenance must not carry a doc_id")
        if self.kind == EXTERNAL and not self.doc_id:
            raise ValueError("external provenance requires a doc_id")


def internal_provenance() -> Provenance:
    return Provenance(INTERNAL)


def external_provenance(doc_id: str) -> Provenance:
    return Provenance(EXTERNAL, doc_id)


@dataclass(frozen=True)
class KnowledgeTriple:
    """One (subject, relation, object) fact tied to the term nodes it informs."""

    subject: str
    relation: str
    object: str
    provenance: Provenance
    term_keys: frozenset[str]

    def __post_init__(self):
        object.__setattr__(self, "subject", self.subject.strip())
        object.__setattr__(self, "relation", self.relation.strip())
        object.__setattr__(self, "object", self.object.strip())
        object.__setattr__(self, "term_keys", frozenset(self.term_keys))
        if not (self.subject and self.relation and self.object):
            raise ValueError("triple fields must be non-empty after trimming")
        if not self.term_keys:
            raise ValueError("triple must reference at least one term key")

    def key(self) -> tuple[str, str, str, str, str | None]:
        """Duplicate-detection key: term_keys intentionally excluded."""
        return (self.subject, self.relation, self.object,
                self.provenance.kind, self.provenance.doc_id)


@dataclass(frozen=True)
class TransKG:
    """Immutable knowledge graph for one source document."""

    source_doc_id: str
    nodes: Mapping[str, TermNode] = field(default_factory=dict)
    internal_triples: tuple[KnowledgeTriple, ...] = ()
    external_triples: tuple[KnowledgeTriple, ...] = ()
    accepted_docs: tuple[str, ...] = ()

    @property
    def triples(self) -> tuple[KnowledgeTriple, ...]:
        """All triples: source-context facts first, then admitted external facts."""
        return self.internal_triples + self.external_triples

    def is_empty(self) -> bool:
        return not (self.nodes or self.triples or self.accepted_docs)


def new_graph(source_doc_id: str, terms: Sequence[TermCandidate]) -> TransKG:
    """Create a graph with one node per distinct term surface and no facts.

    Duplicate surfaces collapse to a single node; the first candidate wins.
    """
    nodes: dict[str, TermNode] = {}
    for term in terms:
        if term.surface not in nodes:
            nodes[term.surface] = TermNode(term.surface, term.category, term.rationale)
    return TransKG(source_doc_id=source_doc_id, nodes=nodes)


def _check_term_keys(graph: TransKG, triple: KnowledgeTriple) -> None:
    for key in sorted(triple.term_keys):
        if key not in graph.nodes:
            raise GraphError(f"triple references unknown term key: {key!r}")


def add_internal(graph: TransKG, triples: Iterable[KnowledgeTriple]) -> TransKG:
    """Append source-context facts in input order, dropping exact duplicates."""
    incoming = list(triples)
    for triple in incoming:
        if triple.provenance.kind != INTERNAL:
            raise GraphError(
                f"add_internal rejected triple with {triple.provenance.kind} provenance: "
                f"({triple.subject}, {triple.relation}, {triple.object})")
        _check_term_keys(graph, triple)
    seen = {t.key() for t in graph.triples}
    added = []
    for triple in incoming:
        if triple.key() in seen:
            continue
        seen.add(triple.key())
        added.append(triple)
    if not added:
        return graph
    return TransKG(
        source_doc_id=graph.source_doc_id,
        nodes=graph.nodes,
        internal_triples=graph.internal_triples + tuple(added),
        external_triples=graph.external_triples,
        accepted_docs=graph.accepted_docs,
    )


def integrate_external(graph: TransKG, doc, verdict, triples: Iterable[KnowledgeTriple]) -> TransKG:
    """Admit or discard one judged document.

    ``doc`` needs an ``id`` attribute and ``verdict`` needs ``doc_id`` and
    ``verdict`` attributes; the concrete types live in the retrieval and
    agents modules. On a CORRECT verdict the document id is appended to
    ``accepted_docs`` (once) and the triples are appended in input order; an
    INCORRECT verdict returns the input graph unchanged.
    """
    incoming = list(triples)
    if verdict.doc_id != doc.id:
        raise GraphError(f"verdict is for document {verdict.doc_id!r}, not {doc.id!r}")
    if verdict.verdict not in VERDICTS:
        raise GraphError(f"unknown verdict: {verdict.verdict!r}")
    for triple in incoming:
        if triple.provenance.kind != EXTERNAL or triple.provenance.doc_id != doc.id:
            raise GraphError(
                f"external triple must carry provenance of document {doc.id!r}: "
                f"({triple.subject}, {triple.relation}, {triple.object})")
        _check_term_keys(graph, triple)
    if verdict.verdict == INCORRECT:
        return graph
    accepted = graph.accepted_docs
    if doc.id not in accepted:
        accepted = accepted + (doc.id,)
    seen = {t.key() for t in graph.triples}
    added = []
    for triple in incoming:
        if triple.key() in seen:
            continue
        seen.add(triple.key())
        added.append(triple)
    return TransKG(
        source_doc_id=graph.source_doc_id,
        nodes=graph.nodes,
        internal_triples=graph.internal_triples,
        external_triples=graph.external_triples + tuple(added),
        accepted_docs=accepted,
    )


def triples_for_term(graph: TransKG, surface: str) -> list[KnowledgeTriple]:
    """All triples whose term keys contain ``surface``, in graph order."""
    return [t for t in graph.triples if surface in t.term_keys]


# --- serialization ---------------------------------------------------------
#
# Canonical form: UTF-8 JSON with sorted keys and two-space indentation, so
# structurally equal graphs serialize to identical bytes and files diff
# cleanly. The triple list keeps graph order (internal first, external after).


def graph_to_dict(graph: TransKG) -> dict:
    return {
        "version": GRAPH_FORMAT_VERSION,
        "source_doc_id": graph.source_doc_id,
        "nodes": {
            surface: {
                "surface": node.surface,
                "category": node.category,
                "rationale": node.rationale,
            }
            for surface, node in graph.nodes.items()
        },
        "triples": [triple_to_dict(t) for t in graph.triples],
        "accepted_docs": list(graph.accepted_docs),
    }


def triple_to_dict(triple: KnowledgeTriple) -> dict:
    prov: dict = {"kind": triple.provenance.kind}
    if triple.provenance.doc_id is not None:
        prov["doc_id"] = triple.provenance.doc_id
    return {
        "subject": triple.subject,
        "relation": triple.relation,
        "object": triple.object,
        "provenance": prov,
        "term_keys": sorted(triple.term_keys),
    }


def serialize_graph(graph: TransKG) -> bytes:
    text = json.dumps(graph_to_dict(graph), ensure_ascii=False, sort_keys=True, indent=2)
    return (text + "\n").encode("utf-8")


def _require(mapping: Mapping, key: str, context: str):
    if not isinstance(mapping, Mapping) or key not in mapping:
        raise GraphParseError(f"graph payload missing {key!r} in {context}")
    return mapping[key]


def graph_from_dict(data: Mapping) -> TransKG:
    version = _require(data, "version", "document")
    if version != GRAPH_FORMAT_VERSION:
        raise GraphParseError(f"unsupported graph format version: {version!r}")
    source_doc_id = _require(data, "source_doc_id", "document")
    nodes_raw = _require(data, "nodes", "document")
    triples_raw = _require(data, "triples", "document")
    accepted_raw = _require(data, "accepted_docs", "document")
    if not isinstance(nodes_raw, Mapping):
        raise GraphParseError("'nodes' must be an object")
    if not isinstance(triples_raw, list):
        raise GraphParseError("'triples' must be an array")
    if not isinstance(accepted_raw, list):
        raise GraphParseError("'accepted_docs' must be an array")

    try:
        nodes = {
            surface: TermNode(
                surface=_require(node, "surface", f"node {surface!r}"),
                category=_require(node, "category", f"node {surface!r}"),
                rationale=node.get("rationale", ""),
            )
            for surface, node in nodes_raw.items()
        }
    except ValueError as err:
        raise GraphParseError(f"invalid node: {err}") from err

    internal: list[KnowledgeTriple] = []
    external: list[KnowledgeTriple] = []
    for i, raw in enumerate(triples_raw):
        prov_raw = _require(raw, "provenance", f"triple {i}")
        try:
            prov = Provenance(_require(prov_raw, "kind", f"triple {i}"), prov_raw.get("doc_id"))
            triple = KnowledgeTriple(
                subject=_require(raw, "subject", f"triple {i}"),
                relation=_require(raw, "relation", f"triple {i}"),
                object=_require(raw, "object", f"triple {i}"),
                provenance=prov,
                term_keys=frozenset(_require(raw, "term_keys", f"triple {i}")),
            )
        except ValueError as err:
            raise GraphParseError(f"invalid triple {i}: {err}") from err
        if triple.provenance.kind == INTERNAL:
            if external:
                raise GraphParseError(f"triple {i}: internal triple after external triples")
            internal.append(triple)
        else:
            external.append(triple)

    accepted = tuple(accepted_raw)
    if len(set(accepted)) != len(accepted):
        raise GraphParseError("accepted_docs contains duplicates")
    graph = TransKG(
        source_doc_id=source_doc_id,
        nodes=nodes,
        internal_triples=tuple(internal),
        external_triples=tuple(external),
        accepted_docs=accepted,
    )
    for triple in graph.triples:
        for key in triple.term_keys:
            if key not in graph.nodes:
                raise GraphParseError(f"triple references unknown term key: {key!r}")
        if triple.provenance.kind == EXTERNAL and triple.provenance.doc_id not in accepted:
            raise GraphParseError(
                f"external triple cites unadmitted document {triple.provenance.doc_id!r}")
    return graph


def deserialize_graph(data: bytes) -> TransKG:
    """Inverse of :func:`serialize_graph`; raises ``GraphParseError`` with the
    byte/character position on malformed payloads."""
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as err:
        raise GraphParseError(f"graph payload is not UTF-8 at byte {err.start}") from err
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as err:
        raise GraphParseError(f"malformed graph payload at position {err.pos}: {err.msg}") from err
    if not isinstance(payload, dict):
        raise GraphParseError("graph payload must be a JSON object")
    return graph_from_dict(payload)
