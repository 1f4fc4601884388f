"""Parsers for citation-network files and graph (de)serialization.

File formats (public Cora/Citeseer conventions):

* ``.content``: one node per line, whitespace-separated:
  ``key f1 ... fd label``. The feature dimension is inferred from the first
  line and enforced on the rest.
* ``.cites``: two keys per line, ``cited citing``. The direction switch at
  assembly decides whether edges run citing->cited (default) or the reverse.
* texts file (optional): ``key<TAB>utf8 text`` per line.
* embeddings file (optional): ``key<TAB>v1,v2,...,vd`` per line.

The assembled graph serializes to a single versioned JSON document with
sorted keys, so fixtures are human-inspectable and round-trip bit-exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .graph import DirectedTAG, build_graph

GRAPH_SCHEMA_VERSION = 1

CITING_TO_CITED = "citing_to_cited"
CITED_TO_CITING = "cited_to_citing"

# Per-node text used when no texts file is supplied.
MISSING_TEXT_MARKER = "Title/abstract unavailable."


class ParseError(ValueError):
    """Malformed input file; message carries the 1-based line number."""


@dataclass(frozen=True)
class ContentRecord:
    key: str
    features: np.ndarray
    label: str


@dataclass(frozen=True)
class CiteRecord:
    cited: str
    citing: str


@dataclass
class AssemblyCounters:
    """Reconciliation counters for edge ingestion.

    ``records == edges_added + unknown_key + self_loops + duplicates`` holds
    exactly after :func:`assemble`.
    """

    records: int = 0
    edges_added: int = 0
    unknown_key: int = 0
    self_loops: int = 0
    duplicates: int = 0
    skipped_blank_lines: int = 0

    def reconciles(self) -> bool:
        return self.records == (
            self.edges_added + self.unknown_key + self.self_loops + self.duplicates
        )


def parse_content(path: str | Path) -> list[ContentRecord]:
    """Parse a ``.content`` file; dimension inferred from the first line."""
    records: list[ContentRecord] = []
    dim: int | None = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            fields = line.split()
            if not fields:
                continue
            if len(fields) < 3:
                raise ParseError(f"{path}:{lineno}: expected key, features and label")
            key, label = fields[0], fields[-1]
            values = fields[1:-1]
            if dim is None:
                dim = len(values)
            elif len(values) != dim:
                raise ParseError(
                    f"{path}:{lineno}: expected {dim} feature columns, found {len(values)}"
                )
            try:
                feats = np.array([float(x) for x in values], dtype=np.float64)
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: non-numeric feature value ({exc})") from exc
            records.append(ContentRecord(key=key, features=feats, label=label))
    if not records:
        raise ParseError(f"{path}: no records found")
    return records


def parse_cites(path: str | Path) -> tuple[list[CiteRecord], int]:
    """Parse a ``.cites`` file.

    Returns the records plus the count of skipped blank lines. Non-blank
    lines with a field count other than two are errors.
    """
    records: list[CiteRecord] = []
    blank = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            fields = line.split()
            if not fields:
                blank += 1
                continue
            if len(fields) != 2:
                raise ParseError(f"{path}:{lineno}: expected 2 keys, found {len(fields)}")
            records.append(CiteRecord(cited=fields[0], citing=fields[1]))
    return records, blank


def parse_texts(path: str | Path) -> dict[str, str]:
    """Parse a ``key<TAB>text`` file."""
    texts: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            if "\t" not in line:
                raise ParseError(f"{path}:{lineno}: expected key<TAB>text")
            key, text = line.split("\t", 1)
            texts[key] = text
    return texts


def assemble(
    content: list[ContentRecord],
    cites: list[CiteRecord],
    edge_semantics: str = CITING_TO_CITED,
    texts: dict[str, str] | None = None,
) -> tuple[DirectedTAG, AssemblyCounters]:
    """Assemble a directed graph from parsed records.

    Under ``citing_to_cited`` an edge u -> v means "u cites v". Cite records
    naming unknown keys are counted and skipped; self-citations and duplicate
    edges are dropped and counted.
    """
    if not content:
        raise ValueError("content record list is empty")
    if edge_semantics not in (CITING_TO_CITED, CITED_TO_CITING):
        raise ValueError(f"unknown edge semantics {edge_semantics!r}")

    keys = [r.key for r in content]
    key_to_id = {k: i for i, k in enumerate(keys)}
    if len(key_to_id) != len(keys):
        raise ValueError("duplicate node keys in content records")

    class_names = sorted({r.label for r in content})
    class_index = {c: i for i, c in enumerate(class_names)}
    labels: list[int | None] = [class_index[r.label] for r in content]
    features = np.stack([r.features for r in content])

    counters = AssemblyCounters(records=len(cites))
    seen: set[tuple[int, int]] = set()
    edges: list[tuple[int, int]] = []
    for rec in cites:
        if rec.cited not in key_to_id or rec.citing not in key_to_id:
            counters.unknown_key += 1
            continue
        cited, citing = key_to_id[rec.cited], key_to_id[rec.citing]
        u, v = (citing, cited) if edge_semantics == CITING_TO_CITED else (cited, citing)
        if u == v:
            counters.self_loops += 1
            continue
        if (u, v) in seen:
            counters.duplicates += 1
            continue
        seen.add((u, v))
        edges.append((u, v))
    counters.edges_added = len(edges)

    if texts is None:
        node_texts = [MISSING_TEXT_MARKER] * len(keys)
    else:
        node_texts = [texts.get(k, MISSING_TEXT_MARKER) for k in keys]

    graph = build_graph(keys, edges, node_texts, features, labels, class_names)
    return graph, counters


def load_embeddings(path: str | Path, graph: DirectedTAG) -> np.ndarray:
    """Replace node features with precomputed embeddings.

    The file must cover every node key; dimension uniformity is enforced.
    Returns the new feature matrix (the graph is not mutated).
    """
    vectors: dict[str, np.ndarray] = {}
    dim: int | None = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            if "\t" not in line:
                raise ParseError(f"{path}:{lineno}: expected key<TAB>comma-separated floats")
            key, values = line.split("\t", 1)
            try:
                vec = np.array([float(x) for x in values.split(",")], dtype=np.float64)
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: bad float ({exc})") from exc
            if dim is None:
                dim = vec.size
            elif vec.size != dim:
                raise ParseError(
                    f"{path}:{lineno}: expected dimension {dim}, found {vec.size}"
                )
            vectors[key] = vec
    missing = [k for k in graph.original_keys if k not in vectors]
    if missing:
        shown = ", ".join(missing[:10])
        raise ValueError(f"embeddings file missing {len(missing)} node key(s): {shown}")
    return np.stack([vectors[k] for k in graph.original_keys])


def graph_to_json(graph: DirectedTAG) -> dict:
    return {
        "schema_version": GRAPH_SCHEMA_VERSION,
        "class_names": graph.class_names,
        "nodes": [
            {
                "key": graph.original_keys[i],
                "text": graph.texts[i],
                "label": graph.labels[i],
                "features": graph.features[i].tolist(),
            }
            for i in range(graph.num_nodes)
        ],
        "edges": sorted(graph.edges()),
    }


def graph_from_json(doc: dict) -> DirectedTAG:
    version = doc.get("schema_version")
    if version != GRAPH_SCHEMA_VERSION:
        raise ValueError(f"unsupported graph schema version {version!r}")
    nodes = doc["nodes"]
    features = np.array([n["features"] for n in nodes], dtype=np.float64)
    if features.ndim == 1:  # zero-width feature rows
        features = features.reshape(len(nodes), 0)
    return build_graph(
        keys=[n["key"] for n in nodes],
        edges=[tuple(e) for e in doc["edges"]],
        texts=[n["text"] for n in nodes],
        features=features,
        labels=[n["label"] for n in nodes],
        class_names=list(doc["class_names"]),
    )


def save_graph(graph: DirectedTAG, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(graph_to_json(graph), fh, sort_keys=True, indent=1)
        fh.write("\n")


def load_graph(path: str | Path) -> DirectedTAG:
    with open(path, encoding="utf-8") as fh:
        return graph_from_json(json.load(fh))
