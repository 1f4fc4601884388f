from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np
import pytest

from crowdtag.dataio import (
    MISSING_TEXT_MARKER,
    CiteRecord,
    ParseError,
    assemble,
    graph_from_json,
    graph_to_json,
    load_embeddings,
    load_graph,
    parse_cites,
    parse_content,
    parse_texts,
    save_graph,
)
from crowdtag.synthetic import synthetic_citation_graph, write_dataset_files


def write(tmp_path: Path, name: str, text: str) -> Path:
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


# --- parse_content -----------------------------------------------------------

def test_parse_content_basic(tmp_path):
    p = write(tmp_path, "a.content", "p1 0 1 0 Theory\np2 1 0 0 Systems\n")
    records = parse_content(p)
    assert [r.key for r in records] == ["p1", "p2"]
    assert records[0].label == "Theory"
    np.testing.assert_array_equal(records[0].features, [0.0, 1.0, 0.0])


def test_parse_content_dimension_mismatch(tmp_path):
    p = write(tmp_path, "b.content", "p1 0 1 0 Theory\np2 1 0 0 1 Systems\n")
    with pytest.raises(ParseError, match=":2"):
        parse_content(p)


def test_parse_content_empty_file(tmp_path):
    p = write(tmp_path, "c.content", "")
    with pytest.raises(ParseError):
        parse_content(p)


def test_parse_content_skips_blank_lines(tmp_path):
    p = write(tmp_path, "d.content", "p1 0 1 Theory\n\np2 1 0 Theory\n")
    assert len(parse_content(p)) == 2


def test_parse_content_non_numeric(tmp_path):
    p = write(tmp_path, "e.content", "p1 0 x Theory\n")
    with pytest.raises(ParseError, match=":1"):
        parse_content(p)


# --- parse_cites -------------------------------------------------------------

def test_parse_cites_basic(tmp_path):
    p = write(tmp_path, "a.cites", "p2\tp1\n")
    records, blank = parse_cites(p)
    assert records == [CiteRecord(cited="p2", citing="p1")]
    assert blank == 0


def test_parse_cites_blank_lines_counted(tmp_path):
    p = write(tmp_path, "b.cites", "p2\tp1\n\n\np1\tp3\n")
    records, blank = parse_cites(p)
    assert len(records) == 2
    assert blank == 2


def test_parse_cites_wrong_field_count(tmp_path):
    p = write(tmp_path, "c.cites", "p2\tp1\np2\n")
    with pytest.raises(ParseError, match=":2"):
        parse_cites(p)


# --- assemble ------------------------------------------------------------------

def two_node_content(tmp_path):
    p = write(tmp_path, "g.content", "p1 0 1 Theory\np2 1 0 Systems\n")
    return parse_content(p)


def test_assemble_edge_semantics(tmp_path):
    content = two_node_content(tmp_path)
    cites = [CiteRecord(cited="p2", citing="p1")]
    graph, counters = assemble(content, cites, "citing_to_cited")
    # p1 cites p2: edge p1 -> p2, i.e. 0 -> 1
    assert graph.num_nodes == 2
    assert graph.edges() == [(0, 1)]
    assert counters.edges_added == 1 and counters.reconciles()

    graph_rev, _ = assemble(content, cites, "cited_to_citing")
    assert graph_rev.edges() == [(1, 0)]


def test_assemble_unknown_key_skipped(tmp_path):
    content = two_node_content(tmp_path)
    cites = [CiteRecord(cited="p2", citing="p1"), CiteRecord(cited="nope", citing="p1")]
    graph, counters = assemble(content, cites)
    assert graph.num_edges == 1
    assert counters.unknown_key == 1 and counters.reconciles()


def test_assemble_self_citation_dropped(tmp_path):
    content = two_node_content(tmp_path)
    cites = [CiteRecord(cited="p1", citing="p1")]
    graph, counters = assemble(content, cites)
    assert graph.num_edges == 0
    assert counters.self_loops == 1 and counters.reconciles()


def test_assemble_duplicates_deduplicated(tmp_path):
    content = two_node_content(tmp_path)
    cites = [CiteRecord(cited="p2", citing="p1")] * 3
    graph, counters = assemble(content, cites)
    assert graph.num_edges == 1
    assert counters.duplicates == 2 and counters.reconciles()


def test_assemble_texts_default_and_supplied(tmp_path):
    content = two_node_content(tmp_path)
    graph, _ = assemble(content, [])
    assert graph.texts == [MISSING_TEXT_MARKER] * 2

    graph2, _ = assemble(content, [], texts={"p1": "the first paper"})
    assert graph2.texts[0] == "the first paper"
    assert graph2.texts[1] == MISSING_TEXT_MARKER


def test_assemble_zero_edges_is_not_an_error(tmp_path):
    content = two_node_content(tmp_path)
    graph, _ = assemble(content, [])
    assert graph.num_edges == 0
    assert graph.homophily_tie(0, 0).members == (0,)


def test_assemble_class_names_sorted(tmp_path):
    p = write(tmp_path, "h.content", "a 0 Zeta\nb 1 Alpha\nc 0 Mid\n")
    graph, _ = assemble(parse_content(p), [])
    assert graph.class_names == ["Alpha", "Mid", "Zeta"]
    assert graph.labels == [2, 0, 1]


# --- texts / embeddings ---------------------------------------------------------

def test_parse_texts(tmp_path):
    p = write(tmp_path, "a.texts", "p1\thello world\np2\twith\ttab inside\n")
    texts = parse_texts(p)
    assert texts["p1"] == "hello world"
    assert texts["p2"] == "with\ttab inside"


def test_load_embeddings_replaces_features(tmp_path):
    content = two_node_content(tmp_path)
    graph, _ = assemble(content, [])
    p = write(tmp_path, "a.emb", "p1\t1.0,2.0,3.0,4.0\np2\t5.0,6.0,7.0,8.0\n")
    feats = load_embeddings(p, graph)
    assert feats.shape == (2, 4)
    np.testing.assert_array_equal(feats[1], [5.0, 6.0, 7.0, 8.0])


def test_load_embeddings_missing_key(tmp_path):
    content = two_node_content(tmp_path)
    graph, _ = assemble(content, [])
    p = write(tmp_path, "b.emb", "p1\t1.0,2.0\n")
    with pytest.raises(ValueError, match="p2"):
        load_embeddings(p, graph)


def test_load_embeddings_dim_mismatch(tmp_path):
    content = two_node_content(tmp_path)
    graph, _ = assemble(content, [])
    p = write(tmp_path, "c.emb", "p1\t1.0,2.0\np2\t1.0,2.0,3.0\n")
    with pytest.raises(ParseError, match=":2"):
        load_embeddings(p, graph)


# --- serialization ---------------------------------------------------------------

def test_graph_json_roundtrip(tmp_path):
    graph = synthetic_citation_graph(n=40, num_classes=3, seed=4)
    path = tmp_path / "graph.json"
    save_graph(graph, path)
    loaded = load_graph(path)
    assert loaded.original_keys == graph.original_keys
    assert loaded.texts == graph.texts
    assert loaded.labels == graph.labels
    assert loaded.class_names == graph.class_names
    assert set(loaded.edges()) == set(graph.edges())
    np.testing.assert_array_equal(loaded.features, graph.features)


def test_graph_json_rejects_wrong_version():
    doc = {"schema_version": 999, "nodes": [], "edges": [], "class_names": []}
    with pytest.raises(ValueError, match="schema"):
        graph_from_json(doc)


def test_graph_json_document_shape(fixture30):
    doc = graph_to_json(fixture30)
    assert doc["schema_version"] == 1
    assert len(doc["nodes"]) == 30
    assert all(set(n) == {"key", "text", "label", "features"} for n in doc["nodes"])


# --- dataset-file round trip ------------------------------------------------------

def test_dataset_files_roundtrip(tmp_path):
    graph = synthetic_citation_graph(n=25, num_classes=3, seed=8)
    content_p, cites_p, texts_p = write_dataset_files(graph, str(tmp_path / "toy"))
    content = parse_content(content_p)
    cites, _ = parse_cites(cites_p)
    texts = parse_texts(texts_p)
    rebuilt, counters = assemble(content, cites, texts=texts)
    assert rebuilt.num_nodes == graph.num_nodes
    assert set(rebuilt.edges()) == set(graph.edges())
    assert rebuilt.texts == graph.texts
    np.testing.assert_array_equal(rebuilt.features, graph.features)
    assert counters.reconciles()


# --- public Cora (optional, env-gated) ---------------------------------------------

def cora_dir() -> Path | None:
    env = os.environ.get("CORA_DIR")
    candidates = [Path(env)] if env else []
    candidates.append(Path(__file__).parent / "data" / "cora")
    for c in candidates:
        if c.is_dir() and (c / "cora.content").exists():
            return c
    return None


def line_count_oracle(path: Path) -> tuple[int, int, set[str]]:
    """Independent count of rows, feature columns, and label set."""
    rows = 0
    labels: set[str] = set()
    columns = None
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            rows += 1
            labels.add(parts[-1])
            if columns is None:
                columns = len(parts) - 2
    return rows, columns or 0, labels


@pytest.mark.skipif(cora_dir() is None, reason="public Cora files not available (set CORA_DIR)")
def test_public_cora_parses_to_expected_shape():
    d = cora_dir()
    rows, dim, labels = line_count_oracle(d / "cora.content")
    assert (rows, dim, len(labels)) == (2708, 1433, 7)

    records = parse_content(d / "cora.content")
    assert len(records) == 2708
    assert records[0].features.size == 1433
    cites, _ = parse_cites(d / "cora.cites")
    graph, counters = assemble(records, cites)
    assert graph.num_nodes == 2708
    assert graph.num_classes == 7
    assert counters.reconciles()
