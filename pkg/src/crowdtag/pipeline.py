"""Staged pipeline: ingest -> annotate -> aggregate -> filter -> train.

Each stage reads its predecessor's on-disk artifact, writes its own alongside
a manifest of input hashes, and is skipped on re-run when nothing changed.
Stages after ``annotate`` never perform network I/O: aggregation replays the
response cache and fails hard on a miss instead of re-querying.

All artifacts carry a schema version and the hash of the producing config
(JSON fields, or a leading ``#`` comment line for CSV).
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import aggregate as agg
from . import annotate as ann
from . import dataio, filtering, gcn, homophily
from .graph import NUM_TIE_CONFIGS, DirectedTAG

ARTIFACT_SCHEMA_VERSION = 1

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_MISSING_ARTIFACT = 2
EXIT_BUDGET = 3
EXIT_TRANSPORT = 4

STAGES = ("ingest", "annotate", "aggregate", "filter", "train")


class ConfigError(ValueError):
    """Invalid pipeline configuration; maps to exit code 1."""


class MissingArtifactError(RuntimeError):
    """A required prior-stage artifact is absent; maps to exit code 2."""


class CacheMissError(RuntimeError):
    """Replay hit an uncached prompt after the annotate stage."""


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

@dataclass
class DatasetConfig:
    content: str = ""
    cites: str = ""
    texts: str | None = None
    embeddings: str | None = None
    edge_semantics: str = dataio.CITING_TO_CITED


@dataclass
class AnnotatorConfig:
    mode: str = "oracle"  # "oracle" or "llm"
    endpoint: str = ""
    model: str = "oracle"
    api_key_env: str = ""
    temperature: float = 0.0
    budget_usd: float = 2.5
    price_per_1k_in: float = 0.0005
    price_per_1k_out: float = 0.0015
    cache: str | None = None
    max_inflight: int = 1
    requests_per_second: float | None = None
    retries: int = 3
    backoff_s: float = 1.0
    noise: float = 0.0
    seed: int = 0
    node_cap: int | None = None
    truncation: dict = field(
        default_factory=lambda: {
            "max_neighbors_per_role": 5,
            "neighbor_text_chars": 600,
            "center_text_chars": 1200,
        }
    )


@dataclass
class FilterConfig:
    gamma: float = 0.02
    lam: float = 0.78
    eta: float = 0.15
    k: int | None = None
    kmeans_seed: int = 0
    damping: float = 0.85


@dataclass
class GCNTrainConfig:
    hidden: int = 16
    learning_rate: float = 0.01
    weight_decay: float = 5e-4
    dropout: float = 0.5
    epochs: int = 200
    seed: int = 0
    val_size: int = 500


@dataclass
class SweepConfig:
    gamma_values: list[float] = field(default_factory=list)
    lambda_values: list[float] = field(default_factory=list)
    seeds: int = 5


@dataclass
class PipelineConfig:
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    annotator: AnnotatorConfig = field(default_factory=AnnotatorConfig)
    filter: FilterConfig = field(default_factory=FilterConfig)
    gcn: GCNTrainConfig = field(default_factory=GCNTrainConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    out_dir: str = "out"

    def validate(self) -> None:
        f = self.filter
        if f.gamma < 0 or f.lam < 0 or f.gamma + f.lam > 1.0 + 1e-12:
            raise ConfigError(f"filter weights invalid: gamma={f.gamma} lambda={f.lam}")
        if not 0.0 < f.eta <= 1.0:
            raise ConfigError(f"eta must be in (0, 1], got {f.eta}")
        if self.annotator.budget_usd < 0:
            raise ConfigError("budget must be >= 0")
        if self.annotator.mode not in ("oracle", "llm"):
            raise ConfigError(f"unknown annotator mode {self.annotator.mode!r}")
        if self.annotator.mode == "llm" and not self.annotator.endpoint:
            raise ConfigError("llm mode requires an endpoint URL")
        if not 0.0 <= self.annotator.noise <= 1.0:
            raise ConfigError("oracle noise must be in [0, 1]")


def _merge_section(cls, values: dict, aliases: dict[str, str] | None = None):
    aliases = aliases or {}
    known = {f_.name for f_ in cls.__dataclass_fields__.values()}  # type: ignore[attr-defined]
    kwargs = {}
    for key, val in values.items():
        name = aliases.get(key, key)
        if name not in known:
            raise ConfigError(f"unknown config key {key!r} in {cls.__name__}")
        kwargs[name] = val
    return cls(**kwargs)


def load_config(path: str | Path | None = None, overrides: dict | None = None) -> PipelineConfig:
    """Read the JSON config file and apply CLI overrides; validates."""
    doc: dict = {}
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    if overrides:
        for section, values in overrides.items():
            if isinstance(values, dict):
                doc.setdefault(section, {}).update(
                    {k: v for k, v in values.items() if v is not None}
                )
            elif values is not None:
                doc[section] = values

    cfg = PipelineConfig(
        dataset=_merge_section(DatasetConfig, doc.get("dataset", {})),
        annotator=_merge_section(AnnotatorConfig, doc.get("annotator", {})),
        filter=_merge_section(FilterConfig, doc.get("filter", {}), {"lambda": "lam"}),
        gcn=_merge_section(GCNTrainConfig, doc.get("gcn", {})),
        sweep=_merge_section(SweepConfig, doc.get("sweep", {})),
        out_dir=doc.get("out_dir", "out"),
    )
    cfg.validate()
    return cfg


def config_hash(cfg: PipelineConfig, sections: tuple[str, ...]) -> str:
    doc = {s: asdict(getattr(cfg, s)) for s in sections}
    blob = json.dumps(doc, sort_keys=True).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:16]


# ---------------------------------------------------------------------------
# Artifacts, manifests, locking
# ---------------------------------------------------------------------------

def _file_hash(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()[:16]


@dataclass
class StagePaths:
    out_dir: Path

    def __post_init__(self) -> None:
        self.out_dir = Path(self.out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)

    @property
    def graph(self) -> Path:
        return self.out_dir / "graph.json"

    @property
    def cache(self) -> Path:
        return self.out_dir / "annotations.jsonl"

    @property
    def annotated_nodes(self) -> Path:
        return self.out_dir / "annotated_nodes.json"

    @property
    def pseudo_labels(self) -> Path:
        return self.out_dir / "pseudo_labels.csv"

    @property
    def worker_acc(self) -> Path:
        return self.out_dir / "worker_accuracy.csv"

    @property
    def scores(self) -> Path:
        return self.out_dir / "scores.csv"

    @property
    def selected(self) -> Path:
        return self.out_dir / "selected.json"

    @property
    def history(self) -> Path:
        return self.out_dir / "history.csv"

    @property
    def model(self) -> Path:
        return self.out_dir / "model.json"

    @property
    def report(self) -> Path:
        return self.out_dir / "report.json"

    def manifest(self, stage: str) -> Path:
        return self.out_dir / f"manifest_{stage}.json"


@contextmanager
def pipeline_lock(out_dir: Path):
    """One pipeline instance per output directory."""
    out_dir.mkdir(parents=True, exist_ok=True)
    lock = out_dir / ".lock"
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise RuntimeError(f"output directory is locked by another run: {lock}") from None
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield
    finally:
        lock.unlink(missing_ok=True)


def _manifest_current(
    paths: StagePaths, stage: str, cfg_hash: str, inputs: list[Path], outputs: list[Path]
) -> bool:
    mpath = paths.manifest(stage)
    if not mpath.exists():
        return False
    try:
        doc = json.loads(mpath.read_text())
    except json.JSONDecodeError:
        return False
    if doc.get("config_hash") != cfg_hash:
        return False
    for p, h in doc.get("inputs", {}).items():
        if not Path(p).exists() or _file_hash(Path(p)) != h:
            return False
    if set(doc.get("inputs", {})) != {str(p) for p in inputs}:
        return False
    return all(p.exists() for p in outputs)


def _write_manifest(
    paths: StagePaths, stage: str, cfg_hash: str, inputs: list[Path], outputs: list[Path]
) -> None:
    doc = {
        "stage": stage,
        "schema_version": ARTIFACT_SCHEMA_VERSION,
        "config_hash": cfg_hash,
        "inputs": {str(p): _file_hash(p) for p in inputs},
        "outputs": [str(p) for p in outputs],
    }
    paths.manifest(stage).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def _csv_header_line(cfg_hash: str) -> str:
    return f"# schema_version={ARTIFACT_SCHEMA_VERSION} config_hash={cfg_hash}\n"


def _write_csv(path: Path, cfg_hash: str, header: list[str], rows: list[list]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(_csv_header_line(cfg_hash))
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def read_csv_rows(path: Path) -> tuple[list[str], list[list[str]]]:
    """Read one of our CSV artifacts, skipping ``#`` comment lines."""
    if not path.exists():
        raise MissingArtifactError(f"missing artifact {path}")
    with open(path, encoding="utf-8", newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.reader(lines)
    header = next(reader)
    return header, [row for row in reader]


def _require(path: Path, produced_by: str) -> Path:
    if not path.exists():
        raise MissingArtifactError(f"{path} not found; run the {produced_by!r} stage first")
    return path


# ---------------------------------------------------------------------------
# Stages
# ---------------------------------------------------------------------------

def stage_ingest(cfg: PipelineConfig, paths: StagePaths) -> bool:
    """Parse the dataset files and write the assembled graph artifact."""
    if not cfg.dataset.content or not cfg.dataset.cites:
        raise ConfigError("dataset.content and dataset.cites are required")
    inputs = [Path(cfg.dataset.content), Path(cfg.dataset.cites)]
    if cfg.dataset.texts:
        inputs.append(Path(cfg.dataset.texts))
    if cfg.dataset.embeddings:
        inputs.append(Path(cfg.dataset.embeddings))
    for p in inputs:
        if not p.exists():
            raise ConfigError(f"dataset file not found: {p}")
    cfg_hash = config_hash(cfg, ("dataset",))
    if _manifest_current(paths, "ingest", cfg_hash, inputs, [paths.graph]):
        return False

    content = dataio.parse_content(cfg.dataset.content)
    cites, _ = dataio.parse_cites(cfg.dataset.cites)
    texts = dataio.parse_texts(cfg.dataset.texts) if cfg.dataset.texts else None
    graph, counters = dataio.assemble(content, cites, cfg.dataset.edge_semantics, texts)
    if cfg.dataset.embeddings:
        graph.features = dataio.load_embeddings(cfg.dataset.embeddings, graph)
    if not counters.reconciles():
        raise RuntimeError(f"edge counters do not reconcile: {counters}")
    doc = dataio.graph_to_json(graph)
    doc["config_hash"] = cfg_hash
    paths.graph.write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n")
    _write_manifest(paths, "ingest", cfg_hash, inputs, [paths.graph])
    return True


def _annotation_order(cfg: PipelineConfig, graph: DirectedTAG) -> list[int]:
    """Nodes to annotate: all, or the stage-one top ``node_cap`` re-ranked.

    The stage-one score needs no annotations, so capping by it keeps the
    expensive LLM calls on the nodes the filter will actually consider.
    """
    nodes = list(range(graph.num_nodes))
    cap = cfg.annotator.node_cap
    if cap is None or cap >= len(nodes):
        return nodes
    pr = filtering.pagerank(graph, damping=cfg.filter.damping)
    model = filtering.kmeans(graph.features, k=graph.num_classes, seed=cfg.filter.kmeans_seed)
    dens = filtering.c_density(graph.features, model)
    deg = np.array([graph.degree(v) for v in nodes], dtype=np.float64)
    s1 = filtering.stage1_scores(pr, dens, deg, cfg.filter.gamma, cfg.filter.lam)
    return sorted(filtering.select_top_k(np.arange(graph.num_nodes), s1, cap))


def _make_client(cfg: PipelineConfig, graph: DirectedTAG) -> ann.Client:
    a = cfg.annotator
    if a.mode == "oracle":
        return ann.SyntheticOracleClient(graph, noise=a.noise, seed=a.seed)
    api_key = os.environ.get(a.api_key_env) if a.api_key_env else None
    return ann.HttpChatClient(
        endpoint=a.endpoint,
        model=a.model,
        api_key=api_key,
        temperature=a.temperature,
        retries=a.retries,
        backoff_s=a.backoff_s,
    )


def _cache_path(cfg: PipelineConfig, paths: StagePaths) -> Path:
    return Path(cfg.annotator.cache) if cfg.annotator.cache else paths.cache


def stage_annotate(cfg: PipelineConfig, paths: StagePaths, client: ann.Client | None = None) -> bool:
    """Run the eight workers per node against the cache-backed client."""
    graph_path = _require(paths.graph, "ingest")
    sections: tuple[str, ...] = ("dataset", "annotator")
    if cfg.annotator.node_cap is not None:
        sections = ("dataset", "annotator", "filter")
    cfg_hash = config_hash(cfg, sections)
    cache_path = _cache_path(cfg, paths)
    outputs = [cache_path, paths.annotated_nodes]
    if _manifest_current(paths, "annotate", cfg_hash, [graph_path], outputs):
        return False

    graph = dataio.load_graph(graph_path)
    nodes = _annotation_order(cfg, graph)
    if client is None:
        client = _make_client(cfg, graph)
    if not cache_path.exists():
        ann.ResponseCache.write_header(cache_path, cfg_hash)
    cache = ann.ResponseCache(cache_path)
    budget = ann.BudgetState(
        limit_usd=cfg.annotator.budget_usd,
        price_per_1k_in=cfg.annotator.price_per_1k_in,
        price_per_1k_out=cfg.annotator.price_per_1k_out,
    )
    policy = ann.TruncationPolicy(**cfg.annotator.truncation)
    results = ann.annotate_graph(
        graph,
        nodes,
        client,
        cache,
        budget,
        model=cfg.annotator.model,
        policy=policy,
        max_inflight=cfg.annotator.max_inflight,
        requests_per_second=cfg.annotator.requests_per_second,
    )
    doc = {
        "schema_version": ARTIFACT_SCHEMA_VERSION,
        "config_hash": cfg_hash,
        "nodes": nodes,
        "spent_usd": budget.spent_usd,
        "workers_per_node": NUM_TIE_CONFIGS,
        "unparseable": sum(
            1 for anns in results.values() for a in anns if a.parse_failed
        ),
    }
    paths.annotated_nodes.write_text(json.dumps(doc, indent=1) + "\n")
    _write_manifest(paths, "annotate", cfg_hash, [graph_path], outputs)
    return True


class _ReplayClient:
    """Client that must never be reached: post-annotate stages are offline."""

    def complete(self, prompt: ann.PromptSpec) -> ann.ClientResponse:
        raise CacheMissError(
            f"prompt for node {prompt.center} config {prompt.config_k} is not cached"
        )


def replay_annotations(
    graph: DirectedTAG,
    nodes: list[int],
    cache: ann.ResponseCache,
    model: str,
    policy: ann.TruncationPolicy,
) -> dict[int, list[ann.WorkerAnnotation]]:
    """Rebuild every worker annotation from the response cache alone.

    A miss raises CacheMissError from the refusing client; nothing is spent.
    """
    budget = ann.BudgetState(limit_usd=float("inf"))
    return ann.annotate_graph(
        graph, nodes, _ReplayClient(), cache, budget, model=model, policy=policy
    )


def stage_aggregate(cfg: PipelineConfig, paths: StagePaths) -> bool:
    """Fuse cached worker responses into the pseudo-label table."""
    graph_path = _require(paths.graph, "ingest")
    cache_path = _cache_path(cfg, paths)
    _require(cache_path, "annotate")
    nodes_path = _require(paths.annotated_nodes, "annotate")
    cfg_hash = config_hash(cfg, ("dataset", "annotator"))
    inputs = [graph_path, cache_path, nodes_path]
    outputs = [paths.pseudo_labels, paths.worker_acc]
    if _manifest_current(paths, "aggregate", cfg_hash, inputs, outputs):
        return False

    graph = dataio.load_graph(graph_path)
    nodes = json.loads(nodes_path.read_text())["nodes"]
    cache = ann.ResponseCache(cache_path)
    policy = ann.TruncationPolicy(**cfg.annotator.truncation)
    try:
        annotations = replay_annotations(graph, nodes, cache, cfg.annotator.model, policy)
    except (CacheMissError, ann.BudgetExhaustedError) as exc:
        raise MissingArtifactError(
            f"annotation cache incomplete ({exc}); re-run the 'annotate' stage"
        ) from exc

    pseudo, dropped = agg.aggregate_all(annotations, graph.class_names)
    rows = [
        [
            graph.original_keys[v],
            graph.class_names[p.label],
            f"{p.confidence:.6f}",
            p.unparseable_count,
        ]
        for v, p in sorted(pseudo.items())
    ]
    _write_csv(
        paths.pseudo_labels, cfg_hash, ["node_key", "label", "confidence", "unparseable_count"], rows
    )

    truth = {v: graph.labels[v] for v in nodes if graph.labels[v] is not None}
    if truth:
        acc_rows = [
            [k, f"{accuracy:.6f}", n]
            for k, accuracy, n in agg.worker_accuracy(annotations, truth, graph.class_names)
        ]
    else:
        acc_rows = []
    _write_csv(paths.worker_acc, cfg_hash, ["config_k", "accuracy", "n"], acc_rows)
    if dropped:
        print(f"aggregate: dropped {len(dropped)} node(s) with no parseable worker")
    _write_manifest(paths, "aggregate", cfg_hash, inputs, outputs)
    return True


def load_pseudo_labels(paths: StagePaths, graph: DirectedTAG) -> tuple[dict[int, int], dict[int, float]]:
    """Pseudo-label table -> (label by node id, confidence by node id)."""
    _, rows = read_csv_rows(_require(paths.pseudo_labels, "aggregate"))
    class_index = {c: i for i, c in enumerate(graph.class_names)}
    labels: dict[int, int] = {}
    confidence: dict[int, float] = {}
    for key, label, conf, _unparseable in rows:
        v = graph.key_to_id[key]
        labels[v] = class_index[label]
        confidence[v] = float(conf)
    return labels, confidence


def default_k(graph: DirectedTAG, eta: float) -> int:
    """Stage-one size when unset: conventional 20 nodes per class, pre-filter."""
    return math.ceil(20 * graph.num_classes / eta)


def stage_filter(cfg: PipelineConfig, paths: StagePaths) -> bool:
    """Two-stage selection over the annotated pool; writes scores + selection."""
    graph_path = _require(paths.graph, "ingest")
    inputs = [graph_path, _require(paths.pseudo_labels, "aggregate")]
    cfg_hash = config_hash(cfg, ("dataset", "annotator", "filter"))
    outputs = [paths.scores, paths.selected]
    if _manifest_current(paths, "filter", cfg_hash, inputs, outputs):
        return False

    graph = dataio.load_graph(graph_path)
    labels, confidence = load_pseudo_labels(paths, graph)
    k = cfg.filter.k if cfg.filter.k is not None else default_k(graph, cfg.filter.eta)
    final, scores = filtering.run_filter(
        graph,
        graph.features,
        annotated_nodes=sorted(labels),
        confidences=confidence,
        pseudo_label_of=labels,
        gamma=cfg.filter.gamma,
        lam=cfg.filter.lam,
        eta=cfg.filter.eta,
        k=k,
        kmeans_seed=cfg.filter.kmeans_seed,
        damping=cfg.filter.damping,
    )

    def fmt(x: float) -> str:
        return "" if np.isnan(x) else f"{x:.8f}"

    rows = []
    for i, v in enumerate(scores.node_ids):
        rows.append(
            [
                graph.original_keys[int(v)],
                f"{scores.pagerank[i]:.8f}",
                f"{scores.c_density[i]:.8f}",
                int(scores.degree[i]),
                f"{scores.s1[i]:.8f}",
                fmt(scores.coe[i]),
                fmt(scores.confidence[i]),
                fmt(scores.s2[i]),
                int(scores.selected_stage[i]),
            ]
        )
    _write_csv(
        paths.scores,
        cfg_hash,
        ["node_key", "P", "D", "Deg", "s1", "coe", "conf", "s2", "selected_stage"],
        rows,
    )
    stage1 = [int(v) for v in scores.node_ids[scores.selected_stage >= 1]]
    doc = {
        "schema_version": ARTIFACT_SCHEMA_VERSION,
        "config_hash": cfg_hash,
        "k": k,
        "eta": cfg.filter.eta,
        "stage1_nodes": stage1,
        "final_nodes": final,
    }
    paths.selected.write_text(json.dumps(doc, indent=1) + "\n")
    _write_manifest(paths, "filter", cfg_hash, inputs, outputs)
    return True


def train_once(
    graph: DirectedTAG,
    train_nodes: list[int],
    pseudo_labels: dict[int, int],
    gcn_cfg: GCNTrainConfig,
    a_hat=None,
) -> tuple[list[gcn.EpochRecord], float, gcn.GCNModel, float | None]:
    """Train a GCN on pseudo-labeled nodes.

    Returns (history, test accuracy, model, validation accuracy). The seeded
    validation sample is held out of the test set and used only for the
    report.
    """
    config = gcn.GCNConfig(
        hidden=gcn_cfg.hidden,
        learning_rate=gcn_cfg.learning_rate,
        weight_decay=gcn_cfg.weight_decay,
        dropout=gcn_cfg.dropout,
        epochs=gcn_cfg.epochs,
        seed=gcn_cfg.seed,
    )
    if a_hat is None:
        a_hat = gcn.normalize_adjacency(graph)
    train_ids, val_ids, test_ids = gcn.split_nodes(
        graph, train_nodes, val_size=gcn_cfg.val_size, seed=gcn_cfg.seed
    )
    model = gcn.init_model(a_hat, graph.feature_dim, graph.num_classes, config)
    y_train = np.array([pseudo_labels[v] for v in train_ids], dtype=np.intp)
    y_test = np.array([graph.labels[v] for v in test_ids], dtype=np.intp)
    history = gcn.train(model, graph.features, train_ids, y_train, test_ids, y_test)
    test_acc = gcn.evaluate(model, graph.features, test_ids, y_test)
    val_acc = None
    if len(val_ids):
        y_val = np.array([graph.labels[v] for v in val_ids], dtype=np.intp)
        val_acc = gcn.evaluate(model, graph.features, val_ids, y_val)
    return history, test_acc, model, val_acc


def stage_train(cfg: PipelineConfig, paths: StagePaths) -> bool:
    """Train the GCN on the selected pseudo-labeled nodes; write the report."""
    graph_path = _require(paths.graph, "ingest")
    inputs = [
        graph_path,
        _require(paths.pseudo_labels, "aggregate"),
        _require(paths.selected, "filter"),
    ]
    cfg_hash = config_hash(cfg, ("dataset", "annotator", "filter", "gcn"))
    outputs = [paths.history, paths.model, paths.report]
    if _manifest_current(paths, "train", cfg_hash, inputs, outputs):
        return False

    graph = dataio.load_graph(graph_path)
    labels, _conf = load_pseudo_labels(paths, graph)
    selected = json.loads(paths.selected.read_text())["final_nodes"]
    history, test_acc, model, val_acc = train_once(graph, selected, labels, cfg.gcn)

    _write_csv(
        paths.history,
        cfg_hash,
        ["epoch", "train_acc", "test_acc", "loss"],
        [
            [r.epoch, f"{r.train_acc:.6f}", f"{r.test_acc:.6f}", f"{r.loss:.8f}"]
            for r in history
        ],
    )
    model_doc = gcn.model_to_json(model)
    model_doc["config_hash"] = cfg_hash
    paths.model.write_text(json.dumps(model_doc) + "\n")

    truth_on_train = [
        (labels[v], graph.labels[v]) for v in selected if graph.labels[v] is not None
    ]
    pseudo_acc = (
        sum(1 for p, t in truth_on_train if p == t) / len(truth_on_train)
        if truth_on_train
        else None
    )
    report = {
        "schema_version": ARTIFACT_SCHEMA_VERSION,
        "config_hash": cfg_hash,
        "train_nodes": len(selected),
        "test_accuracy": test_acc,
        "val_accuracy": val_acc,
        "final_train_accuracy": history[-1].train_acc,
        "epochs": len(history),
        "pseudo_label_accuracy_on_train": pseudo_acc,
    }
    paths.report.write_text(json.dumps(report, indent=1) + "\n")
    _write_manifest(paths, "train", cfg_hash, inputs, outputs)
    return True


def run_pipeline(cfg: PipelineConfig, paths: StagePaths, client: ann.Client | None = None) -> dict[str, bool]:
    """All stages in order; returns which stages actually ran."""
    ran = {}
    ran["ingest"] = stage_ingest(cfg, paths)
    ran["annotate"] = stage_annotate(cfg, paths, client=client)
    ran["aggregate"] = stage_aggregate(cfg, paths)
    ran["filter"] = stage_filter(cfg, paths)
    ran["train"] = stage_train(cfg, paths)
    return ran


# ---------------------------------------------------------------------------
# Sweep and theorem verification
# ---------------------------------------------------------------------------

def hyperparameter_sweep(
    cfg: PipelineConfig,
    paths: StagePaths,
    gamma_values: list[float],
    lambda_values: list[float],
    seeds: int,
) -> list[dict]:
    """Mean/std test accuracy per (gamma, lambda) cell over ``seeds`` runs.

    Requires cached annotations (the pseudo-label artifact); never queries
    the LLM.
    """
    if len(gamma_values) != len(lambda_values):
        raise ConfigError("gamma_values and lambda_values must have equal length")
    graph = dataio.load_graph(_require(paths.graph, "ingest"))
    labels, confidence = load_pseudo_labels(paths, graph)
    a_hat = gcn.normalize_adjacency(graph)
    k = cfg.filter.k if cfg.filter.k is not None else default_k(graph, cfg.filter.eta)

    results = []
    for gamma, lam in zip(gamma_values, lambda_values):
        if gamma < 0 or lam < 0 or gamma + lam > 1.0 + 1e-12:
            raise ConfigError(f"sweep cell invalid: gamma={gamma} lambda={lam}")
        final, _ = filtering.run_filter(
            graph,
            graph.features,
            annotated_nodes=sorted(labels),
            confidences=confidence,
            pseudo_label_of=labels,
            gamma=gamma,
            lam=lam,
            eta=cfg.filter.eta,
            k=k,
            kmeans_seed=cfg.filter.kmeans_seed,
            damping=cfg.filter.damping,
        )
        accs = []
        for s in range(seeds):
            gcn_cfg = GCNTrainConfig(**{**asdict(cfg.gcn), "seed": cfg.gcn.seed + s})
            _, acc, _, _ = train_once(graph, final, labels, gcn_cfg, a_hat=a_hat)
            accs.append(acc)
        arr = np.array(accs)
        results.append(
            {
                "gamma": gamma,
                "lambda": lam,
                "eta": cfg.filter.eta,
                "mean_acc": float(arr.mean()),
                "std_acc": float(arr.std(ddof=1)) if len(arr) > 1 else 0.0,
                "seeds": seeds,
            }
        )
    return results


def write_sweep_csv(path: Path, cfg_hash: str, results: list[dict]) -> None:
    _write_csv(
        path,
        cfg_hash,
        ["gamma", "lambda", "eta", "mean_acc", "std_acc", "seeds"],
        [
            [r["gamma"], r["lambda"], r["eta"], f"{r['mean_acc']:.6f}", f"{r['std_acc']:.6f}", r["seeds"]]
            for r in results
        ],
    )


def verify_theorem(
    alpha: float,
    num_classes: int,
    hops: int,
    samples: int,
    seed: int,
    out_path: Path | None = None,
) -> tuple[list[homophily.HopReport], bool]:
    """Closed form vs simulation; `passed` means every hop agrees within 3 SE
    and the dominance verdicts match the sign of the analytic gap."""
    params = homophily.HomophilyParams(alpha=alpha, num_classes=num_classes)
    fanout = 8
    # `samples` is the leaf count at the deepest hop
    num_roots = max(1, math.ceil(samples / fanout**hops))
    reports = homophily.simulate_propagation(params, hops, num_roots, fanout, seed)

    passed = True
    for r in reports:
        if abs(r.empirical - r.diagonal) > 3.0 * max(r.std_error, 1e-12):
            passed = False
        if r.dominant != (r.gap > 0):
            passed = False
    if out_path is not None:
        rows = [
            [
                r.hop,
                f"{r.diagonal:.10f}",
                f"{r.off_diagonal:.10f}",
                f"{r.empirical:.6f}",
                f"{r.gap:.10f}",
                "dominant" if r.dominant else "not_dominant",
            ]
            for r in reports
        ]
        _write_csv(
            out_path,
            f"alpha={alpha},classes={num_classes}",
            ["hop", "closed_diag", "closed_offdiag", "empirical", "gap", "verdict"],
            rows,
        )
    return reports, passed
