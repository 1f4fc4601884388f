"""crowdtag: LLM-crowdsourced annotation of directed text-attributed graphs.

Pipeline: parse a citation network, query eight structure-aware LLM workers
per node, fuse their guesses into pseudo-labels, select a high-value training
subset with a two-stage filter, and train a GCN on the result. A separate
module verifies the homophily-dominance property of multi-hop label
propagation, both in closed form and by simulation.
"""

# NB: the `annotate` / `aggregate` submodules keep their names; their main
# entry points are re-exported under package-level names that do not shadow
# the modules themselves.
from .aggregate import PseudoLabel, aggregate_all, worker_accuracy
from .annotate import (
    BudgetState,
    PromptSpec,
    ResponseCache,
    TruncationPolicy,
    WorkerAnnotation,
    annotate_graph,
    build_prompt,
    parse_response,
    synthetic_oracle,
)
from .dataio import assemble, load_embeddings, load_graph, parse_cites, parse_content, save_graph
from .filtering import c_density, coe, kmeans, pagerank, stage1_scores, stage2_select
from .graph import DirectedTAG, HomophilyTie, build_graph
from .homophily import (
    HomophilyParams,
    build_q,
    dominance_gap,
    eigen_check,
    q_power_closed_form,
    simulate_propagation,
)

__version__ = "0.1.0"

__all__ = [
    "DirectedTAG",
    "HomophilyTie",
    "build_graph",
    "parse_content",
    "parse_cites",
    "assemble",
    "load_embeddings",
    "save_graph",
    "load_graph",
    "PromptSpec",
    "WorkerAnnotation",
    "BudgetState",
    "ResponseCache",
    "TruncationPolicy",
    "build_prompt",
    "annotate_graph",
    "parse_response",
    "synthetic_oracle",
    "PseudoLabel",
    "aggregate_all",
    "worker_accuracy",
    "pagerank",
    "kmeans",
    "c_density",
    "stage1_scores",
    "stage2_select",
    "coe",
    "HomophilyParams",
    "build_q",
    "q_power_closed_form",
    "dominance_gap",
    "eigen_check",
    "simulate_propagation",
    "__version__",
]
