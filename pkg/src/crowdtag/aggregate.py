"""Fusion of the eight workers' guesses into one pseudo-label per node.

Confidence-weighted soft voting: each worker's guess list is renormalized to
unit mass (uniform when all confidences are zero), the per-class masses are
summed across workers, and the heaviest class wins with confidence equal to
its share of the total mass. Ties break toward the lower class index, so the
result is independent of worker order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .annotate import WorkerAnnotation
from .graph import NUM_TIE_CONFIGS


@dataclass
class PseudoLabel:
    node: int
    label: int
    confidence: float
    per_worker_top1: list[tuple[int, float] | None]
    unparseable_count: int


class NoUsableWorkersError(ValueError):
    """Every worker for the node was unparseable."""


def _normalized_mass(
    annotation: WorkerAnnotation, class_index: dict[str, int], num_classes: int
) -> np.ndarray | None:
    """Per-class confidence mass of one worker, summing to 1; None if unusable."""
    if annotation.parse_failed or not annotation.guesses:
        return None
    mass = np.zeros(num_classes)
    for label, conf in annotation.guesses:
        idx = class_index.get(label)
        if idx is not None:
            mass[idx] += max(0.0, float(conf))
    total = mass.sum()
    if total > 0:
        return mass / total
    return np.full(num_classes, 1.0 / num_classes)


def aggregate(
    node: int,
    workers: list[WorkerAnnotation],
    class_names: list[str],
) -> PseudoLabel:
    """Fuse 1..8 worker annotations into a single pseudo-label."""
    if not workers:
        raise ValueError(f"node {node}: no worker annotations")
    num_classes = len(class_names)
    class_index = {c: i for i, c in enumerate(class_names)}

    masses: list[np.ndarray] = []
    per_worker: list[tuple[int, float] | None] = []
    for ann in workers:
        mass = _normalized_mass(ann, class_index, num_classes)
        if mass is None:
            per_worker.append(None)
            continue
        masses.append(mass)
        top = class_index[ann.guesses[0][0]]  # guesses are ranked best-first
        per_worker.append((top, float(mass[top])))

    if not masses:
        raise NoUsableWorkersError(f"node {node}: all {len(workers)} workers unparseable")

    # exactly-rounded sums keep the result independent of worker order
    scores = np.array(
        [math.fsum(m[c] for m in masses) for c in range(num_classes)]
    )
    label = int(scores.argmax())
    return PseudoLabel(
        node=node,
        label=label,
        confidence=float(scores[label] / math.fsum(scores)),
        per_worker_top1=per_worker,
        unparseable_count=len(workers) - len(masses),
    )


def aggregate_all(
    annotations: dict[int, list[WorkerAnnotation]],
    class_names: list[str],
) -> tuple[dict[int, PseudoLabel], list[int]]:
    """Aggregate every annotated node; returns pseudo-labels plus the node ids
    that were dropped because no worker parsed."""
    pseudo: dict[int, PseudoLabel] = {}
    dropped: list[int] = []
    for node, workers in annotations.items():
        try:
            pseudo[node] = aggregate(node, workers, class_names)
        except NoUsableWorkersError:
            dropped.append(node)
    return pseudo, dropped


def worker_accuracy(
    annotations: dict[int, list[WorkerAnnotation]],
    ground_truth: dict[int, int],
    class_names: list[str],
) -> list[tuple[int, float, int]]:
    """Per-configuration top-1 accuracy against ground truth.

    Returns (config_k, accuracy, evaluated_count) rows; a worker whose every
    response was unparseable scores 0 over 0 evaluated nodes.
    """
    nodes = [v for v in annotations if v in ground_truth]
    if not nodes:
        raise ValueError("no nodes with ground truth to evaluate")
    class_index = {c: i for i, c in enumerate(class_names)}

    rows: list[tuple[int, float, int]] = []
    for k in range(NUM_TIE_CONFIGS):
        hits = 0
        evaluated = 0
        for v in nodes:
            workers = [a for a in annotations[v] if a.config_k == k]
            if not workers or workers[0].parse_failed or not workers[0].guesses:
                continue
            evaluated += 1
            if class_index[workers[0].guesses[0][0]] == ground_truth[v]:
                hits += 1
        rows.append((k, hits / evaluated if evaluated else 0.0, evaluated))
    return rows


def aggregation_accuracy(
    pseudo: dict[int, PseudoLabel], ground_truth: dict[int, int]
) -> float:
    nodes = [v for v in pseudo if v in ground_truth]
    if not nodes:
        raise ValueError("no overlap between pseudo-labels and ground truth")
    hits = sum(1 for v in nodes if pseudo[v].label == ground_truth[v])
    return hits / len(nodes)
