"""Label-propagation transition matrix and homophily-dominance checks.

The underlying model: a neighbor of a node keeps the node's class label with
probability ``alpha`` and takes each specific other label with probability
``beta = (1 - alpha) / (num_classes - 1)``. The resulting row-stochastic
transition matrix has constant diagonal ``alpha`` and constant off-diagonal
``beta``, which admits a closed form for every matrix power. Multi-hop
neighborhoods favor the center's own label exactly when the diagonal of the
power dominates the off-diagonal; the gap is ``(alpha - beta) ** h``.

``simulate_propagation`` validates the closed form empirically on sampled
trees, where the conditional-independence assumption holds exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class HomophilyParams:
    """Same-label probability ``alpha`` and class count; ``beta`` is derived."""

    alpha: float
    num_classes: int

    def __post_init__(self) -> None:
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha}")
        if self.num_classes < 2:
            raise ValueError(f"need at least 2 classes, got {self.num_classes}")

    @property
    def beta(self) -> float:
        return (1.0 - self.alpha) / (self.num_classes - 1)

    @property
    def spectral_gap(self) -> float:
        return self.alpha - self.beta


@dataclass(frozen=True)
class HopReport:
    """Closed-form vs empirical same-label probability at one hop depth."""

    hop: int
    diagonal: float
    off_diagonal: float
    gap: float
    dominant: bool
    empirical: float | None = None
    std_error: float | None = None
    samples: int | None = None


def build_q(params: HomophilyParams) -> np.ndarray:
    """Transition matrix with diagonal alpha and off-diagonal beta."""
    y = params.num_classes
    return (params.alpha - params.beta) * np.eye(y) + params.beta * np.ones((y, y))


def q_power_closed_form(params: HomophilyParams, h: int) -> np.ndarray:
    """Closed form of the h-th matrix power; h = 0 gives the identity."""
    if h < 0:
        raise ValueError(f"power must be >= 0, got {h}")
    y = params.num_classes
    g = params.spectral_gap**h
    return g * np.eye(y) + (1.0 - g) / y * np.ones((y, y))


def dominance_gap(params: HomophilyParams, h: int) -> tuple[float, bool]:
    """Diagonal-minus-off-diagonal of the h-th power, plus the strict verdict.

    The gap equals ``(alpha - beta) ** h``; non-strict dominance at one hop
    holds exactly when ``alpha >= 1 / num_classes``.
    """
    if h < 1:
        raise ValueError(f"hop count must be >= 1, got {h}")
    gap = params.spectral_gap**h
    return gap, gap > 0.0


def eigen_check(params: HomophilyParams, tol: float = 1e-9) -> tuple[np.ndarray, bool]:
    """Numerical eigenvalues of the transition matrix vs the expected spectrum.

    Expected: a single eigenvalue 1 and ``num_classes - 1`` copies of
    ``alpha - beta``.
    """
    q = build_q(params)
    eigs = np.sort(np.linalg.eigvalsh(q))
    expected = np.sort(
        np.concatenate([[1.0], np.full(params.num_classes - 1, params.spectral_gap)])
    )
    return eigs, bool(np.max(np.abs(eigs - expected)) < tol)


def simulate_propagation(
    params: HomophilyParams,
    h: int,
    num_roots: int,
    fanout: int,
    seed: int,
) -> list[HopReport]:
    """Empirical same-label fraction per hop on sampled rooted trees.

    Root labels are uniform; each child's label is drawn from the transition
    row of its parent. Trees make neighbor labels conditionally independent
    given the parent, exactly matching the model. Per-hop standard errors are
    binomial.
    """
    if h < 1:
        raise ValueError(f"hop count must be >= 1, got {h}")
    if fanout < 1 or num_roots < 1:
        raise ValueError("fanout and num_roots must be >= 1")
    rng = np.random.default_rng(seed)
    y = params.num_classes

    roots = rng.integers(0, y, size=num_roots)
    reports: list[HopReport] = []
    parents = roots
    root_of = roots
    for hop in range(1, h + 1):
        parents = np.repeat(parents, fanout)
        root_of = np.repeat(root_of, fanout)
        stay = rng.random(parents.size) < params.alpha
        # Uniform draw over the other labels, shifted past the parent's own.
        offsets = rng.integers(1, y, size=parents.size)
        children = np.where(stay, parents, (parents + offsets) % y)
        frac = float(np.mean(children == root_of))
        se = float(np.sqrt(frac * (1.0 - frac) / children.size))
        closed = q_power_closed_form(params, hop)
        gap, dominant = dominance_gap(params, hop)
        reports.append(
            HopReport(
                hop=hop,
                diagonal=float(closed[0, 0]),
                off_diagonal=float(closed[0, 1]),
                gap=gap,
                dominant=dominant,
                empirical=frac,
                std_error=se,
                samples=int(children.size),
            )
        )
        parents = children
    return reports


def boundary_sweep(
    num_classes: int, alphas: np.ndarray | None = None
) -> list[tuple[float, bool, bool]]:
    """For each alpha: (alpha, 1-hop non-strict dominance, alpha >= 1/|classes|)."""
    if alphas is None:
        alphas = np.arange(0.0, 1.0 + 1e-12, 0.05)
    out = []
    for a in alphas:
        params = HomophilyParams(alpha=float(a), num_classes=num_classes)
        gap, _ = dominance_gap(params, 1)
        out.append((float(a), gap >= 0.0, float(a) >= 1.0 / num_classes))
    return out
