"""Globally-inspired local explanations over aligned latent features.

lime_latent fits a proximity-weighted ridge surrogate of the classifier's
target-class probability on intervention deltas. Under the interventional
policy perturbations run through the oracle so descendants (per the
discovered graph) co-move; the independent policy writes coordinates
directly and serves as the ablation baseline. Interventional confidence
deltas and latent counterfactual diffs round out the local views.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .graph import CausalGraph
from .oracle import ClassifierHead, LatentVector, Oracle

POLICIES = ("interventional", "independent")


@dataclass(frozen=True)
class AttributionConfig:
    n_perturbations: int = 500
    kernel_width: float | None = None  # None -> 0.75 * sqrt(dim)
    ridge_lambda: float = 1e-3
    perturbation_policy: str = "interventional"
    perturbation_std: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n_perturbations < 2:
            raise ValueError("n_perturbations must be >= 2")
        if self.kernel_width is not None and self.kernel_width <= 0:
            raise ValueError("kernel_width must be > 0")
        if self.ridge_lambda < 0:
            raise ValueError("ridge_lambda must be >= 0")
        if self.perturbation_policy not in POLICIES:
            raise ValueError(f"perturbation_policy must be one of {POLICIES}")
        if self.perturbation_std <= 0:
            raise ValueError("perturbation_std must be > 0")


@dataclass(frozen=True)
class Explanation:
    """Per-feature importance weights plus local-fit diagnostics."""

    weights: np.ndarray
    intercept: float
    local_fit_r2: float
    target_class: int
    degenerate_fit: bool = False

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if not np.all(np.isfinite(w)):
            raise ValueError("explanation weights must be finite")
        object.__setattr__(self, "weights", w)

    def to_json_dict(self, labels) -> dict:
        return {
            "target_class": self.target_class,
            "intercept": self.intercept,
            "local_fit_r2": self.local_fit_r2,
            "degenerate_fit": self.degenerate_fit,
            "weights": [
                {"feature": k, "label": str(labels[k]), "weight": float(w)}
                for k, w in enumerate(self.weights)
            ],
        }

    def to_json(self, labels) -> str:
        return json.dumps(self.to_json_dict(labels), sort_keys=True, indent=2) + "\n"

    def to_csv(self, labels) -> str:
        """Plot-ready bar-chart table: one feature,label,weight row each."""
        lines = ["feature,label,weight"]
        for k, w in enumerate(self.weights):
            lines.append(f"{k},{labels[k]},{float(w)!r}")
        return "\n".join(lines) + "\n"


def _reach_matrix(graph: CausalGraph) -> np.ndarray:
    """reach[c] = boolean row over {c} union descendants(c)."""
    d = graph.n_nodes
    reach = np.eye(d, dtype=bool)
    for c in range(d):
        for dsc in graph.descendants(c):
            reach[c, dsc] = True
    return reach


def _weighted_ridge(
    x: np.ndarray, y: np.ndarray, sample_w: np.ndarray, lam: float
) -> tuple[np.ndarray, float, bool]:
    """Ridge fit with unpenalized intercept; bumps lambda if singular."""
    n, d = x.shape
    design = np.column_stack([np.ones(n), x])
    penalty = np.eye(d + 1)
    penalty[0, 0] = 0.0
    wx = design * sample_w[:, None]
    gram = design.T @ wx
    rhs = wx.T @ y
    lam_eff = max(lam, 1e-3) if lam == 0 else lam
    degenerate = False
    for _ in range(8):
        try:
            beta = np.linalg.solve(gram + lam_eff * penalty, rhs)
            if np.all(np.isfinite(beta)):
                break
        except np.linalg.LinAlgError:
            pass
        degenerate = True
        lam_eff *= 10.0
    else:
        raise np.linalg.LinAlgError("ridge system unsolvable even after lambda floor")
    if lam_eff != lam:
        degenerate = True
    return beta, lam_eff, degenerate


def lime_latent(
    oracle: Oracle,
    head: ClassifierHead,
    graph: CausalGraph,
    latent: LatentVector | np.ndarray,
    config: AttributionConfig,
    target_class: int | None = None,
) -> Explanation:
    """Local surrogate fit around one latent vector.

    Each perturbation picks a random feature subset and draws Gaussian
    intervention deltas for it. The regressors are those applied deltas;
    the response is the classifier's target-class probability on the
    realized vector. Deterministic given the config seed.
    """
    values = latent.values if isinstance(latent, LatentVector) else np.asarray(latent, float)
    d = oracle.dim
    if values.shape != (d,):
        raise ValueError(f"latent shape {values.shape} != oracle dimension ({d},)")
    if graph.n_nodes != d:
        raise ValueError("graph node count disagrees with oracle dimension")
    if config.n_perturbations < d + 1:
        raise ValueError("n_perturbations must be at least dim + 1 for a solvable fit")
    rng = np.random.default_rng([config.seed, 7])
    n = config.n_perturbations

    masks = rng.random((n, d)) < 0.5
    empty = ~masks.any(axis=1)
    if empty.any():
        picks = rng.integers(0, d, size=int(empty.sum()))
        masks[np.flatnonzero(empty), picks] = True
    deltas = np.where(masks, rng.normal(0.0, config.perturbation_std, (n, d)), 0.0)

    base = np.broadcast_to(values, (n, d))
    if config.perturbation_policy == "interventional":
        realized = oracle.query(base, (masks, base + deltas), seed=[config.seed, 8])
        allowed = masks @ _reach_matrix(graph) > 0
        realized = np.where(allowed, realized, base)
    else:
        realized = np.where(masks, base + deltas, base)

    if target_class is None:
        target_class = head.predicted_class(values)
    scores = head.probabilities(realized)[:, target_class]

    width = config.kernel_width if config.kernel_width is not None else 0.75 * np.sqrt(d)
    dist2 = ((realized - values) ** 2).sum(axis=1)
    sample_w = np.exp(-dist2 / width**2)

    beta, _lam, degenerate = _weighted_ridge(deltas, scores, sample_w, config.ridge_lambda)
    pred = np.column_stack([np.ones(n), deltas]) @ beta
    ybar = float(np.average(scores, weights=sample_w))
    ss_res = float(np.sum(sample_w * (scores - pred) ** 2))
    ss_tot = float(np.sum(sample_w * (scores - ybar) ** 2))
    r2 = 0.0 if ss_tot <= 1e-300 else float(np.clip(1.0 - ss_res / ss_tot, 0.0, 1.0))
    return Explanation(
        weights=beta[1:],
        intercept=float(beta[0]),
        local_fit_r2=r2,
        target_class=int(target_class),
        degenerate_fit=degenerate,
    )


def confidence_delta(
    oracle: Oracle,
    head: ClassifierHead,
    latent: LatentVector | np.ndarray,
    do,
    n_samples: int = 256,
    seed=0,
) -> np.ndarray:
    """Expected per-class probability shift of an intervention.

    classify(query(l, do)) - classify(query(l, {})), each side averaged
    over n_samples oracle draws. An empty do-set returns exact zeros.
    """
    values = latent.values if isinstance(latent, LatentVector) else np.asarray(latent, float)
    if not do:
        return np.zeros(head.n_classes)
    base = np.broadcast_to(values, (n_samples, values.size))
    q_base = oracle.query(base, None, seed=[seed, 0])
    q_do = oracle.query(base, do, seed=[seed, 1])
    return head.probabilities(q_do).mean(axis=0) - head.probabilities(q_base).mean(axis=0)


def counterfactual_diff(
    oracle: Oracle,
    latent: LatentVector | np.ndarray,
    do,
    n_samples: int = 256,
    seed=0,
) -> tuple[np.ndarray, np.ndarray]:
    """Expected intervened vector and its per-feature diff from baseline."""
    values = latent.values if isinstance(latent, LatentVector) else np.asarray(latent, float)
    base = np.broadcast_to(values, (n_samples, values.size))
    baseline = oracle.query(base, None, seed=[seed, 0]).mean(axis=0)
    if not do:
        return baseline, np.zeros_like(baseline)
    intervened = oracle.query(base, do, seed=[seed, 1]).mean(axis=0)
    return intervened, intervened - baseline
