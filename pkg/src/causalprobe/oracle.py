"""Intervene-and-re-encode oracles over an aligned latent feature space.

An oracle accepts a latent vector plus an optional do-intervention and
returns the re-encoded latent vector: interventions are propagated to
descendants by the backing mechanism and i.i.d. Gaussian observation noise
models the encode round trip. Two concrete oracles are provided (simulator
backed and linear SEM) plus a linear-logistic classifier head.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .graph import CausalGraph
from .scm import SampleSet, ScmModel

_STANDARDIZE_DRAWS = 4096


@dataclass(frozen=True)
class OracleConfig:
    """Observable semantics of the re-encode round trip.

    roundtrip_noise_std: per-coordinate Gaussian observation noise.
    noise_policy: "fixed" reuses the exogenous noise abducted from the base
        row (counterfactual propagation); "resample" draws fresh noise.
    standardize: present latents in a z-scored chart (simulator oracle only);
        chart constants are estimated once at construction.
    """

    roundtrip_noise_std: float = 0.1
    noise_policy: str = "fixed"
    standardize: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.roundtrip_noise_std < 0:
            raise ValueError("roundtrip_noise_std must be >= 0")
        if self.noise_policy not in ("fixed", "resample"):
            raise ValueError(f"unknown noise_policy {self.noise_policy!r}")


@dataclass(frozen=True)
class LatentVector:
    """Aligned feature vector; first observed_count positions are context-aligned."""

    values: np.ndarray
    observed_count: int

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1:
            raise ValueError("latent vector must be one-dimensional")
        object.__setattr__(self, "values", values)
        if not 0 <= self.observed_count <= values.size:
            raise ValueError("observed_count out of range")

    @property
    def dim(self) -> int:
        return self.values.size

    @property
    def observed(self) -> np.ndarray:
        return self.values[: self.observed_count]

    @property
    def unobserved(self) -> np.ndarray:
        return self.values[self.observed_count :]


class Oracle:
    """Base query plumbing shared by the concrete oracles.

    Subclasses implement ``_propagate(base, do_mask, do_values, rng)``
    returning the noiseless intervened rows in the oracle's latent chart.
    Queries are pure: identical (base, do, seed) give identical output.
    """

    labels: tuple[str, ...]
    observed_count: int
    config: OracleConfig

    @property
    def dim(self) -> int:
        return len(self.labels)

    def index_of(self, feature) -> int:
        if isinstance(feature, str):
            if feature not in self.labels:
                raise ValueError(
                    f"unknown feature {feature!r}; known features: {list(self.labels)}"
                )
            return self.labels.index(feature)
        idx = int(feature)
        if not 0 <= idx < self.dim:
            raise ValueError(f"feature index {idx} out of range for dimension {self.dim}")
        return idx

    def normalize_do(
        self, do, n: int
    ) -> tuple[np.ndarray, np.ndarray] | None:
        """Accepts None, {feature: scalar | (n,) array}, or a (mask, values) pair."""
        if do is None:
            return None
        if isinstance(do, tuple):
            mask, values = do
            mask = np.broadcast_to(np.asarray(mask, dtype=bool), (n, self.dim)).copy()
            values = np.broadcast_to(np.asarray(values, dtype=float), (n, self.dim)).copy()
            if not mask.any():
                return None
            return mask, values
        if not do:
            return None
        mask = np.zeros((n, self.dim), dtype=bool)
        values = np.zeros((n, self.dim), dtype=float)
        for key, val in do.items():
            idx = self.index_of(key)
            mask[:, idx] = True
            values[:, idx] = np.broadcast_to(np.asarray(val, dtype=float), (n,))
        return mask, values

    def sample_latents(self, n: int, seed) -> np.ndarray:
        raise NotImplementedError

    def _propagate(self, base, do_mask, do_values, rng) -> np.ndarray:
        raise NotImplementedError

    def query(self, base: np.ndarray, do=None, seed=0) -> np.ndarray:
        """Re-encode base rows under an optional intervention.

        base: (d,) or (n, d) latent rows in the oracle's chart. Returns the
        intervened, noise-perturbed rows with matching shape.
        """
        arr = np.asarray(base, dtype=float)
        single = arr.ndim == 1
        rows = np.atleast_2d(arr)
        norm = self.normalize_do(do, rows.shape[0])
        rng = np.random.default_rng(seed)
        if norm is None:
            out = self._propagate(rows, None, None, rng)
        else:
            out = self._propagate(rows, norm[0], norm[1], rng)
        if self.config.roundtrip_noise_std > 0:
            out = out + rng.normal(0.0, self.config.roundtrip_noise_std, out.shape)
        return out[0] if single else out

    def query_latent(self, latent: LatentVector, do=None, seed=0) -> LatentVector:
        if latent.dim != self.dim:
            raise ValueError(f"latent dimension {latent.dim} != oracle dimension {self.dim}")
        return LatentVector(self.query(latent.values, do, seed), self.observed_count)

    def ground_truth_graph(self) -> CausalGraph:
        raise NotImplementedError("this oracle has no known ground truth")


class ScmOracle(Oracle):
    """Oracle backed by a structural causal model.

    With standardize=True (default) the latent chart is the z-scored feature
    space: chart constants come from a fixed-size observational draw, the
    ±1 intervention convention then moves each feature by one observational
    standard deviation. With standardize=False the chart is the raw feature
    space and queries agree exactly with the model counterfactual at zero
    observation noise.
    """

    def __init__(self, model: ScmModel, config: OracleConfig | None = None):
        self.model = model
        self.config = config or OracleConfig()
        self.labels = tuple(model.labels)
        self.observed_count = model.context_count
        if self.config.standardize:
            ref = model.sample(_STANDARDIZE_DRAWS, [self.config.seed, 0x5CA1E])
            mu = ref.values.mean(axis=0)
            sigma = ref.values.std(axis=0)
            sigma[sigma < 1e-9] = 1.0  # degenerate columns keep raw units
        else:
            mu = np.zeros(model.n_nodes)
            sigma = np.ones(model.n_nodes)
        self.chart_mean = mu
        self.chart_scale = sigma

    def to_chart(self, raw: np.ndarray) -> np.ndarray:
        return (np.asarray(raw, dtype=float) - self.chart_mean) / self.chart_scale

    def to_raw(self, chart: np.ndarray) -> np.ndarray:
        return np.asarray(chart, dtype=float) * self.chart_scale + self.chart_mean

    def sample_latents(self, n: int, seed) -> np.ndarray:
        return self.to_chart(self.model.sample(n, seed).values)

    def _propagate(self, base, do_mask, do_values, rng) -> np.ndarray:
        raw = self.to_raw(base)
        if self.config.noise_policy == "fixed":
            ss = self.model.abduce(raw)
        else:
            noise = self.model.draw_noise(raw.shape[0], rng)
            ss = SampleSet(raw, noise)
        if do_mask is None:
            if self.config.noise_policy == "fixed":
                return np.asarray(base, dtype=float).copy()
            cf = self.model.propagate(ss.noise)
        else:
            raw_values = self.to_raw(do_values)
            cf = self.model.counterfactual_masked(ss, do_mask, raw_values)
        return self.to_chart(cf)

    def ground_truth_graph(self) -> CausalGraph:
        return self.model.ground_truth_graph()


class LinearOracle(Oracle):
    """Linear-SEM oracle: x_j = sum_k w[k, j] x_k + noise, weights a DAG."""

    def __init__(
        self,
        weights: np.ndarray,
        config: OracleConfig | None = None,
        exo_noise_std: float = 1.0,
        labels=None,
    ):
        weights = np.asarray(weights, dtype=float)
        if weights.ndim != 2 or weights.shape[0] != weights.shape[1]:
            raise ValueError("weights must be a square matrix")
        d = weights.shape[0]
        if np.any(np.diag(weights) != 0):
            raise ValueError("self-weights must be zero")
        adjacency = CausalGraph(
            [f"x{k}" for k in range(d)],
            {(i, j): weights[i, j] for i in range(d) for j in range(d) if weights[i, j] != 0},
        )
        self._topo = adjacency.topological_order()  # raises on cyclic weights
        self.weights = weights
        self.config = config or OracleConfig()
        self.labels = tuple(labels) if labels is not None else tuple(f"x{k}" for k in range(d))
        if len(self.labels) != d:
            raise ValueError("labels length must match dimension")
        self.observed_count = d
        if exo_noise_std < 0:
            raise ValueError("exo_noise_std must be >= 0")
        self.exo_noise_std = float(exo_noise_std)

    def _forward(self, noise, do_mask=None, do_values=None) -> np.ndarray:
        out = np.zeros_like(noise)
        for v in self._topo:
            mech = out @ self.weights[:, v] + noise[:, v]
            if do_mask is not None:
                out[:, v] = np.where(do_mask[:, v], do_values[:, v], mech)
            else:
                out[:, v] = mech
        return out

    def sample_latents(self, n: int, seed) -> np.ndarray:
        rng = np.random.default_rng(seed)
        noise = rng.normal(0.0, self.exo_noise_std, (n, self.dim))
        return self._forward(noise)

    def _propagate(self, base, do_mask, do_values, rng) -> np.ndarray:
        base = np.asarray(base, dtype=float)
        if self.config.noise_policy == "fixed":
            noise = base - base @ self.weights  # exact abduction
        else:
            noise = rng.normal(0.0, self.exo_noise_std, base.shape)
        if do_mask is None:
            if self.config.noise_policy == "fixed":
                return base.copy()
            return self._forward(noise)
        return self._forward(noise, do_mask, do_values)

    def ground_truth_graph(self) -> CausalGraph:
        edges = {
            (i, j): self.weights[i, j]
            for i in range(self.dim)
            for j in range(self.dim)
            if self.weights[i, j] != 0
        }
        return CausalGraph(list(self.labels), edges)

    @classmethod
    def from_json_dict(cls, doc: dict, config: OracleConfig | None = None) -> "LinearOracle":
        d = int(doc["dim"])
        weights = np.zeros((d, d))
        for e in doc.get("edges", []):
            weights[int(e["from"]), int(e["to"])] = float(e["weight"])
        return cls(weights, config, exo_noise_std=float(doc.get("noise_std", 1.0)))

    @classmethod
    def from_json(cls, text: str, config: OracleConfig | None = None) -> "LinearOracle":
        return cls.from_json_dict(json.loads(text), config)


def scm_oracle(model: ScmModel, config: OracleConfig | None = None) -> ScmOracle:
    return ScmOracle(model, config)


def linear_oracle(weights: np.ndarray, config: OracleConfig | None = None, **kwargs) -> LinearOracle:
    return LinearOracle(weights, config, **kwargs)


class ClassifierHead:
    """Linear-logistic head over the latent space.

    A 1-d weight vector gives the binary head [1 - p, p] with
    p = sigmoid(w . l + b); a (n_classes, d) matrix gives a softmax head.
    """

    def __init__(self, weights, bias=0.0, n_classes: int | None = None):
        w = np.asarray(weights, dtype=float)
        if w.ndim == 1:
            if n_classes not in (None, 2):
                raise ValueError("vector weights define a binary head")
            self.n_classes = 2
            self.bias = np.asarray([float(bias)])
        elif w.ndim == 2:
            if n_classes is not None and n_classes != w.shape[0]:
                raise ValueError("n_classes disagrees with weight matrix")
            if w.shape[0] < 2:
                raise ValueError("softmax head needs at least 2 classes")
            self.n_classes = w.shape[0]
            b = np.asarray(bias, dtype=float)
            self.bias = np.broadcast_to(b, (self.n_classes,)).copy()
        else:
            raise ValueError("weights must be a vector or a matrix")
        self.weights = w

    @property
    def dim(self) -> int:
        return self.weights.shape[-1]

    def probabilities(self, latents: np.ndarray) -> np.ndarray:
        """Probability vector(s) summing to 1; accepts (d,) or (n, d)."""
        arr = np.asarray(latents, dtype=float)
        single = arr.ndim == 1
        rows = np.atleast_2d(arr)
        if rows.shape[1] != self.dim:
            raise ValueError(f"latent dimension {rows.shape[1]} != head dimension {self.dim}")
        if self.weights.ndim == 1:
            z = rows @ self.weights + self.bias[0]
            # numerically stable logistic pair
            znorm = np.clip(z, -700, 700)
            p = 1.0 / (1.0 + np.exp(-znorm))
            probs = np.column_stack([1.0 - p, p])
        else:
            z = rows @ self.weights.T + self.bias
            z = z - z.max(axis=1, keepdims=True)
            e = np.exp(z)
            probs = e / e.sum(axis=1, keepdims=True)
        return probs[0] if single else probs

    def predicted_class(self, latent: np.ndarray) -> int:
        return int(np.argmax(self.probabilities(latent)))


def classify(head: ClassifierHead, latent: LatentVector | np.ndarray) -> np.ndarray:
    values = latent.values if isinstance(latent, LatentVector) else latent
    return head.probabilities(values)
