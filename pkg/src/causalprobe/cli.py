"""Command-line front end for reproducible experiment runs.

Subcommands: sample, discover, explain, evaluate. Every command reads a
JSON config, takes a mandatory seed (config key or --seed), owns its
output directory, and writes a run manifest embedding the resolved config
so re-runs with the same inputs produce byte-identical outputs.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .attribution import (
    AttributionConfig,
    confidence_delta,
    counterfactual_diff,
    lime_latent,
)
from .discovery import DiscoveryConfig, discover
from .graph import CausalGraph
from .metrics import (
    EvaluationConfig,
    MetricsReport,
    correctness_index,
    faithfulness_index,
    joint_feasible,
    stability,
)
from .oracle import ClassifierHead, LinearOracle, OracleConfig, ScmOracle
from .scm import BUILTIN_NAMES, ScmModel, builtin


def _derive_seed(*parts) -> int:
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    return obj


def load_config(path: str) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise ValueError(f"cannot read config {path}: {exc}") from exc


def resolve_seed(cfg: dict, flag_seed) -> int:
    if flag_seed is not None:
        seed = int(flag_seed)
    elif "seed" in cfg:
        seed = int(cfg["seed"])
    else:
        raise ValueError("a seed is mandatory: set config key 'seed' or pass --seed")
    if seed < 0:
        raise ValueError("seed must be a non-negative integer")
    return seed


def build_scm_model(cfg: dict) -> ScmModel:
    spec = cfg.get("oracle", {})
    if spec.get("kind", "scm") != "scm":
        raise ValueError("this command needs an scm-backed oracle")
    if "model_file" in spec:
        return ScmModel.from_json(Path(spec["model_file"]).read_text())
    name = spec.get("model")
    if name not in BUILTIN_NAMES:
        raise ValueError(f"oracle.model must be one of {BUILTIN_NAMES}, got {name!r}")
    return builtin(name)


def build_oracle(cfg: dict, seed: int):
    spec = cfg.get("oracle")
    if not spec:
        raise ValueError("config is missing the 'oracle' section")
    oc_args = dict(cfg.get("oracle_config", {}))
    oc_args.setdefault("seed", seed)
    oconfig = OracleConfig(**oc_args)
    kind = spec.get("kind", "scm")
    if kind == "scm":
        return ScmOracle(build_scm_model(cfg), oconfig)
    if kind == "linear":
        if "file" in spec:
            return LinearOracle.from_json(Path(spec["file"]).read_text(), oconfig)
        return LinearOracle.from_json_dict(spec, oconfig)
    raise ValueError(f"unknown oracle kind {kind!r}")


def build_head(cfg: dict) -> ClassifierHead:
    spec = cfg.get("classifier")
    if not spec:
        raise ValueError("config is missing the 'classifier' section")
    return ClassifierHead(
        np.asarray(spec["weights"], dtype=float),
        bias=spec.get("bias", 0.0),
        n_classes=spec.get("n_classes"),
    )


def build_discovery_config(cfg: dict, seed: int) -> DiscoveryConfig:
    args = dict(cfg.get("discovery", {}))
    args.pop("seed", None)
    return DiscoveryConfig(seed=seed, **args)


def build_attribution_config(cfg: dict, seed: int, policy: str | None = None) -> AttributionConfig:
    args = dict(cfg.get("attribution", {}))
    args.pop("seed", None)
    if policy is not None:
        args["perturbation_policy"] = policy
    return AttributionConfig(seed=seed, **args)


def build_evaluation_config(cfg: dict, seed: int) -> EvaluationConfig:
    args = dict(cfg.get("evaluation", {}))
    args.pop("seed", None)
    return EvaluationConfig(seed=seed, **args)


def _write_manifest(out: Path, command: str, cfg: dict, seed: int, outputs) -> None:
    _write_json(
        out / "run_manifest.json",
        {
            "command": command,
            "config": _jsonable(cfg),
            "seed": seed,
            "outputs": sorted(outputs),
        },
    )


def _parse_intervention(spec: str, oracle, latent: np.ndarray) -> tuple[str, int, float]:
    """Parse 'f+=v' / 'f-=v' (relative) or 'f=v' (absolute) against a latent."""
    for op in ("+=", "-=", "="):
        if op in spec:
            name, _, raw = spec.partition(op)
            name = name.strip()
            try:
                value = float(raw)
            except ValueError as exc:
                raise ValueError(f"bad intervention value in {spec!r}") from exc
            idx = oracle.index_of(name)
            if op == "+=":
                return spec, idx, float(latent[idx] + value)
            if op == "-=":
                return spec, idx, float(latent[idx] - value)
            return spec, idx, value
    raise ValueError(f"bad intervention spec {spec!r}; use feature+=v, feature-=v or feature=v")


def run_sample(cfg: dict, out_dir: str, seed: int, n_override: int | None = None) -> dict:
    model = build_scm_model(cfg)
    n = n_override if n_override is not None else cfg.get("sample", {}).get("n", 100)
    if n < 1:
        raise ValueError("sample count must be >= 1")
    samples = model.sample(n, [seed, 1])
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "samples.csv", model.labels, samples.values)
    _write_manifest(out, "sample", cfg, seed, ["samples.csv"])
    return {"rows": int(n), "columns": list(model.labels)}


def _jaccard(a: set, b: set) -> float:
    if not a and not b:
        return 1.0
    return len(a & b) / len(a | b)


def _consensus(runs: list[CausalGraph], labels) -> CausalGraph:
    counts: dict[tuple[int, int], int] = {}
    weights: dict[tuple[int, int], list[float]] = {}
    for g in runs:
        for (i, j), w in g.edges.items():
            counts[(i, j)] = counts.get((i, j), 0) + 1
            weights.setdefault((i, j), []).append(w)
    cut = len(runs) / 2.0
    edges = {
        e: float(np.mean(weights[e])) for e, c in sorted(counts.items()) if c > cut
    }
    return CausalGraph(list(labels), edges)


def run_discover(cfg: dict, out_dir: str, seed: int) -> dict:
    oracle = build_oracle(cfg, seed)
    dcfg = build_discovery_config(cfg, seed)
    ecfg = build_evaluation_config(cfg, seed)
    pool_size = int(cfg.get("pool_size", 1024))
    if pool_size < dcfg.n_samples:
        raise ValueError("pool_size must be at least discovery n_samples")
    pool = oracle.sample_latents(pool_size, [seed, 10])

    out = Path(out_dir)
    graphs_dir = out / "graphs"
    graphs_dir.mkdir(parents=True, exist_ok=True)

    runs: list[CausalGraph] = []
    per_subset: list[list[CausalGraph]] = []
    outputs = []
    for p in range(ecfg.p_subsets):
        # subsets are drawn with replacement from the pool
        idx = np.random.default_rng([seed, 11, p]).integers(0, pool_size, dcfg.n_samples)
        subset = pool[idx]
        group = []
        for q in range(ecfg.q_repetitions):
            run_cfg = replace(dcfg, seed=_derive_seed(seed, 12, p, q))
            g = discover(oracle, run_cfg, base=subset)
            name = f"graph_p{p}_q{q}.json"
            (graphs_dir / name).write_text(g.to_json())
            outputs.append(f"graphs/{name}")
            runs.append(g)
            group.append(g)
        per_subset.append(group)

    consensus = _consensus(runs, oracle.labels)
    (out / "graph.json").write_text(consensus.to_json())
    (out / "graph.dot").write_text(consensus.to_dot())
    outputs += ["graph.json", "graph.dot"]

    correctness = None
    correctness_flag = "ok"
    try:
        truth = oracle.ground_truth_graph()
        correctness = correctness_index(runs, truth)
    except (ValueError, NotImplementedError) as exc:
        correctness_flag = f"undefined: {exc}"

    consensus_edges = consensus.edge_set()
    agreement = [_jaccard(g.edge_set(), consensus_edges) for g in runs]
    consistency_vals = []
    subset_majorities = []
    for group in per_subset:
        sets = [g.edge_set() for g in group]
        pairs = [
            _jaccard(sets[a], sets[b])
            for a in range(len(sets))
            for b in range(a + 1, len(sets))
        ]
        consistency_vals.append(np.mean(pairs) if pairs else 1.0)
        majority = _consensus(group, oracle.labels).edge_set()
        subset_majorities.append(majority)
    graph_consistency = float(np.mean(consistency_vals))
    stab_pairs = [
        _jaccard(subset_majorities[a], subset_majorities[b])
        for a in range(len(subset_majorities))
        for b in range(a + 1, len(subset_majorities))
    ]
    graph_stability = float(np.mean(stab_pairs)) if stab_pairs else 1.0

    report = {
        "correctness_index": correctness,
        "correctness_flag": correctness_flag,
        "graph_consistency": graph_consistency,
        "graph_stability": graph_stability,
        "per_run": [
            {
                "p": p,
                "q": q,
                "edge_count": len(per_subset[p][q].edges),
                "consensus_agreement": agreement[p * ecfg.q_repetitions + q],
            }
            for p in range(ecfg.p_subsets)
            for q in range(ecfg.q_repetitions)
        ],
    }
    _write_json(out / "report.json", _jsonable(report))
    _write_csv(
        out / "report.csv",
        ["metric", "value"],
        [
            ["correctness_index", "" if correctness is None else correctness],
            ["graph_consistency", graph_consistency],
            ["graph_stability", graph_stability],
        ],
    )
    outputs += ["report.json", "report.csv"]
    _write_manifest(out, "discover", cfg, seed, outputs)
    return report


def _resolve_latent(cfg: dict, oracle, seed: int, index: int | None, latent_csv: str | None):
    if latent_csv is not None:
        values = np.asarray([float(v) for v in latent_csv.split(",")], dtype=float)
        if values.size != oracle.dim:
            raise ValueError(
                f"latent vector has {values.size} entries, oracle dimension is {oracle.dim}"
            )
        return values
    pool_size = int(cfg.get("pool_size", 1024))
    pool = oracle.sample_latents(pool_size, [seed, 10])
    k = index if index is not None else int(cfg.get("explain", {}).get("index", 0))
    if not 0 <= k < pool_size:
        raise ValueError(f"sample index {k} out of range for pool of {pool_size}")
    return pool[k]


def run_explain(
    cfg: dict,
    out_dir: str,
    seed: int,
    index: int | None = None,
    latent_csv: str | None = None,
    do_specs=(),
    policy: str | None = None,
) -> dict:
    oracle = build_oracle(cfg, seed)
    head = build_head(cfg)
    dcfg = build_discovery_config(cfg, _derive_seed(seed, 13))
    graph = discover(oracle, dcfg)
    latent = _resolve_latent(cfg, oracle, seed, index, latent_csv)
    acfg = build_attribution_config(cfg, _derive_seed(seed, 14), policy)
    explanation = lime_latent(oracle, head, graph, latent, acfg)

    specs = list(cfg.get("explain", {}).get("interventions", [])) + list(do_specs)
    parsed = [_parse_intervention(s, oracle, latent) for s in specs]

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    doc = explanation.to_json_dict(oracle.labels)
    doc["latent"] = _jsonable(latent)
    _write_json(out / "explanation.json", doc)
    (out / "explanation.csv").write_text(explanation.to_csv(oracle.labels))

    class_cols = [f"class_{c}" for c in range(head.n_classes)]
    base_probs = head.probabilities(latent)
    conf_rows = [["baseline", ""] + list(base_probs)]
    diff_rows = []
    for k, (label, idx, value) in enumerate(parsed):
        delta = confidence_delta(
            oracle, head, latent, {idx: value}, seed=[_derive_seed(seed, 15, k)]
        )
        conf_rows.append(["delta", label] + list(delta))
        intervened, diff = counterfactual_diff(
            oracle, latent, {idx: value}, seed=[_derive_seed(seed, 16, k)]
        )
        diff_rows.append(["intervened", label] + list(intervened))
        diff_rows.append(["diff", label] + list(diff))
    _write_csv(out / "confidence_delta.csv", ["row", "intervention"] + class_cols, conf_rows)
    _write_csv(
        out / "counterfactual_diff.csv",
        ["row", "intervention"] + list(oracle.labels),
        diff_rows,
    )
    outputs = [
        "explanation.json",
        "explanation.csv",
        "confidence_delta.csv",
        "counterfactual_diff.csv",
    ]
    _write_manifest(out, "explain", cfg, seed, outputs)
    return doc


def evaluate_explainer(cfg: dict, seed: int) -> dict:
    """Faithfulness (engine vs shuffled baseline) and stability protocol.

    Under the default deterministic-seed protocol every explanation run
    reuses one attribution seed, so explanations are a pure function of
    their input and a deterministic explainer scores stability 0 exactly.
    Setting evaluate.deterministic_seed to false derives an independent
    seed per run instead, exposing the explainer's Monte-Carlo variance.
    """
    oracle = build_oracle(cfg, seed)
    head = build_head(cfg)
    dcfg = build_discovery_config(cfg, _derive_seed(seed, 13))
    graph = discover(oracle, dcfg)
    acfg = build_attribution_config(cfg, 0)
    ecfg = build_evaluation_config(cfg, seed)
    ev = cfg.get("evaluate", {})
    n_expl = int(ev.get("n_explanations", 400))
    det = bool(ev.get("deterministic_seed", True))
    fixed_seed = _derive_seed(seed, 14)

    latents = oracle.sample_latents(n_expl, [seed, 16])
    weights = np.array(
        [
            lime_latent(
                oracle,
                head,
                graph,
                latents[k],
                replace(acfg, seed=fixed_seed if det else _derive_seed(seed, 15, k)),
            ).weights
            for k in range(n_expl)
        ]
    )
    f_engine = faithfulness_index(latents, weights, ecfg)
    perm = np.random.default_rng([seed, 17]).permutation(n_expl)
    f_shuffled = faithfulness_index(latents, weights[perm], ecfg)

    base = latents[int(ev.get("stability_index", 0))]
    sets = []
    for p in range(ecfg.p_subsets):
        noisy = base + np.random.default_rng([seed, 18, p]).normal(
            0.0, ecfg.noise_std, oracle.dim
        )
        group = [
            lime_latent(
                oracle,
                head,
                graph,
                noisy,
                replace(acfg, seed=fixed_seed if det else _derive_seed(seed, 19, p, q)),
            ).weights
            for q in range(ecfg.q_repetitions)
        ]
        sets.append(group)
    s_engine = stability(sets)

    return {
        "faithfulness": {"engine": f_engine, "shuffled_baseline": f_shuffled},
        "stability": {"engine": s_engine, "shuffled_baseline": s_engine},
        "deterministic_seed": det,
        "joint_histogram": joint_feasible(n_expl, 2 * oracle.dim, ecfg.mi_bins),
        "n_explanations": n_expl,
    }


def run_evaluate(cfg: dict, out_dir: str, seed: int) -> dict:
    report = evaluate_explainer(cfg, seed)
    headline = MetricsReport(
        correctness_index=None,
        stability=report["stability"]["engine"],
        faithfulness_index=report["faithfulness"]["engine"],
        details=report,
    )
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "metrics.json", _jsonable(headline.to_json_dict()))
    _write_csv(
        out / "metrics.csv",
        ["method", "faithfulness", "stability"],
        [
            ["engine", report["faithfulness"]["engine"], report["stability"]["engine"]],
            [
                "shuffled-baseline",
                report["faithfulness"]["shuffled_baseline"],
                report["stability"]["shuffled_baseline"],
            ],
        ],
    )
    _write_manifest(out, "evaluate", cfg, seed, ["metrics.json", "metrics.csv"])
    return report


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="causalprobe",
        description="Causal-explanation experiments against latent-space oracles",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("sample", "discover", "explain", "evaluate"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON run config")
        p.add_argument("--seed", type=int, default=None, help="overrides config seed")
        p.add_argument("--out", required=True, help="output directory")
        if name == "sample":
            p.add_argument("--n", type=int, default=None, help="sample count override")
        if name == "explain":
            p.add_argument("--index", type=int, default=None, help="pool sample index")
            p.add_argument("--latent", default=None, help="comma-separated latent vector")
            p.add_argument(
                "--do",
                action="append",
                default=[],
                help="intervention, e.g. t+=1 or i=2.0 (repeatable)",
            )
            p.add_argument("--policy", choices=["interventional", "independent"], default=None)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        seed = resolve_seed(cfg, args.seed)
        if args.command == "sample":
            run_sample(cfg, args.out, seed, n_override=args.n)
        elif args.command == "discover":
            run_discover(cfg, args.out, seed)
        elif args.command == "explain":
            run_explain(
                cfg,
                args.out,
                seed,
                index=args.index,
                latent_csv=args.latent,
                do_specs=args.do,
                policy=args.policy,
            )
        elif args.command == "evaluate":
            run_evaluate(cfg, args.out, seed)
    except Exception as exc:  # surfaced as machine-readable JSON
        print(
            json.dumps({"error": type(exc).__name__, "message": str(exc)}),
            file=sys.stderr,
        )
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
