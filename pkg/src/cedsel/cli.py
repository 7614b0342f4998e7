"""Pipeline CLI: one config file, one run store, one subcommand per stage.

    cedsel <subcommand> --config run.json [overrides]

Stages write versioned artifacts into the run directory and stamp each
with the config hash and master seed; downstream stages refuse inputs
from a different lineage. All stages are deterministic, so re-running a
stage with an unchanged store reproduces its artifacts byte for byte.

Exit codes: 0 ok, 2 config error, 3 data error, 4 compute error. Errors
are reported as one JSON object on stderr.
"""

from __future__ import annotations

import argparse
import copy
import json
import sys
from pathlib import Path
from typing import Mapping

from . import cluster as clustering
from . import corpus, evaluation, gradcheck, lm, scoring
from .bridge import BridgeScorer, score_matrix_via_bridge
from .errors import ConfigError, DataError, EngineError
from .figures import plot_sorted_losses
from .store import RunStore, check_lineage, lineage_for

SUBCOMMANDS = (
    "ingest",
    "train-base",
    "train-targets",
    "cluster",
    "score",
    "select",
    "gradcheck",
    "evaluate",
    "report",
)

DEFAULT_CONFIG: dict = {
    "paths": {"pool": None, "output_dir": None},
    "lm": {
        "order": 3,
        "delta": 0.1,
        "weight_steps": 10,
        "lambda_grid": [0.0, 0.1, 0.3, 0.5],
        "dev_fraction": 1.0,
        "max_passes": 20,
    },
    "k": 0,
    "cluster_pick": "seed",
    "prompt": {
        "token_budget": 512,
        "section_labels": {key: key for key in corpus.SECTION_KEYS},
        "instruction": None,
    },
    "seeds": {
        "master": 0,
        "sample": 0,
        "cluster": 0,
        "random_policy": 0,
        "bootstrap": 0,
    },
    "sample_per_dataset": None,
    "parallelism": 1,
    "scorer": {"type": "builtin", "cmd": []},
    "eval": {
        "candidate_answers": "dataset_answers",
        "neighbor_file": None,
        "predictions_file": None,
        "bootstrap_resamples": 50000,
    },
    "gradcheck": {
        "etas": [1e-3, 1e-4, 1e-5],
        "n_train_texts": 100,
        "init_scale": 0.5,
        "seed": 0,
    },
    "with_rankings": False,
}


def _deep_merge(base: dict, override: Mapping) -> dict:
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, Mapping) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def load_config(path: str | Path | None, overrides: Mapping | None = None) -> dict:
    config = copy.deepcopy(DEFAULT_CONFIG)
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file {path} does not exist")
        try:
            from_file = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path}: invalid JSON ({exc.msg})") from exc
        if not isinstance(from_file, dict):
            raise ConfigError(f"config file {path}: top level must be an object")
        config = _deep_merge(config, from_file)
    if overrides:
        config = _deep_merge(config, overrides)
    _validate_config(config)
    return config


def _validate_config(config: Mapping) -> None:
    if config["k"] < 0:
        raise ConfigError("k must be >= 0")
    if config["parallelism"] < 1:
        raise ConfigError("parallelism must be >= 1")
    if config["scorer"]["type"] not in ("builtin", "bridge"):
        raise ConfigError("scorer.type must be 'builtin' or 'bridge'")
    if config["scorer"]["type"] == "bridge" and not config["scorer"]["cmd"]:
        raise ConfigError("scorer.type 'bridge' needs scorer.cmd")
    if config["scorer"]["type"] == "bridge" and config["k"] > 0:
        raise ConfigError("bridge scorer supports per-example targets only (k = 0)")
    if config["cluster_pick"] not in ("seed", "random"):
        raise ConfigError("cluster_pick must be 'seed' or 'random'")
    if config["eval"]["candidate_answers"] not in ("dataset_answers", "none"):
        raise ConfigError("eval.candidate_answers must be 'dataset_answers' or 'none'")


def _store(config: Mapping) -> RunStore:
    output_dir = config["paths"].get("output_dir")
    if not output_dir:
        raise ConfigError("paths.output_dir is required")
    return RunStore(output_dir).ensure()


def _read_header(path: Path) -> dict:
    with path.open(encoding="utf-8") as fh:
        first = fh.readline()
    try:
        record = json.loads(first)
    except json.JSONDecodeError:
        return {}
    return record if isinstance(record, dict) and "format" in record else {}


def _load_store_pool(store: RunStore, lineage: Mapping) -> corpus.Pool:
    if not store.pool.exists():
        raise DataError(f"{store.pool} missing; run the ingest subcommand first")
    check_lineage(lineage, _read_header(store.pool), str(store.pool))
    return corpus.ingest(store.pool)


def _adapt_config(config: Mapping) -> lm.AdaptConfig:
    settings = config["lm"]
    return lm.AdaptConfig(
        lambda_grid=tuple(settings["lambda_grid"]),
        dev_fraction=settings["dev_fraction"],
        max_passes=settings["max_passes"],
    )


def _load_base(store: RunStore, lineage: Mapping) -> lm.BaseModel:
    if not store.base_model.exists():
        raise DataError(f"{store.base_model} missing; run train-base first")
    payload = json.loads(store.base_model.read_text(encoding="utf-8"))
    check_lineage(lineage, payload, str(store.base_model))
    model = lm.load_model(store.base_model)
    assert isinstance(model, lm.BaseModel)
    return model


def _target_labels(config: Mapping, store: RunStore, pool: corpus.Pool) -> list[str]:
    if config["k"] > 0:
        if not store.clusters.exists():
            raise DataError(f"{store.clusters} missing; run the cluster subcommand first")
        _, assignment = clustering.load_assignment(store.clusters)
        return list(assignment.seed_ids)
    return [ex.id for ex in pool.candidates]


def _load_targets(
    config: Mapping, store: RunStore, pool: corpus.Pool, base: lm.BaseModel,
    lineage: Mapping,
) -> dict[str, lm.TargetModel]:
    targets: dict[str, lm.TargetModel] = {}
    for label in _target_labels(config, store, pool):
        path = store.target_path(label)
        if not path.exists():
            stage = "cluster" if config["k"] > 0 else "train-targets"
            raise DataError(f"{path} missing; run the {stage} subcommand first")
        model = lm.load_model(path, base=base)
        assert isinstance(model, lm.TargetModel)
        targets[label] = model
    return targets


def cmd_ingest(config: Mapping) -> None:
    pool_path = config["paths"].get("pool")
    if not pool_path:
        raise ConfigError("paths.pool is required for ingest")
    store = _store(config)
    pool = corpus.ingest(pool_path)
    per_dataset = config["sample_per_dataset"]
    if per_dataset is not None:
        pool = corpus.sample_pool(pool, per_dataset, config["seeds"]["sample"])
    corpus.write_pool(pool, store.pool, lineage=lineage_for(config))


def cmd_train_base(config: Mapping) -> None:
    store = _store(config)
    lineage = lineage_for(config)
    pool = _load_store_pool(store, lineage)
    settings = config["lm"]
    model = lm.train_base(
        pool,
        order=settings["order"],
        delta=settings["delta"],
        weight_steps=settings["weight_steps"],
    )
    lm.save_base_model(model, store.base_model, lineage=lineage)


def cmd_train_targets(config: Mapping) -> None:
    if config["k"] > 0:
        raise ConfigError(
            "k > 0 configures clustered targets; use the cluster subcommand instead"
        )
    if config["scorer"]["type"] == "bridge":
        raise ConfigError(
            "bridge scorer trains its targets inside the score subcommand"
        )
    store = _store(config)
    lineage = lineage_for(config)
    pool = _load_store_pool(store, lineage)
    base = _load_base(store, lineage)
    cfg = _adapt_config(config)
    for example in pool.candidates:
        target = lm.adapt(base, [example], cfg)
        lm.save_target_model(target, store.target_path(target.label), lineage=lineage)


def cmd_cluster(config: Mapping) -> None:
    if config["k"] == 0:
        raise ConfigError(
            "k = 0 configures per-example targets; use train-targets instead"
        )
    if config["scorer"]["type"] == "bridge":
        raise ConfigError("clustering is only supported with the builtin scorer")
    store = _store(config)
    lineage = lineage_for(config)
    pool = _load_store_pool(store, lineage)
    base = _load_base(store, lineage)
    cfg = _adapt_config(config)
    k = config["k"]
    seed_ids = clustering.seed_clusters(pool, k, config["seeds"]["cluster"])
    by_id = pool.by_id
    seed_models = [lm.adapt(base, [by_id[s]], cfg, label=s) for s in seed_ids]
    affinity = scoring.score_matrix(
        base,
        seed_models,
        pool.candidates,
        parallelism=config["parallelism"],
        text_fn=corpus.training_text,
    )
    assignment = clustering.assign_equal(affinity, k, models=seed_models)
    assignment = clustering.retrain(pool, assignment, base, cfg)
    clustering.save_assignment(assignment, store.clusters, lineage=lineage)
    assert assignment.models is not None
    for model in assignment.models:
        lm.save_target_model(model, store.target_path(model.label), lineage=lineage)


def cmd_score(config: Mapping) -> None:
    store = _store(config)
    lineage = lineage_for(config)
    pool = _load_store_pool(store, lineage)
    if not pool.tests:
        raise DataError("pool has no test examples to score")
    if config["scorer"]["type"] == "bridge":
        with BridgeScorer(config["scorer"]["cmd"]) as scorer:
            matrix = score_matrix_via_bridge(scorer, pool, lineage=lineage)
    else:
        base = _load_base(store, lineage)
        targets = _load_targets(config, store, pool, base, lineage)
        matrix = scoring.score_matrix(
            base,
            list(targets.values()),
            pool.tests,
            parallelism=config["parallelism"],
            lineage=lineage,
        )
    matrix.save_csv(store.matrix)


def cmd_select(config: Mapping) -> None:
    store = _store(config)
    lineage = lineage_for(config)
    pool = _load_store_pool(store, lineage)
    matrix = scoring.ScoreMatrix.load_csv(store.matrix)
    check_lineage(lineage, matrix.lineage, str(store.matrix))
    policy = "cluster_ced" if config["k"] > 0 else "ced"
    selections = scoring.save_selections(
        matrix, store.selections, policy=policy, lineage=lineage
    )
    _write_prompts(config, store, pool, selections, lineage)
    if config["with_rankings"]:
        scoring.save_rankings(matrix, store.rankings, lineage=lineage)


def _prompt_spec(config: Mapping, task: str) -> corpus.PromptSpec:
    settings = config["prompt"]
    instruction = settings["instruction"]
    if instruction is None and task == "binary":
        instruction = corpus.YES_NO_INSTRUCTION
    return corpus.PromptSpec(
        token_budget=settings["token_budget"],
        section_labels=settings["section_labels"],
        instruction=instruction,
    )


def _write_prompts(
    config: Mapping,
    store: RunStore,
    pool: corpus.Pool,
    selections: Mapping[str, str],
    lineage: Mapping,
) -> None:
    by_id = pool.by_id
    header = {"format": "ced-prompts/1", **lineage}
    with store.prompts.open("w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for test_id in sorted(selections):
            test = by_id[test_id]
            demo = by_id[selections[test_id]]
            prompt = corpus.assemble_prompt(demo, test, _prompt_spec(config, test.task))
            fh.write(
                json.dumps(
                    {"test_id": test_id, "demo_id": demo.id, "prompt": prompt},
                    sort_keys=True,
                )
                + "\n"
            )


def cmd_gradcheck(config: Mapping) -> None:
    store = _store(config)
    lineage = lineage_for(config)
    pool = _load_store_pool(store, lineage)
    settings = config["gradcheck"]
    train_texts = [corpus.training_text(ex) for ex in pool.candidates]
    train_texts = train_texts[: settings["n_train_texts"]]
    if not pool.tests:
        raise DataError("pool has no test examples for gradcheck")
    test_text = corpus.input_text(pool.tests[0])
    model = gradcheck.TinyLM.from_texts(
        train_texts + [test_text],
        seed=settings["seed"],
        init_scale=settings["init_scale"],
    )
    report = gradcheck.alignment_report(
        model, train_texts, test_text, etas=tuple(settings["etas"])
    )
    gradcheck.save_report(report, store.gradcheck, lineage=lineage)


def cmd_evaluate(config: Mapping) -> None:
    store = _store(config)
    lineage = lineage_for(config)
    pool = _load_store_pool(store, lineage)
    base = _load_base(store, lineage)
    targets = _load_targets(config, store, pool, base, lineage)
    matrix = scoring.ScoreMatrix.load_csv(store.matrix)
    check_lineage(lineage, matrix.lineage, str(store.matrix))
    header, ced_selections = scoring.load_selections(store.selections)
    check_lineage(lineage, header, str(store.selections))

    policy_selections: dict[str, Mapping[str, str]] = {
        header.get("policy", "ced"): ced_selections,
        "random": evaluation.random_selections(
            matrix.test_ids, matrix.candidate_ids, config["seeds"]["random_policy"]
        ),
    }
    neighbor_file = config["eval"]["neighbor_file"]
    if neighbor_file:
        policy_selections["nearest_neighbor_file"] = _load_neighbors(neighbor_file)
    external = None
    predictions_file = config["eval"]["predictions_file"]
    if predictions_file:
        external = evaluation.load_external_predictions(predictions_file)

    report = evaluation.run_evaluation(
        pool,
        matrix,
        targets,
        policy_selections,
        candidate_answers=config["eval"]["candidate_answers"],
        external_predictions=external,
        bootstrap_resamples=config["eval"]["bootstrap_resamples"],
        bootstrap_seed=config["seeds"]["bootstrap"],
        lineage=lineage,
    )
    report.save_json(store.report_json)
    evaluation.save_predictions(report, store.predictions, lineage=lineage)


def cmd_report(config: Mapping) -> None:
    store = _store(config)
    lineage = lineage_for(config)
    if not store.report_json.exists():
        raise DataError(f"{store.report_json} missing; run evaluate first")
    payload = json.loads(store.report_json.read_text(encoding="utf-8"))
    check_lineage(lineage, payload.get("lineage", {}), str(store.report_json))
    report = _report_from_dict(payload)
    store.report_text.write_text(
        evaluation.render_report_text(report), encoding="utf-8"
    )
    evaluation.save_sorted_losses_csv(report, store.sorted_losses)
    plot_sorted_losses(report.sorted_losses, store.figures_dir)


def _report_from_dict(payload: Mapping) -> evaluation.EvalReport:
    policies = {}
    for name, entry in payload["policies"].items():
        per_ds = {
            ds: {
                "in_domain": entry["in_domain"]["per_dataset"][ds],
                "in_task": entry["in_task"]["per_dataset"][ds],
            }
            for ds in entry["in_domain"]["per_dataset"]
        }
        policies[name] = evaluation.PolicyEval(
            policy=name,
            selections={},
            predictions={},
            per_test={},
            per_dataset=entry["per_dataset"],
            macro=entry["macro"],
            avg_rank=entry["avg_rank"],
            domain=evaluation.DomainAnalysis(
                in_domain=entry["in_domain"]["aggregate"],
                in_task=entry["in_task"]["aggregate"],
                per_dataset=per_ds,
            ),
            bootstrap_std=entry["bootstrap_std"],
        )
    return evaluation.EvalReport(
        datasets=tuple(payload["datasets"]),
        metric_names=payload["metric_names"],
        policies=policies,
        oracle_category=payload["oracle_category"],
        sorted_losses=payload["sorted_losses"],
        lineage=dict(payload.get("lineage", {})),
    )


def _load_neighbors(path: str | Path) -> dict[str, str]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"neighbor file {path} does not exist")
    neighbors: dict[str, str] = {}
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            record = json.loads(line)
            if lineno == 1 and "format" in record:
                continue
            neighbors[record["test_id"]] = record["candidate_id"]
    return neighbors


_HANDLERS = {
    "ingest": cmd_ingest,
    "train-base": cmd_train_base,
    "train-targets": cmd_train_targets,
    "cluster": cmd_cluster,
    "score": cmd_score,
    "select": cmd_select,
    "gradcheck": cmd_gradcheck,
    "evaluate": cmd_evaluate,
    "report": cmd_report,
}


def run(subcommand: str, config: Mapping) -> None:
    """Execute one pipeline stage against a validated config."""
    if subcommand not in _HANDLERS:
        raise ConfigError(f"unknown subcommand {subcommand!r}")
    _HANDLERS[subcommand](config)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cedsel",
        description="Cross-entropy-difference selection of in-context demonstrations",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        cmd = sub.add_parser(name)
        cmd.add_argument("--config", help="path to the pipeline config JSON")
        cmd.add_argument("--pool", help="override paths.pool")
        cmd.add_argument("--output-dir", help="override paths.output_dir")
        cmd.add_argument("--k", type=int, help="override cluster count")
        cmd.add_argument("--order", type=int, help="override lm.order")
        cmd.add_argument("--delta", type=float, help="override lm.delta")
        cmd.add_argument("--parallelism", type=int, help="override parallelism")
        cmd.add_argument(
            "--sample-per-dataset", type=int, help="override sample_per_dataset"
        )
        cmd.add_argument(
            "--with-rankings", action="store_true", help="also export full rankings"
        )
    return parser


def _overrides_from_args(args: argparse.Namespace) -> dict:
    overrides: dict = {}
    paths = {}
    if args.pool:
        paths["pool"] = args.pool
    if args.output_dir:
        paths["output_dir"] = args.output_dir
    if paths:
        overrides["paths"] = paths
    if args.k is not None:
        overrides["k"] = args.k
    lm_over = {}
    if args.order is not None:
        lm_over["order"] = args.order
    if args.delta is not None:
        lm_over["delta"] = args.delta
    if lm_over:
        overrides["lm"] = lm_over
    if args.parallelism is not None:
        overrides["parallelism"] = args.parallelism
    if args.sample_per_dataset is not None:
        overrides["sample_per_dataset"] = args.sample_per_dataset
    if args.with_rankings:
        overrides["with_rankings"] = True
    return overrides


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        config = load_config(args.config, _overrides_from_args(args))
        run(args.subcommand, config)
    except EngineError as exc:
        print(
            json.dumps(
                {
                    "error": type(exc).__name__,
                    "message": str(exc),
                    "exit_code": exc.exit_code,
                }
            ),
            file=sys.stderr,
        )
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
