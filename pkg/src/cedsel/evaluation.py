"""Selection-quality evaluation: task metrics, oracles, ranks, dispersion.

Per-task metrics are accuracy (after verbalizer normalization), token F1
and LCS-based ROUGE-L. Choice-style tasks are predicted in-engine by
minimum cross-entropy of (input + answer) under the selected
demonstration's target model; free-form tasks either use a supplied
candidate-answer inventory or take answers from an external predictions
file. Two oracle rows bound every policy: best demonstration by gold
answer loss, and best by the task metric itself.
"""

from __future__ import annotations

import json
import math
import random
import re
import string
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .corpus import Example, Pool, input_text
from .errors import DataError
from .lm import BaseModel, TargetModel, cross_entropy
from .scoring import ScoreMatrix

REPORT_FORMAT = "ced-report/1"
PREDICTIONS_FORMAT = "ced-predictions/1"

POLICIES = (
    "random",
    "nearest_neighbor_file",
    "ced",
    "cluster_ced",
    "oracle_loss",
    "oracle_metric",
)

METRIC_NAMES = {
    "binary": "Acc",
    "multichoice": "Acc",
    "extractive_qa": "F1",
    "abstractive_qa": "RougeL",
}

_ARTICLE_RE = re.compile(r"\b(a|an|the)\b")
_PUNCT_TABLE = str.maketrans("", "", string.punctuation)
_ALIASES = {"yes": "yes", "true": "yes", "no": "no", "false": "no"}


def normalize_text(text: str, remove_articles: bool = False) -> str:
    """Lowercase, strip punctuation (optionally articles), squeeze spaces."""
    text = text.lower().translate(_PUNCT_TABLE)
    if remove_articles:
        text = _ARTICLE_RE.sub(" ", text)
    return " ".join(text.split())


def verbalize(text: str) -> str:
    """Map generated text onto a label: normalized, with yes/no aliasing."""
    normalized = normalize_text(text, remove_articles=True)
    return _ALIASES.get(normalized, normalized)


def accuracy(pred: str, gold: str) -> float:
    """Exact match after verbalization, with a first-token fallback for
    yes/no golds."""
    if not gold:
        raise DataError("gold answer must be non-empty")
    pred_label = verbalize(pred)
    gold_label = verbalize(gold)
    if pred_label == gold_label:
        return 1.0
    if gold_label in ("yes", "no"):
        tokens = pred_label.split()
        if tokens and _ALIASES.get(tokens[0]) == gold_label:
            return 1.0
    return 0.0


def token_f1(pred: str, gold: str) -> float:
    """Bag-of-tokens F1 over normalized answers.

    Computed as 2 * overlap / (|pred| + |gold|), the algebraic form of
    2PR/(P+R), to keep simple ratios exact in floating point.
    """
    if not gold:
        raise DataError("gold answer must be non-empty")
    pred_tokens = normalize_text(pred).split()
    gold_tokens = normalize_text(gold).split()
    if not pred_tokens or not gold_tokens:
        return 0.0
    overlap = sum((Counter(pred_tokens) & Counter(gold_tokens)).values())
    if overlap == 0:
        return 0.0
    return 2.0 * overlap / (len(pred_tokens) + len(gold_tokens))


def _lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    dp = [0] * (len(b) + 1)
    for x in a:
        prev = 0
        for j, y in enumerate(b, start=1):
            cur = dp[j]
            dp[j] = prev + 1 if x == y else max(dp[j], dp[j - 1])
            prev = cur
    return dp[-1]


def rouge_l(pred: str, gold: str) -> float:
    """LCS-based F1 between normalized token sequences (beta = 1)."""
    if not gold:
        raise DataError("gold answer must be non-empty")
    pred_tokens = normalize_text(pred).split()
    gold_tokens = normalize_text(gold).split()
    if not pred_tokens or not gold_tokens:
        return 0.0
    lcs = _lcs_length(pred_tokens, gold_tokens)
    if lcs == 0:
        return 0.0
    return 2.0 * lcs / (len(pred_tokens) + len(gold_tokens))


_METRIC_FNS = {
    "binary": accuracy,
    "multichoice": accuracy,
    "extractive_qa": token_f1,
    "abstractive_qa": rouge_l,
}


def metric_for_task(task: str):
    try:
        return _METRIC_FNS[task]
    except KeyError:
        raise DataError(f"unknown task {task!r}") from None


def predict_by_likelihood(
    model: BaseModel | TargetModel,
    test: Example,
    candidates: Sequence[str] | None = None,
) -> str:
    """Answer candidate with the lowest cross-entropy of (input + answer).

    Binary tasks default to yes/no; multichoice to the example's choices.
    Free-form tasks need ``candidates``. Ties keep the earliest candidate.
    """
    if candidates is None:
        if test.choices:
            candidates = list(test.choices)
        elif test.task == "binary":
            candidates = ["yes", "no"]
        else:
            raise DataError(
                f"test {test.id!r} ({test.task}) needs a candidate answer list"
            )
    if not candidates:
        raise DataError(f"empty candidate answer list for test {test.id!r}")
    prefix = input_text(test)
    best_answer = None
    best_ce = math.inf
    for answer in candidates:
        ce = cross_entropy(model, model.vocab.encode(prefix + "\n" + answer))
        if ce < best_ce:
            best_ce = ce
            best_answer = answer
    return best_answer


class PairTable:
    """Dense per-(test, candidate) value table (metric or loss)."""

    def __init__(
        self,
        test_ids: Sequence[str],
        candidate_ids: Sequence[str],
        values: np.ndarray,
    ):
        self.test_ids = tuple(test_ids)
        self.candidate_ids = tuple(candidate_ids)
        self.values = np.asarray(values, dtype=float)
        if self.values.shape != (len(self.test_ids), len(self.candidate_ids)):
            raise DataError("value table shape does not match id axes")
        if not np.all(np.isfinite(self.values)):
            raise DataError("value table is incomplete (non-finite entries)")
        self._test_index = {t: i for i, t in enumerate(self.test_ids)}
        self._cand_index = {c: j for j, c in enumerate(self.candidate_ids)}

    def value(self, test_id: str, candidate_id: str) -> float:
        return float(
            self.values[self._test_index[test_id], self._cand_index[candidate_id]]
        )

    def row(self, test_id: str) -> np.ndarray:
        return self.values[self._test_index[test_id]]


@dataclass(frozen=True)
class OracleSelection:
    mode: str
    selections: dict[str, str]
    values: dict[str, float]
    aggregate: float


def oracle(table: PairTable | ScoreMatrix, mode: str) -> OracleSelection:
    """Best demonstration per test: min value in loss mode, max in metric mode."""
    if mode not in ("loss", "metric"):
        raise DataError(f"oracle mode must be 'loss' or 'metric', got {mode!r}")
    if isinstance(table, ScoreMatrix):
        table = PairTable(table.test_ids, table.candidate_ids, table.target_ce)
    sign = 1.0 if mode == "loss" else -1.0
    selections: dict[str, str] = {}
    values: dict[str, float] = {}
    for i, test_id in enumerate(table.test_ids):
        row = table.values[i]
        best = min(
            range(len(table.candidate_ids)),
            key=lambda j: (sign * row[j], table.candidate_ids[j]),
        )
        selections[test_id] = table.candidate_ids[best]
        values[test_id] = float(row[best])
    aggregate = sum(values.values()) / len(values) if values else 0.0
    return OracleSelection(mode, selections, values, aggregate)


def metric_oracle_rankings(table: PairTable) -> dict[str, list[str]]:
    """Per-test candidate ranking by descending metric, ties by candidate id."""
    rankings: dict[str, list[str]] = {}
    for i, test_id in enumerate(table.test_ids):
        row = table.values[i]
        order = sorted(
            range(len(table.candidate_ids)),
            key=lambda j: (-row[j], table.candidate_ids[j]),
        )
        rankings[test_id] = [table.candidate_ids[j] for j in order]
    return rankings


def avg_rank(
    selections: Mapping[str, str],
    rankings: Mapping[str, Sequence[str]],
    pool: Pool,
) -> dict[str, float]:
    """Mean 0-based rank of each selection in the oracle ranking, per dataset.

    The returned dict maps dataset -> mean rank plus a ``macro`` key
    (unweighted mean over datasets).
    """
    by_id = pool.by_id
    per_dataset: dict[str, list[int]] = {}
    for test_id, ranking in rankings.items():
        if test_id not in selections:
            raise DataError(f"missing selection for test {test_id!r}")
        demo = selections[test_id]
        try:
            position = list(ranking).index(demo)
        except ValueError:
            raise DataError(
                f"selection {demo!r} for test {test_id!r} is not in the ranking"
            ) from None
        per_dataset.setdefault(by_id[test_id].dataset, []).append(position)
    result = {ds: sum(r) / len(r) for ds, r in sorted(per_dataset.items())}
    result["macro"] = sum(result.values()) / len(result) if result else 0.0
    return result


@dataclass(frozen=True)
class DomainAnalysis:
    in_domain: float
    in_task: float
    per_dataset: dict[str, dict[str, float]] = field(default_factory=dict)


def domain_analysis(selections: Mapping[str, str], pool: Pool) -> DomainAnalysis:
    """Fractions of selections sharing the test's dataset and task."""
    by_id = pool.by_id
    per_dataset: dict[str, list[tuple[int, int]]] = {}
    for test_id, demo_id in selections.items():
        if test_id not in by_id:
            raise DataError(f"unknown test id {test_id!r}")
        if demo_id not in by_id:
            raise DataError(f"unknown demonstration id {demo_id!r}")
        test, demo = by_id[test_id], by_id[demo_id]
        per_dataset.setdefault(test.dataset, []).append(
            (int(demo.dataset == test.dataset), int(demo.task == test.task))
        )
    per_ds = {
        ds: {
            "in_domain": sum(d for d, _ in flags) / len(flags),
            "in_task": sum(t for _, t in flags) / len(flags),
        }
        for ds, flags in sorted(per_dataset.items())
    }
    total = [flag for flags in per_dataset.values() for flag in flags]
    if not total:
        return DomainAnalysis(0.0, 0.0, {})
    return DomainAnalysis(
        in_domain=sum(d for d, _ in total) / len(total),
        in_task=sum(t for _, t in total) / len(total),
        per_dataset=per_ds,
    )


def oracle_category_coverage(table: PairTable, pool: Pool) -> dict[str, dict[str, float]]:
    """Fraction of tests whose best-metric set touches each category.

    Ties mean the best set can span categories, so the in-domain, in-task
    and out-of-domain fractions may each exceed their complement and need
    not sum to 1.
    """
    by_id = pool.by_id
    per_dataset: dict[str, list[tuple[bool, bool, bool]]] = {}
    for i, test_id in enumerate(table.test_ids):
        test = by_id[test_id]
        row = table.values[i]
        best = row.max()
        best_set = [
            by_id[table.candidate_ids[j]]
            for j in range(len(table.candidate_ids))
            if row[j] == best
        ]
        flags = (
            any(c.dataset == test.dataset for c in best_set),
            any(c.task == test.task for c in best_set),
            any(c.dataset != test.dataset for c in best_set),
        )
        per_dataset.setdefault(test.dataset, []).append(flags)
    coverage = {
        ds: {
            "in_domain": sum(f[0] for f in flags) / len(flags),
            "in_task": sum(f[1] for f in flags) / len(flags),
            "out_of_domain": sum(f[2] for f in flags) / len(flags),
        }
        for ds, flags in sorted(per_dataset.items())
    }
    return coverage


def bootstrap_std(
    scores: Sequence[float], resamples: int, seed: int, chunk: int = 10_000
) -> float:
    """Standard deviation of resampled means; deterministic per seed."""
    if len(scores) < 2:
        raise DataError("bootstrap needs at least 2 scores")
    values = np.asarray(scores, dtype=float)
    n = len(values)
    rng = np.random.default_rng(seed)
    means = np.empty(resamples)
    done = 0
    while done < resamples:
        block = min(chunk, resamples - done)
        idx = rng.integers(0, n, size=(block, n))
        means[done : done + block] = values[idx].mean(axis=1)
        done += block
    if means.min() == means.max():
        return 0.0
    return float(means.std())


@dataclass
class PolicyEval:
    policy: str
    selections: dict[str, str]
    predictions: dict[str, str]
    per_test: dict[str, float]
    per_dataset: dict[str, float]
    macro: float
    avg_rank: dict[str, float]
    domain: DomainAnalysis
    bootstrap_std: float


@dataclass
class EvalReport:
    datasets: tuple[str, ...]
    metric_names: dict[str, str]
    policies: dict[str, PolicyEval]
    oracle_category: dict[str, dict[str, float]]
    sorted_losses: list[dict]
    lineage: dict

    def to_dict(self) -> dict:
        return {
            "format": REPORT_FORMAT,
            "lineage": self.lineage,
            "datasets": list(self.datasets),
            "metric_names": self.metric_names,
            "policies": {
                name: {
                    "per_dataset": p.per_dataset,
                    "macro": p.macro,
                    "avg_rank": p.avg_rank,
                    "in_domain": {
                        "aggregate": p.domain.in_domain,
                        "per_dataset": {
                            ds: v["in_domain"] for ds, v in p.domain.per_dataset.items()
                        },
                    },
                    "in_task": {
                        "aggregate": p.domain.in_task,
                        "per_dataset": {
                            ds: v["in_task"] for ds, v in p.domain.per_dataset.items()
                        },
                    },
                    "bootstrap_std": p.bootstrap_std,
                }
                for name, p in sorted(self.policies.items())
            },
            "oracle_category": self.oracle_category,
            "sorted_losses": self.sorted_losses,
        }

    def save_json(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_dict(), sort_keys=True, indent=1), encoding="utf-8"
        )


def _candidate_answers(test: Example, pool: Pool, mode: str) -> list[str] | None:
    if test.choices:
        return list(test.choices)
    if test.task == "binary":
        return ["yes", "no"]
    if mode == "dataset_answers":
        answers = sorted(
            {ex.answer for ex in pool.candidates if ex.dataset == test.dataset}
        )
        if answers:
            return answers
    return None


def build_tables(
    pool: Pool,
    tests: Sequence[Example],
    targets_by_label: Mapping[str, TargetModel],
    candidate_ids: Sequence[str],
    candidate_answers: str = "dataset_answers",
) -> tuple[PairTable, PairTable, dict[tuple[str, str], str]]:
    """Metric and gold-answer-loss tables over all (test, candidate) pairs.

    Returns (metric_table, loss_table, predictions) where predictions maps
    (test_id, candidate_id) to the likelihood-predicted answer.
    """
    metric_values = np.empty((len(tests), len(candidate_ids)))
    loss_values = np.empty((len(tests), len(candidate_ids)))
    predictions: dict[tuple[str, str], str] = {}
    for i, test in enumerate(tests):
        answers = _candidate_answers(test, pool, candidate_answers)
        if answers is None:
            raise DataError(
                f"test {test.id!r} ({test.task}) has no candidate answers; supply "
                "an external predictions file or enable dataset_answers"
            )
        metric = metric_for_task(test.task)
        gold_ids_text = input_text(test) + "\n" + test.answer
        for j, cand_id in enumerate(candidate_ids):
            model = targets_by_label[cand_id]
            pred = predict_by_likelihood(model, test, answers)
            predictions[(test.id, cand_id)] = pred
            metric_values[i, j] = metric(pred, test.answer)
            loss_values[i, j] = cross_entropy(model, model.vocab.encode(gold_ids_text))
    test_ids = [t.id for t in tests]
    return (
        PairTable(test_ids, candidate_ids, metric_values),
        PairTable(test_ids, candidate_ids, loss_values),
        predictions,
    )


def random_selections(
    test_ids: Sequence[str], candidate_ids: Sequence[str], seed: int
) -> dict[str, str]:
    rng = random.Random(seed)
    pool_ids = list(candidate_ids)
    return {t: rng.choice(pool_ids) for t in test_ids}


def run_evaluation(
    pool: Pool,
    matrix: ScoreMatrix,
    targets_by_label: Mapping[str, TargetModel],
    policy_selections: Mapping[str, Mapping[str, str]],
    candidate_answers: str = "dataset_answers",
    external_predictions: Mapping[tuple[str, str], str] | None = None,
    bootstrap_resamples: int = 50_000,
    bootstrap_seed: int = 0,
    lineage: Mapping | None = None,
) -> EvalReport:
    """Evaluate selection policies against the oracles on one run.

    ``policy_selections`` maps policy name -> (test_id -> demo_id) for the
    non-oracle policies; oracle rows are derived here. External predictions,
    keyed by (test_id, policy), override the in-engine likelihood predictor.
    """
    by_id = pool.by_id
    tests = [by_id[t] for t in matrix.test_ids]
    candidate_ids = matrix.candidate_ids
    external = dict(external_predictions or {})

    metric_table, loss_table, pair_predictions = build_tables(
        pool, tests, targets_by_label, candidate_ids, candidate_answers
    )
    oracle_metric = oracle(metric_table, "metric")
    oracle_loss = oracle(loss_table, "loss")
    rankings = metric_oracle_rankings(metric_table)

    all_selections: dict[str, Mapping[str, str]] = dict(policy_selections)
    all_selections["oracle_loss"] = oracle_loss.selections
    all_selections["oracle_metric"] = oracle_metric.selections

    datasets = tuple(sorted({t.dataset for t in tests}))
    metric_names = {ds: METRIC_NAMES[by_dataset_task(pool, ds)] for ds in datasets}

    policies: dict[str, PolicyEval] = {}
    for policy, selections in all_selections.items():
        if policy not in POLICIES:
            raise DataError(f"unknown policy {policy!r}")
        per_test: dict[str, float] = {}
        predictions: dict[str, str] = {}
        for test in tests:
            if test.id not in selections:
                raise DataError(f"policy {policy!r}: no selection for test {test.id!r}")
            demo = selections[test.id]
            if demo not in targets_by_label:
                raise DataError(
                    f"policy {policy!r}: selection {demo!r} has no target model"
                )
            if (test.id, policy) in external:
                answer = external[(test.id, policy)]
                score = metric_for_task(test.task)(answer, test.answer)
            else:
                answer = pair_predictions[(test.id, demo)]
                score = metric_table.value(test.id, demo)
            predictions[test.id] = answer
            per_test[test.id] = score
        per_dataset = {
            ds: float(
                np.mean([per_test[t.id] for t in tests if t.dataset == ds])
            )
            for ds in datasets
        }
        macro = sum(per_dataset.values()) / len(per_dataset)
        policies[policy] = PolicyEval(
            policy=policy,
            selections=dict(selections),
            predictions=predictions,
            per_test=per_test,
            per_dataset=per_dataset,
            macro=macro,
            avg_rank=avg_rank(selections, rankings, pool),
            domain=domain_analysis(dict(selections), pool),
            bootstrap_std=bootstrap_std(
                [per_test[t.id] for t in tests], bootstrap_resamples, bootstrap_seed
            ),
        )

    sorted_losses = sorted_loss_rows(metric_table, pool)
    return EvalReport(
        datasets=datasets,
        metric_names=metric_names,
        policies=policies,
        oracle_category=oracle_category_coverage(metric_table, pool),
        sorted_losses=sorted_losses,
        lineage=dict(lineage) if lineage else {},
    )


def by_dataset_task(pool: Pool, dataset: str) -> str:
    for ex in pool.examples:
        if ex.dataset == dataset:
            return ex.task
    raise DataError(f"dataset {dataset!r} not present in pool")


def sorted_loss_rows(metric_table: PairTable, pool: Pool) -> list[dict]:
    """Per-dataset candidate losses (1 - metric averaged over tests), sorted.

    One row per (dataset, candidate); the plot layer draws these curves
    with a reference line at the in-domain mean.
    """
    by_id = pool.by_id
    rows: list[dict] = []
    datasets = sorted({by_id[t].dataset for t in metric_table.test_ids})
    for dataset in datasets:
        idx = [
            i for i, t in enumerate(metric_table.test_ids)
            if by_id[t].dataset == dataset
        ]
        entries = []
        for j, cand_id in enumerate(metric_table.candidate_ids):
            mean_loss = float(1.0 - metric_table.values[idx, j].mean())
            entries.append(
                {
                    "dataset": dataset,
                    "candidate_id": cand_id,
                    "candidate_dataset": by_id[cand_id].dataset,
                    "in_domain": by_id[cand_id].dataset == dataset,
                    "mean_loss": mean_loss,
                }
            )
        entries.sort(key=lambda r: (r["mean_loss"], r["candidate_id"]))
        rows.extend(entries)
    return rows


def save_predictions(
    report: EvalReport, path: str | Path, lineage: Mapping | None = None
) -> None:
    header: dict = {"format": PREDICTIONS_FORMAT}
    if lineage:
        header.update(lineage)
    with Path(path).open("w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for policy in sorted(report.policies):
            result = report.policies[policy]
            for test_id in sorted(result.predictions):
                fh.write(
                    json.dumps(
                        {
                            "test_id": test_id,
                            "policy": policy,
                            "demo_id": result.selections[test_id],
                            "answer": result.predictions[test_id],
                        },
                        sort_keys=True,
                    )
                    + "\n"
                )


def load_external_predictions(path: str | Path) -> dict[tuple[str, str], str]:
    """Read a predictions JSONL into a (test_id, policy) -> answer map."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"predictions file {path} does not exist")
    out: dict[tuple[str, str], str] = {}
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            record = json.loads(line)
            if lineno == 1 and "format" in record:
                continue
            policy = record["policy"]
            if policy not in POLICIES:
                raise DataError(f"line {lineno}: unknown policy {policy!r}")
            key = (record["test_id"], policy)
            if key in out:
                raise DataError(
                    f"line {lineno}: duplicate prediction for {key}"
                )
            out[key] = record["answer"]
    return out


def _format_table(headers: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    widths = [
        max(len(str(headers[c])), *(len(str(r[c])) for r in rows)) if rows else len(str(headers[c]))
        for c in range(len(headers))
    ]
    def fmt(row):
        return "  ".join(str(v).ljust(w) for v, w in zip(row, widths)).rstrip()
    lines = [fmt(headers), fmt(["-" * w for w in widths])]
    lines.extend(fmt(row) for row in rows)
    return "\n".join(lines)


def render_report_text(report: EvalReport) -> str:
    """Human-readable tables: metrics, domain composition, average rank."""
    datasets = list(report.datasets)
    ordered = [p for p in POLICIES if p in report.policies]

    headers = ["policy"] + [f"{ds} ({report.metric_names[ds]})" for ds in datasets]
    headers.append("AVG")
    metric_rows = []
    for policy in ordered:
        result = report.policies[policy]
        row = [policy] + [f"{result.per_dataset[ds]:.3f}" for ds in datasets]
        row.append(f"{result.macro:.3f}")
        metric_rows.append(row)
    sections = ["== Task metrics per selection policy ==",
                _format_table(headers, metric_rows)]

    domain_headers = ["policy"] + [f"{ds}" for ds in datasets] + ["Avg"]
    for kind in ("in_domain", "in_task"):
        rows = []
        for policy in ordered:
            result = report.policies[policy]
            per_ds = result.domain.per_dataset
            row = [policy]
            for ds in datasets:
                value = per_ds.get(ds, {}).get(kind)
                row.append("-" if value is None else f"{value:.2f}")
            agg = result.domain.in_domain if kind == "in_domain" else result.domain.in_task
            row.append(f"{agg:.2f}")
            rows.append(row)
        sections.append(f"== Share of selections {kind.replace('_', '-')} ==")
        sections.append(_format_table(domain_headers, rows))

    cat_headers = ["dataset", "in_domain", "in_task", "out_of_domain"]
    cat_rows = [
        [ds] + [f"{report.oracle_category[ds][k]:.2f}" for k in cat_headers[1:]]
        for ds in datasets
        if ds in report.oracle_category
    ]
    sections.append("== Oracle-best demonstrations per category (can overlap) ==")
    sections.append(_format_table(cat_headers, cat_rows))

    rank_headers = ["policy"] + datasets + ["Average"]
    rank_rows = []
    for policy in ordered:
        result = report.policies[policy]
        row = [policy]
        for ds in datasets:
            value = result.avg_rank.get(ds)
            row.append("-" if value is None else f"{value:.1f}")
        row.append(f"{result.avg_rank['macro']:.1f}")
        rank_rows.append(row)
    sections.append("== Average oracle rank of the selected demonstration ==")
    sections.append(_format_table(rank_headers, rank_rows))

    std_rows = [
        [policy, f"{report.policies[policy].bootstrap_std:.4f}"] for policy in ordered
    ]
    sections.append("== Bootstrap std of the mean score ==")
    sections.append(_format_table(["policy", "std"], std_rows))
    return "\n\n".join(sections) + "\n"


def save_sorted_losses_csv(report: EvalReport, path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        meta = " ".join(f"{k}={v}" for k, v in sorted(report.lineage.items()))
        fh.write(f"# ced-sorted-losses/1 {meta}".rstrip() + "\n")
        fh.write("dataset,candidate_id,candidate_dataset,in_domain,mean_loss\n")
        for row in report.sorted_losses:
            fh.write(
                f"{row['dataset']},{row['candidate_id']},{row['candidate_dataset']},"
                f"{int(row['in_domain'])},{repr(row['mean_loss'])}\n"
            )
