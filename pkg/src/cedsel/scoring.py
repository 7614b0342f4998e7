"""Cross-entropy-difference scoring, the score matrix, and selection.

Every (test, candidate) pair gets the base and target cross-entropies of
the unlabeled test input plus their difference. Because the base term is
constant along a row, ranking by the difference and ranking by the target
cross-entropy are identical; both are exposed and the selection rule is
the row argmin with ties broken by candidate id.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .corpus import Example, input_text
from .errors import DataError
from .lm import BaseModel, TargetModel, cross_entropy

MATRIX_FORMAT = "ced-matrix/1"
SELECTIONS_FORMAT = "ced-selections/1"
RANKINGS_FORMAT = "ced-rankings/1"


@dataclass(frozen=True)
class PairScore:
    """Scores for one (test, candidate) pair; ``ced = target_ce - base_ce``."""

    test_id: str
    candidate_id: str
    base_ce: float
    target_ce: float
    ced: float


@dataclass(frozen=True)
class Ranking:
    """All candidates for one test, best (lowest target CE) first."""

    test_id: str
    candidate_ids: tuple[str, ...]


class ScoreMatrix:
    """Dense (test x candidate) grid of cross-entropies."""

    def __init__(
        self,
        test_ids: Sequence[str],
        candidate_ids: Sequence[str],
        base_ce: np.ndarray,
        target_ce: np.ndarray,
        lineage: Mapping | None = None,
    ):
        self.test_ids = tuple(test_ids)
        self.candidate_ids = tuple(candidate_ids)
        self.base_ce = np.asarray(base_ce, dtype=float)
        self.target_ce = np.asarray(target_ce, dtype=float)
        self.lineage = dict(lineage) if lineage else {}
        if self.base_ce.shape != (len(self.test_ids),):
            raise DataError("base_ce shape does not match test ids")
        if self.target_ce.shape != (len(self.test_ids), len(self.candidate_ids)):
            raise DataError("target_ce shape does not match id axes")
        if not np.all(np.isfinite(self.base_ce)) or not np.all(
            np.isfinite(self.target_ce)
        ):
            raise DataError("score matrix contains non-finite entries")
        self._test_index = {t: i for i, t in enumerate(self.test_ids)}

    @property
    def ced(self) -> np.ndarray:
        return self.target_ce - self.base_ce[:, None]

    def row_index(self, test_id: str) -> int:
        try:
            return self._test_index[test_id]
        except KeyError:
            raise DataError(f"unknown test id {test_id!r}") from None

    def score(self, test_id: str, candidate_id: str) -> PairScore:
        i = self.row_index(test_id)
        try:
            j = self.candidate_ids.index(candidate_id)
        except ValueError:
            raise DataError(f"unknown candidate id {candidate_id!r}") from None
        base = float(self.base_ce[i])
        target = float(self.target_ce[i, j])
        return PairScore(test_id, candidate_id, base, target, target - base)

    def save_csv(self, path: str | Path) -> None:
        meta = " ".join(f"{k}={v}" for k, v in sorted(self.lineage.items()))
        with Path(path).open("w", encoding="utf-8", newline="") as fh:
            fh.write(f"# {MATRIX_FORMAT} {meta}".rstrip() + "\n")
            writer = csv.writer(fh)
            writer.writerow(["test_id", "candidate_id", "base_ce", "target_ce", "ced"])
            for i, test_id in enumerate(self.test_ids):
                base = self.base_ce[i]
                for j, cand_id in enumerate(self.candidate_ids):
                    target = self.target_ce[i, j]
                    writer.writerow(
                        [test_id, cand_id, repr(float(base)), repr(float(target)),
                         repr(float(target - base))]
                    )

    @classmethod
    def load_csv(cls, path: str | Path) -> "ScoreMatrix":
        path = Path(path)
        if not path.exists():
            raise DataError(f"score matrix {path} does not exist")
        lineage: dict[str, str] = {}
        rows: dict[tuple[str, str], tuple[float, float]] = {}
        test_ids: list[str] = []
        candidate_ids: list[str] = []
        with path.open(encoding="utf-8", newline="") as fh:
            header = fh.readline().strip()
            if not header.startswith(f"# {MATRIX_FORMAT}"):
                raise DataError(f"{path}: not a {MATRIX_FORMAT} artifact")
            for part in header.split()[2:]:
                key, _, value = part.partition("=")
                lineage[key] = value
            reader = csv.reader(fh)
            next(reader)  # column header
            for test_id, cand_id, base, target, _ced in reader:
                rows[(test_id, cand_id)] = (float(base), float(target))
        test_ids = list(dict.fromkeys(t for t, _ in rows))
        candidate_ids = list(dict.fromkeys(c for _, c in rows))
        base_ce = np.empty(len(test_ids))
        target_ce = np.empty((len(test_ids), len(candidate_ids)))
        for i, t in enumerate(test_ids):
            for j, c in enumerate(candidate_ids):
                if (t, c) not in rows:
                    raise DataError(f"{path}: incomplete matrix, missing ({t}, {c})")
                base_ce[i], target_ce[i, j] = rows[(t, c)]
        return cls(test_ids, candidate_ids, base_ce, target_ce, lineage)


def score_pair(base: BaseModel, target: TargetModel, test: Example) -> PairScore:
    """Score one test input under one candidate's target model."""
    if target.base is not base and target.base.vocab != base.vocab:
        raise DataError(
            f"target {target.label!r} does not share the base model vocabulary"
        )
    ids = base.vocab.encode(input_text(test))
    base_ce = cross_entropy(base, ids)
    target_ce = cross_entropy(target, ids)
    return PairScore(test.id, target.label, base_ce, target_ce, target_ce - base_ce)


def _score_rows(
    base: BaseModel,
    targets: Sequence[TargetModel],
    tests: Sequence[Example],
    text_fn=input_text,
) -> tuple[np.ndarray, np.ndarray]:
    base_ce = np.empty(len(tests))
    target_ce = np.empty((len(tests), len(targets)))
    for i, test in enumerate(tests):
        ids = base.vocab.encode(text_fn(test))
        if len(ids) < 2:
            raise DataError(f"test {test.id!r} renders to empty input text")
        base_probs = base.position_probs(ids)
        n = len(base_probs)
        base_ce[i] = -sum(math.log(p) for p in base_probs) / n
        for j, target in enumerate(targets):
            logprobs = target.mixed_logprobs(ids, base_probs)
            target_ce[i, j] = -sum(logprobs) / n
    return base_ce, target_ce


def _score_chunk(args) -> tuple[int, np.ndarray, np.ndarray]:
    start, base, targets, tests, text_fn = args
    base_ce, target_ce = _score_rows(base, targets, tests, text_fn)
    return start, base_ce, target_ce


def score_matrix(
    base: BaseModel,
    targets: Sequence[TargetModel],
    tests: Sequence[Example],
    parallelism: int = 1,
    lineage: Mapping | None = None,
    text_fn=input_text,
) -> ScoreMatrix:
    """Complete (test x candidate) matrix; schedule-independent output.

    ``text_fn`` picks the scored rendering (the unlabeled input by
    default; cluster affinity passes the full training text). With
    ``parallelism > 1`` rows are scored in worker processes and merged by
    coordinates, which cannot change any value.
    """
    if not targets:
        raise DataError("score_matrix needs at least one target model")
    labels = [t.label for t in targets]
    if len(set(labels)) != len(labels):
        raise DataError("target labels must be unique")
    for target in targets:
        if target.base is not base and target.base.vocab != base.vocab:
            raise DataError(
                f"target {target.label!r} does not share the base model vocabulary"
            )
    test_ids = [t.id for t in tests]
    if parallelism <= 1 or len(tests) < 2:
        base_ce, target_ce = _score_rows(base, targets, tests, text_fn)
        return ScoreMatrix(test_ids, labels, base_ce, target_ce, lineage)
    chunk = math.ceil(len(tests) / parallelism)
    jobs = [
        (start, base, targets, tests[start : start + chunk], text_fn)
        for start in range(0, len(tests), chunk)
    ]
    base_ce = np.empty(len(tests))
    target_ce = np.empty((len(tests), len(targets)))
    with ProcessPoolExecutor(max_workers=parallelism) as pool:
        for start, bce, tce in pool.map(_score_chunk, jobs):
            base_ce[start : start + len(bce)] = bce
            target_ce[start : start + len(bce)] = tce
    return ScoreMatrix(test_ids, labels, base_ce, target_ce, lineage)


def rank(matrix: ScoreMatrix, test_id: str) -> Ranking:
    """All candidates sorted by ascending target CE, ties by candidate id."""
    i = matrix.row_index(test_id)
    row = matrix.target_ce[i]
    order = sorted(
        range(len(matrix.candidate_ids)),
        key=lambda j: (row[j], matrix.candidate_ids[j]),
    )
    return Ranking(test_id, tuple(matrix.candidate_ids[j] for j in order))


def select(matrix: ScoreMatrix, test_id: str) -> str:
    """Best candidate for ``test_id``; equals ``rank(...)[0]``."""
    i = matrix.row_index(test_id)
    row = matrix.target_ce[i]
    best = min(
        range(len(matrix.candidate_ids)),
        key=lambda j: (row[j], matrix.candidate_ids[j]),
    )
    return matrix.candidate_ids[best]


def save_selections(
    matrix: ScoreMatrix,
    path: str | Path,
    policy: str = "ced",
    lineage: Mapping | None = None,
) -> dict[str, str]:
    """Write one selected demonstration per test as JSONL; returns the map."""
    selections = {t: select(matrix, t) for t in matrix.test_ids}
    header: dict = {"format": SELECTIONS_FORMAT, "policy": policy}
    if lineage:
        header.update(lineage)
    with Path(path).open("w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for test_id in matrix.test_ids:
            score = matrix.score(test_id, selections[test_id])
            fh.write(
                json.dumps(
                    {
                        "test_id": test_id,
                        "demo_id": selections[test_id],
                        "target_ce": score.target_ce,
                        "ced": score.ced,
                    },
                    sort_keys=True,
                )
                + "\n"
            )
    return selections


def load_selections(path: str | Path) -> tuple[dict, dict[str, str]]:
    """Read a selections file; returns (header, test_id -> demo_id)."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"selections file {path} does not exist")
    selections: dict[str, str] = {}
    header: dict = {}
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            record = json.loads(line)
            if lineno == 1 and "format" in record:
                header = record
                continue
            selections[record["test_id"]] = record["demo_id"]
    return header, selections


def save_rankings(
    matrix: ScoreMatrix, path: str | Path, lineage: Mapping | None = None
) -> None:
    header: dict = {"format": RANKINGS_FORMAT}
    if lineage:
        header.update(lineage)
    with Path(path).open("w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for test_id in matrix.test_ids:
            ranking = rank(matrix, test_id)
            fh.write(
                json.dumps(
                    {"test_id": test_id, "ranking": list(ranking.candidate_ids)},
                    sort_keys=True,
                )
                + "\n"
            )
