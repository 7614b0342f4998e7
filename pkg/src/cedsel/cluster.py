"""Equal-size clustering of a candidate pool by model affinity.

Workflow for large pools: adapt k seed models on k random examples, score
every pool example under every seed model, then greedily assign each
example to its best-scoring model subject to equal cluster sizes. One
model is then retrained per cluster, and the original seed serves as the
cluster's demonstration (its centroid). Only the greedy initialization is
run; there are no refinement passes.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Mapping, Sequence

from .corpus import Example, Pool
from .errors import DataError
from .lm import AdaptConfig, BaseModel, TargetModel, adapt
from .scoring import ScoreMatrix

CLUSTERS_FORMAT = "ced-clusters/1"


@dataclass(frozen=True)
class ClusterAssignment:
    """Equal-size partition of a pool, one seed and one model per cluster."""

    k: int
    seed_ids: tuple[str, ...]
    members: tuple[tuple[str, ...], ...]
    capacity: int
    models: tuple[TargetModel, ...] | None = None

    def __post_init__(self) -> None:
        if len(self.seed_ids) != self.k or len(self.members) != self.k:
            raise DataError("assignment must have exactly k seeds and k clusters")
        sizes = [len(m) for m in self.members]
        if sizes and max(sizes) - min(sizes) > 1:
            raise DataError(f"cluster sizes {sizes} differ by more than 1")
        flat = [m for cluster in self.members for m in cluster]
        if len(flat) != len(set(flat)):
            raise DataError("clusters overlap")
        assigned = set(flat)
        # a seed drawn from the partitioned examples must stay in its cluster
        for seed, cluster in zip(self.seed_ids, self.members):
            if seed in assigned and seed not in cluster:
                raise DataError(f"seed {seed!r} not a member of its own cluster")

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(len(m) for m in self.members)

    def cluster_of(self, example_id: str) -> int:
        for index, cluster in enumerate(self.members):
            if example_id in cluster:
                return index
        raise DataError(f"example {example_id!r} is not assigned to any cluster")


def seed_clusters(pool: Pool, k: int, seed: int) -> list[str]:
    """Sample k distinct candidate ids uniformly; deterministic per seed."""
    candidates = [ex.id for ex in pool.candidates]
    if k < 1:
        raise DataError("k must be >= 1")
    if k > len(candidates):
        raise DataError(f"k={k} exceeds the {len(candidates)} candidates")
    return random.Random(seed).sample(candidates, k)


def assign_equal(
    scores: ScoreMatrix, k: int, models: Sequence[TargetModel] | None = None
) -> ClusterAssignment:
    """Greedy same-size assignment from a pool x seed-model score matrix.

    Seeds that appear among the scored examples are pinned to their own
    cluster first (they are its centroid). The remaining (example, model)
    pairs are visited in ascending target-CE order (ties by example
    position, then model position) and each example joins its best
    available cluster. Cluster sizes end in {floor(n/k), ceil(n/k)} with
    exactly n mod k clusters at the ceiling.
    """
    if len(scores.candidate_ids) != k:
        raise DataError(
            f"score matrix has {len(scores.candidate_ids)} seed models, expected {k}"
        )
    n = len(scores.test_ids)
    if n < k:
        raise DataError(f"cannot split {n} examples into {k} non-empty clusters")
    floor = n // k
    ceil = -(-n // k)
    remainder = n % k
    pairs = sorted(
        (scores.target_ce[i, j], i, j) for i in range(n) for j in range(k)
    )
    member_rows: list[list[int]] = [[] for _ in range(k)]
    assigned = [False] * n
    at_ceiling = 0
    # pin seeds first; size 1 never exceeds floor (n >= k), so the
    # ceiling budget below is unaffected
    row_index = {t: i for i, t in enumerate(scores.test_ids)}
    for j, seed_id in enumerate(scores.candidate_ids):
        if seed_id in row_index:
            i = row_index[seed_id]
            member_rows[j].append(i)
            assigned[i] = True
    for _, i, j in pairs:
        if assigned[i]:
            continue
        size = len(member_rows[j])
        if size < floor:
            member_rows[j].append(i)
            assigned[i] = True
        elif size == floor and remainder and at_ceiling < remainder:
            member_rows[j].append(i)
            assigned[i] = True
            at_ceiling += 1
    members = tuple(
        tuple(scores.test_ids[i] for i in sorted(rows)) for rows in member_rows
    )
    return ClusterAssignment(
        k=k,
        seed_ids=scores.candidate_ids,
        members=members,
        capacity=ceil,
        models=tuple(models) if models is not None else None,
    )


def retrain(
    pool: Pool,
    assignment: ClusterAssignment,
    base: BaseModel,
    cfg: AdaptConfig = AdaptConfig(),
) -> ClusterAssignment:
    """Adapt one fresh model per cluster on all member texts; membership fixed."""
    by_id = pool.by_id
    models = []
    for index, (seed_id, member_ids) in enumerate(
        zip(assignment.seed_ids, assignment.members)
    ):
        try:
            members = [by_id[m] for m in member_ids]
        except KeyError as exc:
            raise DataError(f"cluster {index}: unknown member id {exc}") from None
        try:
            models.append(adapt(base, members, cfg, label=seed_id))
        except DataError as exc:
            raise DataError(f"cluster {index}: {exc}") from exc
    return replace(assignment, models=tuple(models))


def centroid_icd(assignment: ClusterAssignment, cluster_index: int, pool: Pool) -> Example:
    """The seed example of a cluster, used as its demonstration."""
    if not 0 <= cluster_index < assignment.k:
        raise DataError(f"cluster index {cluster_index} out of range 0..{assignment.k - 1}")
    seed_id = assignment.seed_ids[cluster_index]
    try:
        return pool.by_id[seed_id]
    except KeyError:
        raise DataError(f"seed {seed_id!r} missing from the pool") from None


def sample_member_icd(
    assignment: ClusterAssignment, cluster_index: int, pool: Pool, seed: int
) -> Example:
    """A random member of a cluster, the alternative to the centroid."""
    if not 0 <= cluster_index < assignment.k:
        raise DataError(f"cluster index {cluster_index} out of range 0..{assignment.k - 1}")
    member_id = random.Random(seed).choice(list(assignment.members[cluster_index]))
    return pool.by_id[member_id]


def dataset_purity(assignment: ClusterAssignment, pool: Pool) -> float:
    """Fraction of examples whose cluster's majority dataset matches theirs."""
    by_id = pool.by_id
    total = 0
    agree = 0
    for cluster in assignment.members:
        counts: dict[str, int] = {}
        for member in cluster:
            counts[by_id[member].dataset] = counts.get(by_id[member].dataset, 0) + 1
        total += len(cluster)
        agree += max(counts.values(), default=0)
    return agree / total if total else 0.0


def save_assignment(
    assignment: ClusterAssignment, path: str | Path, lineage: Mapping | None = None
) -> None:
    header: dict = {"format": CLUSTERS_FORMAT, "k": assignment.k,
                    "capacity": assignment.capacity}
    if lineage:
        header.update(lineage)
    with Path(path).open("w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for index, (seed_id, members) in enumerate(
            zip(assignment.seed_ids, assignment.members)
        ):
            fh.write(
                json.dumps(
                    {
                        "cluster_index": index,
                        "seed_id": seed_id,
                        "member_ids": list(members),
                    },
                    sort_keys=True,
                )
                + "\n"
            )


def load_assignment(path: str | Path) -> tuple[dict, ClusterAssignment]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"cluster file {path} does not exist")
    header: dict = {}
    seeds: list[str] = []
    members: list[tuple[str, ...]] = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            record = json.loads(line)
            if lineno == 1 and "format" in record:
                header = record
                continue
            seeds.append(record["seed_id"])
            members.append(tuple(record["member_ids"]))
    k = len(seeds)
    capacity = int(header.get("capacity", max((len(m) for m in members), default=0)))
    return header, ClusterAssignment(
        k=k, seed_ids=tuple(seeds), members=tuple(members), capacity=capacity
    )
