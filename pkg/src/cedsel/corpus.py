"""Mixed-domain example pools and prompt assembly.

A pool is an immutable collection of examples from several datasets and
tasks. Prompts are assembled as labeled sections with a token budget;
when the budget overflows, only the background sections shrink (the
demonstration's background first, then the test input's), cut from the
tail. Questions, choices and answers are never truncated.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

from .errors import DataError, SchemaError
from .text import count_tokens, truncate_to_tokens

TASKS = ("binary", "multichoice", "extractive_qa", "abstractive_qa")
SPLITS = ("candidate", "dev", "test")
SECTION_KEYS = ("background", "question", "answer", "example")

YES_NO_INSTRUCTION = "Answer with a yes or a no."


@dataclass(frozen=True)
class Example:
    """One candidate/dev/test record."""

    id: str
    dataset: str
    task: str
    question: str
    answer: str
    background: str = ""
    choices: tuple[str, ...] = ()
    split: str = "candidate"

    def __post_init__(self) -> None:
        if not self.id:
            raise SchemaError("field 'id' must be a non-empty string")
        if not self.question:
            raise SchemaError(f"example {self.id!r}: field 'question' is empty")
        if not self.answer:
            raise SchemaError(f"example {self.id!r}: field 'answer' is empty")
        if self.task not in TASKS:
            raise SchemaError(f"example {self.id!r}: field 'task' not one of {TASKS}")
        if self.split not in SPLITS:
            raise SchemaError(f"example {self.id!r}: field 'split' not one of {SPLITS}")
        if (self.task == "multichoice") != bool(self.choices):
            raise SchemaError(
                f"example {self.id!r}: field 'choices' must be non-empty exactly "
                "for multichoice tasks"
            )
        if self.choices and self.answer not in self.choices:
            raise SchemaError(f"example {self.id!r}: field 'answer' not among choices")

    @classmethod
    def from_record(cls, record: Mapping) -> "Example":
        if not isinstance(record, Mapping):
            raise SchemaError("record is not a JSON object")
        for name in ("id", "dataset", "task", "question", "answer"):
            if name not in record:
                raise SchemaError(f"missing field {name!r}")
        return cls(
            id=str(record["id"]),
            dataset=str(record["dataset"]),
            task=str(record["task"]),
            question=str(record["question"]),
            answer=str(record["answer"]),
            background=str(record.get("background", "")),
            choices=tuple(str(c) for c in record.get("choices", ())),
            split=str(record.get("split", "candidate")),
        )

    def to_record(self) -> dict:
        return {
            "id": self.id,
            "dataset": self.dataset,
            "task": self.task,
            "background": self.background,
            "question": self.question,
            "choices": list(self.choices),
            "answer": self.answer,
            "split": self.split,
        }


@dataclass(frozen=True)
class Pool:
    """Immutable set of examples with disjoint splits and unique ids."""

    examples: tuple[Example, ...]
    provenance: Mapping = field(default_factory=dict)

    def __post_init__(self) -> None:
        seen: set[str] = set()
        for ex in self.examples:
            if ex.id in seen:
                raise DataError(f"duplicate example id {ex.id!r}")
            seen.add(ex.id)

    def _split(self, split: str) -> tuple[Example, ...]:
        return tuple(ex for ex in self.examples if ex.split == split)

    @property
    def candidates(self) -> tuple[Example, ...]:
        return self._split("candidate")

    @property
    def dev(self) -> tuple[Example, ...]:
        return self._split("dev")

    @property
    def tests(self) -> tuple[Example, ...]:
        return self._split("test")

    @property
    def by_id(self) -> dict[str, Example]:
        return {ex.id: ex for ex in self.examples}

    def candidate_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for ex in self.candidates:
            counts[ex.dataset] = counts.get(ex.dataset, 0) + 1
        return counts

    @property
    def datasets(self) -> tuple[str, ...]:
        return tuple(sorted({ex.dataset for ex in self.examples}))


def ingest(path: str | Path) -> Pool:
    """Load a pool from a JSONL file, one example object per line.

    A leading line holding an object with a ``format`` key is treated as an
    artifact header and skipped, so pools written by :func:`write_pool`
    round-trip. Errors carry the 1-based line number.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"pool file {path} does not exist")
    examples: list[Example] = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"line {lineno}: invalid JSON ({exc.msg})") from exc
            if lineno == 1 and isinstance(record, dict) and "format" in record:
                continue
            try:
                examples.append(Example.from_record(record))
            except SchemaError as exc:
                raise SchemaError(f"line {lineno}: {exc}") from exc
    return Pool(tuple(examples), provenance={"source": str(path)})


def write_pool(pool: Pool, path: str | Path, lineage: Mapping | None = None) -> None:
    """Write a pool as JSONL with a header line carrying provenance."""
    path = Path(path)
    header = {
        "format": "ced-pool/1",
        "provenance": dict(pool.provenance),
        "candidate_counts": pool.candidate_counts(),
    }
    if lineage:
        header.update(lineage)
    with path.open("w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for ex in pool.examples:
            fh.write(json.dumps(ex.to_record(), sort_keys=True) + "\n")


def sample_pool(pool: Pool, per_dataset: int, seed: int) -> Pool:
    """Subsample the candidate split to ``per_dataset`` examples per dataset.

    Dev and test examples pass through unchanged. Deterministic for a fixed
    seed; datasets are visited in sorted name order.
    """
    if per_dataset < 0:
        raise DataError("per_dataset must be >= 0")
    by_dataset: dict[str, list[Example]] = {}
    for ex in pool.candidates:
        by_dataset.setdefault(ex.dataset, []).append(ex)
    rng = random.Random(seed)
    kept: list[Example] = []
    for dataset in sorted(by_dataset):
        group = by_dataset[dataset]
        if len(group) < per_dataset:
            raise DataError(
                f"dataset {dataset!r} has {len(group)} candidates, "
                f"need {per_dataset}"
            )
        kept.extend(rng.sample(group, per_dataset))
    keep_ids = {ex.id for ex in kept}
    examples = tuple(
        ex
        for ex in pool.examples
        if ex.split != "candidate" or ex.id in keep_ids
    )
    provenance = dict(pool.provenance)
    provenance.update({"sample_seed": seed, "per_dataset": per_dataset})
    return Pool(examples, provenance=provenance)


def question_with_choices(example: Example) -> str:
    """Question text with inline lettered choices for multichoice tasks."""
    if not example.choices:
        return example.question
    letters = "abcdefghijklmnopqrstuvwxyz"
    marked = " ".join(
        f"({letters[i]}) {choice}" for i, choice in enumerate(example.choices)
    )
    return f"{example.question} {marked}"


def training_text(example: Example) -> str:
    """Text a target model is adapted on: background, question and answer."""
    parts = [example.background, example.question, example.answer]
    return "\n".join(p for p in parts if p)


def input_text(example: Example) -> str:
    """Unlabeled test-side rendering: background, question and choices."""
    parts = [example.background, question_with_choices(example)]
    return "\n".join(p for p in parts if p)


@dataclass(frozen=True)
class PromptSpec:
    """Prompt layout: token budget, section labels, optional instruction."""

    token_budget: int
    section_labels: Mapping[str, str] = field(
        default_factory=lambda: {key: key for key in SECTION_KEYS}
    )
    instruction: str | None = None

    def __post_init__(self) -> None:
        if self.token_budget <= 0:
            raise DataError("token_budget must be > 0")
        missing = [k for k in SECTION_KEYS if k not in self.section_labels]
        if missing:
            raise DataError(f"section_labels missing {missing}")


def default_prompt_spec(token_budget: int = 512, task: str | None = None) -> PromptSpec:
    instruction = YES_NO_INSTRUCTION if task == "binary" else None
    return PromptSpec(token_budget=token_budget, instruction=instruction)


def _render(
    demo: Example | None,
    test: Example,
    spec: PromptSpec,
    demo_background: str,
    test_background: str,
) -> str:
    labels = spec.section_labels
    lines: list[str] = []
    if spec.instruction:
        lines.append(spec.instruction)
    if demo is not None:
        lines.append(f"{labels['example']}:")
        if demo.background:
            lines.append(f"{labels['background']}: {demo_background}")
        lines.append(f"{labels['question']}: {question_with_choices(demo)}")
        lines.append(f"{labels['answer']}: {demo.answer}")
    if test.background:
        lines.append(f"{labels['background']}: {test_background}")
    lines.append(f"{labels['question']}: {question_with_choices(test)}")
    lines.append(f"{labels['answer']}:")
    return "\n".join(lines)


def assemble_prompt(demo: Example | None, test: Example, spec: PromptSpec) -> str:
    """Render a one-demonstration prompt within ``spec.token_budget`` tokens.

    Overflow is absorbed exclusively by the background sections, demo first
    and then test, dropping tokens from the tail. Background lines keep
    their label even when emptied by truncation, so token accounting stays
    exact. Raises if the non-background content alone exceeds the budget.
    """
    demo_bg = demo.background if demo is not None else ""
    full = _render(demo, test, spec, demo_bg, test.background)
    overflow = count_tokens(full) - spec.token_budget
    if overflow <= 0:
        return full
    demo_bg_tokens = count_tokens(demo_bg)
    test_bg_tokens = count_tokens(test.background)
    cut_demo = min(overflow, demo_bg_tokens)
    cut_test = min(overflow - cut_demo, test_bg_tokens)
    if overflow - cut_demo - cut_test > 0:
        raise DataError(
            f"token budget {spec.token_budget} too small: non-background "
            f"content needs {count_tokens(full) - demo_bg_tokens - test_bg_tokens} tokens"
        )
    return _render(
        demo,
        test,
        spec,
        truncate_to_tokens(demo_bg, demo_bg_tokens - cut_demo),
        truncate_to_tokens(test.background, test_bg_tokens - cut_test),
    )
