"""Synthetic mixed-domain pools with disjoint high-frequency vocabularies.

Each synthetic dataset draws its content words from its own vocabulary
plus a small shared function-word set, so domain membership is learnable
from token statistics alone. Binary datasets carry a constant label per
domain and multichoice golds are domain words, which makes the built-in
likelihood predictor sensitive to which demonstration was selected.
"""

from __future__ import annotations

import random

from .corpus import Example, Pool

SHARED_WORDS = ("the", "of", "and", "it", "is")


def _domain_words(domain: int, vocab_size: int) -> list[str]:
    return [f"dom{domain}word{j}" for j in range(vocab_size)]


def _phrase(rng: random.Random, words: list[str], length: int) -> str:
    picked = [
        rng.choice(words) if rng.random() < 0.8 else rng.choice(SHARED_WORDS)
        for _ in range(length)
    ]
    return " ".join(picked)


def make_domain_pool(
    n_domains: int = 4,
    candidates_per_domain: int = 32,
    tests_per_domain: int = 50,
    dev_per_domain: int = 2,
    seed: int = 0,
    vocab_size: int = 24,
    background_len: int = 8,
    question_len: int = 5,
    tasks: tuple[str, ...] | None = None,
) -> Pool:
    """Pool of ``n_domains`` synthetic datasets with separable vocabularies.

    ``tasks`` assigns a task per domain (cycled binary/multichoice by
    default). Binary answers are constant per domain; multichoice answers
    are the domain word planted in the question, with distractors drawn
    from the other domains.
    """
    if tasks is None:
        tasks = tuple(
            "binary" if d % 2 == 0 else "multichoice" for d in range(n_domains)
        )
    if len(tasks) != n_domains:
        raise ValueError("need one task per domain")
    rng = random.Random(seed)
    words = {d: _domain_words(d, vocab_size) for d in range(n_domains)}
    examples: list[Example] = []

    def build(domain: int, split: str, index: int) -> Example:
        dataset = f"synth{domain}"
        task = tasks[domain]
        background = _phrase(rng, words[domain], background_len)
        if task == "binary":
            question = _phrase(rng, words[domain], question_len) + " ?"
            # Alternate labels across the binary domains so neither answer
            # dominates the base model.
            nth_binary = sum(1 for d in range(domain) if tasks[d] == "binary")
            answer = "yes" if nth_binary % 2 == 0 else "no"
            choices: tuple[str, ...] = ()
        elif task == "multichoice":
            gold = rng.choice(words[domain])
            question = f"{gold} {_phrase(rng, words[domain], question_len - 1)} ?"
            others = [d for d in range(n_domains) if d != domain]
            distractors = [rng.choice(words[rng.choice(others)]) for _ in range(2)]
            choice_list = [gold, *distractors]
            rng.shuffle(choice_list)
            choices = tuple(choice_list)
            answer = gold
        else:
            question = _phrase(rng, words[domain], question_len) + " ?"
            answer = " ".join(rng.sample(words[domain], 2))
            choices = ()
        return Example(
            id=f"{dataset}-{split}-{index:03d}",
            dataset=dataset,
            task=task,
            background=background,
            question=question,
            choices=choices,
            answer=answer,
            split=split,
        )

    for domain in range(n_domains):
        for i in range(candidates_per_domain):
            examples.append(build(domain, "candidate", i))
        for i in range(dev_per_domain):
            examples.append(build(domain, "dev", i))
        for i in range(tests_per_domain):
            examples.append(build(domain, "test", i))
    return Pool(tuple(examples), provenance={"source": "synthetic", "seed": seed})
