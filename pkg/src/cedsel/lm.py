"""Interpolated n-gram language models with cheap per-example adaptation.

The base model interpolates additively smoothed conditional distributions
of orders 1..N; interpolation weights are grid-searched on the dev split.
A target model mixes the base with a smoothed empirical model built from
one example's (or one cluster's) text:

    p_target(w | c) = (1 - lam) * p_base(w | c) + lam * p_emp(w | c)

``lam`` is picked from a grid (always containing 0) by held-in likelihood
on the adaptation text itself, so a target never scores its own example
worse than the base does. Everything here is deterministic; training uses
no randomness at all.

All probabilities are computed in one canonical operation order (per-order
additive smoothing, then a left-to-right weighted sum, then the mixture
above) so that independent reimplementations of the scorer can reproduce
cross-entropies to within accumulated log() rounding, well below 1e-9.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .corpus import Example, Pool, training_text
from .errors import DataError
from .text import BOS_ID, RESERVED, tokenize

MODEL_FORMAT = "ced-model/1"

DEFAULT_ORDER = 3
DEFAULT_DELTA = 0.1
DEFAULT_WEIGHT_STEPS = 10
DEFAULT_LAMBDA_GRID = (0.0, 0.1, 0.3, 0.5)


class Vocabulary:
    """Token-to-id mapping with reserved UNK/BOS/EOS entries.

    Corpus tokens get ids 3.. in sorted order, which makes construction
    independent of text order and trivial to mirror elsewhere.
    """

    __slots__ = ("tokens", "index")

    def __init__(self, words: Iterable[str]):
        self.tokens: list[str] = list(RESERVED)
        self.tokens.extend(sorted(set(words) - set(RESERVED)))
        self.index: dict[str, int] = {t: i for i, t in enumerate(self.tokens)}

    @classmethod
    def from_texts(cls, texts: Iterable[str]) -> "Vocabulary":
        words: set[str] = set()
        for text in texts:
            words.update(tokenize(text)[1:-1])
        return cls(words)

    @property
    def size(self) -> int:
        return len(self.tokens)

    def encode(self, text: str) -> list[int]:
        """Token ids for ``text`` including sentinels; unknowns map to UNK."""
        index = self.index
        return [index.get(tok, 0) for tok in tokenize(text)]

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Vocabulary) and self.tokens == other.tokens


class NgramCounts:
    """Per-order context -> next-token counts.

    Context totals are derived from the gram counts, so only the gram
    counts need to be stored or shipped. The number of stored entries is
    bounded by (predicted positions) * order.
    """

    __slots__ = ("order", "grams", "totals")

    def __init__(self, order: int):
        self.order = order
        self.grams: dict[int, dict[tuple[int, ...], dict[int, int]]] = {
            k: {} for k in range(1, order + 1)
        }
        self.totals: dict[int, dict[tuple[int, ...], int]] = {
            k: {} for k in range(1, order + 1)
        }

    def add_sequence(self, ids: Sequence[int]) -> None:
        padded = [BOS_ID] * (self.order - 1) + list(ids)
        for i in range(self.order, len(padded)):
            w = padded[i]
            for k in range(1, self.order + 1):
                ctx = tuple(padded[i - k + 1 : i])
                by_ctx = self.grams[k].setdefault(ctx, {})
                by_ctx[w] = by_ctx.get(w, 0) + 1
                totals = self.totals[k]
                totals[ctx] = totals.get(ctx, 0) + 1

    def n_entries(self) -> int:
        return sum(
            len(words) for by_ctx in self.grams.values() for words in by_ctx.values()
        )

    def to_json(self) -> dict:
        return {
            str(k): {
                " ".join(map(str, ctx)): {str(w): c for w, c in words.items()}
                for ctx, words in by_ctx.items()
            }
            for k, by_ctx in self.grams.items()
        }

    @classmethod
    def from_json(cls, order: int, payload: Mapping) -> "NgramCounts":
        counts = cls(order)
        for k_str, by_ctx in payload.items():
            k = int(k_str)
            for ctx_str, words in by_ctx.items():
                ctx = tuple(int(t) for t in ctx_str.split()) if ctx_str else ()
                decoded = {int(w): int(c) for w, c in words.items()}
                counts.grams[k][ctx] = decoded
                counts.totals[k][ctx] = sum(decoded.values())
        return counts

    def __eq__(self, other: object) -> bool:
        return isinstance(other, NgramCounts) and self.grams == other.grams


def _order_prob(
    counts: NgramCounts, k: int, ctx: tuple[int, ...], w: int, delta: float, vsize: int
) -> float:
    by_ctx = counts.grams[k].get(ctx)
    c = by_ctx.get(w, 0) if by_ctx else 0
    t = counts.totals[k].get(ctx, 0)
    return (c + delta) / (t + delta * vsize)


class BaseModel:
    """Background model trained on the whole candidate pool."""

    __slots__ = ("vocab", "order", "delta", "weights", "counts")

    def __init__(
        self,
        vocab: Vocabulary,
        order: int,
        delta: float,
        weights: Sequence[float],
        counts: NgramCounts,
    ):
        if len(weights) != order:
            raise DataError(f"need {order} interpolation weights, got {len(weights)}")
        if abs(sum(weights) - 1.0) > 1e-9 or any(w < 0 for w in weights):
            raise DataError("interpolation weights must be non-negative and sum to 1")
        self.vocab = vocab
        self.order = order
        self.delta = delta
        self.weights = tuple(float(w) for w in weights)
        self.counts = counts

    def pad(self, ids: Sequence[int]) -> list[int]:
        return [BOS_ID] * (self.order - 1) + list(ids)

    def prob_at(self, padded: Sequence[int], i: int) -> float:
        """Interpolated P(padded[i] | padded[:i])."""
        w = padded[i]
        vsize = self.vocab.size
        p = 0.0
        for k in range(1, self.order + 1):
            ctx = tuple(padded[i - k + 1 : i])
            p += self.weights[k - 1] * _order_prob(
                self.counts, k, ctx, w, self.delta, vsize
            )
        return p

    def position_probs(self, ids: Sequence[int]) -> list[float]:
        padded = self.pad(ids)
        return [self.prob_at(padded, i) for i in range(self.order, len(padded))]

    def sequence_logprobs(self, ids: Sequence[int]) -> list[float]:
        return [math.log(p) for p in self.position_probs(ids)]

    def distribution(self, context: Sequence[int]) -> np.ndarray:
        """Full conditional distribution over the vocabulary (test hook)."""
        padded = [BOS_ID] * self.order + list(context)
        vsize = self.vocab.size
        dist = np.zeros(vsize)
        for k in range(1, self.order + 1):
            ctx = tuple(padded[len(padded) - k + 1 :])
            vec = np.full(vsize, self.delta)
            for w, c in self.counts.grams[k].get(ctx, {}).items():
                vec[w] += c
            vec /= self.counts.totals[k].get(ctx, 0) + self.delta * vsize
            dist += self.weights[k - 1] * vec
        return dist


class TargetModel:
    """Base model mixed with counts from one example or one cluster."""

    __slots__ = ("base", "lam", "counts", "source_ids", "label")

    def __init__(
        self,
        base: BaseModel,
        lam: float,
        counts: NgramCounts,
        source_ids: Sequence[str],
        label: str | None = None,
    ):
        if not 0.0 <= lam <= 1.0:
            raise DataError("adaptation weight must lie in [0, 1]")
        self.base = base
        self.lam = float(lam)
        self.counts = counts
        self.source_ids = tuple(source_ids)
        self.label = label if label is not None else self.source_ids[0]

    @property
    def vocab(self) -> Vocabulary:
        return self.base.vocab

    @property
    def order(self) -> int:
        return self.base.order

    def pad(self, ids: Sequence[int]) -> list[int]:
        return self.base.pad(ids)

    def empirical_prob_at(self, padded: Sequence[int], i: int) -> float:
        w = padded[i]
        base = self.base
        vsize = base.vocab.size
        p = 0.0
        for k in range(1, base.order + 1):
            ctx = tuple(padded[i - k + 1 : i])
            p += base.weights[k - 1] * _order_prob(
                self.counts, k, ctx, w, base.delta, vsize
            )
        return p

    def prob_at(self, padded: Sequence[int], i: int) -> float:
        pb = self.base.prob_at(padded, i)
        if self.lam == 0.0:
            return pb
        return (1.0 - self.lam) * pb + self.lam * self.empirical_prob_at(padded, i)

    def position_probs(self, ids: Sequence[int]) -> list[float]:
        padded = self.pad(ids)
        return [self.prob_at(padded, i) for i in range(self.order, len(padded))]

    def sequence_logprobs(self, ids: Sequence[int]) -> list[float]:
        return [math.log(p) for p in self.position_probs(ids)]

    def mixed_logprobs(self, ids: Sequence[int], base_probs: Sequence[float]) -> list[float]:
        """Log probs reusing precomputed base probabilities for the sequence.

        Must stay arithmetically identical to :meth:`sequence_logprobs`.
        """
        if self.lam == 0.0:
            return [math.log(pb) for pb in base_probs]
        padded = self.pad(ids)
        lam = self.lam
        return [
            math.log((1.0 - lam) * pb + lam * self.empirical_prob_at(padded, i))
            for pb, i in zip(base_probs, range(self.order, len(padded)))
        ]

    def delta_entries(self) -> int:
        return self.counts.n_entries()


def cross_entropy(model: BaseModel | TargetModel, ids: Sequence[int]) -> float:
    """Mean negative log probability per predicted token, in nats."""
    if len(ids) < 2:
        raise DataError("sequence must contain at least one predicted token")
    logprobs = model.sequence_logprobs(ids)
    return -sum(logprobs) / len(logprobs)


def _weight_grid(order: int, steps: int) -> list[tuple[float, ...]]:
    """All weight vectors with components i/steps summing to 1, in a fixed order."""

    def compositions(remaining: int, parts: int):
        if parts == 1:
            yield (remaining,)
            return
        for head in range(remaining + 1):
            for rest in compositions(remaining - head, parts - 1):
                yield (head, *rest)

    return [
        tuple(part / steps for part in combo) for combo in compositions(steps, order)
    ]


def _tune_weights(
    counts: NgramCounts,
    vsize: int,
    order: int,
    delta: float,
    dev_ids: list[list[int]],
    steps: int,
) -> tuple[float, ...]:
    """Grid-search interpolation weights by dev log-likelihood.

    Per-order probabilities are computed once per position; each candidate
    weight vector is then a cheap dot product. Ties keep the earlier grid
    entry, so the result is deterministic.
    """
    per_position: list[list[float]] = []
    for ids in dev_ids:
        padded = [BOS_ID] * (order - 1) + ids
        for i in range(order, len(padded)):
            w = padded[i]
            per_position.append(
                [
                    _order_prob(
                        counts, k, tuple(padded[i - k + 1 : i]), w, delta, vsize
                    )
                    for k in range(1, order + 1)
                ]
            )
    if not per_position:
        return tuple(1.0 / order for _ in range(order))
    best_weights: tuple[float, ...] | None = None
    best_ll = -math.inf
    for weights in _weight_grid(order, steps):
        ll = 0.0
        for probs in per_position:
            p = 0.0
            for k in range(order):
                p += weights[k] * probs[k]
            ll += math.log(p)
        if ll > best_ll:
            best_ll = ll
            best_weights = weights
    assert best_weights is not None
    return best_weights


def train_base_texts(
    texts: Sequence[str],
    dev_texts: Sequence[str] = (),
    order: int = DEFAULT_ORDER,
    delta: float = DEFAULT_DELTA,
    weight_steps: int = DEFAULT_WEIGHT_STEPS,
) -> BaseModel:
    """Train the background model from raw texts (the scorer-protocol view)."""
    if not texts:
        raise DataError("no texts to train the base model on")
    vocab = Vocabulary.from_texts(texts)
    counts = NgramCounts(order)
    for text in texts:
        counts.add_sequence(vocab.encode(text))
    dev_ids = [vocab.encode(text) for text in dev_texts]
    if dev_ids:
        weights = _tune_weights(counts, vocab.size, order, delta, dev_ids, weight_steps)
    else:
        weights = tuple(1.0 / order for _ in range(order))
    return BaseModel(vocab, order, delta, weights, counts)


def train_base(
    pool: Pool,
    order: int = DEFAULT_ORDER,
    delta: float = DEFAULT_DELTA,
    weight_steps: int = DEFAULT_WEIGHT_STEPS,
) -> BaseModel:
    """Train the background model on all candidate examples of ``pool``.

    Counts aggregate every candidate's training text; interpolation weights
    are tuned on the dev split when one exists, else left uniform.
    """
    candidates = pool.candidates
    if not candidates:
        raise DataError("pool has no candidate examples to train on")
    return train_base_texts(
        [training_text(ex) for ex in candidates],
        [training_text(ex) for ex in pool.dev],
        order=order,
        delta=delta,
        weight_steps=weight_steps,
    )


@dataclass(frozen=True)
class AdaptConfig:
    """Adaptation settings: mixture grid, held-in fraction, evaluation cap."""

    lambda_grid: tuple[float, ...] = DEFAULT_LAMBDA_GRID
    dev_fraction: float = 1.0
    max_passes: int = 20

    def __post_init__(self) -> None:
        if not self.lambda_grid:
            raise DataError("lambda_grid must be non-empty")
        if 0.0 not in self.lambda_grid:
            raise DataError("lambda_grid must contain 0")
        if any(not 0.0 <= lam <= 1.0 for lam in self.lambda_grid):
            raise DataError("lambda_grid values must lie in [0, 1]")
        if not 0.0 < self.dev_fraction <= 1.0:
            raise DataError("dev_fraction must lie in (0, 1]")
        if self.max_passes < 1:
            raise DataError("max_passes must be >= 1")


def adapt_texts(
    base: BaseModel,
    texts: Sequence[str],
    source_ids: Sequence[str],
    cfg: AdaptConfig = AdaptConfig(),
    label: str | None = None,
) -> TargetModel:
    """Build a target model from raw adaptation texts.

    The mixture weight is the grid value maximizing mean log-likelihood of
    the held-in slice (the leading ``dev_fraction`` of the adaptation
    text's predicted positions). Zero is always evaluated first, so the
    target can never be worse than the base on that slice. At most
    ``max_passes`` grid values are evaluated.
    """
    if not texts:
        raise DataError("adapt needs at least one text")
    if not any(texts):
        raise DataError("adaptation examples render to empty text")
    counts = NgramCounts(base.order)
    seqs = [base.vocab.encode(text) for text in texts]
    for ids in seqs:
        counts.add_sequence(ids)
    target = TargetModel(base, 0.0, counts, source_ids, label=label)

    base_probs: list[float] = []
    emp_probs: list[float] = []
    for ids in seqs:
        padded = base.pad(ids)
        for i in range(base.order, len(padded)):
            base_probs.append(base.prob_at(padded, i))
            emp_probs.append(target.empirical_prob_at(padded, i))
    held_in = max(1, math.ceil(cfg.dev_fraction * len(base_probs)))
    base_probs = base_probs[:held_in]
    emp_probs = emp_probs[:held_in]

    best_lam = 0.0
    best_ll = sum(math.log(pb) for pb in base_probs)
    passes = 1
    for lam in cfg.lambda_grid:
        if lam == 0.0 or passes >= cfg.max_passes:
            continue
        passes += 1
        ll = sum(
            math.log((1.0 - lam) * pb + lam * pe)
            for pb, pe in zip(base_probs, emp_probs)
        )
        if ll > best_ll:
            best_ll = ll
            best_lam = lam
    return TargetModel(base, best_lam, counts, source_ids, label=label)


def adapt(
    base: BaseModel,
    examples: Sequence[Example],
    cfg: AdaptConfig = AdaptConfig(),
    label: str | None = None,
) -> TargetModel:
    """Build a target model from ``examples`` on top of ``base``."""
    if not examples:
        raise DataError("adapt needs at least one example")
    return adapt_texts(
        base,
        [training_text(ex) for ex in examples],
        [ex.id for ex in examples],
        cfg=cfg,
        label=label,
    )


def save_base_model(model: BaseModel, path: str | Path, lineage: Mapping | None = None) -> None:
    payload = {
        "format": MODEL_FORMAT,
        "kind": "base",
        "order": model.order,
        "delta": model.delta,
        "weights": list(model.weights),
        "vocab": model.vocab.tokens[len(RESERVED) :],
        "counts": model.counts.to_json(),
    }
    if lineage:
        payload.update(lineage)
    Path(path).write_text(json.dumps(payload, sort_keys=True), encoding="utf-8")


def save_target_model(
    model: TargetModel, path: str | Path, lineage: Mapping | None = None
) -> None:
    payload = {
        "format": MODEL_FORMAT,
        "kind": "target",
        "order": model.order,
        "delta": model.base.delta,
        "lambda": model.lam,
        "label": model.label,
        "source_ids": list(model.source_ids),
        "counts": model.counts.to_json(),
    }
    if lineage:
        payload.update(lineage)
    Path(path).write_text(json.dumps(payload, sort_keys=True), encoding="utf-8")


def load_model(path: str | Path, base: BaseModel | None = None) -> BaseModel | TargetModel:
    """Load a stored model; targets need their ``base`` passed in."""
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if payload.get("format") != MODEL_FORMAT:
        raise DataError(f"{path}: not a {MODEL_FORMAT} artifact")
    order = int(payload["order"])
    counts = NgramCounts.from_json(order, payload["counts"])
    if payload["kind"] == "base":
        vocab = Vocabulary(payload["vocab"])
        return BaseModel(vocab, order, float(payload["delta"]), payload["weights"], counts)
    if base is None:
        raise DataError(f"{path}: target model requires its base model")
    if order != base.order or float(payload["delta"]) != base.delta:
        raise DataError(f"{path}: target/base order or smoothing mismatch")
    return TargetModel(
        base,
        float(payload["lambda"]),
        counts,
        payload["source_ids"],
        label=payload.get("label"),
    )
