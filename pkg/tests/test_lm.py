import math
import re

import numpy as np
import pytest

from cedsel.corpus import training_text
from cedsel.errors import DataError
from cedsel.lm import (
    AdaptConfig,
    BaseModel,
    NgramCounts,
    TargetModel,
    Vocabulary,
    adapt,
    cross_entropy,
    load_model,
    save_base_model,
    save_target_model,
    train_base,
)
from cedsel.text import BOS, EOS, tokenize

from conftest import example


class TestTokenize:
    def test_words_and_punctuation(self):
        assert tokenize("A b.") == [BOS, "a", "b", ".", EOS]

    def test_empty_is_sentinels_only(self):
        assert tokenize("") == [BOS, EOS]

    def test_pangram_matches_reference_regex(self):
        # Oracle: an independent regex scan over the same sentence.
        sentence = "The quick brown fox jumps over the lazy dog."
        reference = re.findall(r"[A-Za-z0-9]+|[^A-Za-z0-9\s]", sentence)
        assert len(tokenize(sentence)) - 2 == len(reference)

    def test_deterministic_and_lowercased(self):
        assert tokenize("Hello, WORLD!") == tokenize("hello, world!")


def uniform_base(vocab_words, order=1):
    """Model with no counts: every conditional is exactly uniform."""
    vocab = Vocabulary(vocab_words)
    weights = tuple(1.0 / order for _ in range(order))
    return BaseModel(vocab, order, 0.1, weights, NgramCounts(order))


class TestTrainBase:
    def test_degenerate_corpus_concentrates_mass(self):
        pool_ex = example(id="c0", question="a a", answer="a", background="a a a")
        from cedsel.corpus import Pool

        base = train_base(Pool((pool_ex,)), order=1)
        dist = base.distribution(())
        a_id = base.vocab.index["a"]
        # 8 of 9 predicted tokens are "a"; smoothing keeps the rest tiny
        assert dist[a_id] > 0.8
        assert abs(dist.sum() - 1.0) < 1e-9

    def test_unigram_closed_form(self):
        # Oracle: (count + delta) / (total + delta * |V|) computed by hand.
        # Training text "x y\nx" -> predicted tokens x, y, x, </s>.
        from cedsel.corpus import Pool

        ex = example(id="c0", question="x y", answer="x")
        base = train_base(Pool((ex,)), order=1)
        assert base.vocab.size == 5  # unk, bos, eos, x, y
        padded = base.pad(base.vocab.encode("x"))
        p_x = base.prob_at(padded, 1)
        assert p_x == pytest.approx((2 + 0.1) / (4 + 0.1 * 5), abs=0, rel=0)
        dist = base.distribution(())
        assert dist[base.vocab.index["y"]] == pytest.approx((1 + 0.1) / (4 + 0.5))
        assert dist[base.vocab.index["<unk>"]] == pytest.approx(0.1 / 4.5)

    def test_retrain_bitwise_identical(self, tiny_pool):
        a = train_base(tiny_pool)
        b = train_base(tiny_pool)
        assert a.counts == b.counts
        assert a.weights == b.weights
        assert a.vocab.tokens == b.vocab.tokens

    def test_empty_pool_rejected(self):
        from cedsel.corpus import Pool

        with pytest.raises(DataError, match="candidate"):
            train_base(Pool((example(id="d0", split="dev"),)))

    def test_weights_tuned_on_dev(self, tiny_pool):
        base = train_base(tiny_pool)
        assert len(base.weights) == 3
        assert sum(base.weights) == pytest.approx(1.0)


class TestCrossEntropy:
    def test_uniform_model_is_log_vocab(self):
        base = uniform_base(["a"])  # |V| = 4: unk, bos, eos, a
        ids = base.vocab.encode("a a a")
        assert cross_entropy(base, ids) == pytest.approx(math.log(4), abs=1e-12)

    def test_certain_model_is_zero(self):
        # One token repeated with no smoothing mass elsewhere: delta -> 0
        vocab = Vocabulary(["a"])
        counts = NgramCounts(1)
        counts.add_sequence(vocab.encode("a a a a"))
        # delta tiny so P(a) ~ counts ratio; craft a sequence of only "a"
        base = BaseModel(vocab, 1, 1e-300, (1.0,), counts)
        ids = [vocab.index["a"], vocab.index["a"], vocab.index["a"]]
        assert cross_entropy(base, ids) == pytest.approx(
            -math.log(4 / 5), abs=1e-9
        )

    def test_hand_built_bigram_table(self):
        # Oracle: mean of hand-computed -log p over three predictions.
        vocab = Vocabulary(["a", "b"])  # ids: unk 0, bos 1, eos 2, a 3, b 4
        counts = NgramCounts(2)
        counts.add_sequence(vocab.encode("a b"))
        counts.add_sequence(vocab.encode("a a"))
        base = BaseModel(vocab, 2, 0.1, (0.0, 1.0), counts)
        v = 5
        # contexts: <s> -> {a:2}; a -> {b:1, a:1, </s>:1}; b -> {</s>:1}
        p1 = (2 + 0.1) / (2 + 0.1 * v)  # a | <s>
        p2 = (1 + 0.1) / (3 + 0.1 * v)  # b | a
        p3 = (1 + 0.1) / (1 + 0.1 * v)  # </s> | b
        expected = -(math.log(p1) + math.log(p2) + math.log(p3)) / 3
        assert cross_entropy(base, vocab.encode("a b")) == pytest.approx(
            expected, abs=1e-12
        )

    def test_sequence_must_predict_something(self):
        base = uniform_base(["a"])
        with pytest.raises(DataError):
            cross_entropy(base, [1])


class TestNormalization:
    def test_thousand_random_contexts_sum_to_one(self, tiny_pool):
        base = train_base(tiny_pool)
        rng = np.random.default_rng(0)
        for _ in range(1000):
            context = tuple(rng.integers(0, base.vocab.size, size=2))
            assert abs(base.distribution(context).sum() - 1.0) <= 1e-9

    def test_target_distributions_sum_to_one(self, tiny_pool):
        base = train_base(tiny_pool)
        target = adapt(base, [tiny_pool.candidates[0]])
        rng = np.random.default_rng(1)
        vsize = base.vocab.size
        for _ in range(200):
            context = tuple(rng.integers(0, vsize, size=2))
            padded = [1] * base.order + list(context)
            total = 0.0
            for w in range(vsize):
                probe = padded + [w]
                total += target.prob_at(probe, len(probe) - 1)
            assert abs(total - 1.0) <= 1e-9


class TestAdapt:
    def test_zero_grid_equals_base(self, tiny_pool):
        base = train_base(tiny_pool)
        target = adapt(base, [tiny_pool.candidates[0]], AdaptConfig(lambda_grid=(0.0,)))
        assert target.lam == 0.0
        for ex in tiny_pool.tests:
            ids = base.vocab.encode(training_text(ex))
            assert cross_entropy(target, ids) == cross_entropy(base, ids)

    def test_hand_mixture_arithmetic(self):
        # Oracle: p = 0.5 * p_base + 0.5 * p_emp with both sides computed
        # from the count formulas inline.
        from cedsel.corpus import Pool

        corpus_ex = example(id="c0", question="x z", answer="y", background="z z")
        base = train_base(Pool((corpus_ex,)), order=2)
        base = BaseModel(base.vocab, 2, 0.1, (0.0, 1.0), base.counts)
        adapted_ex = example(id="c1", question="x y", answer="x y")
        counts = NgramCounts(2)
        counts.add_sequence(base.vocab.encode(training_text(adapted_ex)))
        target = TargetModel(base, 0.5, counts, ["c1"])
        v = base.vocab.size  # unk, bos, eos, x, y, z
        assert v == 6
        # base bigram: after x -> {z: 1}; adaptation text "x y\nx y":
        # after x -> {y: 2}, totals 2.
        p_base = (0 + 0.1) / (1 + 0.1 * v)
        p_emp = (2 + 0.1) / (2 + 0.1 * v)
        expected = 0.5 * p_base + 0.5 * p_emp
        x_id, y_id = base.vocab.index["x"], base.vocab.index["y"]
        padded = base.pad([x_id, y_id])
        assert target.prob_at(padded, 2) == pytest.approx(expected, abs=0, rel=0)
        assert target.prob_at(padded, 2) > base.prob_at(padded, 2)

    def test_storage_bound_tokens_times_order(self, domain_pool):
        base = train_base(domain_pool)
        for ex in domain_pool.candidates:
            target = adapt(base, [ex])
            bound = len(tokenize(training_text(ex))) * base.order
            assert target.delta_entries() <= bound

    def test_own_example_never_worse_than_base(self, domain_pool):
        base = train_base(domain_pool)
        for ex in domain_pool.candidates:
            target = adapt(base, [ex])
            ids = base.vocab.encode(training_text(ex))
            assert cross_entropy(target, ids) <= cross_entropy(base, ids)

    def test_mixture_concavity_pointwise(self, tiny_pool):
        base = train_base(tiny_pool)
        target = adapt(
            base, [tiny_pool.candidates[0]], AdaptConfig(lambda_grid=(0.0, 0.5))
        )
        assert target.lam == 0.5
        lam = target.lam
        for ex in tiny_pool.tests:
            ids = base.vocab.encode(training_text(ex))
            padded = base.pad(ids)
            for i in range(base.order, len(padded)):
                log_mix = math.log(target.prob_at(padded, i))
                log_base = math.log(base.prob_at(padded, i))
                log_emp = math.log(target.empirical_prob_at(padded, i))
                assert log_mix >= (1 - lam) * log_base + lam * log_emp - 1e-12

    def test_deterministic(self, tiny_pool):
        base = train_base(tiny_pool)
        a = adapt(base, [tiny_pool.candidates[1]])
        b = adapt(base, [tiny_pool.candidates[1]])
        assert a.lam == b.lam
        assert a.counts == b.counts

    def test_empty_examples_rejected(self, tiny_pool):
        base = train_base(tiny_pool)
        with pytest.raises(DataError):
            adapt(base, [])

    def test_max_passes_caps_grid(self, tiny_pool):
        base = train_base(tiny_pool)
        # only lam=0 evaluated: grid truncated after the mandatory zero
        target = adapt(
            base,
            [tiny_pool.candidates[0]],
            AdaptConfig(lambda_grid=(0.0, 0.5), max_passes=1),
        )
        assert target.lam == 0.0


class TestModelStore:
    def test_base_round_trip(self, tiny_pool, tmp_path):
        base = train_base(tiny_pool)
        save_base_model(base, tmp_path / "base.json", lineage={"config_hash": "x"})
        loaded = load_model(tmp_path / "base.json")
        ids = base.vocab.encode("sun fish wave")
        assert loaded.vocab.tokens == base.vocab.tokens
        assert cross_entropy(loaded, ids) == cross_entropy(base, ids)

    def test_target_round_trip(self, tiny_pool, tmp_path):
        base = train_base(tiny_pool)
        target = adapt(base, [tiny_pool.candidates[2]])
        save_target_model(target, tmp_path / "t.json")
        loaded = load_model(tmp_path / "t.json", base=base)
        assert loaded.lam == target.lam
        assert loaded.source_ids == target.source_ids
        ids = base.vocab.encode("sun moon")
        assert cross_entropy(loaded, ids) == cross_entropy(target, ids)

    def test_target_requires_base(self, tiny_pool, tmp_path):
        base = train_base(tiny_pool)
        target = adapt(base, [tiny_pool.candidates[0]])
        save_target_model(target, tmp_path / "t.json")
        with pytest.raises(DataError, match="base"):
            load_model(tmp_path / "t.json")
