import math
import random

import numpy as np
import pytest

from cedsel.errors import DataError
from cedsel.gradcheck import (
    TinyLM,
    alignment_correlation,
    alignment_report,
    ced_one_step,
    grad,
)


def random_texts(n, vocab=12, seed=7, min_len=5, max_len=12):
    rng = random.Random(seed)
    words = [f"w{i}" for i in range(vocab)]
    return [
        " ".join(rng.choice(words) for _ in range(rng.randint(min_len, max_len)))
        for _ in range(n)
    ]


def fd_grad(model, text, step):
    """Independent central-difference oracle, written against the public API."""
    theta = model.theta
    out = np.zeros_like(theta)
    for r in range(theta.shape[0]):
        for c in range(theta.shape[1]):
            up = theta.copy()
            up[r, c] += step
            down = theta.copy()
            down[r, c] -= step
            out[r, c] = (
                model.with_theta(up).mean_loglik(text)
                - model.with_theta(down).mean_loglik(text)
            ) / (2 * step)
    return out.ravel()


@pytest.fixture(scope="module")
def setup():
    train = random_texts(100)
    test = random_texts(1, seed=99)[0]
    model = TinyLM.from_texts(train + [test], seed=1, init_scale=0.5)
    return model, train, test


class TestGrad:
    def test_uniform_init_matches_closed_form(self):
        # Oracle: d/d theta[c, j] of log softmax at theta = 0 is
        # (1[j = target] - 1/V) / positions.
        model = TinyLM.from_texts(["a"], init_scale=0.0)
        v = model.vocab.size
        g = grad(model, "a").reshape(v, v)
        bos, eos, a = 1, 2, model.vocab.index["a"]
        expected = np.zeros((v, v))
        expected[bos, :] = -1.0 / v / 2
        expected[bos, a] += 0.5
        expected[a, :] = -1.0 / v / 2
        expected[a, eos] += 0.5
        np.testing.assert_allclose(g, expected, atol=1e-12)

    def test_matches_finite_differences(self, setup):
        model, train, _ = setup
        for text in train[:3]:
            analytic = grad(model, text)
            numeric = fd_grad(model, text, 1e-5)
            denom = max(np.abs(numeric).max(), 1e-12)
            assert np.abs(analytic - numeric).max() / denom < 1e-4

    def test_sentinel_only_text_touches_bos_row_only(self, setup):
        model, _, _ = setup
        v = model.vocab.size
        g = grad(model, "").reshape(v, v)
        nonzero_rows = {int(r) for r in np.nonzero(g)[0]}
        assert nonzero_rows == {1}  # BOS row only

    def test_dimension_is_theta_size(self, setup):
        model, train, _ = setup
        assert grad(model, train[0]).shape == (model.vocab.size ** 2,)


class TestCedOneStep:
    def test_eta_zero_is_zero(self, setup):
        model, train, test = setup
        assert ced_one_step(model, train[0], test, 0.0) == 0.0

    def test_step_on_own_text_improves_it(self, setup):
        model, train, _ = setup
        for text in train[:10]:
            assert ced_one_step(model, text, text, 1e-3) > 0.0

    def test_sign_agrees_with_dot_product(self, setup):
        # Oracle: both sides computed independently for 100 pairs.
        model, train, test = setup
        g_test = grad(model, test)
        agreements = 0
        for text in train:
            dot = float(grad(model, text) @ g_test)
            gain = ced_one_step(model, text, test, 1e-4)
            agreements += (dot > 0) == (gain > 0)
        assert agreements / len(train) >= 0.99

    def test_negative_eta_rejected(self, setup):
        model, train, test = setup
        with pytest.raises(DataError):
            ced_one_step(model, train[0], test, -1e-3)


class TestAlignmentCorrelation:
    def test_small_eta_high_spearman(self, setup):
        model, train, test = setup
        stats = alignment_correlation(model, train, test, 1e-4)
        assert stats.spearman >= 0.9
        assert stats.first_order_regime

    def test_duplicated_train_texts_handled(self, setup):
        model, train, test = setup
        texts = train[:10] + train[:5]
        stats = alignment_correlation(model, texts, test, 1e-4)
        assert math.isfinite(stats.spearman)

    def test_large_eta_flagged(self, setup):
        model, train, test = setup
        stats = alignment_correlation(model, train[:20], test, 1.0)
        assert not stats.first_order_regime
        assert math.isfinite(stats.spearman)

    def test_too_few_texts(self, setup):
        model, train, test = setup
        with pytest.raises(DataError, match="at least 10"):
            alignment_correlation(model, train[:5], test, 1e-4)

    def test_degenerate_variance(self):
        model = TinyLM.from_texts(["a b"], init_scale=0.0)
        with pytest.raises(DataError, match="degenerate"):
            alignment_correlation(model, ["a b"] * 12, "a b", 1e-4)


class TestFirstOrderConsistency:
    def test_relative_gap_shrinks_with_eta(self, setup):
        model, train, test = setup
        g_test = grad(model, test)
        gaps = {}
        for eta in (1e-3, 1e-4, 1e-5):
            worst = 0.0
            for text in train[:30]:
                g_train = grad(model, text)
                predicted = eta * float(g_train @ g_test)
                actual = ced_one_step(model, text, test, eta)
                scale = eta * (
                    np.linalg.norm(g_train) * np.linalg.norm(g_test)
                ) + 1e-12
                worst = max(worst, abs(actual - predicted) / scale)
            gaps[eta] = worst
        assert gaps[1e-4] < gaps[1e-3]
        assert gaps[1e-5] < gaps[1e-4]

    def test_swap_keeps_dot_product_changes_gain(self, setup):
        model, train, test = setup
        text = train[0]
        dot_ab = float(grad(model, text) @ grad(model, test))
        dot_ba = float(grad(model, test) @ grad(model, text))
        assert dot_ab == pytest.approx(dot_ba, rel=1e-12)
        gain_ab = ced_one_step(model, text, test, 1e-4)
        gain_ba = ced_one_step(model, test, text, 1e-4)
        assert gain_ab != gain_ba
        assert (gain_ab > 0) == (dot_ab > 0) == (gain_ba > 0)


class TestReport:
    def test_report_shape_and_flags(self, setup, tmp_path):
        model, train, test = setup
        report = alignment_report(model, train[:20], test, etas=(1e-3, 1e-4))
        assert set(report["etas"]) == {"0.001", "0.0001"}
        assert report["pass"]["spearman"]
        assert report["pass"]["finite_differences"]
        assert report["fd_max_relative_error"] < 1e-4
        from cedsel.gradcheck import save_report

        save_report(report, tmp_path / "g.json", lineage={"config_hash": "q"})
        import json

        payload = json.loads((tmp_path / "g.json").read_text())
        assert payload["config_hash"] == "q"
        assert payload["format"] == "ced-gradcheck/1"
