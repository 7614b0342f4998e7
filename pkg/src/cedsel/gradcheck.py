"""Numerical check that one-step cross-entropy gain tracks gradient alignment.

Uses a tiny differentiable bigram softmax model: theta is a (V x V) logit
table, row = context token. For a training text t and test text s,

    gain(t, s, eta) = mean log p(s | theta + eta * grad(t)) - mean log p(s | theta)

should agree in sign and rank with grad(t) . grad(s) when eta is small,
which is the first-order Taylor expansion of the left side. The module
reports rank/linear correlations over a set of training texts plus the
relative first-order gap at several step sizes.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import stats

from .errors import DataError
from .lm import Vocabulary

# Above this step size the Taylor argument no longer applies; correlations
# are still reported but flagged.
FIRST_ORDER_ETA_MAX = 1e-2


class TinyLM:
    """Bigram softmax model over a fixed small vocabulary."""

    def __init__(self, vocab: Vocabulary, theta: np.ndarray):
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (vocab.size, vocab.size):
            raise DataError(f"theta must be ({vocab.size}, {vocab.size})")
        self.vocab = vocab
        self.theta = theta

    @classmethod
    def from_texts(
        cls, texts: Iterable[str], seed: int = 0, init_scale: float = 0.0
    ) -> "TinyLM":
        """Model with vocabulary from ``texts``; zero scale = uniform init."""
        vocab = Vocabulary.from_texts(texts)
        if init_scale == 0.0:
            theta = np.zeros((vocab.size, vocab.size))
        else:
            rng = np.random.default_rng(seed)
            theta = rng.normal(0.0, init_scale, size=(vocab.size, vocab.size))
        return cls(vocab, theta)

    def with_theta(self, theta: np.ndarray) -> "TinyLM":
        return TinyLM(self.vocab, theta)

    def _log_softmax(self, row: np.ndarray) -> np.ndarray:
        shifted = row - row.max()
        return shifted - math.log(np.exp(shifted).sum())

    def mean_loglik(self, text: str) -> float:
        """Mean log probability per predicted token (EOS included)."""
        ids = self.vocab.encode(text)
        total = 0.0
        for i in range(1, len(ids)):
            total += self._log_softmax(self.theta[ids[i - 1]])[ids[i]]
        return total / (len(ids) - 1)


def grad(model: TinyLM, text: str) -> np.ndarray:
    """Exact gradient of mean log-likelihood w.r.t. theta, flattened.

    Rows for contexts that never occur in ``text`` stay exactly zero.
    """
    if text is None:
        raise DataError("grad needs a text")
    ids = model.vocab.encode(text)
    if len(ids) < 2:
        raise DataError("text has no predicted positions")
    n = len(ids) - 1
    g = np.zeros_like(model.theta)
    for i in range(1, len(ids)):
        ctx, tgt = ids[i - 1], ids[i]
        row = model.theta[ctx]
        shifted = row - row.max()
        probs = np.exp(shifted)
        probs /= probs.sum()
        g[ctx] -= probs / n
        g[ctx, tgt] += 1.0 / n
    return g.ravel()


def finite_difference_grad(model: TinyLM, text: str, step: float = 1e-5) -> np.ndarray:
    """Central finite differences of mean log-likelihood; O(|theta|) evals."""
    flat = model.theta.ravel().copy()
    out = np.empty_like(flat)
    for idx in range(flat.size):
        orig = flat[idx]
        flat[idx] = orig + step
        up = model.with_theta(flat.reshape(model.theta.shape)).mean_loglik(text)
        flat[idx] = orig - step
        down = model.with_theta(flat.reshape(model.theta.shape)).mean_loglik(text)
        flat[idx] = orig
        out[idx] = (up - down) / (2.0 * step)
    return out


def ced_one_step(model: TinyLM, train_text: str, test_text: str, eta: float) -> float:
    """Mean log-likelihood gain on ``test_text`` after one step on ``train_text``."""
    if eta < 0:
        raise DataError("step size must be >= 0")
    g = grad(model, train_text).reshape(model.theta.shape)
    before = model.mean_loglik(test_text)
    after = model.with_theta(model.theta + eta * g).mean_loglik(test_text)
    value = after - before
    if not math.isfinite(value):
        raise DataError("one-step gain is not finite")
    return value


@dataclass(frozen=True)
class AlignmentStats:
    eta: float
    n: int
    spearman: float
    pearson: float
    first_order_regime: bool


def alignment_correlation(
    model: TinyLM, train_texts: Sequence[str], test_text: str, eta: float
) -> AlignmentStats:
    """Correlate one-step gains with gradient dot products over train texts."""
    if len(train_texts) < 10:
        raise DataError("need at least 10 train texts")
    g_test = grad(model, test_text)
    dots = [float(grad(model, t) @ g_test) for t in train_texts]
    gains = [ced_one_step(model, t, test_text, eta) for t in train_texts]
    if len(set(gains)) == 1 or len(set(dots)) == 1:
        raise DataError("degenerate variance: all alignment values are equal")
    spearman = float(stats.spearmanr(gains, dots).statistic)
    pearson = float(stats.pearsonr(gains, dots).statistic)
    return AlignmentStats(
        eta=eta,
        n=len(train_texts),
        spearman=spearman,
        pearson=pearson,
        first_order_regime=eta <= FIRST_ORDER_ETA_MAX,
    )


def alignment_report(
    model: TinyLM,
    train_texts: Sequence[str],
    test_text: str,
    etas: Sequence[float] = (1e-3, 1e-4, 1e-5),
    fd_step: float = 1e-5,
    fd_texts: int = 3,
    spearman_threshold: float = 0.9,
    fd_tolerance: float = 1e-4,
) -> dict:
    """Full validation report: correlations per eta plus gradient checks."""
    g_test = grad(model, test_text)
    report: dict = {"etas": {}, "n_train_texts": len(train_texts)}
    for eta in etas:
        stats_ = alignment_correlation(model, train_texts, test_text, eta)
        gaps = []
        for text in train_texts:
            g_train = grad(model, text)
            predicted = eta * float(g_train @ g_test)
            actual = ced_one_step(model, text, test_text, eta)
            scale = eta * float(np.linalg.norm(g_train) * np.linalg.norm(g_test)) + 1e-12
            gaps.append(abs(actual - predicted) / scale)
        report["etas"][repr(eta)] = {
            "spearman": stats_.spearman,
            "pearson": stats_.pearson,
            "first_order_regime": stats_.first_order_regime,
            "mean_relative_gap": sum(gaps) / len(gaps),
            "max_relative_gap": max(gaps),
        }
    fd_errors = []
    for text in list(train_texts)[:fd_texts]:
        analytic = grad(model, text)
        numeric = finite_difference_grad(model, text, fd_step)
        denom = max(float(np.abs(numeric).max()), 1e-12)
        fd_errors.append(float(np.abs(analytic - numeric).max()) / denom)
    report["fd_max_relative_error"] = max(fd_errors)
    small_etas = [
        e for e in etas if e <= FIRST_ORDER_ETA_MAX
    ]
    report["pass"] = {
        "spearman": all(
            report["etas"][repr(e)]["spearman"] >= spearman_threshold
            for e in small_etas
        ),
        "finite_differences": report["fd_max_relative_error"] <= fd_tolerance,
    }
    return report


def save_report(report: Mapping, path: str | Path, lineage: Mapping | None = None) -> None:
    payload = dict(report)
    payload["format"] = "ced-gradcheck/1"
    if lineage:
        payload.update(lineage)
    Path(path).write_text(json.dumps(payload, sort_keys=True), encoding="utf-8")
