"""Bridge client tests against a local stub scorer (no external build)."""

import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from cedsel.bridge import PROTOCOL_VERSION, BridgeScorer, score_matrix_via_bridge
from cedsel.corpus import training_text
from cedsel.errors import BridgeError
from cedsel.lm import adapt, train_base
from cedsel.scoring import rank, score_matrix

STUB = [sys.executable, str(Path(__file__).parent / "stub_scorer.py")]


@pytest.fixture(scope="module")
def scorer():
    with BridgeScorer(STUB) as s:
        yield s


class TestProtocol:
    def test_hello_echoes_version(self, scorer):
        assert scorer.hello() == PROTOCOL_VERSION

    def test_requests_answered_in_order(self, scorer):
        base = scorer.train_base(["a b c", "c d e"], [])
        ids = [scorer.adapt(base, f"word{i} word{i}") for i in range(5)]
        assert len(set(ids)) == 5
        for model_id in ids:
            ce, n = scorer.score(model_id, "a b")
            assert np.isfinite(ce) and n > 0

    def test_malformed_line_single_error(self):
        proc = subprocess.Popen(
            STUB, stdin=subprocess.PIPE, stdout=subprocess.PIPE, text=True, bufsize=1
        )
        try:
            proc.stdin.write(
                json.dumps({"op": "hello", "version": PROTOCOL_VERSION}) + "\n"
            )
            proc.stdin.write("{broken\n")
            proc.stdin.write(json.dumps({"op": "train_base", "texts": ["x y"]}) + "\n")
            proc.stdin.write(json.dumps({"op": "shutdown"}) + "\n")
            proc.stdin.flush()
            lines = [proc.stdout.readline() for _ in range(4)]
        finally:
            proc.kill()
        replies = [json.loads(line) for line in lines]
        assert replies[0]["ok"]
        assert not replies[1]["ok"]
        assert replies[2]["ok"] and "model_id" in replies[2]
        assert replies[3]["ok"]

    def test_error_response_raises(self, tiny_pool):
        with BridgeScorer(STUB + ["--fail-adapt"]) as failing:
            base = failing.train_base(["a b"], [])
            with pytest.raises(BridgeError, match="adapt disabled"):
                failing.adapt(base, "c d")

    def test_unknown_model_id(self, scorer):
        with pytest.raises(BridgeError, match="unknown model id"):
            scorer.score("ghost", "a b")

    def test_missing_binary(self):
        with pytest.raises(BridgeError, match="cannot start"):
            BridgeScorer(["/nonexistent/scorer"])


class TestRoundTrip:
    def test_adapt_then_score_own_example_strictly_lower(self, scorer, tiny_pool):
        texts = [training_text(c) for c in tiny_pool.candidates]
        base = scorer.train_base(texts, [])
        own = texts[0]
        adapted = scorer.adapt(base, own)
        base_ce, _ = scorer.score(base, own)
        target_ce, _ = scorer.score(adapted, own)
        assert target_ce < base_ce

    def test_bridge_matrix_matches_in_process(self, scorer, tiny_pool):
        # Oracle: the in-process pipeline on the same pool.
        via_bridge = score_matrix_via_bridge(scorer, tiny_pool)
        base = train_base(tiny_pool)
        targets = [adapt(base, [c]) for c in tiny_pool.candidates]
        in_process = score_matrix(base, targets, tiny_pool.tests)
        assert via_bridge.test_ids == in_process.test_ids
        assert via_bridge.candidate_ids == in_process.candidate_ids
        np.testing.assert_allclose(
            via_bridge.target_ce, in_process.target_ce, atol=1e-9, rtol=0
        )
        np.testing.assert_allclose(
            via_bridge.base_ce, in_process.base_ce, atol=1e-9, rtol=0
        )
        for test_id in in_process.test_ids:
            assert rank(via_bridge, test_id) == rank(in_process, test_id)
